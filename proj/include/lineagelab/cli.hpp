#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lineagelab/ancestral.hpp"
#include "lineagelab/config.hpp"
#include "lineagelab/csv.hpp"
#include "lineagelab/duality.hpp"
#include "lineagelab/equilibrium.hpp"
#include "lineagelab/error.hpp"
#include "lineagelab/hamilton_jacobi.hpp"
#include "lineagelab/ibm.hpp"

namespace lineagelab::cli {

namespace fs = std::filesystem;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"equilibrium", "dual", "fractions", "ancestral",
                                              "hj",          "ibm",  "compare"};
  return names;
}

struct Request {
  std::string subcommand;
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

enum ExitCode : int { kOk = 0, kInvalid = 2, kNumerical = 3 };

namespace detail {

struct Session {
  RunConfig cfg;
  fs::path out;
  std::vector<std::string> outputs;

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }

  CsvHeader header() const {
    const ModelParams& p = cfg.model;
    CsvHeader h{{"beta", p.beta},
                {"mu0", p.mu0},
                {"sigma", p.sigma},
                {"c", p.c},
                {"selection", p.selection.name()},
                {"kernel", p.kernel.name()},
                {"mode", std::string(to_string(cfg.solver.mode))},
                {"z_min", cfg.grid.z_min()},
                {"z_max", cfg.grid.z_max()},
                {"n", static_cast<std::int64_t>(cfg.grid.size())}};
    switch (p.selection.kind) {
      case SelectionSpec::Kind::Quadratic: h.emplace_back("alpha", p.selection.alpha); break;
      case SelectionSpec::Kind::Power: h.emplace_back("q", static_cast<std::int64_t>(p.selection.q)); break;
      case SelectionSpec::Kind::CoshMinusOne: h.emplace_back("scale", p.selection.scale); break;
    }
    return h;
  }
};

inline std::vector<double> uniform_times(double end, double step) {
  std::vector<double> s;
  const auto n = static_cast<std::size_t>(std::floor(end / step + 1e-9));
  for (std::size_t k = 0; k <= n; ++k) s.push_back(step * static_cast<double>(k));
  return s;
}

inline EquilibriumSolution equilibrium(const Session& ss) {
  return solve_equilibrium(ss.cfg.model, ss.cfg.grid, ss.cfg.solver.mode,
                           SolverOptions{ss.cfg.solver.tol, ss.cfg.solver.max_iter});
}

inline void require_viable(const EquilibriumSolution& eq) {
  if (eq.extinct) throw Error(ErrorKind::Extinction, "principal eigenvalue is not positive; no viable equilibrium");
}

inline double resolve(const TraitChoice& t, double dominant) { return t.dominant ? dominant : t.value; }

inline HamiltonianModel hamiltonian_for(const RunConfig& cfg) {
  return cfg.solver.mode == MutationMode::Diffusive ? HamiltonianModel::diffusive()
                                                    : HamiltonianModel::from_kernel(cfg.model.kernel);
}

inline bool quadratic(const RunConfig& cfg) { return cfg.model.selection.kind == SelectionSpec::Kind::Quadratic; }

inline void write_series(CsvWriter& w, const AncestralSeries& a) {
  for (std::size_t k = 0; k < a.s.size(); ++k) {
    w.row({a.s[k], a.mean[k], a.variance[k], a.q05[k], a.q95[k], a.source});
  }
}

inline IBMConfig ibm_config(const RunConfig& cfg) {
  IBMConfig c;
  c.params = cfg.model;
  c.carrying_capacity = cfg.ibm.N;
  c.competition_strength = cfg.ibm.competition == "matched" ? cfg.model.beta - cfg.model.mu0 : 1.0;
  c.dt = cfg.ibm.dt;
  c.t_burn = cfg.ibm.t_burn;
  c.t_record = cfg.ibm.t_record;
  c.snapshot_interval = cfg.ibm.snapshot_interval;
  c.seed = cfg.seed;
  c.replicates = cfg.ibm.replicates;
  c.sample.at_dominant = cfg.ibm.sample_at.dominant;
  c.sample.trait = cfg.ibm.sample_at.value;
  c.sample.count = cfg.ibm.sample_count;
  c.max_pairs = cfg.ibm.max_pairs;
  c.initial_size = cfg.ibm.initial_size;
  return c;
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

inline void cmd_equilibrium(Session& ss) {
  const auto eq = equilibrium(ss);
  CsvHeader h = ss.header();
  h.insert(h.end(), {{"lambda", eq.lambda},
                     {"lambda_1", eq.lambda_mass},
                     {"lambda_2", eq.lambda_mean_fitness},
                     {"lambda_consistency", eq.lambda_consistency},
                     {"residual", eq.residual},
                     {"mu_bar", eq.mu_bar},
                     {"mass", integrate(eq.F)},
                     {"dominant_trait", dominant_trait(eq.F)},
                     {"extinct", static_cast<std::int64_t>(eq.extinct)},
                     {"iterations", static_cast<std::int64_t>(eq.iterations)}});
  CsvWriter w(ss.file("equilibrium.csv"), h, {"z", "F", "mu"});
  for (std::size_t i = 0; i < eq.F.size(); ++i) w.row({eq.F.z(i), eq.F[i], ss.cfg.model.mu(eq.F.z(i))});
}

inline void cmd_dual(Session& ss) {
  const auto eq = equilibrium(ss);
  require_viable(eq);
  const auto dual = solve_dual_phi(eq, ss.cfg.solver.tol, ss.cfg.solver.max_iter);
  const Field y = y_infinity_density(eq.F, dual.phi);
  const auto m = moments(y);
  CsvHeader h = ss.header();
  h.insert(h.end(), {{"lambda", eq.lambda},
                     {"dual_lambda", dual.lambda},
                     {"dual_residual", dual.residual},
                     {"int_F_phi", dual.normalization},
                     {"yinf_mean", m.mean},
                     {"yinf_variance", m.variance}});
  CsvWriter w(ss.file("dual.csv"), h, {"z", "F", "phi", "yinf"});
  for (std::size_t i = 0; i < eq.F.size(); ++i) w.row({eq.F.z(i), eq.F[i], dual.phi[i], y[i]});
}

inline void cmd_fractions(Session& ss) {
  const auto eq = equilibrium(ss);
  require_viable(eq);
  const auto dual = solve_dual_phi(eq, ss.cfg.solver.tol, ss.cfg.solver.max_iter);
  const auto& fc = ss.cfg.fractions;
  const Grid& g = eq.F.grid;

  std::vector<double> cuts = fc.cuts.empty() ? std::vector<double>{dominant_trait(eq.F)} : fc.cuts;
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> edges{-INFINITY};
  edges.insert(edges.end(), cuts.begin(), cuts.end());
  edges.push_back(INFINITY);
  std::vector<Field> v0s;
  std::vector<std::string> labels;
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    Field v(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g.z(i) >= edges[k] && g.z(i) < edges[k + 1]) v[i] = eq.F[i];
    }
    v0s.push_back(std::move(v));
    labels.push_back("slice" + std::to_string(k));
  }

  CsvHeader h = ss.header();
  h.emplace_back("lambda", eq.lambda);
  double t_end = fc.t_end;
  if (t_end <= 0.0) {
    for (std::size_t k = 0; k < v0s.size(); ++k) {
      const auto run = run_to_asymptote(eq, dual, v0s[k], fc.t_max, fc.dt);
      t_end = std::max(t_end, run.t_end);
      h.emplace_back(labels[k] + "_relative_defect", run.relative_defect);
    }
  }
  const double dt = fc.dt > 0.0 ? fc.dt : 0.9 * fraction_stability_bound(eq);
  std::vector<double> snaps;
  for (std::size_t k = 1; k < fc.snapshots; ++k) {
    snaps.push_back(t_end * static_cast<double>(k) / static_cast<double>(fc.snapshots));
  }
  const auto runs = evolve_fractions(eq, v0s, t_end, dt, snaps, labels);

  double conservation = 0.0;
  for (std::size_t t = 0; t < runs.front().size(); ++t) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      double sum = 0.0;
      for (const auto& r : runs) sum += r[t].v[i];
      conservation = std::max(conservation, std::abs(sum - eq.F[i]));
    }
  }
  h.insert(h.end(), {{"t_end", t_end}, {"dt", dt}, {"conservation_error", conservation / eq.F.max_abs()}});
  for (std::size_t k = 0; k < v0s.size(); ++k) {
    h.emplace_back(labels[k] + "_edge_lo", edges[k]);
    h.emplace_back(labels[k] + "_proportion", asymptotic_proportion(dual, v0s[k]));
  }
  CsvWriter w(ss.file("fractions.csv"), h, {"t", "z", "label", "value"});
  for (std::size_t t = 0; t < runs.front().size(); ++t) {
    for (const auto& r : runs) {
      for (std::size_t i = 0; i < g.size(); ++i) w.row({r[t].t, g.z(i), r[t].label, r[t].v[i]});
    }
  }

  CsvHeader hp = ss.header();
  hp.emplace_back("int_F_phi", dual.normalization);
  CsvWriter p(ss.file("proportions.csv"), hp, {"y", "p"});
  for (std::size_t i = 0; i < g.size(); ++i) p.row({g.z(i), eq.F[i] * dual.phi[i] * g.dz()});
}

inline void cmd_ancestral(Session& ss) {
  const auto eq = equilibrium(ss);
  require_viable(eq);
  const auto& ac = ss.cfg.ancestral;
  const AncestralGenerator gen(eq);
  const double z0 = resolve(ac.z0, dominant_trait(eq.F));
  const auto s_grid = uniform_times(ac.s_end, ac.ds);
  const auto pde = ancestral_stats(gen, z0, s_grid, ac.dt);

  CsvHeader h = ss.header();
  h.insert(h.end(), {{"lambda", eq.lambda}, {"z0", pde.start}, {"n_paths", static_cast<std::int64_t>(ac.n_paths)},
                     {"seed", static_cast<std::int64_t>(ss.cfg.seed)}});
  std::optional<MonteCarloResult> mc;
  if (ac.n_paths > 0) {
    mc = ac.mc == "chain" ? monte_carlo_Y(gen, z0, s_grid, ac.n_paths, ss.cfg.seed)
                          : monte_carlo_Y_sde(eq, z0, s_grid, ac.n_paths, ss.cfg.seed);
    mc->series.source = "mc_" + ac.mc;
    h.emplace_back("mc_clipped_fraction", mc->clipped_fraction);
  }
  if (quadratic(ss.cfg)) h.emplace_back("ou_rate", ou_rate(eq.params.beta, eq.params.sigma, eq.params.selection.alpha));

  CsvWriter w(ss.file("ancestral_stats.csv"), h, {"s", "mean", "var", "q05", "q95", "source"});
  write_series(w, pde);
  if (mc) write_series(w, mc->series);
  if (quadratic(ss.cfg)) {
    write_series(w, ou_oracle_series(eq.params.beta, eq.params.sigma, pde.start, s_grid, eq.params.selection.alpha));
  }

  const auto dual = solve_dual_phi(eq, ss.cfg.solver.tol, ss.cfg.solver.max_iter);
  const Field y = y_infinity_density(eq.F, dual.phi);
  const auto m = moments(y);
  CsvHeader hy = ss.header();
  hy.insert(hy.end(), {{"mean", m.mean}, {"variance", m.variance}});
  CsvWriter wy(ss.file("yinf.csv"), hy, {"z", "density"});
  for (std::size_t i = 0; i < y.size(); ++i) wy.row({y.z(i), y[i]});
}

inline void cmd_hj(Session& ss) {
  const auto eq = equilibrium(ss);
  require_viable(eq);
  const RunConfig& cfg = ss.cfg;
  const ModelParams& p = cfg.model;
  const auto h = hamiltonian_for(cfg);
  const double cp = p.c / p.sigma;
  const auto solved = solve_U_hj(h, p.selection, p.beta, p.mu0, cp, cfg.grid, p.sigma);
  const auto fromF = profile_from_F(eq.F, h, p.selection, p.beta, p.mu0, p.sigma, p.c);
  const HJProfile& prof = cfg.hj.profile == "hj" ? solved : fromF;

  CsvHeader hh = ss.header();
  hh.insert(hh.end(), {{"c_prime", cp}, {"lambda_hj", solved.lambda_hj}, {"z_star", solved.z_star}});
  CsvWriter wp(ss.file("hj_profile.csv"), hh, {"z", "U", "dU", "U_from_F", "dU_from_F"});
  for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
    wp.row({cfg.grid.z(i), solved.U[i], solved.dU[i], fromF.U[i], fromF.dU[i]});
  }

  const double z0 = resolve(cfg.hj.z0, solved.z_star);
  const auto ode = gamma_ode(prof, h, p.beta, z0, cfg.hj.s_end, cfg.hj.ds);
  CsvHeader hg = ss.header();
  hg.insert(hg.end(), {{"c_prime", cp}, {"z0", z0}, {"profile", prof.source}});
  CsvWriter wg(ss.file("gamma.csv"), hg, {"s", "gamma", "source"});
  for (std::size_t k = 0; k < ode.s.size(); ++k) wg.row({ode.s[k], ode.gamma[k], ode.source});
  double rate = NAN;
  if (quadratic(cfg)) {
    rate = gamma_quadratic_rate(h, p.selection.alpha, p.beta, cp);
    const auto approx = gamma_quadratic_trajectory(h, p.selection.alpha, p.beta, cp, z0, ode.s);
    for (std::size_t k = 0; k < approx.s.size(); ++k) wg.row({approx.s[k], approx.gamma[k], approx.source});
  }

  const auto dual = solve_dual_phi(eq, cfg.solver.tol, cfg.solver.max_iter);
  const double kappa = cfg.ibm.competition == "matched" ? p.beta - p.mu0 : 1.0;
  const double population = std::max(1.0, static_cast<double>(cfg.ibm.N) * eq.lambda / kappa);
  const auto scales = coalescence_scales(eq.F, dual.phi, p.sigma, p.beta, population);
  const auto m = moments(eq.F);
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  const nlohmann::json scalars{{"c_prime", cp},
                               {"lambda", num(eq.lambda)},
                               {"lambda_hj", num(solved.lambda_hj)},
                               {"z_star_hj", num(solved.z_star)},
                               {"z_star_pde", num(dominant_trait(eq.F))},
                               {"variance_approx", num(solved.variance_approx)},
                               {"variance_pde", num(m.variance)},
                               {"epsilon_scale", num(solved.epsilon_scale)},
                               {"gamma_rate", num(rate)},
                               {"T_c_general", num(scales.T_c_general)},
                               {"T_c_diffusive", num(scales.T_c_diffusive)},
                               {"population", num(population)},
                               {"kingman_rate", num(scales.kingman_rate)},
                               {"convexity_defect", num(convexity_defect(solved.U))}};
  write_json(ss.file("scalars.json"), scalars);
}

inline void ibm_all_extinct(const IBMResult& res) {
  if (!res.replicates.empty() && res.extinct == res.replicates.size()) {
    throw Error(ErrorKind::Extinction, "every IBM replicate went extinct");
  }
}

inline void cmd_ibm(Session& ss) {
  const auto eq = equilibrium(ss);
  require_viable(eq);
  const auto icfg = ibm_config(ss.cfg);
  const auto res = run_replicates(icfg, eq);
  const Field density = res.density();
  double total = 0.0;
  for (double c : res.histogram) total += c;
  const Field target = (1.0 / integrate(eq.F)) * eq.F;

  CsvHeader h = ss.header();
  h.insert(h.end(), {{"N", static_cast<std::int64_t>(icfg.carrying_capacity)},
                     {"competition_strength", icfg.competition_strength},
                     {"dt", res.dt},
                     {"t_sample", res.t_sample},
                     {"replicates", static_cast<std::int64_t>(res.replicates.size())},
                     {"extinct", static_cast<std::int64_t>(res.extinct)},
                     {"mean_population", res.mean_population()},
                     {"l1_to_F", total > 0.0 ? l1_distance(density, target) : NAN},
                     {"seed", static_cast<std::int64_t>(ss.cfg.seed)}});
  CsvWriter wh(ss.file("histogram.csv"), h, {"z", "count"});
  for (std::size_t i = 0; i < res.histogram.size(); ++i) wh.row({res.grid.z(i), res.histogram[i]});

  CsvWriter wl(ss.file("lineages.csv"), h, {"replicate", "lineage_id", "s", "trait"});
  for (const auto& r : res.replicates) {
    for (const auto& l : r.lineages) {
      for (std::size_t k = 0; k < l.s.size(); ++k) {
        wl.row({static_cast<std::int64_t>(r.index), static_cast<std::int64_t>(l.sample_id), l.s[k],
                l.z_at(l.s[k], icfg.params.c, res.t_sample)});
      }
    }
  }

  const auto s_grid = uniform_times(std::min(ss.cfg.ibm.s_end, res.t_sample), ss.cfg.ibm.ds);
  const auto st = pooled_lineage_stats(res, s_grid, icfg.params.c);
  const auto t2 = all_t2(res);
  CsvHeader hs = h;
  hs.emplace_back("median_t2", t2.empty() ? NAN : quantile(t2, 0.5));
  CsvWriter ws(ss.file("lineage_stats.csv"), hs, {"s", "mean", "var", "q05", "q95", "n_alive_lineages"});
  for (std::size_t k = 0; k < s_grid.size(); ++k) {
    ws.row({st.series.s[k], st.series.mean[k], st.series.variance[k], st.series.q05[k], st.series.q95[k],
            static_cast<std::int64_t>(st.n_alive[k])});
  }

  CsvWriter wt(ss.file("t2.csv"), h, {"replicate", "pair_id", "t2"});
  for (const auto& r : res.replicates) {
    for (const auto& pt : r.t2) {
      wt.row({static_cast<std::int64_t>(r.index), static_cast<std::int64_t>(pt.pair_id), pt.t2});
    }
  }
  ibm_all_extinct(res);
}

inline void cmd_compare(Session& ss) {
  const auto eq = equilibrium(ss);
  require_viable(eq);
  const RunConfig& cfg = ss.cfg;
  const ModelParams& p = cfg.model;
  const auto s_grid = uniform_times(cfg.compare.s_end, cfg.compare.ds);

  const AncestralGenerator gen(eq);
  const auto pde = ancestral_stats(gen, dominant_trait(eq.F), s_grid);
  const double z0 = pde.start;

  const auto h = hamiltonian_for(cfg);
  const double cp = p.c / p.sigma;
  const auto prof = solve_U_hj(h, p.selection, p.beta, p.mu0, cp, cfg.grid, p.sigma);
  const auto gamma = gamma_ode(prof, h, p.beta, z0, p.sigma * cfg.compare.s_end);

  const auto icfg = ibm_config(cfg);
  const auto res = run_replicates(icfg, eq);
  const auto band = replicate_mean_band(res, s_grid, p.c);

  CsvHeader hd = ss.header();
  hd.insert(hd.end(), {{"lambda", eq.lambda},
                       {"z0", z0},
                       {"c_prime", cp},
                       {"N", static_cast<std::int64_t>(icfg.carrying_capacity)},
                       {"replicates", static_cast<std::int64_t>(res.replicates.size())},
                       {"extinct", static_cast<std::int64_t>(res.extinct)},
                       {"t_sample", res.t_sample},
                       {"seed", static_cast<std::int64_t>(cfg.seed)}});
  CsvWriter w(ss.file("compare.csv"), hd, {"s", "pde_mean", "gamma", "ou_mean", "ibm_mean", "ibm_q05", "ibm_q95"});
  for (std::size_t k = 0; k < s_grid.size(); ++k) {
    const double s = s_grid[k];
    const double ou = quadratic(cfg) ? ou_mean(p.beta, p.sigma, z0, s, p.selection.alpha) : NAN;
    const bool have = band.replicates[k] > 0;
    w.row({s, pde.mean[k], gamma.at(p.sigma * s), ou, have ? band.mean[k] : NAN, have ? band.q05[k] : NAN,
           have ? band.q95[k] : NAN});
  }
  ibm_all_extinct(res);
}

inline nlohmann::json error_json(const std::string& kind, const std::string& key, const std::string& message) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  if (!key.empty()) j["key"] = key;
  return j;
}

}  // namespace detail

/// Runs one subcommand and writes its artifacts, a manifest.json and, on
/// failure, an error.json into out_dir. Returns the process exit code.
inline int run(const Request& req, std::ostream& err = std::cerr) {
  const auto t0 = std::chrono::steady_clock::now();
  detail::Session ss;
  ss.out = req.out_dir;
  RunManifest manifest;
  manifest.subcommand = req.subcommand;
  manifest.config_path = req.config_path;
  manifest.overrides = req.overrides;

  int code = kOk;
  nlohmann::json failure;
  try {
    std::error_code ec;
    fs::create_directories(ss.out, ec);
    if (ec) throw ConfigError("out", "cannot create output directory " + req.out_dir);
    bool known = false;
    for (const auto& s : subcommands()) known = known || s == req.subcommand;
    if (!known) throw ConfigError("subcommand", "unknown subcommand '" + req.subcommand + "'");

    const std::string text = read_file(req.config_path);
    manifest.config_hash = hex64(fnv1a64(text));
    Json root = parse_json_text(text, req.config_path);
    for (const auto& o : req.overrides) apply_override(root, o);
    ss.cfg = parse_config(root);
    if (req.seed) ss.cfg.seed = *req.seed;
    manifest.seed = ss.cfg.seed;

    if (req.subcommand == "equilibrium") detail::cmd_equilibrium(ss);
    else if (req.subcommand == "dual") detail::cmd_dual(ss);
    else if (req.subcommand == "fractions") detail::cmd_fractions(ss);
    else if (req.subcommand == "ancestral") detail::cmd_ancestral(ss);
    else if (req.subcommand == "hj") detail::cmd_hj(ss);
    else if (req.subcommand == "ibm") detail::cmd_ibm(ss);
    else detail::cmd_compare(ss);
  } catch (const ConfigError& e) {
    code = kInvalid;
    failure = detail::error_json(std::string(to_string(e.kind())), e.key(), e.what());
  } catch (const Error& e) {
    code = kNumerical;
    failure = detail::error_json(std::string(to_string(e.kind())), "", e.what());
  } catch (const std::exception& e) {
    code = kNumerical;
    failure = detail::error_json("Internal", "", e.what());
  }

  if (code != kOk) {
    err << failure.dump() << '\n';
    try {
      write_json(ss.file("error.json"), failure);
    } catch (const std::exception&) {
    }
  }
  manifest.outputs = ss.outputs;
  manifest.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    write_json(ss.out / "manifest.json", manifest.to_json());
  } catch (const std::exception&) {
  }
  return code;
}

}  // namespace lineagelab::cli
