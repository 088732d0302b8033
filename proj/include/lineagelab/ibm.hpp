#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "lineagelab/ancestral.hpp"
#include "lineagelab/equilibrium.hpp"
#include "lineagelab/error.hpp"
#include "lineagelab/field.hpp"
#include "lineagelab/model.hpp"
#include "lineagelab/parallel.hpp"
#include "lineagelab/stats.hpp"

namespace lineagelab {

inline constexpr double kAlive = std::numeric_limits<double>::infinity();

struct Individual {
  std::int64_t id = 0;
  double trait = 0.0;            // absolute frame x
  std::int64_t parent_id = -1;   // -1 for founders
  double birth_time = 0.0;
  double death_time = kAlive;
};

/// Append-only genealogy. Ids are dense indices in order of creation, so a
/// parent always has a smaller id than its children.
class LineageTable {
 public:
  std::int64_t add(double trait, std::int64_t parent, double birth) {
    entries_.push_back({static_cast<float>(trait), static_cast<std::int32_t>(parent), birth, kAlive});
    return static_cast<std::int64_t>(entries_.size()) - 1;
  }

  void kill(std::int64_t id, double t) { entries_[static_cast<std::size_t>(id)].death = t; }

  std::size_t size() const { return entries_.size(); }

  Individual at(std::int64_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= entries_.size()) {
      throw Error(ErrorKind::OrphanChain, "lineage table has no entry " + std::to_string(id));
    }
    const auto& e = entries_[static_cast<std::size_t>(id)];
    return {id, e.trait, e.parent, e.birth, e.death};
  }

  std::int64_t parent(std::int64_t id) const { return entries_[static_cast<std::size_t>(id)].parent; }
  double birth(std::int64_t id) const { return entries_[static_cast<std::size_t>(id)].birth; }
  double trait(std::int64_t id) const { return entries_[static_cast<std::size_t>(id)].trait; }

  /// Ids from `id` back to its founder.
  std::vector<std::int64_t> chain(std::int64_t id) const {
    std::vector<std::int64_t> out;
    for (std::int64_t cur = id; cur >= 0; cur = parent(cur)) {
      if (static_cast<std::size_t>(cur) >= entries_.size()) {
        throw Error(ErrorKind::OrphanChain, "parent link points past the table");
      }
      out.push_back(cur);
      const std::int64_t p = parent(cur);
      if (p >= cur) throw Error(ErrorKind::OrphanChain, "parent link does not point to an older entry");
    }
    return out;
  }

 private:
  struct Entry {
    float trait;
    std::int32_t parent;
    double birth;
    double death;
  };
  std::vector<Entry> entries_;
};

/// Checks that every listed individual's chain reaches a founder through
/// strictly earlier births. Throws OrphanChain otherwise.
inline void check_genealogy(const LineageTable& table, const std::vector<std::int64_t>& ids) {
  for (std::int64_t id : ids) {
    const auto ch = table.chain(id);
    for (std::size_t k = 1; k < ch.size(); ++k) {
      if (!(table.birth(ch[k]) < table.birth(ch[k - 1]))) {
        throw Error(ErrorKind::OrphanChain, "birth times do not decrease along a parent chain");
      }
    }
    if (table.parent(ch.back()) != -1) throw Error(ErrorKind::OrphanChain, "chain does not end at a founder");
  }
}

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

struct SampleSpec {
  bool at_dominant = true;
  double trait = 0.0;       // moving-frame trait when not at_dominant
  std::size_t count = 0;    // 0 = everyone in the selected bins
};

struct IBMConfig {
  ModelParams params;
  std::size_t carrying_capacity = 20000;
  double competition_strength = 1.0;
  double dt = 0.0;                // 0 selects the default rule
  double t_burn = 50.0;
  double t_record = 50.0;
  double snapshot_interval = 1.0;
  std::uint64_t seed = 1;
  std::size_t replicates = 1;
  SampleSpec sample;
  std::size_t max_pairs = 500;
  std::size_t initial_size = 0;   // 0 = N lambda / competition_strength
  bool keep_tables = false;
};

/// 0.02 / (beta + mu(z_edge)), z_edge the farthest node with F >= 1e-6 max F.
inline double default_ibm_dt(const ModelParams& p, const Field& F) {
  const double top = F.max_abs();
  double edge = 0.0;
  for (std::size_t i = 0; i < F.size(); ++i) {
    if (F[i] >= 1e-6 * top) edge = std::max(edge, std::abs(F.z(i)));
  }
  const double worst = std::max(p.mu(edge), p.mu(-edge));
  return 0.02 / (p.beta + worst);
}

inline void validate_ibm(const IBMConfig& c, double dt) {
  if (c.carrying_capacity < 100) throw ConfigError("ibm.N", "carrying capacity must be at least 100");
  if (!(c.competition_strength >= 0.0)) throw ConfigError("ibm.competition_strength", "competition strength must be >= 0");
  if (!(dt > 0.0)) throw ConfigError("ibm.dt", "time step must be positive");
  if (c.replicates == 0) throw ConfigError("ibm.replicates", "at least one replicate is required");
  if (!(c.t_burn >= 0.0) || !(c.t_record >= 0.0)) throw ConfigError("ibm.t_burn", "durations must be >= 0");
  if (!(c.snapshot_interval > 0.0)) throw ConfigError("ibm.snapshot_interval", "snapshot interval must be positive");
}

// ---------------------------------------------------------------------------
// Population and stepping.
// ---------------------------------------------------------------------------

struct Population {
  double t = 0.0;
  std::vector<std::int64_t> ids;
  std::vector<double> traits;  // absolute frame
  LineageTable table;

  std::size_t size() const { return ids.size(); }
};

/// One fixed-dt step. Each individual carries a birth clock Exp(beta) and a
/// death clock Exp(mu(x - ct) + kappa n / N); a clock below dt fires, and a
/// birth only counts if it precedes the death. At most one birth per
/// individual per step. Offspring join at the end of the step.
inline void step_population(Population& pop, const IBMConfig& cfg, double dt, Rng& rng) {
  const ModelParams& p = cfg.params;
  const double n_over_N = static_cast<double>(pop.size()) / static_cast<double>(cfg.carrying_capacity);
  const double crowd = cfg.competition_strength * n_over_N;
  const double pb = -std::expm1(-p.beta * dt);
  const double shift = p.c * pop.t;
  std::vector<std::int64_t> ids;
  std::vector<double> traits;
  ids.reserve(pop.size() + pop.size() / 8);
  traits.reserve(pop.size() + pop.size() / 8);
  std::vector<std::pair<std::int64_t, double>> newborn;
  for (std::size_t k = 0; k < pop.size(); ++k) {
    const double x = pop.traits[k];
    const double death_rate = p.mu(x - shift) + crowd;
    const double ub = uniform01(rng);
    const double ud = uniform01(rng);
    const double pd = -std::expm1(-death_rate * dt);
    const double td = ud < pd ? -std::log1p(-ud) / death_rate : kAlive;
    if (ub < pb) {
      const double tb = -std::log1p(-ub) / p.beta;
      if (tb < td) {
        const double child = x + p.sigma * p.kernel.sample(rng);
        const std::int64_t id = pop.table.add(child, pop.ids[k], pop.t + tb);
        newborn.emplace_back(id, child);
      }
    }
    if (td < dt) {
      pop.table.kill(pop.ids[k], pop.t + td);
    } else {
      ids.push_back(pop.ids[k]);
      traits.push_back(x);
    }
  }
  for (const auto& [id, x] : newborn) {
    ids.push_back(id);
    traits.push_back(x);
  }
  pop.ids.swap(ids);
  pop.traits.swap(traits);
  pop.t += dt;
}

/// Founders drawn from F (moving frame, t = 0) by inverse-CDF sampling within cells.
inline Population initial_population(const Field& F, std::size_t n, Rng& rng) {
  Population pop;
  std::vector<double> cdf(F.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < F.size(); ++i) {
    acc += std::max(F[i], 0.0);
    cdf[i] = acc;
  }
  const double dz = F.grid.dz();
  for (std::size_t k = 0; k < n; ++k) {
    const double u = uniform01(rng) * acc;
    const auto i = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    const double x = F.z(std::min(i, F.size() - 1)) + dz * (uniform01(rng) - 0.5);
    pop.ids.push_back(pop.table.add(x, -1, 0.0));
    pop.traits.push_back(x);
  }
  return pop;
}

// ---------------------------------------------------------------------------
// Lineages.
// ---------------------------------------------------------------------------

/// Backward path of one sampled individual: segment k covers backward times
/// [s[k], s[k+1]) and is spent in ancestor ids[k] with absolute trait x[k].
struct Lineage {
  std::int64_t sample_id = 0;
  std::vector<std::int64_t> ids;
  std::vector<double> s;        // s[k] = t_sample - birth of the next-younger ancestor (s[0] = 0)
  std::vector<double> x;
  double s_founder = 0.0;       // backward time of the founder's birth

  /// Moving-frame trait at backward time s: x_anc - c (t_sample - s).
  double z_at(double s_query, double c, double t_sample) const {
    if (s_query > s_founder) return NAN;
    const auto it = std::upper_bound(s.begin(), s.end(), s_query);
    const std::size_t k = static_cast<std::size_t>(it - s.begin()) - 1;
    return x[k] - c * (t_sample - s_query);
  }
};

inline std::vector<Lineage> extract_lineages(const LineageTable& table, const std::vector<std::int64_t>& sample,
                                             double t_sample) {
  std::vector<Lineage> out;
  out.reserve(sample.size());
  for (std::int64_t id : sample) {
    Lineage l;
    l.sample_id = id;
    l.ids = table.chain(id);
    l.s.push_back(0.0);
    for (std::size_t k = 0; k < l.ids.size(); ++k) {
      l.x.push_back(table.trait(l.ids[k]));
      if (k + 1 < l.ids.size()) l.s.push_back(t_sample - table.birth(l.ids[k]));
    }
    l.s_founder = t_sample - table.birth(l.ids.back());
    out.push_back(std::move(l));
  }
  return out;
}

struct LineageStats {
  AncestralSeries series;
  std::vector<std::size_t> n_alive;
};

inline LineageStats lineage_stats(const std::vector<Lineage>& lineages, const std::vector<double>& s_grid, double c,
                                  double t_sample) {
  LineageStats out;
  out.series.source = "ibm";
  for (double s : s_grid) {
    std::vector<double> v;
    for (const auto& l : lineages) {
      const double z = l.z_at(s, c, t_sample);
      if (std::isfinite(z)) v.push_back(z);
    }
    const auto sum = summarize(v);
    out.series.s.push_back(s);
    out.series.mean.push_back(sum.mean);
    out.series.variance.push_back(sum.variance);
    out.series.q05.push_back(sum.q05);
    out.series.q95.push_back(sum.q95);
    out.n_alive.push_back(v.size());
  }
  if (!lineages.empty()) out.series.start = lineages.front().z_at(0.0, c, t_sample);
  return out;
}

/// Backward time to the most recent common ancestor of two sampled
/// individuals, infinite when their chains end at different founders.
inline double pair_coalescence_time(const LineageTable& table, std::int64_t a, std::int64_t b, double t_sample) {
  if (a == b) return 0.0;
  const auto ca = table.chain(a);
  const auto cb = table.chain(b);
  std::size_t i = 0, j = 0;
  // Both chains list strictly decreasing ids; walk them like a merge.
  while (i < ca.size() && j < cb.size() && ca[i] != cb[j]) {
    if (ca[i] > cb[j]) ++i; else ++j;
  }
  if (i >= ca.size() || j >= cb.size()) return INFINITY;
  const double ta = i > 0 ? table.birth(ca[i - 1]) : t_sample;
  const double tb = j > 0 ? table.birth(cb[j - 1]) : t_sample;
  return t_sample - std::min(ta, tb);
}

struct PairTime {
  std::size_t pair_id = 0;
  std::int64_t a = 0;
  std::int64_t b = 0;
  double t2 = 0.0;
};

inline std::vector<PairTime> coalescence_times(const LineageTable& table, std::vector<std::int64_t> sample,
                                               double t_sample, std::size_t max_pairs, Rng& rng) {
  std::sort(sample.begin(), sample.end());
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  const std::size_t n = sample.size();
  const std::size_t all = n * (n > 0 ? n - 1 : 0) / 2;
  if (all <= max_pairs) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(sample[i], sample[j]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (pairs.size() < max_pairs) {
      const std::size_t i = pick(rng), j = pick(rng);
      if (i != j) pairs.emplace_back(sample[std::min(i, j)], sample[std::max(i, j)]);
    }
  }
  std::vector<PairTime> out;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    out.push_back({k, pairs[k].first, pairs[k].second,
                   pair_coalescence_time(table, pairs[k].first, pairs[k].second, t_sample)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Replicates.
// ---------------------------------------------------------------------------

struct ReplicateResult {
  std::size_t index = 0;
  bool extinct = false;
  double extinction_time = NAN;
  std::vector<double> histogram;        // pooled moving-frame counts on the grid cells
  std::size_t snapshots = 0;
  std::vector<double> sizes;            // population size at each snapshot
  std::vector<std::int64_t> sample;
  std::vector<Lineage> lineages;
  std::vector<PairTime> t2;
  std::size_t table_size = 0;
  LineageTable table;                   // kept only when requested
};

struct IBMResult {
  Grid grid;
  double dt = 0.0;
  double t_sample = 0.0;
  std::vector<ReplicateResult> replicates;
  std::vector<double> histogram;        // pooled over snapshots and surviving replicates
  std::size_t extinct = 0;

  /// Pooled histogram as a unit-mass density on the grid.
  Field density() const {
    Field f(grid);
    double total = 0.0;
    for (double h : histogram) total += h;
    if (total > 0.0) {
      for (std::size_t i = 0; i < f.size(); ++i) f[i] = histogram[i] / (total * grid.dz());
    }
    return f;
  }

  double mean_population() const {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& r : replicates) {
      if (r.extinct) continue;
      for (double s : r.sizes) {
        acc += s;
        ++n;
      }
    }
    return n ? acc / static_cast<double>(n) : 0.0;
  }
};

namespace detail {

inline void add_to_histogram(const Grid& grid, const Population& pop, double c, std::vector<double>& hist) {
  const double lo = grid.z(0) - 0.5 * grid.dz();
  const double hi = grid.z(grid.size() - 1) + 0.5 * grid.dz();
  for (double x : pop.traits) {
    const double z = x - c * pop.t;
    if (z < lo || z >= hi) continue;
    hist[grid.index_of(z)] += 1.0;
  }
}

inline std::vector<std::int64_t> select_sample(const Grid& grid, const Population& pop, const IBMConfig& cfg,
                                               Rng& rng) {
  std::vector<double> hist(grid.size(), 0.0);
  add_to_histogram(grid, pop, cfg.params.c, hist);
  std::size_t centre = cfg.sample.at_dominant
                           ? static_cast<std::size_t>(std::max_element(hist.begin(), hist.end()) - hist.begin())
                           : grid.index_of(cfg.sample.trait);
  const std::size_t lo = centre > 0 ? centre - 1 : 0;
  const std::size_t hi = std::min(centre + 1, grid.size() - 1);
  std::vector<std::int64_t> chosen;
  for (std::size_t k = 0; k < pop.size(); ++k) {
    const double z = pop.traits[k] - cfg.params.c * pop.t;
    const std::size_t i = grid.index_of(z);
    if (i >= lo && i <= hi && std::abs(z - grid.z(i)) <= 0.5 * grid.dz()) chosen.push_back(pop.ids[k]);
  }
  std::sort(chosen.begin(), chosen.end());
  if (cfg.sample.count > 0 && chosen.size() > cfg.sample.count) {
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(cfg.sample.count);
    std::sort(chosen.begin(), chosen.end());
  }
  return chosen;
}

}  // namespace detail

inline ReplicateResult run_replicate(const IBMConfig& cfg, const Field& F, double lambda, const Grid& hist_grid,
                                     double dt, std::size_t index) {
  Rng rng(stream_seed(cfg.seed, index));
  ReplicateResult r;
  r.index = index;
  r.histogram.assign(hist_grid.size(), 0.0);
  std::size_t n0 = cfg.initial_size;
  if (n0 == 0) {
    const double kappa = cfg.competition_strength > 0.0 ? cfg.competition_strength : 1.0;
    n0 = static_cast<std::size_t>(std::llround(static_cast<double>(cfg.carrying_capacity) * std::max(lambda, 0.0) / kappa));
    n0 = std::max<std::size_t>(n0, 10);
  }
  Population pop = initial_population(F, n0, rng);
  const double t_end = cfg.t_burn + cfg.t_record;
  const auto steps = static_cast<std::size_t>(std::llround(t_end / dt));
  const auto burn_steps = static_cast<std::size_t>(std::llround(cfg.t_burn / dt));
  const auto snap_every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.snapshot_interval / dt)));
  for (std::size_t k = 1; k <= steps; ++k) {
    step_population(pop, cfg, dt, rng);
    if (pop.size() == 0) {
      r.extinct = true;
      r.extinction_time = pop.t;
      break;
    }
    if (k > burn_steps && (k - burn_steps) % snap_every == 0) {
      detail::add_to_histogram(hist_grid, pop, cfg.params.c, r.histogram);
      r.sizes.push_back(static_cast<double>(pop.size()));
      ++r.snapshots;
    }
  }
  r.table_size = pop.table.size();
  if (!r.extinct) {
    check_genealogy(pop.table, pop.ids);
    r.sample = detail::select_sample(hist_grid, pop, cfg, rng);
    r.lineages = extract_lineages(pop.table, r.sample, pop.t);
    r.t2 = coalescence_times(pop.table, r.sample, pop.t, cfg.max_pairs, rng);
  }
  if (cfg.keep_tables) r.table = std::move(pop.table);
  return r;
}

/// Runs every replicate on its own (seed, index) stream; replicates are
/// independent, so the outcome does not depend on the worker count.
inline IBMResult run_replicates(const IBMConfig& cfg, const EquilibriumSolution& eq) {
  const double dt = cfg.dt > 0.0 ? cfg.dt : default_ibm_dt(cfg.params, eq.F);
  validate_ibm(cfg, dt);
  if (dt * (cfg.params.beta + 0.02 / default_ibm_dt(cfg.params, eq.F) + cfg.competition_strength) >= 0.5) {
    throw ConfigError("ibm.dt", "time step too large for the one-event-per-step approximation");
  }
  IBMResult out;
  out.grid = eq.F.grid;
  out.dt = dt;
  const auto steps = static_cast<std::size_t>(std::llround((cfg.t_burn + cfg.t_record) / dt));
  out.t_sample = static_cast<double>(steps) * dt;
  out.replicates.resize(cfg.replicates);
  parallel_for(cfg.replicates, [&](std::size_t k) {
    out.replicates[k] = run_replicate(cfg, eq.F, eq.lambda, out.grid, dt, k);
  });
  out.histogram.assign(out.grid.size(), 0.0);
  for (const auto& r : out.replicates) {
    if (r.extinct) {
      ++out.extinct;
      continue;
    }
    for (std::size_t i = 0; i < out.histogram.size(); ++i) out.histogram[i] += r.histogram[i];
  }
  return out;
}

/// Pooled lineage statistics over all surviving replicates.
inline LineageStats pooled_lineage_stats(const IBMResult& res, const std::vector<double>& s_grid, double c) {
  std::vector<Lineage> all;
  for (const auto& r : res.replicates) {
    if (!r.extinct) all.insert(all.end(), r.lineages.begin(), r.lineages.end());
  }
  return lineage_stats(all, s_grid, c, res.t_sample);
}

/// Across-replicate band of the per-replicate lineage mean.
struct ReplicateBand {
  std::vector<double> s;
  std::vector<double> mean;   // average of replicate means
  std::vector<double> q05;
  std::vector<double> q95;
  std::vector<std::size_t> replicates;
};

inline ReplicateBand replicate_mean_band(const IBMResult& res, const std::vector<double>& s_grid, double c) {
  ReplicateBand b;
  std::vector<std::vector<double>> means(s_grid.size());
  for (const auto& r : res.replicates) {
    if (r.extinct || r.lineages.empty()) continue;
    const auto st = lineage_stats(r.lineages, s_grid, c, res.t_sample);
    for (std::size_t k = 0; k < s_grid.size(); ++k) {
      if (st.n_alive[k] > 0) means[k].push_back(st.series.mean[k]);
    }
  }
  for (std::size_t k = 0; k < s_grid.size(); ++k) {
    const auto sum = summarize(means[k]);
    b.s.push_back(s_grid[k]);
    b.mean.push_back(sum.mean);
    b.q05.push_back(sum.q05);
    b.q95.push_back(sum.q95);
    b.replicates.push_back(means[k].size());
  }
  return b;
}

inline std::vector<double> all_t2(const IBMResult& res) {
  std::vector<double> v;
  for (const auto& r : res.replicates) {
    for (const auto& p : r.t2) v.push_back(p.t2);
  }
  return v;
}

}  // namespace lineagelab
