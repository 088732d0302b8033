#include <string>

#include <gtest/gtest.h>

#include "lineagelab/config.hpp"

using namespace lineagelab;

namespace {

Json base() {
  return Json::parse(R"({
    "model": {"beta": 2.0, "sigma": 0.1, "c": 0.2,
              "selection": {"kind": "quadratic", "alpha": 2.0}, "kernel": {"kind": "gaussian"}}
  })");
}

std::string failing_key(const Json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsFillTheOptionalSections) {
  const auto cfg = parse_config(base());
  EXPECT_DOUBLE_EQ(cfg.model.mu0, 1.0);
  EXPECT_TRUE(cfg.model.upwind_correction);
  EXPECT_EQ(cfg.grid.size(), 1201u);
  EXPECT_EQ(cfg.solver.mode, MutationMode::Nonlocal);
  EXPECT_TRUE(cfg.ancestral.z0.dominant);
  EXPECT_EQ(cfg.ibm.N, 20000u);
  EXPECT_EQ(cfg.ibm.competition, "literal");
  EXPECT_EQ(cfg.seed, 1u);
}

TEST(Config, MissingAndUnknownKeysAreNamed) {
  Json j = base();
  j["model"].erase("sigma");
  EXPECT_EQ(failing_key(j), "model.sigma");

  j = base();
  j["model"]["gamma"] = 1.0;
  EXPECT_EQ(failing_key(j), "model.gamma");

  j = base();
  j["ibm"] = {{"sample", {{"where", 1}}}};
  EXPECT_EQ(failing_key(j), "ibm.sample.where");

  j = base();
  j["solver"] = {{"mode", "spectral"}};
  EXPECT_EQ(failing_key(j), "solver.mode");

  j = base();
  j["grid"] = {{"n", 10.5}};
  EXPECT_EQ(failing_key(j), "grid.n");

  j = base();
  j["ancestral"] = {{"z0", "left"}};
  EXPECT_EQ(failing_key(j), "ancestral.z0");

  j = base();
  j["model"]["selection"] = {{"kind", "power"}, {"q", 3}};
  EXPECT_EQ(failing_key(j), "model.selection.q");

  j = base();
  j["model"]["mu0"] = 3.0;
  EXPECT_EQ(failing_key(j), "model");

  EXPECT_EQ(failing_key(Json::array()), "config");
}

TEST(Config, OverridesUseDottedKeys) {
  Json j = base();
  apply_override(j, "model.c=0.05");
  apply_override(j, "solver.mode=diffusive");
  apply_override(j, "ancestral.z0=-0.3");
  apply_override(j, "ibm.sample.count=40");
  const auto cfg = parse_config(j);
  EXPECT_DOUBLE_EQ(cfg.model.c, 0.05);
  EXPECT_EQ(cfg.solver.mode, MutationMode::Diffusive);
  EXPECT_FALSE(cfg.ancestral.z0.dominant);
  EXPECT_DOUBLE_EQ(cfg.ancestral.z0.value, -0.3);
  EXPECT_EQ(cfg.ibm.sample_count, 40u);
  EXPECT_THROW(apply_override(j, "no_equals_sign"), ConfigError);
  EXPECT_THROW(apply_override(j, "model.c.x=1"), ConfigError);
}

TEST(Config, SampleConfigsParse) {
  for (const char* name : {"quadratic_diffusive.json", "moving_optimum.json", "ibm_smoke.json"}) {
    const std::string path = std::string(LINEAGELAB_CONFIG_DIR) + "/" + name;
    EXPECT_NO_THROW(parse_config(parse_json_text(read_file(path), path))) << name;
  }
  EXPECT_THROW(read_file("/nonexistent/config.json"), ConfigError);
  EXPECT_THROW(parse_json_text("{not json", "inline"), ConfigError);
}
