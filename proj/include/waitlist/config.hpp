#pragma once

// Run configuration: one JSON document with a schema version and optional
// sections per command. Errors name the offending field path.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "waitlist/counterfactual.hpp"
#include "waitlist/market.hpp"
#include "waitlist/msm.hpp"
#include "waitlist/policy.hpp"

namespace waitlist {

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitSection {
  MsmConfig msm;
  std::optional<Eigen::VectorXd> start_alpha;
  /// Simulate with the generating stream (draw 0), so Q at the generating
  /// theta is exactly zero when draws = 1.
  bool matched_draws = false;
};

struct CounterfactualSection {
  Scenario scenario;
  bool theta_from_config = false;  // otherwise read theta.json from the input directory
};

struct RunConfig {
  std::string hash;  // FNV-1a of the canonical JSON text
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::optional<std::string> input;  // directory with panel, belief and theta files
  std::optional<MarketConfig> market;  // theta_true is the "theta" section
  int first_stage_bootstrap = 2000;
  FitSection fit;
  CounterfactualSection counterfactual;
  BenchmarkConfig benchmark;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace waitlist
