#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace uld::lab {

enum class FeatureMode {
  kRandom,         // standard-normal features, d <= max_dim
  kTabular,        // Z = I
  kRankDeficient,  // Z with a duplicated column; every draw fails the rank check
};

struct LabOptions {
  int trials = 50;
  std::uint64_t seed = 7;
  int max_states = 6;
  int max_actions = 3;
  int max_dim = 4;
  FeatureMode features = FeatureMode::kRandom;
  int abstraction_horizon = 200;
  int max_retries = 25;
  double equivalence_tol = 1e-8;
  double bound_slack = 1e-9;
};

struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  int num_states = 0, num_actions = 0, dim = 0;
  double gamma = 0;
  int retries = 0;
  bool skipped = false;  // conditioning retries exhausted; no assertion made
  std::string diagnostic;
  double iterative_deviation = 0;
  double model_based_deviation = 0;
  long long td_iterations = 0;
  double max_value_error = 0;
  double value_error_bound = 0;
  bool equivalence_passed = false;
  bool bound_passed = false;
  bool passed = false;
};

struct AbstractionRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  bool expect_violation = false;
  int num_states = 0, num_labels = 0, num_actions = 0;
  double gamma = 0;
  double reward_residual = 0, transition_residual = 0, policy_residual = 0;
  bool conditions_hold = false;
  std::string violation;
  double max_value_deviation = 0, value_bound = 0;
  bool greedy_lift_optimal = false;
  bool passed = false;  // for violating instances: flagged as such
};

struct LabSummary {
  std::vector<TrialRecord> trials;
  std::vector<AbstractionRecord> abstractions;
  int passed = 0, failed = 0, skipped = 0, total_retries = 0;
  bool all_passed() const { return failed == 0; }
};

/// One equivalence + value-error trial on a freshly generated instance.
TrialRecord run_equivalence_trial(int trial, std::uint64_t seed, const LabOptions& options);

/// One abstraction trial. With expect_violation, the instance is perturbed so
/// that transition aggregation fails and the check must flag it.
AbstractionRecord run_abstraction_trial(int trial, std::uint64_t seed, bool expect_violation,
                                        int horizon);

/// Runs `trials` equivalence trials, `trials` abstraction trials (capped at
/// 20) and one deliberately violating abstraction instance.
LabSummary run_lab(const LabOptions& options);

nlohmann::json to_json(const TrialRecord& r);
nlohmann::json to_json(const AbstractionRecord& r);

}  // namespace uld::lab
