#pragma once

#include "uld/agent/agent.hpp"
#include "uld/agent/config.hpp"
#include "uld/agent/replay.hpp"
#include "uld/envs/env.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <vector>

namespace uld::agent {

struct EvalResult {
  double mean = 0.0;
  std::vector<double> returns;
};

using Policy = std::function<envs::Action(const envs::Observation&)>;

/// Mean undiscounted return over `episodes` episodes; episode e resets with
/// seed_base + e and is cut at the env's horizon.
EvalResult evaluate(const Policy& policy, envs::Environment& env, int episodes, std::uint64_t seed_base);
/// Greedy actions from the target encoder and target policy.
EvalResult evaluate(const Agent& agent, envs::Environment& env, int episodes, std::uint64_t seed_base);

/// Deterministic seed derivation (splitmix64 over the parts).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);
/// Seed base used by every evaluation of a run, so evaluations are comparable.
std::uint64_t evaluation_seed(std::uint64_t run_seed);

struct TrainingHooks {
  /// Called after every update (after priorities are refreshed).
  std::function<void(const Agent&, long long t, const TrainMetrics&)> after_update;
  /// Called after every evaluation record.
  std::function<void(const nlohmann::json&)> on_record;
};

struct RunResult {
  std::vector<nlohmann::json> records;
  long long steps = 0;  // environment steps taken
  long long updates = 0;
  bool stopped_early = false;
  double last_return = 0.0;
  double best_return = 0.0;
};

/// Runs the full loop. With a non-empty run_dir it writes metrics.jsonl,
/// timing.jsonl (wall clock kept apart so metrics stay byte-reproducible),
/// periodic checkpoints and final.ckpt. On a training fault it writes
/// fault.json and fault.ckpt before rethrowing.
RunResult training_loop(const RunConfig& config, const std::filesystem::path& run_dir = {},
                        const TrainingHooks& hooks = {});

}  // namespace uld::agent
