#pragma once

#include "uld/lab/mdp.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace uld::envs {

using Observation = Eigen::VectorXd;
/// Continuous: k values in [-1, 1]. Discrete: one-hot of length n.
using Action = Eigen::VectorXd;

enum class ActionKind { kContinuous, kDiscrete };

struct EnvSpec {
  std::string name;
  int observation_dim = 0;
  ActionKind action_kind = ActionKind::kDiscrete;
  int action_dim = 0;  // k for continuous, n for discrete
  int horizon = 1;
  std::string reward_scale;

  bool discrete() const { return action_kind == ActionKind::kDiscrete; }
  void validate() const;
  std::string describe() const;
  nlohmann::json to_json() const;
  bool operator==(const EnvSpec&) const = default;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;       // true termination, no bootstrap
  bool truncated = false;  // horizon cap; bootstrapping continues
};

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  /// Restarts the episode; all randomness in the episode derives from seed.
  Observation reset(std::uint64_t seed);
  /// Applies an action. Requires a prior reset and a valid action.
  StepResult step(const Action& action);
  /// Explicit model for discrete environments (terminal transitions lead to
  /// an absorbing zero-reward state appended last).
  virtual std::optional<lab::TabularMdp<double>> tabular_model(double gamma) const {
    (void)gamma;
    return std::nullopt;
  }
  /// Index of the tabular state corresponding to the current observation.
  virtual int tabular_state() const { return -1; }

  int elapsed_steps() const { return steps_; }

 protected:
  virtual Observation do_reset() = 0;
  virtual StepResult do_step(const Action& action) = 0;

  std::mt19937_64 rng_;

 private:
  void check_action(const Action& action) const;

  bool active_ = false;
  int steps_ = 0;
};

/// Index of the single 1 in a one-hot action.
int action_index(const Action& one_hot);
Action one_hot(int index, int n);

std::unique_ptr<Environment> make_env(const std::string& name);
std::vector<std::string> env_names();
nlohmann::json env_catalog();

/// Pendulum constants, shared with reference controllers.
struct PendulumConstants {
  static constexpr double kDt = 0.05;
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;
};

}  // namespace uld::envs
