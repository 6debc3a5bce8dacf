#include "uld/envs/env.hpp"

#include "uld/envs/builtin.hpp"

#include <cmath>
#include <sstream>

namespace uld::envs {

void EnvSpec::validate() const {
  if (horizon < 1) throw EnvError("env spec: horizon must be >= 1 in " + describe());
  if (observation_dim < 1) throw EnvError("env spec: observation_dim must be >= 1 in " + describe());
  if (discrete() ? action_dim < 2 : action_dim < 1)
    throw EnvError("env spec: invalid action dimension in " + describe());
}

std::string EnvSpec::describe() const {
  std::ostringstream os;
  os << name << "{obs=" << observation_dim << ", action=" << (discrete() ? "discrete:" : "continuous:")
     << action_dim << ", horizon=" << horizon << ", reward=" << reward_scale << "}";
  return os.str();
}

nlohmann::json EnvSpec::to_json() const {
  return {{"name", name},
          {"observation_dim", observation_dim},
          {"action_type", discrete() ? "discrete" : "continuous"},
          {"action_dim", action_dim},
          {"horizon", horizon},
          {"reward_scale", reward_scale}};
}

Observation Environment::reset(std::uint64_t seed) {
  rng_.seed(seed);
  active_ = true;
  steps_ = 0;
  return do_reset();
}

StepResult Environment::step(const Action& action) {
  if (!active_) throw EnvError("step before reset on " + spec().describe());
  check_action(action);
  StepResult out = do_step(action);
  ++steps_;
  if (out.done) {
    active_ = false;
  } else if (steps_ >= spec().horizon) {
    out.truncated = true;
    active_ = false;
  }
  return out;
}

void Environment::check_action(const Action& action) const {
  const EnvSpec& s = spec();
  std::ostringstream why;
  if (action.size() != s.action_dim) {
    why << "expected " << s.action_dim << " action components, got " << action.size();
  } else if (!action.allFinite()) {
    why << "action has non-finite components";
  } else if (s.discrete()) {
    int ones = 0;
    bool binary = true;
    for (Eigen::Index i = 0; i < action.size(); ++i) {
      if (action[i] == 1.0)
        ++ones;
      else if (action[i] != 0.0)
        binary = false;
    }
    if (!binary || ones != 1) why << "discrete action must be one-hot";
  } else if (action.cwiseAbs().maxCoeff() > 1.0) {
    why << "continuous action outside [-1, 1]";
  }
  const std::string msg = why.str();
  if (!msg.empty()) throw EnvError("invalid action: " + msg + " for " + s.describe());
}

int action_index(const Action& a) {
  Eigen::Index i = 0;
  a.maxCoeff(&i);
  return static_cast<int>(i);
}

Action one_hot(int index, int n) {
  if (index < 0 || index >= n) throw EnvError("one_hot: index out of range");
  Action a = Action::Zero(n);
  a[index] = 1.0;
  return a;
}

std::vector<std::string> env_names() {
  return {"grid_sparse", "grid_dense", "pendulum_c", "bandit_d", "chain_sparse"};
}

std::unique_ptr<Environment> make_env(const std::string& name) {
  if (name == "grid_sparse") return std::make_unique<GridWorld>(name, 0.0);
  if (name == "grid_dense") return std::make_unique<GridWorld>(name, -0.01);
  if (name == "pendulum_c") return std::make_unique<Pendulum>();
  if (name == "bandit_d") return std::make_unique<Bandit>();
  if (name == "chain_sparse") return std::make_unique<Chain>();
  std::string names;
  for (const auto& n : env_names()) names += (names.empty() ? "" : ", ") + n;
  throw EnvError("unknown environment '" + name + "'; available: " + names);
}

nlohmann::json env_catalog() {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& n : env_names()) {
    auto env = make_env(n);
    auto entry = env->spec().to_json();
    entry["tabular"] = env->tabular_model(0.99).has_value();
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace uld::envs
