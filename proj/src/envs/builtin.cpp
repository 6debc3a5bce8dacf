#include "uld/envs/builtin.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace uld::envs {

namespace {

constexpr int kUp = 0, kDown = 1, kLeft = 2, kRight = 3;

// Appends an absorbing zero-reward state as index `terminal`.
lab::TabularMdp<double> empty_model(int states, int actions, double gamma) {
  lab::TabularMdp<double> m;
  m.num_states = states + 1;
  m.num_actions = actions;
  m.gamma = gamma;
  m.transitions = lab::Matrix<double>::Zero(m.num_states * actions, m.num_states);
  m.rewards = lab::Vector<double>::Zero(m.num_states * actions);
  for (int a = 0; a < actions; ++a) m.transitions(m.pair(states, a), states) = 1.0;
  return m;
}

}  // namespace

// ---------------------------------------------------------------- GridWorld

GridWorld::GridWorld(std::string name, double step_reward) : step_reward_(step_reward) {
  spec_.name = std::move(name);
  spec_.observation_dim = kCells;
  spec_.action_kind = ActionKind::kDiscrete;
  spec_.action_dim = 4;
  spec_.horizon = 100;
  spec_.reward_scale = step_reward == 0.0 ? "sparse: 1 at goal, else 0" : "goal 1, step -0.01";
  spec_.validate();
}

int GridWorld::move(int cell, int action) {
  int r = cell / kSide, c = cell % kSide;
  switch (action) {
    case kUp: r = std::max(r - 1, 0); break;
    case kDown: r = std::min(r + 1, kSide - 1); break;
    case kLeft: c = std::max(c - 1, 0); break;
    case kRight: c = std::min(c + 1, kSide - 1); break;
    default: break;
  }
  return r * kSide + c;
}

Observation GridWorld::observe() const {
  Observation o = Observation::Zero(kCells);
  o[cell_] = 1.0;
  return o;
}

Observation GridWorld::do_reset() {
  cell_ = 0;
  return observe();
}

StepResult GridWorld::do_step(const Action& action) {
  cell_ = move(cell_, action_index(action));
  StepResult out;
  out.done = cell_ == kCells - 1;
  out.reward = out.done ? 1.0 : step_reward_;
  out.observation = observe();
  return out;
}

std::optional<lab::TabularMdp<double>> GridWorld::tabular_model(double gamma) const {
  auto m = empty_model(kCells, 4, gamma);
  const int terminal = kCells;
  for (int s = 0; s < kCells; ++s)
    for (int a = 0; a < 4; ++a) {
      const int i = m.pair(s, a);
      if (s == kCells - 1) {
        // Goal is never occupied mid-episode; treat it as absorbing.
        m.transitions(i, terminal) = 1.0;
        continue;
      }
      const int next = move(s, a);
      if (next == kCells - 1) {
        m.transitions(i, terminal) = 1.0;
        m.rewards(i) = 1.0;
      } else {
        m.transitions(i, next) = 1.0;
        m.rewards(i) = step_reward_;
      }
    }
  return m;
}

// ---------------------------------------------------------------- Pendulum

Pendulum::Pendulum() {
  spec_.name = "pendulum_c";
  spec_.observation_dim = 3;
  spec_.action_kind = ActionKind::kContinuous;
  spec_.action_dim = 1;
  spec_.horizon = 200;
  spec_.reward_scale = "dense: -(theta^2 + 0.1 thetadot^2 + 0.001 torque^2), in [-16.3, 0]";
  spec_.validate();
}

Observation Pendulum::observe() const {
  Observation o(3);
  o << std::cos(theta_), std::sin(theta_), theta_dot_;
  return o;
}

Observation Pendulum::do_reset() {
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> speed(-1.0, 1.0);
  theta_ = angle(rng_);
  theta_dot_ = speed(rng_);
  return observe();
}

StepResult Pendulum::do_step(const Action& action) {
  using K = PendulumConstants;
  const double u = K::kMaxTorque * action[0];
  const double wrapped = std::remainder(theta_, 2.0 * std::numbers::pi);
  const double cost = wrapped * wrapped + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;

  const double accel = 3.0 * K::kGravity / (2.0 * K::kLength) * std::sin(theta_) +
                       3.0 / (K::kMass * K::kLength * K::kLength) * u;
  theta_dot_ = std::clamp(theta_dot_ + accel * K::kDt, -K::kMaxSpeed, K::kMaxSpeed);
  theta_ = theta_ + theta_dot_ * K::kDt;

  StepResult out;
  out.reward = -cost;
  out.observation = observe();
  return out;
}

// ---------------------------------------------------------------- Bandit

Bandit::Bandit() {
  spec_.name = "bandit_d";
  spec_.observation_dim = 1;
  spec_.action_kind = ActionKind::kDiscrete;
  spec_.action_dim = static_cast<int>(kMeans.size());
  spec_.horizon = 1;
  spec_.reward_scale = "arm mean + N(0, 0.1^2), best mean 1.0";
  spec_.validate();
}

Observation Bandit::do_reset() { return Observation::Ones(1); }

StepResult Bandit::do_step(const Action& action) {
  std::normal_distribution<double> noise(0.0, kNoise);
  StepResult out;
  out.reward = kMeans[action_index(action)] + noise(rng_);
  out.done = true;
  out.observation = Observation::Ones(1);
  return out;
}

std::optional<lab::TabularMdp<double>> Bandit::tabular_model(double gamma) const {
  const int n = static_cast<int>(kMeans.size());
  auto m = empty_model(1, n, gamma);
  for (int a = 0; a < n; ++a) {
    m.transitions(m.pair(0, a), 1) = 1.0;
    m.rewards(m.pair(0, a)) = kMeans[a];
  }
  return m;
}

// ---------------------------------------------------------------- Chain

Chain::Chain() {
  spec_.name = "chain_sparse";
  spec_.observation_dim = kLength;
  spec_.action_kind = ActionKind::kDiscrete;
  spec_.action_dim = 2;
  spec_.horizon = 40;
  spec_.reward_scale = "sparse: 1 at the far end, else 0";
  spec_.validate();
}

Observation Chain::observe() const {
  Observation o = Observation::Zero(kLength);
  o[pos_] = 1.0;
  return o;
}

Observation Chain::do_reset() {
  pos_ = 0;
  return observe();
}

StepResult Chain::do_step(const Action& action) {
  pos_ = action_index(action) == 1 ? pos_ + 1 : std::max(pos_ - 1, 0);
  StepResult out;
  out.done = pos_ == kLength - 1;
  out.reward = out.done ? 1.0 : 0.0;
  out.observation = observe();
  return out;
}

std::optional<lab::TabularMdp<double>> Chain::tabular_model(double gamma) const {
  auto m = empty_model(kLength, 2, gamma);
  const int terminal = kLength;
  for (int s = 0; s < kLength; ++s)
    for (int a = 0; a < 2; ++a) {
      const int i = m.pair(s, a);
      const int next = s == kLength - 1 ? terminal : (a == 1 ? s + 1 : std::max(s - 1, 0));
      if (next == kLength - 1) {
        m.transitions(i, terminal) = 1.0;
        m.rewards(i) = 1.0;
      } else {
        m.transitions(i, next) = 1.0;
      }
    }
  return m;
}

}  // namespace uld::envs
