#pragma once

#include "uld/envs/env.hpp"

#include <array>

namespace uld::envs {

/// 8x8 grid, start in one corner, goal in the opposite one. Moves into a
/// wall leave the agent in place.
class GridWorld final : public Environment {
 public:
  static constexpr int kSide = 8;
  static constexpr int kCells = kSide * kSide;

  GridWorld(std::string name, double step_reward);

  const EnvSpec& spec() const override { return spec_; }
  std::optional<lab::TabularMdp<double>> tabular_model(double gamma) const override;
  int tabular_state() const override { return cell_; }

 protected:
  Observation do_reset() override;
  StepResult do_step(const Action& action) override;

 private:
  static int move(int cell, int action);
  Observation observe() const;

  EnvSpec spec_;
  double step_reward_;
  int cell_ = 0;
};

/// Torque-driven pendulum, swing-up from a random start.
class Pendulum final : public Environment {
 public:
  Pendulum();
  const EnvSpec& spec() const override { return spec_; }
  double angle() const { return theta_; }
  double velocity() const { return theta_dot_; }

 protected:
  Observation do_reset() override;
  StepResult do_step(const Action& action) override;

 private:
  Observation observe() const;

  EnvSpec spec_;
  double theta_ = 0, theta_dot_ = 0;
};

/// One-step bandit with Gaussian reward noise around fixed arm means.
class Bandit final : public Environment {
 public:
  static constexpr std::array<double, 5> kMeans{0.2, -0.5, 1.0, 0.0, 0.6};
  static constexpr double kNoise = 0.1;

  Bandit();
  const EnvSpec& spec() const override { return spec_; }
  std::optional<lab::TabularMdp<double>> tabular_model(double gamma) const override;
  int tabular_state() const override { return 0; }

 protected:
  Observation do_reset() override;
  StepResult do_step(const Action& action) override;

 private:
  EnvSpec spec_;
};

/// Ten states in a row; only reaching the right end pays.
class Chain final : public Environment {
 public:
  static constexpr int kLength = 10;

  Chain();
  const EnvSpec& spec() const override { return spec_; }
  std::optional<lab::TabularMdp<double>> tabular_model(double gamma) const override;
  int tabular_state() const override { return pos_; }

 protected:
  Observation do_reset() override;
  StepResult do_step(const Action& action) override;

 private:
  Observation observe() const;

  EnvSpec spec_;
  int pos_ = 0;
};

}  // namespace uld::envs
