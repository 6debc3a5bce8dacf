#pragma once

#include "uld/agent/config.hpp"
#include "uld/envs/env.hpp"
#include "uld/repr/checkpoint.hpp"
#include "uld/repr/encoder.hpp"

#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>

namespace uld::agent {

/// Non-finite loss or gradient; carries a short state summary.
class TrainingFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ActionMode { kExplore, kGreedy };

struct ValueLoss {
  Tensor loss;
  Eigen::VectorXd td_errors;  // |Q - y|, max over the two critics
};

struct TrainMetrics {
  double representation_loss = 0.0;
  double reward_loss = 0.0;
  double dynamics_loss = 0.0;
  double terminal_loss = 0.0;
  double value_loss = 0.0;
  double policy_loss = 0.0;
  double mean_td_error = 0.0;
  double reward_scale = 0.0;
  bool synced = false;
  Eigen::VectorXd td_errors;  // for priority updates
};

/// Encoders, twin critics, deterministic policy, their targets, optimizer
/// state and reward scaling.
class Agent {
 public:
  Agent(const AgentConfig& config, const envs::EnvSpec& spec, std::uint64_t seed);
  // Parameters are shared handles, so a copy would alias the original.
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;
  Agent(Agent&&) = default;
  Agent& operator=(Agent&&) = default;

  const AgentConfig& config() const { return config_; }
  const envs::EnvSpec& spec() const { return spec_; }

  // Action selection --------------------------------------------------
  /// Online encoder and policy; explore adds noise (continuous) or samples
  /// a Gumbel-softmax action (discrete).
  envs::Action select_action(const envs::Observation& obs, ActionMode mode);
  /// Same rule on a batch of state embeddings; uses the online policy.
  Tensor select_action(const Tensor& z_s, ActionMode mode, std::mt19937_64& rng) const;
  /// Greedy action from target encoder + target policy, used for evaluation.
  envs::Action evaluation_action(const envs::Observation& obs) const;
  /// Smoothed target-policy action. `noise`, when given, replaces the
  /// Gaussian draw (before clipping).
  Tensor target_action(const Tensor& z_next, std::mt19937_64& rng,
                       const Tensor::Matrix* noise = nullptr) const;

  // Losses -------------------------------------------------------------
  /// Per-item multi-step targets, already divided by the reward scale.
  Eigen::VectorXd multistep_target(const repr::SegmentBatch& batch,
                                   const Tensor::Matrix* target_noise = nullptr);
  ValueLoss value_loss(const repr::SegmentBatch& batch, const Eigen::VectorXd& targets) const;
  /// `gumbel_noise`, when given, replaces the Gumbel draw for discrete actions.
  Tensor policy_loss(const repr::SegmentBatch& batch, const Tensor::Matrix* gumbel_noise = nullptr);
  repr::RepresentationLoss representation_loss(const repr::SegmentBatch& batch) const;

  /// Representation, value, then policy update; updates r̄ from the batch;
  /// syncs targets when the update count reaches a multiple of t_target.
  TrainMetrics train_step(const repr::SegmentBatch& batch);

  void sync_targets();

  // State ----------------------------------------------------------------
  double reward_scale() const { return reward_scale_; }
  double target_reward_scale() const { return target_reward_scale_; }
  void set_reward_scales(double r, double r_target) {
    reward_scale_ = r;
    target_reward_scale_ = r_target;
  }
  /// Scale actually used: max(r̄, ε_r).
  double effective_scale(double r) const { return r < config_.reward_scale_min ? config_.reward_scale_min : r; }
  long long updates() const { return updates_; }
  long long scale_clamps() const { return scale_clamps_; }
  bool terminal_seen() const { return terminal_seen_; }
  void observe_terminal() { terminal_seen_ = true; }
  std::mt19937_64& rng() { return rng_; }

  repr::EncoderStack& encoders() { return encoders_; }
  const repr::EncoderStack& encoders() const { return encoders_; }
  repr::Mlp& critic(int i) { return critics_[i]; }
  const repr::Mlp& critic(int i) const { return critics_[i]; }
  repr::Mlp& policy() { return policy_; }
  const repr::Mlp& policy() const { return policy_; }
  repr::Mlp& critic_target(int i) { return critic_targets_[i]; }
  repr::Mlp& policy_target() { return policy_target_; }

  std::vector<Tensor> critic_parameters() const;
  /// All online parameters (encoders, model, critics, policy).
  std::vector<Tensor> online_parameters() const;
  /// All target parameters, in an order mirroring the online counterparts
  /// of encoders, critics and policy.
  std::vector<Tensor> target_parameters() const;
  std::vector<Tensor> synced_online_parameters() const;

  // Checkpoints -------------------------------------------------------------
  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
  /// Restores an agent saved with save(); refuses a mismatched env spec.
  static Agent load(const std::filesystem::path& path, const envs::EnvSpec* expected = nullptr);

 private:
  std::vector<repr::NamedTensor> named_arrays() const;
  Tensor critic_min(const Tensor& z_sa, bool target) const;
  void check_finite(const char* what, double value) const;

  AgentConfig config_;
  envs::EnvSpec spec_;
  std::mt19937_64 rng_;
  repr::EncoderStack encoders_;
  repr::Mlp critics_[2], critic_targets_[2];
  repr::Mlp policy_, policy_target_;
  AdamState encoder_opt_, critic_opt_, policy_opt_;
  double reward_scale_ = 0.0, target_reward_scale_ = 0.0;
  long long updates_ = 0, scale_clamps_ = 0;
  bool terminal_seen_ = false;
};

repr::EncoderDims encoder_dims(const AgentConfig& config, const envs::EnvSpec& spec);

}  // namespace uld::agent
