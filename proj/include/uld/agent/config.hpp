#pragma once

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace uld::agent {

/// Every tunable of the agent. One set for all environments.
struct AgentConfig {
  // Encoders and latent model.
  int state_dim = 64;
  int state_action_dim = 64;
  int hidden = 128;
  int hidden_layers = 2;
  double z_cap = 5.0;
  int n_bins = 51;
  double bin_half_range = 10.0;

  // Representation loss.
  int h_enc = 3;
  double lambda_r = 1.0;
  double lambda_d = 1.0;
  double lambda_t = 1.0;

  // Value and policy losses.
  int h_q = 3;
  double gamma = 0.99;
  double huber_delta = 1.0;
  double lambda_pre = 1e-4;
  double sigma_explore = 0.1;
  double sigma_target = 0.2;
  double target_noise_clip = 0.5;
  double gumbel_tau = 1.0;

  // Schedule and optimisation.
  int t_target = 250;
  int f_eval = 5000;
  int n_eval = 10;
  double lr = 3e-4;
  double reward_ema = 0.99;
  double reward_scale_min = 1e-2;

  // Replay.
  std::size_t batch_size = 256;
  std::size_t replay_capacity = 100000;
  std::size_t warmup = 1000;
  double priority_alpha = 0.6;
  double priority_eps = 1e-3;

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;
  int segment_length() const { return h_enc > h_q ? h_enc : h_q; }
};

struct RunConfig {
  std::string env = "grid_sparse";
  std::uint64_t seed = 0;
  long long t_total = 150000;
  std::string out_dir;          // empty: derived from the output root
  long long checkpoint_every = 50000;  // 0 disables periodic checkpoints
  std::optional<double> stop_at_return;  // stop after an evaluation reaching this
  AgentConfig agent;

  void validate() const;
};

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& why)
      : std::invalid_argument(key + ": " + why), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// One settable key. Values travel as strings so config files, flags and
/// snapshots share a single code path; doubles print in shortest
/// round-trip form.
struct ConfigField {
  std::string key;
  std::string help;
  bool agent = false;  // part of AgentConfig (stored in checkpoints)
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;  // throws ConfigError
};

const std::vector<ConfigField>& config_fields();
const ConfigField* find_field(const std::string& key);
/// Sets key=value; unknown keys raise ConfigError naming the key.
void set_field(RunConfig& config, const std::string& key, const std::string& value);

nlohmann::json to_json(const AgentConfig& config);
AgentConfig agent_config_from_json(const nlohmann::json& j);

}  // namespace uld::agent
