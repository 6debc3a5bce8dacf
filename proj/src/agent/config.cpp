#include "uld/agent/config.hpp"

#include "uld/envs/env.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <type_traits>

namespace uld::agent {

namespace {

template <typename T>
std::string format(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, std::optional<double>>) {
    return v ? format(*v) : std::string("none");
  } else {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  }
}

template <typename T>
T parse(const std::string& key, const std::string& text) {
  if constexpr (std::is_same_v<T, std::string>) {
    return text;
  } else if constexpr (std::is_same_v<T, std::optional<double>>) {
    if (text.empty() || text == "none") return std::nullopt;
    return parse<double>(key, text);
  } else {
    T v{};
    const char* end = text.data() + text.size();
    auto res = std::from_chars(text.data(), end, v);
    if (text.empty() || res.ec != std::errc() || res.ptr != end)
      throw ConfigError(key, std::string("cannot parse '") + text + "' as " +
                                 (std::is_floating_point_v<T> ? "a number" : "an integer"));
    if constexpr (std::is_floating_point_v<T>)
      if (!std::isfinite(v)) throw ConfigError(key, "value must be finite");
    return v;
  }
}

template <typename T>
ConfigField agent_field(std::string key, std::string help, T AgentConfig::*member) {
  ConfigField f;
  f.key = key;
  f.help = std::move(help);
  f.agent = true;
  f.get = [member](const RunConfig& c) { return format(c.agent.*member); };
  f.set = [member, key](RunConfig& c, const std::string& v) { c.agent.*member = parse<T>(key, v); };
  return f;
}

template <typename T>
ConfigField run_field(std::string key, std::string help, T RunConfig::*member) {
  ConfigField f;
  f.key = key;
  f.help = std::move(help);
  f.get = [member](const RunConfig& c) { return format(c.*member); };
  f.set = [member, key](RunConfig& c, const std::string& v) { c.*member = parse<T>(key, v); };
  return f;
}

std::vector<ConfigField> build_fields() {
  using A = AgentConfig;
  using R = RunConfig;
  return {
      run_field("env", "environment name", &R::env),
      run_field("seed", "run seed", &R::seed),
      run_field("t_total", "environment steps", &R::t_total),
      run_field("out_dir", "run directory (default: <output root>/<env>_seed<seed>)", &R::out_dir),
      run_field("checkpoint_every", "steps between checkpoints, 0 = final only", &R::checkpoint_every),
      run_field("stop_at_return", "stop once an evaluation reaches this return (none = off)",
                &R::stop_at_return),
      agent_field("state_dim", "state embedding size d_s", &A::state_dim),
      agent_field("state_action_dim", "state-action embedding size d_sa", &A::state_action_dim),
      agent_field("hidden", "MLP hidden width", &A::hidden),
      agent_field("hidden_layers", "MLP hidden layers", &A::hidden_layers),
      agent_field("z_cap", "embedding squashing bound", &A::z_cap),
      agent_field("n_bins", "two-hot bins (odd)", &A::n_bins),
      agent_field("bin_half_range", "two-hot symlog half range L", &A::bin_half_range),
      agent_field("h_enc", "latent model unroll length", &A::h_enc),
      agent_field("lambda_r", "reward loss weight", &A::lambda_r),
      agent_field("lambda_d", "dynamics loss weight", &A::lambda_d),
      agent_field("lambda_t", "terminal loss weight (after first terminal)", &A::lambda_t),
      agent_field("h_q", "multi-step return length", &A::h_q),
      agent_field("gamma", "discount", &A::gamma),
      agent_field("huber_delta", "Huber threshold", &A::huber_delta),
      agent_field("lambda_pre", "policy pre-activation penalty", &A::lambda_pre),
      agent_field("sigma_explore", "exploration noise std", &A::sigma_explore),
      agent_field("sigma_target", "target smoothing noise std", &A::sigma_target),
      agent_field("target_noise_clip", "target smoothing noise clip", &A::target_noise_clip),
      agent_field("gumbel_tau", "Gumbel-softmax temperature", &A::gumbel_tau),
      agent_field("t_target", "updates between target syncs", &A::t_target),
      agent_field("f_eval", "steps between evaluations", &A::f_eval),
      agent_field("n_eval", "episodes per evaluation", &A::n_eval),
      agent_field("lr", "Adam learning rate", &A::lr),
      agent_field("reward_ema", "reward scale EMA decay", &A::reward_ema),
      agent_field("reward_scale_min", "reward scale floor", &A::reward_scale_min),
      agent_field("batch_size", "segments per update", &A::batch_size),
      agent_field("replay_capacity", "replay capacity", &A::replay_capacity),
      agent_field("warmup", "transitions before updates start", &A::warmup),
      agent_field("priority_alpha", "priority exponent", &A::priority_alpha),
      agent_field("priority_eps", "priority offset", &A::priority_eps),
  };
}

void require(bool ok, const char* key, const char* why) {
  if (!ok) throw ConfigError(key, why);
}

}  // namespace

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = build_fields();
  return fields;
}

const ConfigField* find_field(const std::string& key) {
  for (const auto& f : config_fields())
    if (f.key == key) return &f;
  return nullptr;
}

void set_field(RunConfig& config, const std::string& key, const std::string& value) {
  const ConfigField* f = find_field(key);
  if (!f) throw ConfigError(key, "unknown key");
  f->set(config, value);
}

void AgentConfig::validate() const {
  require(state_dim >= 1, "state_dim", "must be >= 1");
  require(state_action_dim >= 1, "state_action_dim", "must be >= 1");
  require(hidden >= 1, "hidden", "must be >= 1");
  require(hidden_layers >= 0, "hidden_layers", "must be >= 0");
  require(z_cap > 0, "z_cap", "must be positive");
  require(n_bins >= 3 && n_bins % 2 == 1, "n_bins", "must be odd and >= 3");
  require(bin_half_range > 0, "bin_half_range", "must be positive");
  require(h_enc >= 1, "h_enc", "must be >= 1");
  require(lambda_r >= 0, "lambda_r", "must be >= 0");
  require(lambda_d >= 0, "lambda_d", "must be >= 0");
  require(lambda_t >= 0, "lambda_t", "must be >= 0");
  require(h_q >= 1, "h_q", "must be >= 1");
  require(gamma >= 0 && gamma < 1, "gamma", "must be in [0, 1)");
  require(huber_delta > 0, "huber_delta", "must be positive");
  require(lambda_pre >= 0, "lambda_pre", "must be >= 0");
  require(sigma_explore >= 0, "sigma_explore", "must be >= 0");
  require(sigma_target >= 0, "sigma_target", "must be >= 0");
  require(target_noise_clip >= 0, "target_noise_clip", "must be >= 0");
  require(gumbel_tau > 0, "gumbel_tau", "must be positive");
  require(t_target >= 1, "t_target", "must be >= 1");
  require(f_eval >= 1, "f_eval", "must be >= 1");
  require(n_eval >= 1, "n_eval", "must be >= 1");
  require(lr > 0, "lr", "must be positive");
  require(reward_ema >= 0 && reward_ema < 1, "reward_ema", "must be in [0, 1)");
  require(reward_scale_min > 0, "reward_scale_min", "must be positive");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(replay_capacity >= 1, "replay_capacity", "must be >= 1");
  require(warmup >= 1 && warmup <= replay_capacity, "warmup", "must be in [1, replay_capacity]");
  require(priority_alpha >= 0, "priority_alpha", "must be >= 0");
  require(priority_eps > 0, "priority_eps", "must be positive");
}

void RunConfig::validate() const {
  const auto names = envs::env_names();
  if (std::find(names.begin(), names.end(), env) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("env", "unknown environment '" + env + "'; available: " + list);
  }
  require(t_total >= 0, "t_total", "must be >= 0");
  require(checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
  agent.validate();
}

nlohmann::json to_json(const AgentConfig& config) {
  RunConfig rc;
  rc.agent = config;
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : config_fields())
    if (f.agent) j[f.key] = f.get(rc);
  return j;
}

AgentConfig agent_config_from_json(const nlohmann::json& j) {
  RunConfig rc;
  for (const auto& [key, value] : j.items()) {
    const ConfigField* f = find_field(key);
    if (!f || !f->agent) throw ConfigError(key, "not an agent setting");
    f->set(rc, value.get<std::string>());
  }
  return rc.agent;
}

}  // namespace uld::agent
