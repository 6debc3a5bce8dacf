#include "uld/agent/agent.hpp"

#include <cmath>
#include <sstream>

namespace uld::agent {

namespace {

Tensor column(const Eigen::VectorXd& v) { return Tensor::from_matrix(Tensor::Matrix(v)); }

Tensor row(const Eigen::VectorXd& v) { return Tensor::from_matrix(Tensor::Matrix(v.transpose())); }

Tensor::Matrix gumbel_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  Tensor::Matrix g(rows, cols);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = sample_gumbel<double>(rng);
  return g;
}

// One-hot of the row-wise argmax (first index on ties).
Tensor::Matrix argmax_one_hot(const Tensor::Matrix& logits) {
  Tensor::Matrix out = Tensor::Matrix::Zero(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    Index best = 0;
    logits.row(r).maxCoeff(&best);
    out(r, best) = 1.0;
  }
  return out;
}

const AgentConfig& validated(const AgentConfig& c, const envs::EnvSpec& spec) {
  c.validate();
  spec.validate();
  return c;
}

std::vector<Tensor> concat_params(std::initializer_list<std::vector<Tensor>> groups) {
  std::vector<Tensor> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

}  // namespace

repr::EncoderDims encoder_dims(const AgentConfig& c, const envs::EnvSpec& spec) {
  repr::EncoderDims d;
  d.observation_dim = spec.observation_dim;
  d.action_dim = spec.action_dim;
  d.discrete_actions = spec.discrete();
  d.state_dim = c.state_dim;
  d.state_action_dim = c.state_action_dim;
  d.hidden = c.hidden;
  d.hidden_layers = c.hidden_layers;
  d.z_cap = c.z_cap;
  d.n_bins = c.n_bins;
  d.bin_half_range = c.bin_half_range;
  return d;
}

Agent::Agent(const AgentConfig& config, const envs::EnvSpec& spec, std::uint64_t seed)
    : config_(validated(config, spec)),
      spec_(spec),
      rng_(seed),
      encoders_(encoder_dims(config, spec), rng_) {
  for (int i = 0; i < 2; ++i) {
    critics_[i] = repr::Mlp(config.state_action_dim, config.hidden, config.hidden_layers, 1, rng_);
    critic_targets_[i] = critics_[i].clone();
  }
  policy_ = repr::Mlp(config.state_dim, config.hidden, config.hidden_layers, spec.action_dim, rng_);
  policy_target_ = policy_.clone();
  for (auto& p : target_parameters()) p.set_requires_grad(false);

  const AdamOptions opts{config.lr};
  encoder_opt_ = AdamState(encoders_.parameters(), opts);
  critic_opt_ = AdamState(critic_parameters(), opts);
  policy_opt_ = AdamState(policy_.parameters(), opts);
}

// ------------------------------------------------------------------ actions

Tensor Agent::select_action(const Tensor& z_s, ActionMode mode, std::mt19937_64& rng) const {
  NoGradGuard no_grad;
  const Tensor::Matrix u = policy_.forward(z_s).value();
  if (spec_.discrete()) {
    if (mode == ActionMode::kGreedy) return Tensor::from_matrix(argmax_one_hot(u));
    // The argmax of a Gumbel-softmax sample is the sampled category.
    const Tensor::Matrix g = gumbel_matrix(u.rows(), u.cols(), rng);
    return Tensor::from_matrix(argmax_one_hot(u + g));
  }
  Tensor::Matrix a = tanh_values(u);
  if (mode == ActionMode::kExplore && config_.sigma_explore > 0) {
    std::normal_distribution<double> noise(0.0, config_.sigma_explore);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = std::clamp(a.data()[i] + noise(rng), -1.0, 1.0);
  }
  return Tensor::from_matrix(std::move(a));
}

envs::Action Agent::select_action(const envs::Observation& obs, ActionMode mode) {
  NoGradGuard no_grad;
  const Tensor z = encoders_.encode_state(row(obs));
  return select_action(z, mode, rng_).value().row(0).transpose();
}

envs::Action Agent::evaluation_action(const envs::Observation& obs) const {
  NoGradGuard no_grad;
  const Tensor z = encoders_.encode_state(row(obs), repr::Params::kTarget);
  const Tensor::Matrix u = policy_target_.forward(z).value();
  if (spec_.discrete()) return argmax_one_hot(u).row(0).transpose();
  return tanh_values(u).row(0).transpose();
}

Tensor Agent::target_action(const Tensor& z_next, std::mt19937_64& rng, const Tensor::Matrix* noise) const {
  NoGradGuard no_grad;
  const Tensor::Matrix u = policy_target_.forward(z_next).value();
  if (spec_.discrete()) return Tensor::from_matrix(argmax_one_hot(u));
  Tensor::Matrix eps(u.rows(), u.cols());
  if (noise) {
    if (noise->rows() != u.rows() || noise->cols() != u.cols())
      throw ShapeError("target_action: noise shape does not match the action batch");
    eps = *noise;
  } else {
    std::normal_distribution<double> n(0.0, config_.sigma_target);
    for (Index i = 0; i < eps.size(); ++i) eps.data()[i] = config_.sigma_target > 0 ? n(rng) : 0.0;
  }
  const double c = config_.target_noise_clip;
  Tensor::Matrix a = (tanh_values(u).array() + eps.array().max(-c).min(c)).max(-1.0).min(1.0).matrix();
  return Tensor::from_matrix(std::move(a));
}

// ------------------------------------------------------------------ losses

Tensor Agent::critic_min(const Tensor& z_sa, bool target) const {
  const auto& c = target ? critic_targets_ : critics_;
  return minimum(c[0].forward(z_sa), c[1].forward(z_sa));
}

Eigen::VectorXd Agent::multistep_target(const repr::SegmentBatch& batch, const Tensor::Matrix* target_noise) {
  NoGradGuard no_grad;
  const Index b = batch.batch_size();
  const int horizon = std::min(config_.h_q, batch.length());
  if (reward_scale_ < config_.reward_scale_min) ++scale_clamps_;
  const double scale = effective_scale(reward_scale_);
  const double target_scale = effective_scale(target_reward_scale_);

  Eigen::VectorXd returns = Eigen::VectorXd::Zero(b);
  Eigen::VectorXd boot_discount = Eigen::VectorXd::Zero(b);
  Tensor::Matrix boot_obs(b, spec_.observation_dim);
  for (Index i = 0; i < b; ++i) {
    const int len = std::min(batch.valid_length(i), horizon);
    double discount = 1.0;
    bool terminal = false;
    for (int k = 0; k < len && !terminal; ++k) {
      returns[i] += discount * batch.rewards[k][i];
      discount *= config_.gamma;
      terminal = batch.dones[k][i] > 0.5;
    }
    boot_discount[i] = terminal ? 0.0 : discount;
    boot_obs.row(i) = batch.next_observations[len - 1].value().row(i);
  }

  const Tensor z_next = encoders_.encode_state(Tensor::from_matrix(boot_obs), repr::Params::kTarget);
  const Tensor a_next = target_action(z_next, rng_, target_noise);
  const Tensor z_sa = encoders_.encode_state_action(z_next, a_next, repr::Params::kTarget);
  const Tensor::Matrix q = critic_min(z_sa, true).value();

  Eigen::VectorXd y(b);
  for (Index i = 0; i < b; ++i)
    y[i] = (returns[i] + (boot_discount[i] > 0 ? boot_discount[i] * target_scale * q(i, 0) : 0.0)) / scale;
  return y;
}

ValueLoss Agent::value_loss(const repr::SegmentBatch& batch, const Eigen::VectorXd& targets) const {
  Tensor z_sa;
  {
    NoGradGuard no_grad;
    z_sa = encoders_.encode_state_action(encoders_.encode_state(batch.observations[0]), batch.actions[0]);
  }
  const Tensor y = column(targets);
  const Tensor d1 = critics_[0].forward(z_sa) - y;
  const Tensor d2 = critics_[1].forward(z_sa) - y;
  ValueLoss out;
  out.loss = mean(huber(d1, config_.huber_delta)) + mean(huber(d2, config_.huber_delta));
  out.td_errors = d1.value().cwiseAbs().cwiseMax(d2.value().cwiseAbs()).col(0);
  return out;
}

Tensor Agent::policy_loss(const repr::SegmentBatch& batch, const Tensor::Matrix* gumbel_noise) {
  Tensor z_s;
  {
    NoGradGuard no_grad;
    z_s = encoders_.encode_state(batch.observations[0]);
  }
  // Critics and phi_sa pass gradients through but are not updated here.
  repr::FreezeGuard freeze(concat_params({encoders_.parameters(), critic_parameters()}));
  const Tensor u = policy_.forward(z_s);
  Tensor action;
  if (spec_.discrete()) {
    const Tensor::Matrix noise = gumbel_noise ? *gumbel_noise : gumbel_matrix(u.rows(), u.cols(), rng_);
    action = gumbel_softmax(u, config_.gumbel_tau, Tensor::from_matrix(noise));
  } else {
    action = tanh(u);
  }
  const Tensor z_sa = encoders_.encode_state_action(z_s, action);
  const Tensor q = critics_[0].forward(z_sa) + critics_[1].forward(z_sa);
  return mean(q) * -0.5 + mean(square(u)) * config_.lambda_pre;
}

repr::RepresentationLoss Agent::representation_loss(const repr::SegmentBatch& batch) const {
  return repr::representation_loss(encoders_, batch, std::min(config_.h_enc, batch.length()),
                                   {config_.lambda_r, config_.lambda_d, config_.lambda_t}, terminal_seen_);
}

void Agent::check_finite(const char* what, double value) const {
  if (std::isfinite(value)) return;
  std::ostringstream os;
  os << "non-finite " << what << " at update " << updates_ << " (reward scale " << reward_scale_
     << ", target scale " << target_reward_scale_ << ")";
  throw TrainingFault(os.str());
}

TrainMetrics Agent::train_step(const repr::SegmentBatch& batch) {
  batch.check();
  for (int k = 0; k < batch.length(); ++k)
    if (!batch.rewards[k].allFinite() || !batch.observations[k].value().allFinite() ||
        !batch.next_observations[k].value().allFinite())
      check_finite("batch data", std::nan(""));
  reward_scale_ = config_.reward_ema * reward_scale_ +
                  (1.0 - config_.reward_ema) * batch.rewards[0].cwiseAbs().mean();

  TrainMetrics m;
  auto step = [&](std::vector<Tensor> params, AdamState& opt, const Tensor& loss, const char* what) {
    check_finite(what, loss.item());
    zero_grad(params);
    backward(loss);
    if (!adam_step(params, opt)) check_finite((std::string(what) + " gradient").c_str(), std::nan(""));
  };

  const auto rep = representation_loss(batch);
  step(encoders_.parameters(), encoder_opt_, rep.total, "representation loss");
  m.representation_loss = rep.total.item();
  m.reward_loss = rep.reward;
  m.dynamics_loss = rep.dynamics;
  m.terminal_loss = rep.terminal;

  const Eigen::VectorXd y = multistep_target(batch);
  const ValueLoss value = value_loss(batch, y);
  step(critic_parameters(), critic_opt_, value.loss, "value loss");
  m.value_loss = value.loss.item();
  m.td_errors = value.td_errors;
  m.mean_td_error = value.td_errors.mean();

  const Tensor pl = policy_loss(batch);
  step(policy_.parameters(), policy_opt_, pl, "policy loss");
  m.policy_loss = pl.item();

  ++updates_;
  if (updates_ % config_.t_target == 0) {
    sync_targets();
    m.synced = true;
  }
  m.reward_scale = reward_scale_;
  return m;
}

void Agent::sync_targets() {
  encoders_.sync_targets();
  for (int i = 0; i < 2; ++i) critic_targets_[i].copy_from(critics_[i]);
  policy_target_.copy_from(policy_);
  target_reward_scale_ = reward_scale_;
}

// ------------------------------------------------------------------ parameters

std::vector<Tensor> Agent::critic_parameters() const {
  return concat_params({critics_[0].parameters(), critics_[1].parameters()});
}

std::vector<Tensor> Agent::online_parameters() const {
  return concat_params({encoders_.parameters(), critic_parameters(), policy_.parameters()});
}

std::vector<Tensor> Agent::synced_online_parameters() const {
  return concat_params({encoders_.encoder_parameters(), critic_parameters(), policy_.parameters()});
}

std::vector<Tensor> Agent::target_parameters() const {
  return concat_params({encoders_.target_parameters(), critic_targets_[0].parameters(),
                        critic_targets_[1].parameters(), policy_target_.parameters()});
}

// ------------------------------------------------------------------ checkpoints

std::vector<repr::NamedTensor> Agent::named_arrays() const {
  auto out = encoders_.named_arrays();
  critics_[0].append_named("critic1", out);
  critics_[1].append_named("critic2", out);
  critic_targets_[0].append_named("target.critic1", out);
  critic_targets_[1].append_named("target.critic2", out);
  policy_.append_named("policy", out);
  policy_target_.append_named("target.policy", out);
  return out;
}

namespace {

void append_moments(const char* group, const AdamState& s, std::vector<repr::CheckpointArray>& out) {
  for (std::size_t i = 0; i < s.first_moment.size(); ++i) {
    out.push_back({std::string("adam.") + group + ".m." + std::to_string(i), s.first_moment[i]});
    out.push_back({std::string("adam.") + group + ".v." + std::to_string(i), s.second_moment[i]});
  }
}

void restore_moments(const char* group, const repr::Checkpoint& ck, AdamState& s, long long step) {
  for (std::size_t i = 0; i < s.first_moment.size(); ++i) {
    const auto& m = ck.at(std::string("adam.") + group + ".m." + std::to_string(i));
    const auto& v = ck.at(std::string("adam.") + group + ".v." + std::to_string(i));
    if (m.rows() != s.first_moment[i].rows() || m.cols() != s.first_moment[i].cols() ||
        v.rows() != m.rows() || v.cols() != m.cols())
      throw repr::CheckpointError(std::string("checkpoint: optimizer state shape mismatch in ") + group);
    s.first_moment[i] = m;
    s.second_moment[i] = v;
  }
  s.step = step;
}

}  // namespace

void Agent::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  auto arrays = repr::snapshot(named_arrays());
  append_moments("encoder", encoder_opt_, arrays);
  append_moments("critic", critic_opt_, arrays);
  append_moments("policy", policy_opt_, arrays);
  std::ostringstream rng_state;
  rng_state << rng_;
  nlohmann::json manifest = {
      {"kind", "agent"},
      {"env_spec", spec_.to_json()},
      {"config", to_json(config_)},
      {"dims", encoders_.dims().to_json()},
      {"reward_scale", reward_scale_},
      {"target_reward_scale", target_reward_scale_},
      {"updates", updates_},
      {"scale_clamps", scale_clamps_},
      {"terminal_seen", terminal_seen_},
      {"adam_steps", {encoder_opt_.step, critic_opt_.step, policy_opt_.step}},
      {"rng", rng_state.str()},
  };
  if (!extra.is_null()) manifest["extra"] = extra;
  repr::write_checkpoint(path, manifest, arrays);
}

Agent Agent::load(const std::filesystem::path& path, const envs::EnvSpec* expected) {
  const auto ck = repr::read_checkpoint(path);
  const auto& man = ck.manifest;
  if (man.value("kind", "") != "agent")
    throw repr::CheckpointError("checkpoint: " + path.string() + " is not an agent checkpoint");
  const auto& js = man.at("env_spec");
  envs::EnvSpec spec;
  spec.name = js.at("name");
  spec.observation_dim = js.at("observation_dim");
  spec.action_kind = js.at("action_type") == "discrete" ? envs::ActionKind::kDiscrete : envs::ActionKind::kContinuous;
  spec.action_dim = js.at("action_dim");
  spec.horizon = js.at("horizon");
  spec.reward_scale = js.at("reward_scale");
  if (expected && !(spec == *expected))
    throw repr::CheckpointError("checkpoint spec " + spec.describe() + " does not match environment " +
                                expected->describe());

  Agent agent(agent_config_from_json(man.at("config")), spec, 0);
  ck.load_into(agent.named_arrays());
  const auto steps = man.at("adam_steps");
  restore_moments("encoder", ck, agent.encoder_opt_, steps.at(0));
  restore_moments("critic", ck, agent.critic_opt_, steps.at(1));
  restore_moments("policy", ck, agent.policy_opt_, steps.at(2));
  agent.reward_scale_ = man.at("reward_scale");
  agent.target_reward_scale_ = man.at("target_reward_scale");
  agent.updates_ = man.at("updates");
  agent.scale_clamps_ = man.at("scale_clamps");
  agent.terminal_seen_ = man.at("terminal_seen");
  std::istringstream rng_state(man.at("rng").get<std::string>());
  rng_state >> agent.rng_;
  return agent;
}

}  // namespace uld::agent
