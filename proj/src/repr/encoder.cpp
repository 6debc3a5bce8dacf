#include "uld/repr/encoder.hpp"

namespace uld::repr {

int SegmentBatch::valid_length(Index b) const {
  int n = 0;
  while (n < length() && valid[n][b] > 0.5) ++n;
  return n;
}

void SegmentBatch::check() const {
  const auto n = static_cast<std::size_t>(length());
  if (actions.size() != n || rewards.size() != n || dones.size() != n ||
      next_observations.size() != n || valid.size() != n)
    throw RepresentationError("segment batch: offsets disagree in count");
  const Index b = batch_size();
  for (std::size_t k = 0; k < n; ++k) {
    if (observations[k].rows() != b || actions[k].rows() != b || rewards[k].size() != b ||
        dones[k].size() != b || next_observations[k].rows() != b || valid[k].size() != b)
      throw RepresentationError("segment batch: offset " + std::to_string(k) + " has wrong batch size");
    for (Index i = 0; i < b; ++i)
      if (valid[k][i] > 0.5 && (k == 0 ? false : valid[k - 1][i] < 0.5))
        throw RepresentationError("segment batch: validity must be a prefix");
  }
}

nlohmann::json EncoderDims::to_json() const {
  return {{"observation_dim", observation_dim}, {"action_dim", action_dim},
          {"discrete_actions", discrete_actions}, {"state_dim", state_dim},
          {"state_action_dim", state_action_dim}, {"hidden", hidden},
          {"hidden_layers", hidden_layers},     {"z_cap", z_cap},
          {"n_bins", n_bins},                   {"bin_half_range", bin_half_range}};
}

EncoderDims EncoderDims::from_json(const nlohmann::json& j) {
  EncoderDims d;
  d.observation_dim = j.at("observation_dim");
  d.action_dim = j.at("action_dim");
  d.discrete_actions = j.at("discrete_actions");
  d.state_dim = j.at("state_dim");
  d.state_action_dim = j.at("state_action_dim");
  d.hidden = j.at("hidden");
  d.hidden_layers = j.at("hidden_layers");
  d.z_cap = j.at("z_cap");
  d.n_bins = j.at("n_bins");
  d.bin_half_range = j.at("bin_half_range");
  return d;
}

EncoderStack::EncoderStack(const EncoderDims& dims, std::mt19937_64& rng)
    : dims_(dims), codec_(dims.n_bins, dims.bin_half_range) {
  if (!(dims.z_cap > 0)) throw RepresentationError("encoder: z_cap must be positive");
  phi_s_ = Mlp(dims.observation_dim, dims.hidden, dims.hidden_layers, dims.state_dim, rng);
  phi_sa_ = Mlp(dims.state_dim + dims.action_dim, dims.hidden, dims.hidden_layers,
                dims.state_action_dim, rng);
  const Index out = dims.state_dim + dims.n_bins + 1;
  const double bound = 1.0 / std::sqrt(static_cast<double>(dims.state_action_dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor::Matrix m(dims.state_action_dim, out);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  model_ = Tensor::parameter(std::move(m));
  phi_s_target_ = phi_s_.clone();
  phi_sa_target_ = phi_sa_.clone();
  for (auto& p : target_parameters()) p.set_requires_grad(false);
}

Tensor EncoderStack::encode_state(const Tensor& obs, Params which) const {
  if (obs.cols() != dims_.observation_dim)
    throw RepresentationError("encode_state: expected observation width " +
                              std::to_string(dims_.observation_dim) + ", got " + shape_str(obs.shape()));
  const Mlp& net = which == Params::kOnline ? phi_s_ : phi_s_target_;
  return squash(net.forward(obs), dims_.z_cap);
}

void EncoderStack::check_action(const Tensor& action) const {
  if (action.cols() != dims_.action_dim)
    throw RepresentationError("encode_state_action: expected action width " +
                              std::to_string(dims_.action_dim) + ", got " + shape_str(action.shape()));
  const auto& a = action.value();
  const double lo = dims_.discrete_actions ? 0.0 : -1.0;
  if (!a.allFinite() || a.minCoeff() < lo || a.maxCoeff() > 1.0)
    throw RepresentationError(dims_.discrete_actions
                                  ? "encode_state_action: discrete action weights must lie in [0, 1]"
                                  : "encode_state_action: continuous action outside [-1, 1]");
}

Tensor EncoderStack::encode_state_action(const Tensor& z_s, const Tensor& action, Params which) const {
  if (z_s.cols() != dims_.state_dim || z_s.rows() != action.rows())
    throw RepresentationError("encode_state_action: bad state embedding shape " + shape_str(z_s.shape()));
  check_action(action);
  const Mlp& net = which == Params::kOnline ? phi_sa_ : phi_sa_target_;
  return squash(net.forward(concat(z_s, action)), dims_.z_cap);
}

ModelOutput EncoderStack::model_step(const Tensor& z_sa) const {
  if (z_sa.cols() != dims_.state_action_dim)
    throw RepresentationError("model_step: expected width " + std::to_string(dims_.state_action_dim) +
                              ", got " + shape_str(z_sa.shape()));
  const Tensor out = matmul(z_sa, model_);
  const Index ds = dims_.state_dim, nb = dims_.n_bins;
  return {slice(out, 0, ds), slice(out, ds, ds + nb), slice(out, ds + nb, ds + nb + 1)};
}

void EncoderStack::sync_targets() {
  phi_s_target_.copy_from(phi_s_);
  phi_sa_target_.copy_from(phi_sa_);
}

std::vector<Tensor> EncoderStack::encoder_parameters() const {
  auto out = phi_s_.parameters();
  for (auto& p : phi_sa_.parameters()) out.push_back(p);
  return out;
}

std::vector<Tensor> EncoderStack::parameters() const {
  auto out = encoder_parameters();
  out.push_back(model_);
  return out;
}

std::vector<Tensor> EncoderStack::target_parameters() const {
  auto out = phi_s_target_.parameters();
  for (auto& p : phi_sa_target_.parameters()) out.push_back(p);
  return out;
}

std::vector<NamedTensor> EncoderStack::named_arrays() const {
  std::vector<NamedTensor> out;
  phi_s_.append_named("phi_s", out);
  phi_sa_.append_named("phi_sa", out);
  out.emplace_back("model", model_);
  phi_s_target_.append_named("target.phi_s", out);
  phi_sa_target_.append_named("target.phi_sa", out);
  return out;
}

namespace {

Tensor column(const Eigen::VectorXd& v) { return Tensor::from_matrix(Tensor::Matrix(v)); }

// Masked batch mean of a per-item column.
Tensor masked_mean(const Tensor& per_item, const Tensor& mask, Index batch) {
  return sum(per_item * mask) * (1.0 / static_cast<double>(batch));
}

}  // namespace

RepresentationLoss representation_loss(const EncoderStack& stack, const SegmentBatch& batch,
                                       int horizon, const RepresentationWeights& weights,
                                       bool terminal_seen) {
  if (horizon < 1 || horizon > batch.length())
    throw RepresentationError("representation_loss: horizon " + std::to_string(horizon) +
                              " exceeds segment length " + std::to_string(batch.length()));
  const double w_r = weights.reward, w_d = weights.dynamics;
  const double w_t = terminal_seen ? weights.terminal : 0.0;
  RepresentationLoss out;
  out.total = Tensor::scalar(0.0);
  if (w_r == 0.0 && w_d == 0.0 && w_t == 0.0) return out;

  const Index b = batch.batch_size();
  Tensor z = stack.encode_state(batch.observations[0]);
  for (int k = 0; k < horizon; ++k) {
    const Tensor mask = column(batch.valid[k]);
    const ModelOutput pred = stack.model_step(stack.encode_state_action(z, batch.actions[k]));

    Tensor target_z;
    {
      NoGradGuard no_grad;
      target_z = stack.encode_state(batch.next_observations[k], Params::kTarget);
    }
    const Tensor dyn = masked_mean(sum_last(square(pred.next_state - target_z)), mask, b);
    const Tensor two_hot = Tensor::from_matrix(stack.codec().encode_batch(batch.rewards[k]));
    const Tensor ce = masked_mean(-sum_last(two_hot * log_softmax(pred.reward_logits)), mask, b);
    const Tensor term = masked_mean(square(pred.terminal - column(batch.dones[k])), mask, b);

    out.dynamics += dyn.item();
    out.reward += ce.item();
    out.terminal += term.item();
    if (w_r != 0.0) out.total = out.total + ce * w_r;
    if (w_d != 0.0) out.total = out.total + dyn * w_d;
    if (w_t != 0.0) out.total = out.total + term * w_t;
    z = pred.next_state;
  }
  return out;
}

}  // namespace uld::repr
