#pragma once

#include "uld/repr/mlp.hpp"
#include "uld/repr/segment.hpp"
#include "uld/repr/two_hot.hpp"

#include <json.hpp>

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace uld::repr {

class RepresentationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EncoderDims {
  int observation_dim = 1;
  int action_dim = 1;
  bool discrete_actions = false;
  int state_dim = 64;         // d_s
  int state_action_dim = 64;  // d_sa
  int hidden = 128;
  int hidden_layers = 2;
  double z_cap = 5.0;
  int n_bins = 51;
  double bin_half_range = 10.0;

  nlohmann::json to_json() const;
  static EncoderDims from_json(const nlohmann::json& j);
  bool operator==(const EncoderDims&) const = default;
};

enum class Params { kOnline, kTarget };

struct ModelOutput {
  Tensor next_state;      // B x d_s
  Tensor reward_logits;   // B x n_bins
  Tensor terminal;        // B x 1, raw linear output
};

/// State encoder, state-action encoder, linear latent model and the target
/// copies of both encoders.
class EncoderStack {
 public:
  EncoderStack(const EncoderDims& dims, std::mt19937_64& rng);

  const EncoderDims& dims() const { return dims_; }
  const TwoHotCodec& codec() const { return codec_; }

  Tensor encode_state(const Tensor& obs, Params which = Params::kOnline) const;
  Tensor encode_state_action(const Tensor& z_s, const Tensor& action,
                             Params which = Params::kOnline) const;
  /// One product with m, split into the three heads.
  ModelOutput model_step(const Tensor& z_sa) const;

  /// Hard copy online -> target.
  void sync_targets();

  /// phi_s, phi_sa, m.
  std::vector<Tensor> parameters() const;
  std::vector<Tensor> encoder_parameters() const;  // phi_s and phi_sa only
  std::vector<Tensor> target_parameters() const;
  /// Every array in a fixed declaration order, for checkpoints.
  std::vector<NamedTensor> named_arrays() const;

  const Tensor& model_matrix() const { return model_; }

 private:
  void check_action(const Tensor& action) const;

  EncoderDims dims_;
  TwoHotCodec codec_;
  Mlp phi_s_, phi_sa_;
  Mlp phi_s_target_, phi_sa_target_;
  Tensor model_;
};

struct RepresentationWeights {
  double reward = 1.0;
  double dynamics = 1.0;
  double terminal = 1.0;
};

struct RepresentationLoss {
  Tensor total;
  // Unweighted per-term values, summed over the unroll and averaged over the batch.
  double reward = 0.0;
  double dynamics = 0.0;
  double terminal = 0.0;
};

/// Unrolls the latent model from phi_s(s_0) over the recorded actions for
/// `horizon` steps. The terminal weight is treated as zero until a terminal
/// transition has been seen.
RepresentationLoss representation_loss(const EncoderStack& stack, const SegmentBatch& batch,
                                       int horizon, const RepresentationWeights& weights,
                                       bool terminal_seen);

}  // namespace uld::repr
