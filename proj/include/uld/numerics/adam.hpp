#pragma once

#include "uld/numerics/tensor.hpp"

#include <cmath>
#include <vector>

namespace uld {

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers for one parameter group plus the shared step count.
template <typename Scalar>
struct BasicAdamState {
  using Matrix = typename BasicTensor<Scalar>::Matrix;

  AdamOptions options;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long long step = 0;

  BasicAdamState() = default;
  BasicAdamState(const std::vector<BasicTensor<Scalar>>& params, AdamOptions opts)
      : options(opts) {
    if (!(opts.lr > 0)) throw std::invalid_argument("adam: learning rate must be positive");
    for (const auto& p : params) {
      first_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
      second_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
};

using AdamState = BasicAdamState<double>;

/// Bias-corrected Adam update in place. Returns false (and leaves parameters
/// and state untouched) when any gradient is non-finite. Absent gradients
/// count as zero.
template <typename Scalar>
bool adam_step(std::vector<BasicTensor<Scalar>>& params, BasicAdamState<Scalar>& state) {
  if (params.size() != state.first_moment.size())
    throw ShapeError("adam: parameter count does not match optimizer state");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows() != state.first_moment[i].rows() ||
        params[i].cols() != state.first_moment[i].cols())
      throw ShapeError("adam: parameter " + std::to_string(i) + " has shape " +
                       shape_str(params[i].shape()) + " but optimizer state does not match");
    if (params[i].has_grad() && !params[i].grad().allFinite()) return false;
  }
  const auto& o = state.options;
  ++state.step;
  const Scalar bc1 = Scalar(1) - std::pow(Scalar(o.beta1), Scalar(state.step));
  const Scalar bc2 = Scalar(1) - std::pow(Scalar(o.beta2), Scalar(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (params[i].has_grad()) {
      const auto& g = params[i].grad();
      m = Scalar(o.beta1) * m + Scalar(1 - o.beta1) * g;
      v = Scalar(o.beta2) * v + Scalar(1 - o.beta2) * g.cwiseAbs2();
    } else {
      m *= Scalar(o.beta1);
      v *= Scalar(o.beta2);
    }
    params[i].value().array() -=
        Scalar(o.lr) * (m.array() / bc1) / ((v.array() / bc2).sqrt() + Scalar(o.eps));
  }
  return true;
}

template <typename Scalar>
void zero_grad(std::vector<BasicTensor<Scalar>>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace uld
