#pragma once

// Central finite-difference gradient oracle. Independent of the tape: it only
// perturbs parameter values and re-evaluates the loss under NoGradGuard.

#include "uld/numerics.hpp"

#include <functional>
#include <vector>

namespace uld::oracle {

struct GradientCheck {
  double relative_error = 0.0;
  double max_abs_error = 0.0;
  double fd_norm = 0.0;
  std::size_t checked = 0;
};

inline std::vector<Eigen::MatrixXd> finite_difference_gradients(
    std::vector<Tensor>& params, const std::function<double()>& loss, double step = 1e-5) {
  NoGradGuard no_grad;
  std::vector<Eigen::MatrixXd> grads;
  for (auto& p : params) {
    Tensor::Matrix g(p.rows(), p.cols());
    for (Index i = 0; i < p.size(); ++i) {
      double& x = p.data()[i];
      const double saved = x;
      x = saved + step;
      const double up = loss();
      x = saved - step;
      const double down = loss();
      x = saved;
      g.data()[i] = (up - down) / (2.0 * step);
    }
    grads.emplace_back(g);
  }
  return grads;
}

/// Compares tape gradients (already populated on params) with central
/// differences. Relative error is ||g_ad - g_fd||_2 / max(||g_fd||_2, floor).
inline GradientCheck compare_with_finite_differences(std::vector<Tensor>& params,
                                                     const std::function<double()>& loss,
                                                     double step = 1e-5, double floor = 1e-8) {
  auto fd = finite_difference_gradients(params, loss, step);
  double diff2 = 0.0, ref2 = 0.0;
  GradientCheck out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Eigen::MatrixXd ad = params[k].has_grad() ? Eigen::MatrixXd(params[k].grad())
                                              : Eigen::MatrixXd::Zero(params[k].rows(), params[k].cols());
    Eigen::MatrixXd d = ad - fd[k];
    diff2 += d.squaredNorm();
    ref2 += fd[k].squaredNorm();
    out.max_abs_error = std::max(out.max_abs_error, d.cwiseAbs().maxCoeff());
    out.checked += static_cast<std::size_t>(d.size());
  }
  out.fd_norm = std::sqrt(ref2);
  out.relative_error = std::sqrt(diff2) / std::max(out.fd_norm, floor);
  return out;
}

}  // namespace uld::oracle
