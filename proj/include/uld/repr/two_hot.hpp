#pragma once

#include "uld/numerics.hpp"

#include <Eigen/Dense>

#include <vector>

namespace uld::repr {

/// Categorical reward target over symexp-spaced bins.
///
/// Bin centers are symexp(u_i) with u_i evenly spaced on [-L, L]. A scalar
/// puts its mass on the two bracketing centers with weights linear in value,
/// so decoding by expectation recovers it exactly inside the grid.
class TwoHotCodec {
 public:
  TwoHotCodec(int n_bins = 51, double half_range = 10.0);

  int size() const { return static_cast<int>(centers_.size()); }
  double half_range() const { return half_range_; }
  const Eigen::VectorXd& centers() const { return centers_; }

  Eigen::VectorXd encode(double r) const;
  /// One row per value.
  Tensor::Matrix encode_batch(const Eigen::VectorXd& r) const;
  /// Expectation over the bin centers.
  double decode(const Eigen::VectorXd& probs) const;

 private:
  double half_range_;
  Eigen::VectorXd centers_;
};

}  // namespace uld::repr
