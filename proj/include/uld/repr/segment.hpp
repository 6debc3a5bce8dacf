#pragma once

#include "uld/numerics.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace uld::repr {

/// A batch of replayed segments laid out offset-major: entry k of each
/// vector holds transition k of every segment in the batch.
///
/// A segment may end early (terminal, truncated episode, or the newest
/// item in the buffer). Offsets past its end carry copies of its last
/// transition and have valid = 0.
struct SegmentBatch {
  std::vector<Tensor> observations;       // s_k, B x obs_dim
  std::vector<Tensor> actions;            // a_k, B x action_dim
  std::vector<Eigen::VectorXd> rewards;   // r_k
  std::vector<Eigen::VectorXd> dones;     // d_k in {0, 1}
  std::vector<Tensor> next_observations;  // s_{k+1}
  std::vector<Eigen::VectorXd> valid;     // 1 where transition k is part of the segment
  std::vector<std::size_t> indices;       // buffer index of each segment's first item

  int length() const { return static_cast<int>(observations.size()); }
  Index batch_size() const { return observations.empty() ? 0 : observations.front().rows(); }
  /// Number of valid transitions of segment b.
  int valid_length(Index b) const;
  /// Throws if offsets disagree in size or validity is not a prefix.
  void check() const;
};

}  // namespace uld::repr
