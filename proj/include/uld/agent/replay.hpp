#pragma once

#include "uld/repr/segment.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace uld::agent {

class ReplayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Transition {
  Eigen::VectorXd observation;
  Eigen::VectorXd action;  // continuous vector or one-hot of the executed action
  double reward = 0.0;
  bool done = false;
  Eigen::VectorXd next_observation;
  std::uint64_t episode = 0;
  int step = 0;  // index within the episode
};

/// Binary sum tree over leaf weights: O(log n) update and prefix search.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);

  void set(std::size_t i, double weight);
  double get(std::size_t i) const { return nodes_[leaves_ + i]; }
  double total() const { return nodes_[1]; }
  /// Leaf whose cumulative range contains `prefix`, skipping zero-weight leaves.
  std::size_t find(double prefix) const;
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_, leaves_;
  std::vector<double> nodes_;
};

struct ReplayOptions {
  std::size_t capacity = 100000;
  double alpha = 0.6;     // priority exponent
  double epsilon = 1e-3;  // added to |TD| for new priorities
  std::size_t warmup = 1000;
};

/// Ring buffer of transitions with proportional prioritized sampling.
///
/// Item i is drawn with probability p_i^alpha / sum_j p_j^alpha. New items
/// enter at the current maximum priority.
class ReplayBuffer {
 public:
  ReplayBuffer(const ReplayOptions& options, int observation_dim, int action_dim);

  void add(const Transition& t);
  std::size_t size() const { return size_; }
  bool ready() const { return size_ >= options_.warmup; }
  const ReplayOptions& options() const { return options_; }

  /// Proportional draws with replacement. Throws before warmup.
  std::vector<std::size_t> sample_indices(std::size_t n, std::mt19937_64& rng) const;
  /// Draws `batch` start indices and gathers segments of up to `length`
  /// transitions from each.
  repr::SegmentBatch sample(std::size_t batch, int length, std::mt19937_64& rng) const;
  /// Gathers segments starting at the given indices. A segment stops after a
  /// terminal, at an episode boundary, or at the newest stored item.
  repr::SegmentBatch gather(const std::vector<std::size_t>& starts, int length) const;

  /// Sets p_i = |td_i| + epsilon.
  void update_priorities(const std::vector<std::size_t>& indices, const Eigen::VectorXd& td_errors);
  void set_priority(std::size_t i, double p);
  double priority(std::size_t i) const { return priorities_.at(i); }
  double max_priority() const { return max_priority_; }
  /// Current sampling probability of item i.
  double probability(std::size_t i) const;

  Transition at(std::size_t i) const;

 private:
  bool continues(std::size_t start, int offset) const;

  ReplayOptions options_;
  int observation_dim_, action_dim_;
  std::size_t size_ = 0, next_ = 0;
  double max_priority_ = 1.0;
  SumTree tree_;
  std::vector<double> priorities_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> obs_, next_obs_, actions_;
  Eigen::VectorXd rewards_, dones_;
  std::vector<std::uint64_t> episodes_;
  std::vector<int> steps_;
};

}  // namespace uld::agent
