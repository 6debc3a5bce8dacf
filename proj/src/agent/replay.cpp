#include "uld/agent/replay.hpp"

#include <bit>
#include <cmath>
#include <string>

namespace uld::agent {

SumTree::SumTree(std::size_t capacity)
    : capacity_(capacity), leaves_(std::bit_ceil(std::max<std::size_t>(capacity, 1))),
      nodes_(2 * leaves_, 0.0) {}

void SumTree::set(std::size_t i, double weight) {
  std::size_t n = leaves_ + i;
  nodes_[n] = weight;
  // Recompute parents from children so no rounding drift accumulates.
  for (n /= 2; n >= 1; n /= 2) nodes_[n] = nodes_[2 * n] + nodes_[2 * n + 1];
}

std::size_t SumTree::find(double prefix) const {
  std::size_t n = 1;
  while (n < leaves_) {
    const std::size_t left = 2 * n;
    if (prefix < nodes_[left] || nodes_[left + 1] <= 0.0) {
      n = left;
    } else {
      prefix -= nodes_[left];
      n = left + 1;
    }
  }
  return n - leaves_;
}

ReplayBuffer::ReplayBuffer(const ReplayOptions& options, int observation_dim, int action_dim)
    : options_(options), observation_dim_(observation_dim), action_dim_(action_dim),
      tree_(options.capacity) {
  if (options.capacity == 0) throw ReplayError("replay: capacity must be positive");
  if (options.alpha < 0) throw ReplayError("replay: priority exponent must be >= 0");
  if (!(options.epsilon > 0)) throw ReplayError("replay: priority epsilon must be positive");
  const auto n = static_cast<Eigen::Index>(options.capacity);
  priorities_.assign(options.capacity, 0.0);
  obs_.resize(n, observation_dim);
  next_obs_.resize(n, observation_dim);
  actions_.resize(n, action_dim);
  rewards_.resize(n);
  dones_.resize(n);
  episodes_.assign(options.capacity, 0);
  steps_.assign(options.capacity, 0);
}

void ReplayBuffer::add(const Transition& t) {
  if (t.observation.size() != observation_dim_ || t.next_observation.size() != observation_dim_ ||
      t.action.size() != action_dim_)
    throw ReplayError("replay: transition dimensions do not match the buffer");
  if (!std::isfinite(t.reward)) throw ReplayError("replay: non-finite reward");
  const auto i = static_cast<Eigen::Index>(next_);
  obs_.row(i) = t.observation.transpose();
  next_obs_.row(i) = t.next_observation.transpose();
  actions_.row(i) = t.action.transpose();
  rewards_[i] = t.reward;
  dones_[i] = t.done ? 1.0 : 0.0;
  episodes_[next_] = t.episode;
  steps_[next_] = t.step;
  set_priority(next_, max_priority_);
  next_ = (next_ + 1) % options_.capacity;
  size_ = std::min(size_ + 1, options_.capacity);
}

void ReplayBuffer::set_priority(std::size_t i, double p) {
  if (!(p > 0) || !std::isfinite(p)) throw ReplayError("replay: priorities must be positive and finite");
  priorities_.at(i) = p;
  tree_.set(i, std::pow(p, options_.alpha));
  max_priority_ = std::max(max_priority_, p);
}

void ReplayBuffer::update_priorities(const std::vector<std::size_t>& indices,
                                     const Eigen::VectorXd& td_errors) {
  if (static_cast<Eigen::Index>(indices.size()) != td_errors.size())
    throw ReplayError("replay: index and TD error counts differ");
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size_) throw ReplayError("replay: priority update for unused slot");
    set_priority(indices[k], std::abs(td_errors[static_cast<Eigen::Index>(k)]) + options_.epsilon);
  }
}

double ReplayBuffer::probability(std::size_t i) const {
  return i < size_ ? tree_.get(i) / tree_.total() : 0.0;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, std::mt19937_64& rng) const {
  if (!ready())
    throw ReplayError("replay: sampling before warmup (" + std::to_string(size_) + " < " +
                      std::to_string(options_.warmup) + " items)");
  if (size_ == 0) throw ReplayError("replay: buffer is empty");
  std::uniform_real_distribution<double> u(0.0, tree_.total());
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = std::min(tree_.find(u(rng)), size_ - 1);
  return out;
}

bool ReplayBuffer::continues(std::size_t start, int offset) const {
  const std::size_t j = (start + static_cast<std::size_t>(offset)) % options_.capacity;
  if (j >= size_) return false;
  // Once the ring wraps, j may hold an older episode; ids and step indices catch that.
  return episodes_[j] == episodes_[start] && steps_[j] == steps_[start] + offset;
}

repr::SegmentBatch ReplayBuffer::gather(const std::vector<std::size_t>& starts, int length) const {
  if (length < 1) throw ReplayError("replay: segment length must be >= 1");
  const auto b = static_cast<Eigen::Index>(starts.size());
  repr::SegmentBatch out;
  out.indices = starts;

  // Per item: number of valid offsets.
  std::vector<int> valid(starts.size(), 1);
  for (std::size_t n = 0; n < starts.size(); ++n) {
    if (starts[n] >= size_) throw ReplayError("replay: segment start out of range");
    std::size_t last = starts[n];
    while (valid[n] < length && dones_[static_cast<Eigen::Index>(last)] == 0.0 && continues(starts[n], valid[n])) {
      last = (starts[n] + static_cast<std::size_t>(valid[n])) % options_.capacity;
      ++valid[n];
    }
  }

  for (int k = 0; k < length; ++k) {
    Tensor::Matrix o(b, observation_dim_), no(b, observation_dim_), a(b, action_dim_);
    Eigen::VectorXd r(b), d(b), v(b);
    for (Eigen::Index n = 0; n < b; ++n) {
      const int off = std::min(k, valid[static_cast<std::size_t>(n)] - 1);
      const auto j = static_cast<Eigen::Index>((starts[static_cast<std::size_t>(n)] + off) % options_.capacity);
      o.row(n) = obs_.row(j);
      no.row(n) = next_obs_.row(j);
      a.row(n) = actions_.row(j);
      r[n] = rewards_[j];
      d[n] = dones_[j];
      v[n] = k < valid[static_cast<std::size_t>(n)] ? 1.0 : 0.0;
    }
    out.observations.push_back(Tensor::from_matrix(std::move(o)));
    out.next_observations.push_back(Tensor::from_matrix(std::move(no)));
    out.actions.push_back(Tensor::from_matrix(std::move(a)));
    out.rewards.push_back(std::move(r));
    out.dones.push_back(std::move(d));
    out.valid.push_back(std::move(v));
  }
  return out;
}

repr::SegmentBatch ReplayBuffer::sample(std::size_t batch, int length, std::mt19937_64& rng) const {
  return gather(sample_indices(batch, rng), length);
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw ReplayError("replay: index out of range");
  const auto j = static_cast<Eigen::Index>(i);
  return {obs_.row(j).transpose(), actions_.row(j).transpose(), rewards_[j], dones_[j] != 0.0,
          next_obs_.row(j).transpose(), episodes_[i], steps_[i]};
}

}  // namespace uld::agent
