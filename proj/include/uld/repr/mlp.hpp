#pragma once

#include "uld/numerics.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace uld::repr {

using NamedTensor = std::pair<std::string, Tensor>;

/// Fully connected layer computing x W + b, with W stored (in x out).
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear create(Index in, Index out, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const;
  Index in_features() const { return weight.rows(); }
  Index out_features() const { return weight.cols(); }
};

/// ELU network: `hidden_layers` hidden layers of width `hidden`, then a
/// linear output layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(Index in, Index hidden, int hidden_layers, Index out, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;

  /// Independent deep copy (no shared nodes).
  Mlp clone() const;
  /// Overwrites values with those of `other`; shapes must match.
  void copy_from(const Mlp& other);

  Index in_features() const { return layers_.front().in_features(); }
  Index out_features() const { return layers_.back().out_features(); }
  const std::vector<Linear>& layers() const { return layers_; }
  std::vector<Linear>& layers() { return layers_; }

 private:
  std::vector<Linear> layers_;
};

/// Copies values of `src` into `dst` elementwise (hard target update).
void copy_values(const std::vector<Tensor>& src, std::vector<Tensor>& dst);

/// z_cap * tanh(x / z_cap): keeps every component strictly inside (-z_cap, z_cap).
Tensor squash(const Tensor& x, double z_cap);

/// Toggles requires_grad on a parameter group for one scope.
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<Tensor> params);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<Tensor> params_;
  std::vector<bool> previous_;
};

}  // namespace uld::repr
