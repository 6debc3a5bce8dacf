#include "uld/repr/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace uld::repr {

Linear Linear::create(Index in, Index out, std::mt19937_64& rng) {
  // Uniform fan-in init, the common default for small ELU/tanh networks.
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor::Matrix w(in, out), b(1, out);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
  return {Tensor::parameter(std::move(w)), Tensor::parameter(std::move(b))};
}

Tensor Linear::forward(const Tensor& x) const { return matmul(x, weight) + bias; }

Mlp::Mlp(Index in, Index hidden, int hidden_layers, Index out, std::mt19937_64& rng) {
  if (in < 1 || out < 1 || hidden < 1 || hidden_layers < 0)
    throw std::invalid_argument("mlp: dimensions must be positive");
  Index width = in;
  for (int l = 0; l < hidden_layers; ++l) {
    layers_.push_back(Linear::create(width, hidden, rng));
    width = hidden;
  }
  layers_.push_back(Linear::create(width, out, rng));
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.cols() != in_features())
    throw ShapeError("mlp: expected input width " + std::to_string(in_features()) + ", got " +
                     shape_str(x.shape()));
  Tensor h = x;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) h = elu(layers_[l].forward(h));
  return layers_.back().forward(h);
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

void Mlp::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    out.emplace_back(prefix + "." + std::to_string(l) + ".weight", layers_[l].weight);
    out.emplace_back(prefix + "." + std::to_string(l) + ".bias", layers_[l].bias);
  }
}

Mlp Mlp::clone() const {
  Mlp m;
  for (const auto& l : layers_) m.layers_.push_back({l.weight.clone(), l.bias.clone()});
  return m;
}

void Mlp::copy_from(const Mlp& other) {
  auto dst = parameters();
  copy_values(other.parameters(), dst);
}

void copy_values(const std::vector<Tensor>& src, std::vector<Tensor>& dst) {
  if (src.size() != dst.size()) throw ShapeError("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].shape() != dst[i].shape())
      throw ShapeError("copy_values: shape " + shape_str(src[i].shape()) + " vs " +
                       shape_str(dst[i].shape()));
    dst[i].value() = src[i].value();
  }
}

Tensor squash(const Tensor& x, double z_cap) { return tanh(x * (1.0 / z_cap)) * z_cap; }

FreezeGuard::FreezeGuard(std::vector<Tensor> params) : params_(std::move(params)) {
  for (auto& p : params_) {
    previous_.push_back(p.requires_grad());
    p.set_requires_grad(false);
  }
}

FreezeGuard::~FreezeGuard() {
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(previous_[i]);
}

}  // namespace uld::repr
