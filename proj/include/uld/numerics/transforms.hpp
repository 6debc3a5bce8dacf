#pragma once

#include <cmath>
#include <random>
#include <stdexcept>

namespace uld {

/// sign(x) * (exp(|x|) - 1)
template <typename Scalar>
Scalar symexp(Scalar x) {
  return std::copysign(std::expm1(std::abs(x)), x);
}

/// sign(x) * log(|x| + 1), the inverse of symexp.
template <typename Scalar>
Scalar symlog(Scalar x) {
  return std::copysign(std::log1p(std::abs(x)), x);
}

template <typename Scalar>
Scalar huber(Scalar x, Scalar delta) {
  if (!(delta > 0)) throw std::invalid_argument("huber: delta must be positive");
  const Scalar a = std::abs(x);
  return a <= delta ? Scalar(0.5) * x * x : delta * (a - Scalar(0.5) * delta);
}

/// One Gumbel(0, 1) draw: -log(-log(u)), u ~ U(0, 1).
template <typename Scalar, typename Rng>
Scalar sample_gumbel(Rng& rng) {
  std::uniform_real_distribution<Scalar> uniform(Scalar(0), Scalar(1));
  Scalar u = uniform(rng);
  while (u <= Scalar(0)) u = uniform(rng);
  return -std::log(-std::log(u));
}

}  // namespace uld
