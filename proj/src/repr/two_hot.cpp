#include "uld/repr/two_hot.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uld::repr {

TwoHotCodec::TwoHotCodec(int n_bins, double half_range) : half_range_(half_range) {
  if (n_bins < 3 || n_bins % 2 == 0) throw std::invalid_argument("two-hot: n_bins must be odd and >= 3");
  if (!(half_range > 0)) throw std::invalid_argument("two-hot: half range must be positive");
  centers_.resize(n_bins);
  const int last = n_bins - 1;
  for (int i = 0; i < n_bins; ++i) {
    // Integer numerator keeps the grid symmetric and the middle exactly 0.
    const double u = half_range * static_cast<double>(2 * i - last) / last;
    centers_[i] = symexp(u);
  }
}

Eigen::VectorXd TwoHotCodec::encode(double r) const {
  if (!std::isfinite(r)) throw std::invalid_argument("two-hot: non-finite value");
  const int n = size();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  r = std::clamp(r, centers_[0], centers_[n - 1]);
  // Locate the bracket on the symlog grid, then fix up rounding at edges.
  const double pos = (symlog(r) + half_range_) / (2.0 * half_range_) * (n - 1);
  int i = std::clamp(static_cast<int>(std::floor(pos)), 0, n - 2);
  while (i > 0 && r < centers_[i]) --i;
  while (i < n - 2 && r > centers_[i + 1]) ++i;
  const double w = (r - centers_[i]) / (centers_[i + 1] - centers_[i]);
  p[i] = 1.0 - w;
  p[i + 1] = w;
  return p;
}

Tensor::Matrix TwoHotCodec::encode_batch(const Eigen::VectorXd& r) const {
  Tensor::Matrix out(r.size(), size());
  for (Eigen::Index b = 0; b < r.size(); ++b) out.row(b) = encode(r[b]).transpose();
  return out;
}

double TwoHotCodec::decode(const Eigen::VectorXd& probs) const {
  if (probs.size() != size()) throw std::invalid_argument("two-hot: probability vector has wrong size");
  return probs.dot(centers_);
}

}  // namespace uld::repr
