#pragma once

#include "uld/numerics/tensor.hpp"

#include <cmath>
#include <limits>

namespace uld {

namespace detail {

template <typename Scalar>
using NodeMatrix = typename Node<Scalar>::Matrix;

// Gradient buffer of parent i, or nullptr when it needs none.
template <typename Scalar>
NodeMatrix<Scalar>* parent_grad(Node<Scalar>& self, std::size_t i) {
  return self.parent_needs_grad[i] ? &self.parents[i]->grad_buffer() : nullptr;
}

template <typename Scalar>
struct Broadcast {
  Index rows, cols;
  Shape shape;
};

template <typename Scalar>
Broadcast<Scalar> broadcast_dims(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b,
                                 const char* op) {
  const Index ra = a.rows(), ca = a.cols(), rb = b.rows(), cb = b.cols();
  auto compatible = [](Index x, Index y) { return x == y || x == 1 || y == 1; };
  bool ok = a.shape() == b.shape() || a.size() == 1 || b.size() == 1 ||
            (compatible(ra, rb) && compatible(ca, cb));
  if (!ok)
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  if (a.size() == 1 && b.size() != 1) return {rb, cb, b.shape()};
  if (b.size() == 1) return {ra, ca, a.shape()};
  const Index r = std::max(ra, rb), c = std::max(ca, cb);
  Shape shape = (r == ra && c == ca) ? a.shape() : (r == rb && c == cb) ? b.shape() : Shape{r, c};
  return {r, c, shape};
}

template <typename Scalar>
NodeMatrix<Scalar> expand(const NodeMatrix<Scalar>& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.size() == 1) return NodeMatrix<Scalar>::Constant(rows, cols, m(0, 0));
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// a op b with both operands broadcast to rows x cols. Full-size operands are
// read in place; a row vector (the bias case) is applied row by row.
template <typename Scalar, typename Op>
NodeMatrix<Scalar> broadcast_apply(const NodeMatrix<Scalar>& a, const NodeMatrix<Scalar>& b, Index rows,
                                   Index cols, Op op) {
  auto full = [&](const NodeMatrix<Scalar>& m) { return m.rows() == rows && m.cols() == cols; };
  if (full(a) && full(b)) return a.binaryExpr(b, op);
  if (full(a) && b.rows() == 1 && b.cols() == cols) {
    NodeMatrix<Scalar> out(rows, cols);
    for (Index r = 0; r < rows; ++r) out.row(r) = a.row(r).binaryExpr(b.row(0), op);
    return out;
  }
  return expand<Scalar>(a, rows, cols).binaryExpr(expand<Scalar>(b, rows, cols), op);
}

// Sums a full-size gradient back down to a broadcast operand's extents.
template <typename Scalar>
void reduce_into(NodeMatrix<Scalar>& target, const NodeMatrix<Scalar>& full) {
  if (target.rows() == full.rows() && target.cols() == full.cols()) {
    target += full;
  } else if (target.size() == 1) {
    target(0, 0) += full.sum();
  } else if (target.rows() == 1) {
    target += full.colwise().sum();
  } else {
    target += full.rowwise().sum();
  }
}

template <typename Scalar, typename Fwd, typename Dfx>
BasicTensor<Scalar> unary(const BasicTensor<Scalar>& x, Fwd fwd, Dfx dfx) {
  NodeMatrix<Scalar> out = x.value().unaryExpr(fwd);
  return BasicTensor<Scalar>::make_result(
      x.shape(), std::move(out), {x}, [dfx](Node<Scalar>& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        const auto& in = self.parents[0]->value;
        *g += (self.grad.array() *
               in.binaryExpr(self.value, dfx).array())
                  .matrix();
      });
}

}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  typename BasicTensor<Scalar>::Matrix out = a.value() * b.value();
  return BasicTensor<Scalar>::make_result(
      Shape{a.rows(), b.cols()}, std::move(out), {a, b}, [](detail::Node<Scalar>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (auto* ga = detail::parent_grad(self, 0)) ga->noalias() += self.grad * bv.transpose();
        if (auto* gb = detail::parent_grad(self, 1)) gb->noalias() += av.transpose() * self.grad;
      });
}

template <typename Scalar>
BasicTensor<Scalar> operator+(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  auto bc = detail::broadcast_dims(a, b, "add");
  detail::NodeMatrix<Scalar> out = detail::broadcast_apply<Scalar>(
      a.value(), b.value(), bc.rows, bc.cols, Eigen::internal::scalar_sum_op<Scalar, Scalar>());
  return BasicTensor<Scalar>::make_result(bc.shape, std::move(out), {a, b}, [](detail::Node<Scalar>& self) {
    if (auto* ga = detail::parent_grad(self, 0)) detail::reduce_into<Scalar>(*ga, self.grad);
    if (auto* gb = detail::parent_grad(self, 1)) detail::reduce_into<Scalar>(*gb, self.grad);
  });
}

template <typename Scalar>
BasicTensor<Scalar> operator-(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  auto bc = detail::broadcast_dims(a, b, "sub");
  detail::NodeMatrix<Scalar> out = detail::broadcast_apply<Scalar>(
      a.value(), b.value(), bc.rows, bc.cols, Eigen::internal::scalar_difference_op<Scalar, Scalar>());
  return BasicTensor<Scalar>::make_result(bc.shape, std::move(out), {a, b}, [](detail::Node<Scalar>& self) {
    if (auto* ga = detail::parent_grad(self, 0)) detail::reduce_into<Scalar>(*ga, self.grad);
    if (auto* gb = detail::parent_grad(self, 1))
      detail::reduce_into<Scalar>(*gb, detail::NodeMatrix<Scalar>(-self.grad));
  });
}

template <typename Scalar>
BasicTensor<Scalar> operator*(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  auto bc = detail::broadcast_dims(a, b, "mul");
  detail::NodeMatrix<Scalar> out = detail::broadcast_apply<Scalar>(
      a.value(), b.value(), bc.rows, bc.cols, Eigen::internal::scalar_product_op<Scalar, Scalar>());
  const Index r = bc.rows, c = bc.cols;
  return BasicTensor<Scalar>::make_result(bc.shape, std::move(out), {a, b}, [r, c](detail::Node<Scalar>& self) {
    if (auto* ga = detail::parent_grad(self, 0)) {
      auto be = detail::expand<Scalar>(self.parents[1]->value, r, c);
      detail::reduce_into<Scalar>(*ga, detail::NodeMatrix<Scalar>(self.grad.cwiseProduct(be)));
    }
    if (auto* gb = detail::parent_grad(self, 1)) {
      auto ae = detail::expand<Scalar>(self.parents[0]->value, r, c);
      detail::reduce_into<Scalar>(*gb, detail::NodeMatrix<Scalar>(self.grad.cwiseProduct(ae)));
    }
  });
}

template <typename Scalar>
BasicTensor<Scalar> operator*(const BasicTensor<Scalar>& a, Scalar s) {
  detail::NodeMatrix<Scalar> out = a.value() * s;
  return BasicTensor<Scalar>::make_result(a.shape(), out, {a}, [s](detail::Node<Scalar>& self) {
    if (auto* g = detail::parent_grad(self, 0)) *g += self.grad * s;
  });
}

template <typename Scalar>
BasicTensor<Scalar> operator*(Scalar s, const BasicTensor<Scalar>& a) {
  return a * s;
}

template <typename Scalar>
BasicTensor<Scalar> operator+(const BasicTensor<Scalar>& a, Scalar s) {
  detail::NodeMatrix<Scalar> out = a.value().array() + s;
  return BasicTensor<Scalar>::make_result(a.shape(), out, {a}, [](detail::Node<Scalar>& self) {
    if (auto* g = detail::parent_grad(self, 0)) *g += self.grad;
  });
}

template <typename Scalar>
BasicTensor<Scalar> operator-(const BasicTensor<Scalar>& a) {
  return a * Scalar(-1);
}

/// Vectorized tanh on a plain matrix; Eigen 3.4 has no packet tanh for double.
// Away from zero it is (1 - e) / (1 + e) with e = exp(-2|v|). Below kSmall an
// odd Taylor polynomial keeps relative accuracy. The two are blended
// arithmetically because Eigen 3.4 does not vectorize select().
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tanh_values(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& x) {
  constexpr Scalar kSmall = Scalar(0.01);
  const auto v = x.array();
  const auto e = (Scalar(-2) * v.abs()).exp();
  const auto far = v.sign() * (Scalar(1) - e) / (Scalar(1) + e);
  const auto s = v.max(-kSmall).min(kSmall);
  const auto s2 = s * s;
  const auto near =
      s * (Scalar(1) + s2 * (Scalar(-1) / 3 + s2 * (Scalar(2) / 15 + s2 * (Scalar(-17) / 315))));
  const auto is_small = (v.abs() < kSmall).template cast<Scalar>();
  return (is_small * near + (Scalar(1) - is_small) * far).matrix();
}

template <typename Scalar>
BasicTensor<Scalar> tanh(const BasicTensor<Scalar>& x) {
  detail::NodeMatrix<Scalar> out = tanh_values<Scalar>(x.value());
  return BasicTensor<Scalar>::make_result(x.shape(), std::move(out), {x}, [](detail::Node<Scalar>& self) {
    if (auto* g = detail::parent_grad(self, 0))
      g->array() += self.grad.array() * (Scalar(1) - self.value.array().square());
  });
}

/// ELU with unit scale: x for x > 0, exp(x) - 1 otherwise.
/// Kept free of select() so Eigen vectorizes it (it is the hot activation);
/// exp(v) - 1 differs from expm1 by at most an ulp of 1.
template <typename Scalar>
BasicTensor<Scalar> elu(const BasicTensor<Scalar>& x) {
  const auto v = x.value().array();
  // max(v, 0) + exp(min(v, 0)) - 1 is exactly v for v > 0.
  detail::NodeMatrix<Scalar> out = (v.max(Scalar(0)) + (v.min(Scalar(0)).exp() - Scalar(1))).matrix();
  return BasicTensor<Scalar>::make_result(x.shape(), std::move(out), {x}, [](detail::Node<Scalar>& self) {
    // Slope is 1 where y > 0 and y + 1 = exp(v) elsewhere.
    if (auto* g = detail::parent_grad(self, 0))
      g->array() += self.grad.array() * (self.value.array().min(Scalar(0)) + Scalar(1));
  });
}

template <typename Scalar>
BasicTensor<Scalar> exp(const BasicTensor<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return std::exp(v); }, [](Scalar, Scalar y) { return y; });
}

template <typename Scalar>
BasicTensor<Scalar> log(const BasicTensor<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return std::log(v); }, [](Scalar v, Scalar) { return Scalar(1) / v; });
}

template <typename Scalar>
BasicTensor<Scalar> square(const BasicTensor<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return v * v; }, [](Scalar v, Scalar) { return Scalar(2) * v; });
}

/// Elementwise Huber penalty with threshold delta.
template <typename Scalar>
BasicTensor<Scalar> huber(const BasicTensor<Scalar>& x, Scalar delta) {
  if (!(delta > 0)) throw std::invalid_argument("huber: delta must be positive");
  return detail::unary(
      x,
      [delta](Scalar v) {
        Scalar a = std::abs(v);
        return a <= delta ? Scalar(0.5) * v * v : delta * (a - Scalar(0.5) * delta);
      },
      [delta](Scalar v, Scalar) { return std::clamp(v, -delta, delta); });
}

/// Clamps into [lo, hi]; gradient passes only where the input is inside.
template <typename Scalar>
BasicTensor<Scalar> clip(const BasicTensor<Scalar>& x, Scalar lo, Scalar hi) {
  return detail::unary(
      x, [lo, hi](Scalar v) { return std::clamp(v, lo, hi); },
      [lo, hi](Scalar v, Scalar) { return (v >= lo && v <= hi) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
BasicTensor<Scalar> minimum(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("minimum: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  detail::NodeMatrix<Scalar> out = a.value().cwiseMin(b.value());
  return BasicTensor<Scalar>::make_result(a.shape(), out, {a, b}, [](detail::Node<Scalar>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    auto pick_a = (av.array() <= bv.array()).template cast<Scalar>();
    if (auto* ga = detail::parent_grad(self, 0)) *ga += (self.grad.array() * pick_a).matrix();
    if (auto* gb = detail::parent_grad(self, 1))
      *gb += (self.grad.array() * (Scalar(1) - pick_a)).matrix();
  });
}

/// Sum of all elements, as a scalar.
template <typename Scalar>
BasicTensor<Scalar> sum(const BasicTensor<Scalar>& x) {
  detail::NodeMatrix<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  return BasicTensor<Scalar>::make_result(Shape{}, out, {x}, [](detail::Node<Scalar>& self) {
    if (auto* g = detail::parent_grad(self, 0)) g->array() += self.grad(0, 0);
  });
}

template <typename Scalar>
BasicTensor<Scalar> mean(const BasicTensor<Scalar>& x) {
  return sum(x) * (Scalar(1) / static_cast<Scalar>(x.size()));
}

/// Sums over the last axis; [r, c] -> [r, 1].
template <typename Scalar>
BasicTensor<Scalar> sum_last(const BasicTensor<Scalar>& x) {
  detail::NodeMatrix<Scalar> out = x.value().rowwise().sum();
  return BasicTensor<Scalar>::make_result(
      Shape{x.rows(), 1}, out, {x}, [](detail::Node<Scalar>& self) {
        if (auto* g = detail::parent_grad(self, 0)) g->colwise() += self.grad.col(0);
      });
}

/// Softmax over the last axis.
template <typename Scalar>
BasicTensor<Scalar> softmax(const BasicTensor<Scalar>& x) {
  detail::NodeMatrix<Scalar> out = (x.value().colwise() - x.value().rowwise().maxCoeff()).array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return BasicTensor<Scalar>::make_result(x.shape(), out, {x}, [](detail::Node<Scalar>& self) {
    auto* g = detail::parent_grad(self, 0);
    if (!g) return;
    const auto& y = self.value;
    auto dot = (self.grad.cwiseProduct(y)).rowwise().sum();
    *g += (y.array() * (self.grad.colwise() - dot).array()).matrix();
  });
}

/// Numerically stable log(softmax(x)) over the last axis.
template <typename Scalar>
BasicTensor<Scalar> log_softmax(const BasicTensor<Scalar>& x) {
  detail::NodeMatrix<Scalar> shifted = x.value().colwise() - x.value().rowwise().maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lse = shifted.array().exp().rowwise().sum().log();
  detail::NodeMatrix<Scalar> out = shifted.colwise() - lse;
  return BasicTensor<Scalar>::make_result(x.shape(), out, {x}, [](detail::Node<Scalar>& self) {
    auto* g = detail::parent_grad(self, 0);
    if (!g) return;
    detail::NodeMatrix<Scalar> p = self.value.array().exp();
    auto gsum = self.grad.rowwise().sum();
    *g += self.grad - (p.array().colwise() * gsum.array()).matrix();
  });
}

/// Joins two tensors along the last axis.
template <typename Scalar>
BasicTensor<Scalar> concat(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.rows() != b.rows())
    throw ShapeError("concat: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const Index ca = a.cols(), cb = b.cols();
  detail::NodeMatrix<Scalar> out(a.rows(), ca + cb);
  out << a.value(), b.value();
  Shape shape = a.shape();
  if (shape.empty()) shape = {1};
  shape.back() = ca + cb;
  return BasicTensor<Scalar>::make_result(
      std::move(shape), out, {a, b}, [ca, cb](detail::Node<Scalar>& self) {
        if (auto* ga = detail::parent_grad(self, 0)) *ga += self.grad.leftCols(ca);
        if (auto* gb = detail::parent_grad(self, 1)) *gb += self.grad.rightCols(cb);
      });
}

/// Columns [begin, end) of the last axis.
template <typename Scalar>
BasicTensor<Scalar> slice(const BasicTensor<Scalar>& x, Index begin, Index end) {
  if (begin < 0 || end > x.cols() || begin >= end)
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of bounds for " + shape_str(x.shape()));
  detail::NodeMatrix<Scalar> out = x.value().middleCols(begin, end - begin);
  Shape shape = x.shape();
  if (shape.empty()) shape = {1};
  shape.back() = end - begin;
  return BasicTensor<Scalar>::make_result(
      std::move(shape), out, {x}, [begin, end](detail::Node<Scalar>& self) {
        if (auto* g = detail::parent_grad(self, 0)) g->middleCols(begin, end - begin) += self.grad;
      });
}

/// softmax((logits + noise) / temperature). The caller supplies Gumbel noise.
template <typename Scalar>
BasicTensor<Scalar> gumbel_softmax(const BasicTensor<Scalar>& logits, Scalar temperature,
                                   const BasicTensor<Scalar>& noise) {
  if (!(temperature > 0)) throw std::invalid_argument("gumbel_softmax: temperature must be positive");
  if (logits.shape() != noise.shape())
    throw ShapeError("gumbel_softmax: incompatible shapes " + shape_str(logits.shape()) + " and " +
                     shape_str(noise.shape()));
  return softmax((logits + noise) * (Scalar(1) / temperature));
}

}  // namespace uld
