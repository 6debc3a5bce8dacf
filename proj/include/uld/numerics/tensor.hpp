#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace uld {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

// Shapes are stored as a 2-D row-major view: all leading extents fold into
// rows, the last extent is the column count. Scalars are 1x1.
inline std::pair<Index, Index> view_dims(const Shape& shape) {
  if (shape.empty()) return {1, 1};
  Index cols = shape.back();
  return {shape_size(shape) / cols, cols};
}

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename Scalar>
struct Node {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Shape shape;
  Matrix value;
  Matrix grad;  // empty when absent
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Whether each parent required grad when this node was recorded. Backward
  // honours this snapshot, so freezing a parameter while building a graph
  // keeps it frozen for that graph's backward pass.
  std::vector<char> parent_needs_grad;
  // Pushes this->grad into the parents' grad buffers.
  std::function<void(Node&)> backward_fn;

  Matrix& grad_buffer() {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    return grad;
  }
};

}  // namespace detail

/// Disables graph recording for its lifetime (thread-local).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Dense row-major array taking part in a reverse-mode differentiation graph.
///
/// A tensor is a handle: copies share the underlying node, so a parameter
/// copied into a container is still the same parameter. Use clone() for an
/// independent value copy.
template <typename Scalar_>
class BasicTensor {
 public:
  using Scalar = Scalar_;
  using NodeType = detail::Node<Scalar>;
  using Matrix = typename NodeType::Matrix;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0)) {
    for (Index e : shape)
      if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    node_ = std::make_shared<NodeType>();
    auto [r, c] = detail::view_dims(shape);
    node_->shape = std::move(shape);
    node_->value = Matrix::Constant(r, c, fill);
  }

  static BasicTensor scalar(Scalar v) { return BasicTensor(Shape{}, v); }

  static BasicTensor from_matrix(Matrix m) {
    BasicTensor t;
    t.node_ = std::make_shared<NodeType>();
    t.node_->shape = Shape{m.rows(), m.cols()};
    t.node_->value = std::move(m);
    return t;
  }

  template <typename Derived>
  static BasicTensor from_eigen(const Eigen::MatrixBase<Derived>& m) {
    return from_matrix(Matrix(m));
  }

  static BasicTensor from_vector(const std::vector<Scalar>& v) {
    BasicTensor t(Shape{static_cast<Index>(v.size())});
    std::copy(v.begin(), v.end(), t.data());
    return t;
  }

  static BasicTensor matrix(Index rows, Index cols, std::initializer_list<Scalar> values) {
    BasicTensor t(Shape{rows, cols});
    if (static_cast<Index>(values.size()) != rows * cols)
      throw ShapeError("initializer has wrong element count for " + shape_str(t.shape()));
    std::copy(values.begin(), values.end(), t.data());
    return t;
  }

  /// Creates a leaf that accumulates gradients.
  static BasicTensor parameter(Matrix m) {
    auto t = from_matrix(std::move(m));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index size() const { return node_->value.size(); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool is_scalar() const { return size() == 1; }

  const Matrix& value() const { return node_->value; }
  Matrix& value() { return node_->value; }
  Scalar* data() { return node_->value.data(); }
  const Scalar* data() const { return node_->value.data(); }
  Scalar item() const {
    if (!is_scalar()) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value(0, 0);
  }
  Scalar operator()(Index r, Index c) const { return node_->value(r, c); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return node_->grad.size() != 0; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() {
    if (has_grad()) node_->grad.setZero();
  }

  BasicTensor clone() const {
    BasicTensor t;
    t.node_ = std::make_shared<NodeType>();
    t.node_->shape = node_->shape;
    t.node_->value = node_->value;
    t.node_->requires_grad = node_->requires_grad;
    return t;
  }

  /// Value copy with no graph history.
  BasicTensor detach() const {
    BasicTensor t;
    t.node_ = std::make_shared<NodeType>();
    t.node_->shape = node_->shape;
    t.node_->value = node_->value;
    return t;
  }

  BasicTensor reshape(Shape shape) const;

  const std::shared_ptr<NodeType>& node() const { return node_; }

  /// Builds a graph node from an op result. Recording happens only when a
  /// parent needs gradients and grad mode is on.
  static BasicTensor make_result(Shape shape, Matrix value, std::vector<BasicTensor> parents,
                                 std::function<void(NodeType&)> backward_fn) {
    BasicTensor t;
    t.node_ = std::make_shared<NodeType>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(value);
    bool track = false;
    if (grad_enabled())
      for (const auto& p : parents) track = track || p.requires_grad();
    if (track) {
      t.node_->requires_grad = true;
      for (auto& p : parents) {
        t.node_->parents.push_back(p.node_);
        t.node_->parent_needs_grad.push_back(p.requires_grad() ? 1 : 0);
      }
      t.node_->backward_fn = std::move(backward_fn);
    }
    return t;
  }

 private:
  std::shared_ptr<NodeType> node_;
};

using Tensor = BasicTensor<double>;

/// Reverse sweep from a scalar loss. Leaf gradients accumulate; callers zero
/// them between passes. Each reachable node is visited exactly once.
template <typename Scalar>
void backward(const BasicTensor<Scalar>& loss) {
  using NodeType = detail::Node<Scalar>;
  if (!loss.is_scalar())
    throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  std::vector<NodeType*> order;
  std::unordered_set<NodeType*> seen;
  std::vector<std::pair<NodeType*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const std::size_t i = next++;
      NodeType* parent = node->parents[i].get();
      if (node->parent_needs_grad[i] && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer().setConstant(Scalar(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeType* node = *it;
    if (node->backward_fn && node->grad.size() != 0) node->backward_fn(*node);
  }
  // Interior buffers are released; only leaves keep their gradients.
  for (NodeType* node : order)
    if (node->backward_fn) node->grad.resize(0, 0);
}

template <typename Scalar>
BasicTensor<Scalar> BasicTensor<Scalar>::reshape(Shape shape) const {
  if (shape_size(shape) != size())
    throw ShapeError("cannot reshape " + shape_str(this->shape()) + " to " + shape_str(shape));
  auto [r, c] = detail::view_dims(shape);
  Matrix v = Eigen::Map<const Matrix>(data(), r, c);
  const Index src_r = rows(), src_c = cols();
  return make_result(std::move(shape), std::move(v), {*this}, [src_r, src_c](NodeType& self) {
    auto& g = self.parents[0]->grad_buffer();
    g += Eigen::Map<const Matrix>(self.grad.data(), src_r, src_c);
  });
}

}  // namespace uld
