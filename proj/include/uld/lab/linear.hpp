#pragma once

// Linear value-function theory over explicit MDPs: semi-gradient TD fixed
// points, least-squares reward/transition models and their rollout weights,
// the equivalence check between the two, and the value-error bound.

#include "uld/lab/mdp.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <complex>
#include <limits>
#include <optional>
#include <sstream>

namespace uld::lab {

inline constexpr double kConditionGate = 1e12;

class ConditioningError : public LabError {
 public:
  ConditioningError(const std::string& what, double condition)
      : LabError(what), condition(condition) {}
  double condition;
};

class RankError : public LabError {
 public:
  RankError(const std::string& what, Eigen::Index rank, Eigen::Index columns)
      : LabError(what), rank(rank), columns(columns) {}
  Eigen::Index rank;
  Eigen::Index columns;
};

class DivergenceError : public LabError {
 public:
  DivergenceError(const std::string& what, double spectral_radius)
      : LabError(what), spectral_radius(spectral_radius) {}
  double spectral_radius;
};

/// Embeddings over every state-action pair plus their expected successors
/// under a fixed policy.
template <typename Scalar>
struct FeatureSet {
  Matrix<Scalar> z;       // (S*A) x d, rows z_sa
  Matrix<Scalar> z_next;  // (S*A) x d, rows E[z_{s'a'} | s, a]
  Vector<Scalar> r;       // (S*A)

  Eigen::Index dim() const { return z.cols(); }

  void validate() const {
    if (z.rows() != z_next.rows() || z.rows() != r.size() || z.cols() != z_next.cols())
      throw LabError("features: Z, Z' and r row counts differ");
  }
};

/// Expected next-feature rows Z' = P_pi Z.
template <typename Scalar>
FeatureSet<Scalar> make_features(const TabularMdp<Scalar>& mdp, const Matrix<Scalar>& policy,
                                 const Matrix<Scalar>& z) {
  if (z.rows() != mdp.num_pairs()) throw LabError("features: Z needs one row per state-action pair");
  return {z, policy_transition_operator(mdp, policy) * z, mdp.rewards};
}

template <typename Scalar>
double condition_number(const Matrix<Scalar>& m) {
  Eigen::JacobiSVD<Matrix<Scalar>> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return std::numeric_limits<double>::infinity();
  const double smallest = static_cast<double>(sv(sv.size() - 1));
  return smallest == 0 ? std::numeric_limits<double>::infinity()
                       : static_cast<double>(sv(0)) / smallest;
}

/// A = Z^T Z - gamma Z^T Z', B = Z^T r.
template <typename Scalar>
std::pair<Matrix<Scalar>, Vector<Scalar>> td_system(const FeatureSet<Scalar>& fs, Scalar gamma) {
  fs.validate();
  Matrix<Scalar> a = fs.z.transpose() * fs.z - gamma * fs.z.transpose() * fs.z_next;
  Vector<Scalar> b = fs.z.transpose() * fs.r;
  return {std::move(a), std::move(b)};
}

template <typename Scalar>
double spectral_radius(const Matrix<Scalar>& m) {
  Eigen::EigenSolver<Matrix<Scalar>> es(m, false);
  return static_cast<double>(es.eigenvalues().cwiseAbs().maxCoeff());
}

/// Step size minimising the spectral radius of (I - alpha A). Returns nullopt
/// when some eigenvalue of A has non-positive real part, since no positive
/// step then contracts.
template <typename Scalar>
std::optional<Scalar> contracting_step_size(const Matrix<Scalar>& a) {
  Eigen::EigenSolver<Matrix<Scalar>> es(a, false);
  const auto lambdas = es.eigenvalues();
  Scalar upper = std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index k = 0; k < lambdas.size(); ++k) {
    const Scalar re = lambdas(k).real(), mag2 = std::norm(lambdas(k));
    if (re <= 0) return std::nullopt;
    upper = std::min(upper, Scalar(2) * re / mag2);
  }
  // max_k |1 - alpha lambda_k|^2 is convex in alpha: ternary search.
  auto worst = [&](Scalar alpha) {
    Scalar w = 0;
    for (Eigen::Index k = 0; k < lambdas.size(); ++k)
      w = std::max(w, std::norm(std::complex<Scalar>(1, 0) - alpha * lambdas(k)));
    return w;
  };
  Scalar lo = 0, hi = upper;
  for (int it = 0; it < 200; ++it) {
    const Scalar m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
    if (worst(m1) < worst(m2))
      hi = m2;
    else
      lo = m1;
  }
  return (lo + hi) / 2;
}

template <typename Scalar>
struct TdSolution {
  Vector<Scalar> w;
  long long iterations = 0;
  bool converged = false;
  double spectral_radius = 0;
  double condition = 0;
};

/// Iterates w <- (I - alpha A) w + alpha B from w = 0 until ||dw||_inf < tol.
template <typename Scalar>
TdSolution<Scalar> td_fixed_point_iterative(const FeatureSet<Scalar>& fs, Scalar gamma, Scalar alpha,
                                            long long max_iters, Scalar tol) {
  auto [a, b] = td_system(fs, gamma);
  const Eigen::Index d = a.rows();
  Matrix<Scalar> step = Matrix<Scalar>::Identity(d, d) - alpha * a;
  TdSolution<Scalar> out;
  out.spectral_radius = spectral_radius(step);
  if (!(out.spectral_radius < 1)) {
    std::ostringstream os;
    os << "td iteration: spectral radius of (I - alpha A) is " << out.spectral_radius
       << " >= 1 for alpha = " << alpha;
    throw DivergenceError(os.str(), out.spectral_radius);
  }
  Vector<Scalar> w = Vector<Scalar>::Zero(d);
  const Vector<Scalar> offset = alpha * b;
  Scalar first_delta = -1, prev_delta = std::numeric_limits<Scalar>::infinity();
  int growth = 0;
  for (out.iterations = 1; out.iterations <= max_iters; ++out.iterations) {
    Vector<Scalar> next = step * w + offset;
    const Scalar delta = (next - w).cwiseAbs().maxCoeff();
    w = std::move(next);
    if (first_delta < 0) first_delta = delta;
    if (delta < tol) {
      out.converged = true;
      break;
    }
    growth = delta > prev_delta ? growth + 1 : 0;
    if (!std::isfinite(static_cast<double>(delta)) || (growth >= 10 && delta > first_delta))
      throw DivergenceError("td iteration: update norm grew for 10 consecutive iterations",
                            out.spectral_radius);
    prev_delta = delta;
  }
  out.iterations = std::min(out.iterations, max_iters);
  out.w = std::move(w);
  return out;
}

/// w = A^{-1} B by direct solve, gated on cond(A) <= 1e12.
template <typename Scalar>
TdSolution<Scalar> td_fixed_point_closed_form(const FeatureSet<Scalar>& fs, Scalar gamma) {
  auto [a, b] = td_system(fs, gamma);
  TdSolution<Scalar> out;
  out.condition = condition_number(a);
  if (!(out.condition <= kConditionGate)) {
    std::ostringstream os;
    os << "td closed form: cond(A) = " << out.condition << " exceeds " << kConditionGate;
    throw ConditioningError(os.str(), out.condition);
  }
  out.w = a.fullPivLu().solve(b);
  out.converged = true;
  return out;
}

template <typename Scalar>
struct ModelWeights {
  Vector<Scalar> w_r;  // d
  Matrix<Scalar> w_p;  // d x d
  double condition = 0;
};

/// Least-squares reward and transition models: w_r = (Z^T Z)^{-1} Z^T r,
/// W_p = (Z^T Z)^{-1} Z^T Z'.
template <typename Scalar>
ModelWeights<Scalar> model_based_weights(const FeatureSet<Scalar>& fs) {
  fs.validate();
  Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(fs.z);
  if (qr.rank() < fs.z.cols()) {
    std::ostringstream os;
    os << "model weights: Z has rank " << qr.rank() << " < " << fs.z.cols() << " columns";
    throw RankError(os.str(), qr.rank(), fs.z.cols());
  }
  const Matrix<Scalar> gram = fs.z.transpose() * fs.z;
  ModelWeights<Scalar> out;
  out.condition = condition_number(gram);
  if (!(out.condition <= kConditionGate)) {
    std::ostringstream os;
    os << "model weights: cond(Z^T Z) = " << out.condition << " exceeds " << kConditionGate;
    throw ConditioningError(os.str(), out.condition);
  }
  // Solved through the QR factor of Z rather than the normal equations.
  out.w_r = qr.solve(fs.r);
  out.w_p = qr.solve(fs.z_next);
  return out;
}

template <typename Scalar>
struct RolloutWeights {
  Vector<Scalar> closed;             // (I - gamma W_p)^{-1} w_r
  std::optional<Vector<Scalar>> series;  // sum_{t < horizon} gamma^t W_p^t w_r
  double spectral_radius = 0;
  std::string warning;
};

/// Rollout weights w_mb in closed form and as a truncated series. The series
/// is omitted (with a warning) when rho(gamma W_p) >= 1.
template <typename Scalar>
RolloutWeights<Scalar> model_based_value_weights(const Vector<Scalar>& w_r, const Matrix<Scalar>& w_p,
                                                 Scalar gamma, int horizon) {
  const Eigen::Index d = w_r.size();
  if (w_p.rows() != d || w_p.cols() != d) throw LabError("rollout weights: W_p must be d x d");
  RolloutWeights<Scalar> out;
  const Matrix<Scalar> system = Matrix<Scalar>::Identity(d, d) - gamma * w_p;
  const double cond = condition_number(system);
  if (!(cond <= kConditionGate)) {
    std::ostringstream os;
    os << "rollout weights: cond(I - gamma W_p) = " << cond << " exceeds " << kConditionGate;
    throw ConditioningError(os.str(), cond);
  }
  out.closed = system.fullPivLu().solve(w_r);
  out.spectral_radius = spectral_radius(Matrix<Scalar>(gamma * w_p));
  if (out.spectral_radius < 1) {
    Vector<Scalar> term = w_r, total = Vector<Scalar>::Zero(d);
    for (int t = 0; t < horizon; ++t) {
      total += term;
      term = gamma * (w_p * term);
    }
    out.series = std::move(total);
  } else {
    std::ostringstream os;
    os << "rollout series diverges: rho(gamma W_p) = " << out.spectral_radius;
    out.warning = os.str();
  }
  return out;
}

template <typename Scalar>
struct EquivalenceReport {
  Vector<Scalar> w_closed;
  Vector<Scalar> w_iterative;
  Vector<Scalar> w_model_based;
  double iterative_deviation = 0;    // ||w_iter - w_closed||_inf
  double model_based_deviation = 0;  // ||w_closed - w_mb||_inf
  long long iterations = 0;
  double step_size = 0;
  double tolerance = 1e-8;
  ModelWeights<Scalar> model;
  bool passed = false;
};

/// Solves the TD fixed point twice (closed form, iteration) and the model
/// rollout weights once, and compares all three.
template <typename Scalar>
EquivalenceReport<Scalar> verify_theorem_equivalence(const FeatureSet<Scalar>& fs, Scalar gamma,
                                                     double tolerance = 1e-8) {
  EquivalenceReport<Scalar> rep;
  rep.tolerance = tolerance;
  rep.model = model_based_weights(fs);
  auto closed = td_fixed_point_closed_form(fs, gamma);
  auto rollout = model_based_value_weights<Scalar>(rep.model.w_r, rep.model.w_p, gamma, 0);

  auto [a, b] = td_system(fs, gamma);
  auto alpha = contracting_step_size(a);
  if (!alpha) {
    Eigen::EigenSolver<Matrix<Scalar>> es(a, false);
    double min_re = es.eigenvalues().real().minCoeff();
    std::ostringstream os;
    os << "td iteration: A has an eigenvalue with real part " << min_re
       << " <= 0, no step size contracts";
    throw DivergenceError(os.str(), 1.0);
  }
  const Matrix<Scalar> step = Matrix<Scalar>::Identity(a.rows(), a.cols()) - *alpha * a;
  const double rho = spectral_radius(step);
  // Stop once the remaining geometric tail is far below the tolerance.
  const Scalar tol = std::max<Scalar>(Scalar(1e-3 * tolerance * (1 - rho)), Scalar(1e-14));
  auto iterative = td_fixed_point_iterative(fs, gamma, *alpha, 50'000'000, tol);

  rep.w_closed = closed.w;
  rep.w_iterative = iterative.w;
  rep.w_model_based = rollout.closed;
  rep.iterations = iterative.iterations;
  rep.step_size = static_cast<double>(*alpha);
  rep.iterative_deviation = static_cast<double>((iterative.w - closed.w).cwiseAbs().maxCoeff());
  rep.model_based_deviation = static_cast<double>((closed.w - rollout.closed).cwiseAbs().maxCoeff());
  rep.passed = rep.iterative_deviation <= tolerance && rep.model_based_deviation <= tolerance;
  return rep;
}

template <typename Scalar>
struct ValueErrorReport {
  Vector<Scalar> value_error;  // Z w - Q^pi per (s, a)
  double max_abs_error = 0;
  double bound = 0;
  double reward_model_error = 0;    // max |Z w_r - r|
  double dynamics_model_error = 0;  // max_(s,a) sum_l |(Z W_p - Z')_(s,a),l|
  double max_weight = 0;            // max_i |w_i|
  bool within_bound = false;
};

/// Exact value error of the linear solution and the model-accuracy bound
///   (max|Z w_r - r| + max_i|w_i| * max_(s,a) sum_l |Z W_p - Z'|) / (1 - gamma).
template <typename Scalar>
ValueErrorReport<Scalar> value_error_and_bound(const TabularMdp<Scalar>& mdp,
                                               const Matrix<Scalar>& policy,
                                               const FeatureSet<Scalar>& fs, const Vector<Scalar>& w,
                                               const ModelWeights<Scalar>& model,
                                               double slack = 1e-9) {
  ValueErrorReport<Scalar> rep;
  const Vector<Scalar> q_pi = exact_policy_value(mdp, policy);
  rep.value_error = fs.z * w - q_pi;
  rep.max_abs_error = static_cast<double>(rep.value_error.cwiseAbs().maxCoeff());
  rep.reward_model_error = static_cast<double>((fs.z * model.w_r - fs.r).cwiseAbs().maxCoeff());
  rep.dynamics_model_error =
      static_cast<double>((fs.z * model.w_p - fs.z_next).cwiseAbs().rowwise().sum().maxCoeff());
  rep.max_weight = static_cast<double>(w.cwiseAbs().maxCoeff());
  rep.bound = (rep.reward_model_error + rep.max_weight * rep.dynamics_model_error) /
              (1.0 - static_cast<double>(mdp.gamma));
  rep.within_bound = rep.max_abs_error <= rep.bound + slack;
  return rep;
}

/// Standard-normal features, redrawn until Z has full column rank.
template <typename Scalar, typename Rng>
Matrix<Scalar> random_features(int rows, int dim, Rng& rng, int max_draws = 100) {
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  for (int draw = 0; draw < max_draws; ++draw) {
    Matrix<Scalar> z(rows, dim);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
    if (Eigen::ColPivHouseholderQR<Matrix<Scalar>>(z).rank() == dim) return z;
  }
  throw RankError("random features: no full-rank draw", 0, dim);
}

}  // namespace uld::lab
