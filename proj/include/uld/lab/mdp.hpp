#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace uld::lab {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class LabError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Explicit finite MDP. State-action pairs are flattened as s * num_actions + a.
template <typename Scalar>
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  Matrix<Scalar> transitions;  // (S*A) x S, row (s,a) is p(.|s,a)
  Vector<Scalar> rewards;      // (S*A), expected reward R(s,a)
  Scalar gamma = Scalar(0.9);

  int num_pairs() const { return num_states * num_actions; }
  int pair(int s, int a) const { return s * num_actions + a; }

  void validate() const {
    if (num_states < 1 || num_actions < 1) throw LabError("mdp: empty state or action set");
    if (transitions.rows() != num_pairs() || transitions.cols() != num_states ||
        rewards.size() != num_pairs())
      throw LabError("mdp: table sizes do not match state/action counts");
    if (!(gamma >= 0 && gamma < 1)) throw LabError("mdp: discount must lie in [0, 1)");
    if (transitions.minCoeff() < 0) throw LabError("mdp: negative transition probability");
    for (int i = 0; i < num_pairs(); ++i)
      if (std::abs(transitions.row(i).sum() - Scalar(1)) > Scalar(1e-12))
        throw LabError("mdp: transition row " + std::to_string(i) + " does not sum to one");
  }
};

/// pi(a|s) as an S x A row-stochastic table.
template <typename Scalar>
void validate_policy(const TabularMdp<Scalar>& mdp, const Matrix<Scalar>& policy) {
  if (policy.rows() != mdp.num_states || policy.cols() != mdp.num_actions)
    throw LabError("policy: table shape does not match the MDP");
  if (policy.minCoeff() < 0) throw LabError("policy: negative probability");
  for (int s = 0; s < mdp.num_states; ++s)
    if (std::abs(policy.row(s).sum() - Scalar(1)) > Scalar(1e-12))
      throw LabError("policy: row " + std::to_string(s) + " does not sum to one");
}

/// State-action transition operator P_pi[(s,a), (s',a')] = p(s'|s,a) pi(a'|s').
template <typename Scalar>
Matrix<Scalar> policy_transition_operator(const TabularMdp<Scalar>& mdp,
                                          const Matrix<Scalar>& policy) {
  const int n = mdp.num_pairs();
  Matrix<Scalar> op(n, n);
  for (int i = 0; i < n; ++i)
    for (int s2 = 0; s2 < mdp.num_states; ++s2)
      for (int a2 = 0; a2 < mdp.num_actions; ++a2)
        op(i, mdp.pair(s2, a2)) = mdp.transitions(i, s2) * policy(s2, a2);
  return op;
}

/// Q^pi = (I - gamma P_pi)^{-1} r.
template <typename Scalar>
Vector<Scalar> exact_policy_value(const TabularMdp<Scalar>& mdp, const Matrix<Scalar>& policy) {
  mdp.validate();
  validate_policy(mdp, policy);
  const int n = mdp.num_pairs();
  Matrix<Scalar> system =
      Matrix<Scalar>::Identity(n, n) - mdp.gamma * policy_transition_operator(mdp, policy);
  Eigen::FullPivLU<Matrix<Scalar>> lu(system);
  if (!lu.isInvertible()) throw LabError("exact_policy_value: singular Bellman system");
  return lu.solve(mdp.rewards);
}

/// Q* by value iteration until the sup-norm update falls below tol.
template <typename Scalar>
Vector<Scalar> optimal_q(const TabularMdp<Scalar>& mdp, Scalar tol = Scalar(1e-13),
                         int max_iters = 1000000) {
  mdp.validate();
  Vector<Scalar> q = Vector<Scalar>::Zero(mdp.num_pairs());
  for (int it = 0; it < max_iters; ++it) {
    Vector<Scalar> v(mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s)
      v(s) = q.segment(s * mdp.num_actions, mdp.num_actions).maxCoeff();
    Vector<Scalar> next = mdp.rewards + mdp.gamma * mdp.transitions * v;
    const Scalar delta = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (delta < tol) break;
  }
  return q;
}

/// Deterministic greedy policy table from a Q vector (ties to lowest index).
template <typename Scalar>
Matrix<Scalar> greedy_policy(const TabularMdp<Scalar>& mdp, const Vector<Scalar>& q) {
  Matrix<Scalar> pi = Matrix<Scalar>::Zero(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s) {
    Eigen::Index best;
    q.segment(s * mdp.num_actions, mdp.num_actions).maxCoeff(&best);
    pi(s, best) = Scalar(1);
  }
  return pi;
}

/// Dirichlet(1, ..., 1) draw: normalized unit exponentials.
template <typename Scalar, typename Rng>
Vector<Scalar> dirichlet_ones(int n, Rng& rng) {
  std::exponential_distribution<Scalar> expo(Scalar(1));
  Vector<Scalar> v(n);
  for (int i = 0; i < n; ++i) v(i) = expo(rng);
  return v / v.sum();
}

/// Random MDP: Dirichlet(1) transition rows, rewards uniform in [-1, 1].
template <typename Scalar, typename Rng>
TabularMdp<Scalar> random_mdp(int num_states, int num_actions, Scalar gamma, Rng& rng) {
  TabularMdp<Scalar> mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.gamma = gamma;
  mdp.transitions.resize(mdp.num_pairs(), num_states);
  mdp.rewards.resize(mdp.num_pairs());
  std::uniform_real_distribution<Scalar> reward(Scalar(-1), Scalar(1));
  for (int i = 0; i < mdp.num_pairs(); ++i) {
    mdp.transitions.row(i) = dirichlet_ones<Scalar>(num_states, rng).transpose();
    mdp.rewards(i) = reward(rng);
  }
  return mdp;
}

template <typename Scalar, typename Rng>
Matrix<Scalar> random_policy(int num_states, int num_actions, Rng& rng) {
  Matrix<Scalar> pi(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) pi.row(s) = dirichlet_ones<Scalar>(num_actions, rng).transpose();
  return pi;
}

}  // namespace uld::lab
