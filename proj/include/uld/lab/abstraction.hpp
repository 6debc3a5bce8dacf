#pragma once

// State abstractions: a labelling of ground states with an abstract reward
// and label-to-label transition model. When the abstract model reproduces
// ground rewards and aggregated transition mass exactly, h-step abstract
// values match ground values for every state-action pair.

#include "uld/lab/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace uld::lab {

template <typename Scalar>
struct AbstractionSpec {
  std::vector<int> state_map;  // ground state -> label
  int num_labels = 0;
  int num_actions = 0;
  Matrix<Scalar> reward;      // labels x actions
  Matrix<Scalar> transition;  // (labels * actions) x labels
  Matrix<Scalar> policy;      // labels x actions

  int pair(int label, int a) const { return label * num_actions + a; }

  void validate(const TabularMdp<Scalar>& mdp) const {
    if (static_cast<int>(state_map.size()) != mdp.num_states)
      throw LabError("abstraction: state map must cover every ground state exactly once");
    for (int label : state_map)
      if (label < 0 || label >= num_labels)
        throw LabError("abstraction: state mapped to unknown label " + std::to_string(label));
    if (num_actions != mdp.num_actions || reward.rows() != num_labels ||
        reward.cols() != num_actions || transition.rows() != num_labels * num_actions ||
        transition.cols() != num_labels || policy.rows() != num_labels ||
        policy.cols() != num_actions)
      throw LabError("abstraction: model tables have the wrong shape");
  }
};

/// Aggregated ground transition mass: sum over s' with label l' of p(s'|s,a).
template <typename Scalar>
Matrix<Scalar> aggregate_transitions(const TabularMdp<Scalar>& mdp, const std::vector<int>& state_map,
                                     int num_labels) {
  Matrix<Scalar> agg = Matrix<Scalar>::Zero(mdp.num_pairs(), num_labels);
  for (int i = 0; i < mdp.num_pairs(); ++i)
    for (int s2 = 0; s2 < mdp.num_states; ++s2) agg(i, state_map[s2]) += mdp.transitions(i, s2);
  return agg;
}

/// Builds the abstract model from the first ground state carrying each label.
template <typename Scalar>
AbstractionSpec<Scalar> induce_abstraction(const TabularMdp<Scalar>& mdp,
                                           const std::vector<int>& state_map,
                                           const Matrix<Scalar>& policy) {
  AbstractionSpec<Scalar> spec;
  spec.state_map = state_map;
  spec.num_labels = state_map.empty() ? 0 : *std::max_element(state_map.begin(), state_map.end()) + 1;
  spec.num_actions = mdp.num_actions;
  spec.reward = Matrix<Scalar>::Zero(spec.num_labels, mdp.num_actions);
  spec.transition = Matrix<Scalar>::Zero(spec.num_labels * mdp.num_actions, spec.num_labels);
  spec.policy = Matrix<Scalar>::Zero(spec.num_labels, mdp.num_actions);
  const Matrix<Scalar> agg = aggregate_transitions(mdp, state_map, spec.num_labels);
  std::vector<bool> seen(spec.num_labels, false);
  for (int s = 0; s < mdp.num_states; ++s) {
    const int label = state_map[s];
    if (seen[label]) continue;
    seen[label] = true;
    for (int a = 0; a < mdp.num_actions; ++a) {
      spec.reward(label, a) = mdp.rewards(mdp.pair(s, a));
      spec.transition.row(spec.pair(label, a)) = agg.row(mdp.pair(s, a));
    }
    spec.policy.row(label) = policy.row(s);
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw LabError("abstraction: some label has no ground state");
  return spec;
}

template <typename Scalar>
struct AbstractionConditions {
  double reward_residual = 0;      // max |R(s,a) - R^(phi(s),a)|
  double transition_residual = 0;  // max |sum_{phi(s')=l'} p(s'|s,a) - p^(l'|phi(s),a)|
  double policy_residual = 0;      // max |pi(a|s) - pi^(a|phi(s))|

  bool holds(double tol) const {
    return reward_residual <= tol && transition_residual <= tol && policy_residual <= tol;
  }
};

template <typename Scalar>
AbstractionConditions<Scalar> check_abstraction_conditions(const TabularMdp<Scalar>& mdp,
                                                           const AbstractionSpec<Scalar>& spec,
                                                           const Matrix<Scalar>& policy) {
  spec.validate(mdp);
  AbstractionConditions<Scalar> out;
  const Matrix<Scalar> agg = aggregate_transitions(mdp, spec.state_map, spec.num_labels);
  for (int s = 0; s < mdp.num_states; ++s) {
    const int label = spec.state_map[s];
    for (int a = 0; a < mdp.num_actions; ++a) {
      out.reward_residual = std::max(
          out.reward_residual,
          static_cast<double>(std::abs(mdp.rewards(mdp.pair(s, a)) - spec.reward(label, a))));
      out.transition_residual = std::max(
          out.transition_residual,
          static_cast<double>(
              (agg.row(mdp.pair(s, a)) - spec.transition.row(spec.pair(label, a))).cwiseAbs().maxCoeff()));
      out.policy_residual = std::max(
          out.policy_residual, static_cast<double>(std::abs(policy(s, a) - spec.policy(label, a))));
    }
  }
  return out;
}

/// Q^_h over abstract pairs: Q^_0 = R^, Q^_h = R^ + gamma p^ pi^ Q^_{h-1}.
template <typename Scalar>
Vector<Scalar> abstract_policy_value(const AbstractionSpec<Scalar>& spec, Scalar gamma, int horizon) {
  const int n = spec.num_labels * spec.num_actions;
  Vector<Scalar> r(n);
  for (int l = 0; l < spec.num_labels; ++l)
    for (int a = 0; a < spec.num_actions; ++a) r(spec.pair(l, a)) = spec.reward(l, a);
  Vector<Scalar> q = r;
  for (int h = 1; h <= horizon; ++h) {
    Vector<Scalar> v(spec.num_labels);
    for (int l = 0; l < spec.num_labels; ++l)
      v(l) = spec.policy.row(l).dot(q.segment(l * spec.num_actions, spec.num_actions).transpose());
    q = r + gamma * spec.transition * v;
  }
  return q;
}

/// Optimal abstract Q by value iteration on the label MDP.
template <typename Scalar>
Vector<Scalar> abstract_optimal_q(const AbstractionSpec<Scalar>& spec, Scalar gamma) {
  TabularMdp<Scalar> label_mdp;
  label_mdp.num_states = spec.num_labels;
  label_mdp.num_actions = spec.num_actions;
  label_mdp.gamma = gamma;
  label_mdp.transitions = spec.transition;
  label_mdp.rewards.resize(spec.num_labels * spec.num_actions);
  for (int l = 0; l < spec.num_labels; ++l)
    for (int a = 0; a < spec.num_actions; ++a) label_mdp.rewards(spec.pair(l, a)) = spec.reward(l, a);
  return optimal_q(label_mdp);
}

template <typename Scalar>
struct AbstractionReport {
  AbstractionConditions<Scalar> conditions;
  bool conditions_hold = false;
  std::string violation;  // which condition fails and by how much
  int horizon = 0;
  double max_value_deviation = 0;  // max |Q^_h(phi(s),a) - Q^pi(s,a)|
  double value_bound = 0;          // gamma^h r_max / (1 - gamma) + 1e-8
  double max_optimal_deviation = 0;
  bool greedy_lift_optimal = false;
  bool passed = false;
};

/// Checks the abstraction conditions; only when they hold does it compare the
/// h-step abstract values against exact ground values and verify that the
/// greedy abstract policy is optimal on the ground MDP.
template <typename Scalar>
AbstractionReport<Scalar> verify_abstraction(const TabularMdp<Scalar>& mdp,
                                             const AbstractionSpec<Scalar>& spec,
                                             const Matrix<Scalar>& policy, int horizon,
                                             double condition_tol = 1e-10) {
  AbstractionReport<Scalar> rep;
  rep.horizon = horizon;
  rep.conditions = check_abstraction_conditions(mdp, spec, policy);
  rep.conditions_hold = rep.conditions.holds(condition_tol);
  if (!rep.conditions_hold) {
    std::ostringstream os;
    if (rep.conditions.reward_residual > condition_tol)
      os << "reward condition violated by " << rep.conditions.reward_residual << "; ";
    if (rep.conditions.transition_residual > condition_tol)
      os << "transition aggregation violated by " << rep.conditions.transition_residual << "; ";
    if (rep.conditions.policy_residual > condition_tol)
      os << "policy not constant on labels, off by " << rep.conditions.policy_residual << "; ";
    rep.violation = os.str();
    return rep;
  }

  const Vector<Scalar> q_pi = exact_policy_value(mdp, policy);
  const Vector<Scalar> q_hat = abstract_policy_value(spec, mdp.gamma, horizon);
  const Vector<Scalar> q_star = optimal_q(mdp);
  const Vector<Scalar> q_hat_star = abstract_optimal_q(spec, mdp.gamma);
  const double gamma = static_cast<double>(mdp.gamma);
  const double r_max = static_cast<double>(mdp.rewards.cwiseAbs().maxCoeff());
  rep.value_bound = std::pow(gamma, horizon) * r_max / (1.0 - gamma) + 1e-8;

  rep.greedy_lift_optimal = true;
  for (int s = 0; s < mdp.num_states; ++s) {
    const int label = spec.state_map[s];
    Eigen::Index greedy;
    q_hat_star.segment(label * spec.num_actions, spec.num_actions).maxCoeff(&greedy);
    const Scalar best = q_star.segment(s * mdp.num_actions, mdp.num_actions).maxCoeff();
    if (q_star(mdp.pair(s, static_cast<int>(greedy))) < best - Scalar(1e-8))
      rep.greedy_lift_optimal = false;
    for (int a = 0; a < mdp.num_actions; ++a) {
      rep.max_value_deviation = std::max(
          rep.max_value_deviation,
          static_cast<double>(std::abs(q_hat(spec.pair(label, a)) - q_pi(mdp.pair(s, a)))));
      rep.max_optimal_deviation = std::max(
          rep.max_optimal_deviation,
          static_cast<double>(std::abs(q_hat_star(spec.pair(label, a)) - q_star(mdp.pair(s, a)))));
    }
  }
  rep.passed = rep.max_value_deviation <= rep.value_bound && rep.greedy_lift_optimal;
  return rep;
}

template <typename Scalar>
struct AbstractionInstance {
  TabularMdp<Scalar> mdp;
  std::vector<int> state_map;
  Matrix<Scalar> policy;
};

/// Ground MDP built by splitting each label of a random abstract MDP into
/// 1..max_copies states. Every copy shares the label's rewards and policy and
/// spreads the label-level transition mass over the target label's copies
/// with its own Dirichlet weights, so the abstraction conditions hold exactly.
template <typename Scalar, typename Rng>
AbstractionInstance<Scalar> make_lumpable_instance(int num_labels, int max_copies, int num_actions,
                                                   Scalar gamma, Rng& rng) {
  const auto abstract = random_mdp<Scalar>(num_labels, num_actions, gamma, rng);
  const auto abstract_policy = random_policy<Scalar>(num_labels, num_actions, rng);
  std::uniform_int_distribution<int> copies(1, max_copies);
  AbstractionInstance<Scalar> inst;
  std::vector<std::vector<int>> members(num_labels);
  for (int l = 0; l < num_labels; ++l) {
    const int k = copies(rng);
    for (int c = 0; c < k; ++c) {
      members[l].push_back(static_cast<int>(inst.state_map.size()));
      inst.state_map.push_back(l);
    }
  }
  auto& mdp = inst.mdp;
  mdp.num_states = static_cast<int>(inst.state_map.size());
  mdp.num_actions = num_actions;
  mdp.gamma = gamma;
  mdp.transitions = Matrix<Scalar>::Zero(mdp.num_pairs(), mdp.num_states);
  mdp.rewards.resize(mdp.num_pairs());
  inst.policy.resize(mdp.num_states, num_actions);
  for (int s = 0; s < mdp.num_states; ++s) {
    const int label = inst.state_map[s];
    inst.policy.row(s) = abstract_policy.row(label);
    for (int a = 0; a < num_actions; ++a) {
      mdp.rewards(mdp.pair(s, a)) = abstract.rewards(abstract.pair(label, a));
      for (int l2 = 0; l2 < num_labels; ++l2) {
        const Scalar mass = abstract.transitions(abstract.pair(label, a), l2);
        const auto split = dirichlet_ones<Scalar>(static_cast<int>(members[l2].size()), rng);
        for (std::size_t k = 0; k < members[l2].size(); ++k)
          mdp.transitions(mdp.pair(s, a), members[l2][k]) = mass * split(static_cast<Eigen::Index>(k));
      }
    }
  }
  return inst;
}

}  // namespace uld::lab
