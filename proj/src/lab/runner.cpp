#include "uld/lab/runner.hpp"

#include "uld/lab/abstraction.hpp"
#include "uld/lab/linear.hpp"

#include <array>
#include <random>

namespace uld::lab {

namespace {

std::mt19937_64 trial_rng(std::uint64_t seed, int trial, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), stream};
  return std::mt19937_64(seq);
}

constexpr std::array<double, 3> kGammas{0.5, 0.9, 0.95};

Matrix<double> draw_features(FeatureMode mode, int rows, int dim, std::mt19937_64& rng) {
  switch (mode) {
    case FeatureMode::kTabular:
      return Matrix<double>::Identity(rows, rows);
    case FeatureMode::kRankDeficient: {
      std::normal_distribution<double> normal(0.0, 1.0);
      Matrix<double> z(rows, std::max(dim, 2));
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
      z.col(z.cols() - 1) = z.col(0);
      return z;
    }
    case FeatureMode::kRandom:
      break;
  }
  return random_features<double>(rows, dim, rng);
}

}  // namespace

TrialRecord run_equivalence_trial(int trial, std::uint64_t seed, const LabOptions& options) {
  TrialRecord rec;
  rec.trial = trial;
  rec.seed = seed;
  auto rng = trial_rng(seed, trial, 1);
  std::uniform_int_distribution<int> states(2, std::max(2, options.max_states));
  std::uniform_int_distribution<int> actions(1, std::max(1, options.max_actions));
  std::uniform_int_distribution<std::size_t> gamma_pick(0, kGammas.size() - 1);

  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    rec.num_states = states(rng);
    rec.num_actions = actions(rng);
    rec.gamma = kGammas[gamma_pick(rng)];
    const int pairs = rec.num_states * rec.num_actions;
    rec.dim = options.features == FeatureMode::kTabular
                  ? pairs
                  : std::uniform_int_distribution<int>(1, std::min(options.max_dim, pairs))(rng);
    const auto mdp = random_mdp<double>(rec.num_states, rec.num_actions, rec.gamma, rng);
    const auto policy = random_policy<double>(rec.num_states, rec.num_actions, rng);
    try {
      const auto z = draw_features(options.features, pairs, rec.dim, rng);
      rec.dim = static_cast<int>(z.cols());
      const auto fs = make_features(mdp, policy, z);
      const auto eq = verify_theorem_equivalence(fs, rec.gamma, options.equivalence_tol);
      const auto ve = value_error_and_bound(mdp, policy, fs, eq.w_closed, eq.model, options.bound_slack);
      rec.iterative_deviation = eq.iterative_deviation;
      rec.model_based_deviation = eq.model_based_deviation;
      rec.td_iterations = eq.iterations;
      rec.max_value_error = ve.max_abs_error;
      rec.value_error_bound = ve.bound;
      rec.equivalence_passed = eq.passed;
      rec.bound_passed = ve.within_bound;
      rec.passed = eq.passed && ve.within_bound;
      rec.diagnostic.clear();
      return rec;
    } catch (const ConditioningError& e) {
      rec.diagnostic = e.what();
    } catch (const RankError& e) {
      rec.diagnostic = e.what();
    } catch (const DivergenceError& e) {
      rec.diagnostic = e.what();
    }
    ++rec.retries;
  }
  rec.retries = options.max_retries + 1;
  rec.skipped = true;
  return rec;
}

AbstractionRecord run_abstraction_trial(int trial, std::uint64_t seed, bool expect_violation,
                                        int horizon) {
  AbstractionRecord rec;
  rec.trial = trial;
  rec.seed = seed;
  rec.expect_violation = expect_violation;
  auto rng = trial_rng(seed, trial, expect_violation ? 3 : 2);
  rec.num_labels = std::uniform_int_distribution<int>(2, 4)(rng);
  rec.num_actions = std::uniform_int_distribution<int>(1, 3)(rng);
  rec.gamma = kGammas[std::uniform_int_distribution<std::size_t>(0, kGammas.size() - 1)(rng)];
  auto inst = make_lumpable_instance<double>(rec.num_labels, 3, rec.num_actions, rec.gamma, rng);
  if (expect_violation) {
    // Re-draw one transition row of a non-representative copy so its
    // aggregated label mass no longer matches its label's model.
    int victim = -1;
    for (int s = static_cast<int>(inst.state_map.size()) - 1; s > 0 && victim < 0; --s)
      for (int t = 0; t < s; ++t)
        if (inst.state_map[t] == inst.state_map[s]) {
          victim = s;
          break;
        }
    if (victim < 0) {
      // Every label is a singleton: merge the last two labels instead.
      inst.state_map.back() = inst.state_map[inst.state_map.size() - 2];
      victim = static_cast<int>(inst.state_map.size()) - 1;
      inst.policy.row(victim) = inst.policy.row(victim - 1);
      for (int a = 0; a < inst.mdp.num_actions; ++a)
        inst.mdp.rewards(inst.mdp.pair(victim, a)) = inst.mdp.rewards(inst.mdp.pair(victim - 1, a));
    }
    for (int a = 0; a < inst.mdp.num_actions; ++a)
      inst.mdp.transitions.row(inst.mdp.pair(victim, a)) =
          dirichlet_ones<double>(inst.mdp.num_states, rng).transpose();
  }
  rec.num_states = inst.mdp.num_states;
  const auto spec = induce_abstraction(inst.mdp, inst.state_map, inst.policy);
  rec.num_labels = spec.num_labels;
  const auto rep = verify_abstraction(inst.mdp, spec, inst.policy, horizon);
  rec.reward_residual = rep.conditions.reward_residual;
  rec.transition_residual = rep.conditions.transition_residual;
  rec.policy_residual = rep.conditions.policy_residual;
  rec.conditions_hold = rep.conditions_hold;
  rec.violation = rep.violation;
  rec.max_value_deviation = rep.max_value_deviation;
  rec.value_bound = rep.value_bound;
  rec.greedy_lift_optimal = rep.greedy_lift_optimal;
  rec.passed = expect_violation ? !rep.conditions_hold : rep.passed;
  return rec;
}

LabSummary run_lab(const LabOptions& options) {
  LabSummary summary;
  for (int t = 0; t < options.trials; ++t) {
    auto rec = run_equivalence_trial(t, options.seed, options);
    summary.total_retries += rec.retries;
    if (rec.skipped)
      ++summary.skipped;
    else if (rec.passed)
      ++summary.passed;
    else
      ++summary.failed;
    summary.trials.push_back(std::move(rec));
  }
  const int abstraction_trials = std::min(options.trials, 20);
  for (int t = 0; t <= abstraction_trials; ++t) {
    const bool violating = t == abstraction_trials;
    auto rec = run_abstraction_trial(t, options.seed, violating, options.abstraction_horizon);
    if (!rec.passed) ++summary.failed;
    summary.abstractions.push_back(std::move(rec));
  }
  return summary;
}

nlohmann::json to_json(const TrialRecord& r) {
  return {{"kind", "equivalence"},
          {"trial", r.trial},
          {"seed", r.seed},
          {"states", r.num_states},
          {"actions", r.num_actions},
          {"dim", r.dim},
          {"gamma", r.gamma},
          {"retries", r.retries},
          {"skipped", r.skipped},
          {"diagnostic", r.diagnostic},
          {"td_iterations", r.td_iterations},
          {"max_dev_iterative_vs_closed", r.iterative_deviation},
          {"max_dev_model_free_vs_model_based", r.model_based_deviation},
          {"max_value_error", r.max_value_error},
          {"value_error_bound", r.value_error_bound},
          {"equivalence_pass", r.equivalence_passed},
          {"bound_pass", r.bound_passed},
          {"pass", r.passed}};
}

nlohmann::json to_json(const AbstractionRecord& r) {
  return {{"kind", "abstraction"},
          {"trial", r.trial},
          {"seed", r.seed},
          {"expect_violation", r.expect_violation},
          {"states", r.num_states},
          {"labels", r.num_labels},
          {"actions", r.num_actions},
          {"gamma", r.gamma},
          {"reward_residual", r.reward_residual},
          {"transition_residual", r.transition_residual},
          {"policy_residual", r.policy_residual},
          {"conditions_hold", r.conditions_hold},
          {"violation", r.violation},
          {"max_value_deviation", r.max_value_deviation},
          {"value_bound", r.value_bound},
          {"greedy_lift_optimal", r.greedy_lift_optimal},
          {"pass", r.passed}};
}

}  // namespace uld::lab
