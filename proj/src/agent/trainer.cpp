#include "uld/agent/trainer.hpp"

#include <chrono>
#include <fstream>
#include <limits>

namespace uld::agent {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream tags for derive_seed.
constexpr std::uint64_t kAgentStream = 1, kLoopStream = 2, kEpisodeStream = 3, kEvalStream = 4;

envs::Action random_action(const envs::EnvSpec& spec, std::mt19937_64& rng) {
  if (spec.discrete()) {
    std::uniform_int_distribution<int> pick(0, spec.action_dim - 1);
    return envs::one_hot(pick(rng), spec.action_dim);
  }
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  envs::Action a(spec.action_dim);
  for (int i = 0; i < spec.action_dim; ++i) a[i] = u(rng);
  return a;
}

struct LossAccumulator {
  long long n = 0;
  double rep = 0, reward = 0, dynamics = 0, terminal = 0, value = 0, policy = 0, td = 0;

  void add(const TrainMetrics& m) {
    ++n;
    rep += m.representation_loss;
    reward += m.reward_loss;
    dynamics += m.dynamics_loss;
    terminal += m.terminal_loss;
    value += m.value_loss;
    policy += m.policy_loss;
    td += m.mean_td_error;
  }

  void write(nlohmann::json& j) const {
    auto put = [&](const char* key, double sum) {
      if (n == 0)
        j[key] = nullptr;
      else
        j[key] = sum / static_cast<double>(n);
    };
    put("loss_representation", rep);
    put("loss_reward", reward);
    put("loss_dynamics", dynamics);
    put("loss_terminal", terminal);
    put("loss_value", value);
    put("loss_policy", policy);
    put("mean_td_error", td);
  }
};

void append_line(std::ofstream& out, const nlohmann::json& j) {
  if (!out) return;
  out << j.dump() << '\n';
  out.flush();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix(splitmix(splitmix(seed) ^ stream) ^ index);
}

std::uint64_t evaluation_seed(std::uint64_t run_seed) { return derive_seed(run_seed, kEvalStream); }

EvalResult evaluate(const Policy& policy, envs::Environment& env, int episodes, std::uint64_t seed_base) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  EvalResult out;
  for (int e = 0; e < episodes; ++e) {
    envs::Observation obs = env.reset(seed_base + static_cast<std::uint64_t>(e));
    double total = 0.0;
    for (;;) {
      const envs::StepResult r = env.step(policy(obs));
      total += r.reward;
      if (r.done || r.truncated) break;
      obs = r.observation;
    }
    out.returns.push_back(total);
    out.mean += total;
  }
  out.mean /= episodes;
  return out;
}

EvalResult evaluate(const Agent& agent, envs::Environment& env, int episodes, std::uint64_t seed_base) {
  return evaluate([&agent](const envs::Observation& o) { return agent.evaluation_action(o); }, env, episodes,
                  seed_base);
}

RunResult training_loop(const RunConfig& config, const std::filesystem::path& run_dir, const TrainingHooks& hooks) {
  config.validate();
  const AgentConfig& ac = config.agent;
  auto env = envs::make_env(config.env);
  auto eval_env = envs::make_env(config.env);
  const envs::EnvSpec& spec = env->spec();

  Agent agent(ac, spec, derive_seed(config.seed, kAgentStream));
  ReplayBuffer replay({ac.replay_capacity, ac.priority_alpha, ac.priority_eps, ac.warmup}, spec.observation_dim,
                      spec.action_dim);
  std::mt19937_64 rng(derive_seed(config.seed, kLoopStream));
  const std::uint64_t eval_base = evaluation_seed(config.seed);

  std::ofstream metrics, timing;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    metrics.open(run_dir / "metrics.jsonl", std::ios::trunc);
    timing.open(run_dir / "timing.jsonl", std::ios::trunc);
    if (!metrics || !timing) throw std::runtime_error("cannot write run files in " + run_dir.string());
  }
  const auto started = std::chrono::steady_clock::now();

  RunResult result;
  result.best_return = -std::numeric_limits<double>::infinity();
  LossAccumulator acc;
  std::uint64_t episode = 0;
  int episode_step = 0;
  envs::Observation obs = env->reset(derive_seed(config.seed, kEpisodeStream, episode));

  const auto save = [&](const std::string& name, long long t) {
    if (run_dir.empty()) return;
    agent.save(run_dir / name, {{"t", t}, {"episodes", episode}, {"env", config.env}, {"seed", config.seed}});
  };

  long long t = 0;
  try {
    for (;; ++t) {
      if (t % ac.f_eval == 0) {
        const EvalResult ev = evaluate(agent, *eval_env, ac.n_eval, eval_base);
        nlohmann::json rec;
        rec["t"] = t;
        rec["J_eval"] = ev.mean;
        acc.write(rec);
        rec["reward_scale"] = agent.reward_scale();
        rec["target_reward_scale"] = agent.target_reward_scale();
        rec["updates"] = agent.updates();
        rec["episodes"] = episode;
        rec["scale_clamps"] = agent.scale_clamps();
        append_line(metrics, rec);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        append_line(timing, {{"t", t}, {"wall_clock", secs}});
        result.records.push_back(rec);
        result.last_return = ev.mean;
        result.best_return = std::max(result.best_return, ev.mean);
        if (hooks.on_record) hooks.on_record(rec);
        acc = {};
        if (config.stop_at_return && ev.mean >= *config.stop_at_return) {
          result.stopped_early = t < config.t_total;
          break;
        }
      }
      if (t >= config.t_total) break;
      if (config.checkpoint_every > 0 && t > 0 && t % config.checkpoint_every == 0)
        save("checkpoint_" + std::to_string(t) + ".ckpt", t);

      const envs::Action action =
          replay.ready() ? agent.select_action(obs, ActionMode::kExplore) : random_action(spec, rng);
      const envs::StepResult step = env->step(action);
      replay.add({obs, action, step.reward, step.done, step.observation, episode, episode_step});
      if (step.done) agent.observe_terminal();
      if (step.done || step.truncated) {
        ++episode;
        episode_step = 0;
        obs = env->reset(derive_seed(config.seed, kEpisodeStream, episode));
      } else {
        obs = step.observation;
        ++episode_step;
      }

      if (replay.ready()) {
        const repr::SegmentBatch batch = replay.sample(ac.batch_size, ac.segment_length(), rng);
        const TrainMetrics m = agent.train_step(batch);
        replay.update_priorities(batch.indices, m.td_errors);
        acc.add(m);
        if (hooks.after_update) hooks.after_update(agent, t, m);
      }
    }
  } catch (const TrainingFault& fault) {
    if (!run_dir.empty()) {
      std::ofstream f(run_dir / "fault.json", std::ios::trunc);
      f << nlohmann::json{{"t", t}, {"error", fault.what()}, {"updates", agent.updates()}}.dump(2) << '\n';
      try {
        save("fault.ckpt", t);
      } catch (const std::exception&) {
        // The fault itself is what matters; a failed dump must not mask it.
      }
    }
    throw;
  }

  result.steps = t;
  result.updates = agent.updates();
  save("final.ckpt", t);
  return result;
}

}  // namespace uld::agent
