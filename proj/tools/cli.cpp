#include "cli.hpp"

#include "uld/agent/agent.hpp"
#include "uld/agent/trainer.hpp"
#include "uld/envs/env.hpp"
#include "uld/lab/runner.hpp"
#include "uld/repr/checkpoint.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace uld::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

std::string number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

// ------------------------------------------------------------------ train

int cmd_train(const std::string& config_path, const std::map<std::string, std::string>& overrides,
              std::ostream& out) {
  agent::RunConfig config;
  if (!config_path.empty()) load_config_file(config_path, config);
  for (const auto& [key, value] : overrides) agent::set_field(config, key, value);
  config.validate();

  const fs::path dir = run_directory(config);
  fs::create_directories(dir);
  agent::RunConfig resolved = config;
  resolved.out_dir = dir.string();
  write_text(dir / "config.txt", config_snapshot(resolved));

  out << "run " << dir.string() << ": env " << config.env << ", seed " << config.seed << ", "
      << config.t_total << " steps\n";
  agent::TrainingHooks hooks;
  hooks.on_record = [&out](const nlohmann::json& r) {
    out << "t=" << r["t"].get<long long>() << " J_eval=" << number(r["J_eval"].get<double>()) << '\n';
    out.flush();
  };
  const agent::RunResult result = agent::training_loop(config, dir, hooks);
  out << "done: " << result.steps << " steps, " << result.updates << " updates, best J_eval "
      << number(result.best_return) << (result.stopped_early ? " (stopped at target)" : "") << '\n';
  return kOk;
}

// ------------------------------------------------------------------ eval

int cmd_eval(const fs::path& checkpoint, const std::string& env_name, int episodes,
             const std::optional<std::uint64_t>& seed, std::ostream& out, std::ostream& err) {
  if (episodes < 1) throw agent::ConfigError("episodes", "must be >= 1");
  const repr::Checkpoint ck = repr::read_checkpoint(checkpoint);
  const std::string name = env_name.empty() ? ck.manifest.at("env_spec").at("name").get<std::string>() : env_name;
  auto env = envs::make_env(name);
  const envs::EnvSpec& spec = env->spec();

  std::optional<agent::Agent> loaded;
  try {
    loaded.emplace(agent::Agent::load(checkpoint, &spec));
  } catch (const repr::CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  std::uint64_t seed_base = 0;
  if (seed)
    seed_base = *seed;
  else if (ck.manifest.contains("extra") && ck.manifest["extra"].contains("seed"))
    seed_base = agent::evaluation_seed(ck.manifest["extra"]["seed"].get<std::uint64_t>());

  const agent::EvalResult r = agent::evaluate(*loaded, *env, episodes, seed_base);
  out << "J_eval " << number(r.mean) << '\n' << "returns";
  for (double g : r.returns) out << ' ' << number(g);
  out << '\n';

  nlohmann::json rec{{"checkpoint", checkpoint.filename().string()},
                     {"env", name},
                     {"episodes", episodes},
                     {"seed_base", seed_base},
                     {"J_eval", r.mean},
                     {"returns", r.returns}};
  std::ofstream log(checkpoint.parent_path().empty() ? fs::path("eval.jsonl") : checkpoint.parent_path() / "eval.jsonl",
                    std::ios::app);
  log << rec.dump() << '\n';
  return kOk;
}

// ------------------------------------------------------------------ lab

int cmd_lab(const lab::LabOptions& options, const fs::path& out_dir, std::ostream& out) {
  if (options.trials < 1) throw agent::ConfigError("trials", "must be >= 1");
  const lab::LabSummary s = lab::run_lab(options);

  fs::create_directories(out_dir);
  std::ofstream trials(out_dir / "trials.jsonl", std::ios::trunc);
  double max_ve = 0.0;
  for (const auto& t : s.trials) {
    trials << lab::to_json(t).dump() << '\n';
    if (!t.skipped) max_ve = std::max(max_ve, t.max_value_error);
  }
  for (const auto& a : s.abstractions) trials << lab::to_json(a).dump() << '\n';

  int abs_passed = 0, flagged = 0;
  for (const auto& a : s.abstractions) {
    if (a.expect_violation)
      flagged += a.passed ? 1 : 0;
    else
      abs_passed += a.passed ? 1 : 0;
  }
  const int eq_total = static_cast<int>(s.trials.size());
  int eq_passed = 0;
  for (const auto& t : s.trials) eq_passed += t.passed ? 1 : 0;

  nlohmann::json report{{"trials", options.trials},
                        {"seed", options.seed},
                        {"passed", s.passed},
                        {"failed", s.failed},
                        {"skipped", s.skipped},
                        {"conditioning_retries", s.total_retries},
                        {"max_value_error", max_ve},
                        {"all_passed", s.all_passed()}};
  write_text(out_dir / "report.json", report.dump(2) + "\n");

  out << "equivalence/bound: " << eq_passed << '/' << eq_total << " pass";
  if (s.skipped) out << ", " << s.skipped << " skipped (conditioning)";
  out << ", " << s.total_retries << " conditioning retries\n";
  out << "max |VE| " << number(max_ve) << '\n';
  out << "abstraction: " << abs_passed << " pass, violating instance " << (flagged ? "flagged" : "NOT flagged")
      << '\n';
  for (const auto& t : s.trials)
    if (t.skipped) out << "trial " << t.trial << ": " << t.diagnostic << '\n';
  out << "report " << (out_dir / "report.json").string() << '\n';
  return s.all_passed() ? kOk : kAssertionFailure;
}

// ------------------------------------------------------------------ envs

int cmd_envs_list(bool json, std::ostream& out) {
  const nlohmann::json catalog = envs::env_catalog();
  if (json) {
    out << catalog.dump(2) << '\n';
    return kOk;
  }
  out << std::left << std::setw(14) << "name" << std::setw(6) << "obs" << std::setw(14) << "actions"
      << std::setw(9) << "horizon" << "tabular\n";
  for (const auto& e : catalog) {
    const std::string acts = e["action_type"].get<std::string>() + "/" + std::to_string(e["action_dim"].get<int>());
    out << std::setw(14) << e["name"].get<std::string>() << std::setw(6) << e["observation_dim"].get<int>()
        << std::setw(14) << acts << std::setw(9) << e["horizon"].get<int>() << (e["tabular"].get<bool>() ? "yes" : "no")
        << '\n';
  }
  return kOk;
}

}  // namespace

fs::path output_root() {
  const char* v = std::getenv(kOutputRootVar);
  return (v && *v) ? fs::path(v) : fs::path("runs");
}

void load_config_file(const fs::path& path, agent::RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw agent::ConfigError("config", "cannot read " + path.string());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw agent::ConfigError("config", path.string() + ":" + std::to_string(n) + ": expected key=value");
    agent::set_field(config, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

std::string config_snapshot(const agent::RunConfig& config) {
  std::string s;
  for (const auto& f : agent::config_fields()) s += f.key + "=" + f.get(config) + "\n";
  return s;
}

fs::path run_directory(const agent::RunConfig& config) {
  if (!config.out_dir.empty()) return config.out_dir;
  return output_root() / (config.env + "_seed" + std::to_string(config.seed));
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-dynamics RL agent: training, evaluation and linear-theory lab"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run the training loop");
  std::string config_path;
  train->add_option("--config", config_path, "key=value config file (flags override it)");
  std::map<std::string, std::string> flag_values;
  for (const auto& f : agent::config_fields()) train->add_option(flag_name(f.key), flag_values[f.key], f.help);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint, eval_env;
  int episodes = 10;
  std::optional<std::uint64_t> eval_seed;
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--env", eval_env, "environment (default: the one stored in the checkpoint)");
  eval->add_option("--episodes", episodes, "evaluation episodes");
  eval->add_option("--seed", eval_seed, "first episode seed (default: the run's evaluation seed)");

  // lab
  auto* labc = app.add_subcommand("lab", "check the linear-theory results on generated instances");
  lab::LabOptions lab_opts;
  bool tabular = false, rank_deficient = false;
  std::string lab_out;
  labc->add_option("--trials", lab_opts.trials, "instances");
  labc->add_option("--seed", lab_opts.seed, "generator seed");
  labc->add_option("--max-states", lab_opts.max_states, "largest state count");
  labc->add_option("--max-actions", lab_opts.max_actions, "largest action count");
  labc->add_option("--max-dim", lab_opts.max_dim, "largest feature dimension");
  labc->add_option("--horizon", lab_opts.abstraction_horizon, "abstraction rollout horizon");
  labc->add_flag("--tabular", tabular, "use tabular (identity) features");
  labc->add_flag("--rank-deficient", rank_deficient, "force rank-deficient features");
  labc->add_option("--out-dir", lab_out, "report directory (default: <output root>/lab_seed<seed>)");

  // envs list
  auto* envs_cmd = app.add_subcommand("envs", "environment catalog");
  envs_cmd->require_subcommand(1);
  auto* list = envs_cmd->add_subcommand("list", "list environments");
  bool json = false;
  list->add_flag("--json", json, "print the catalog as JSON");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (train->parsed()) {
      std::map<std::string, std::string> overrides;
      for (const auto& f : agent::config_fields())
        if (train->get_option(flag_name(f.key))->count() > 0) overrides[f.key] = flag_values[f.key];
      return cmd_train(config_path, overrides, out);
    }
    if (eval->parsed()) return cmd_eval(checkpoint, eval_env, episodes, eval_seed, out, err);
    if (labc->parsed()) {
      if (tabular && rank_deficient) throw agent::ConfigError("features", "--tabular and --rank-deficient conflict");
      lab_opts.features = tabular          ? lab::FeatureMode::kTabular
                          : rank_deficient ? lab::FeatureMode::kRankDeficient
                                           : lab::FeatureMode::kRandom;
      const fs::path dir = lab_out.empty() ? output_root() / ("lab_seed" + std::to_string(lab_opts.seed)) : fs::path(lab_out);
      return cmd_lab(lab_opts, dir, out);
    }
    if (list->parsed()) return cmd_envs_list(json, out);
  } catch (const agent::ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const agent::TrainingFault& e) {
    err << "training fault: " << e.what() << '\n';
    return kRuntimeFault;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFault;
  }
  return kConfigError;
}

}  // namespace uld::cli
