#include "srlc/app/commands.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "srlc/common/error.hpp"
#include "srlc/ppo/ppo.hpp"

namespace srlc::app {

namespace {

namespace fs = std::filesystem;

constexpr const char* kResolvedConfig = "config.ini";
// Every variant and seed is evaluated on the same episode realizations.
constexpr std::uint64_t kEvalEpisodeSeed = 0x5eed;

fs::path seed_dir(const fs::path& run_dir, std::uint64_t seed) {
  return run_dir / ("seed_" + std::to_string(seed));
}

unsigned worker_count(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SRLC_THREADS")) {
    const int cap = std::atoi(env);
    if (cap < 1) throw ConfigError(std::string("SRLC_THREADS must be a positive integer, got '") + env + "'");
    n = std::min(n, static_cast<unsigned>(cap));
  }
  return std::min<unsigned>(n, static_cast<unsigned>(std::max<std::size_t>(jobs, 1)));
}

ExperimentConfig load_run_config(const fs::path& run_dir) {
  const fs::path p = run_dir / kResolvedConfig;
  if (!fs::exists(p)) throw ConfigError("no " + std::string(kResolvedConfig) + " in run directory '" + run_dir.string() + "'");
  return load_config(p);
}

// "seed_7/final.srlc" -> 7; 0 when the parent is not a seed directory.
std::uint64_t seed_of_checkpoint(const fs::path& checkpoint) {
  const std::string parent = checkpoint.parent_path().filename().string();
  if (parent.rfind("seed_", 0) == 0) {
    try {
      return std::stoull(parent.substr(5));
    } catch (const std::exception&) {
    }
  }
  return 0;
}

std::vector<std::pair<std::uint64_t, fs::path>> checkpoints_for(const ExperimentConfig& c, const fs::path& run_dir,
                                                                const std::optional<fs::path>& explicit_path) {
  if (explicit_path) return {{seed_of_checkpoint(*explicit_path), *explicit_path}};
  std::vector<std::pair<std::uint64_t, fs::path>> out;
  for (std::uint64_t s : c.run.seeds) out.emplace_back(s, seed_dir(run_dir, s) / "final.srlc");
  return out;
}

}  // namespace

policy::Policy load_matching_checkpoint(const fs::path& path, const ExperimentConfig& config) {
  if (!fs::exists(path)) throw ConfigError("checkpoint '" + path.string() + "' does not exist");
  policy::Policy p = ppo::load_checkpoint(path);
  if (p.variant() != config.policy.variant) {
    throw ConfigError("checkpoint '" + path.string() + "' holds a " + std::string(policy::variant_name(p.variant())) +
                      " policy but the run is configured for " +
                      std::string(policy::variant_name(config.policy.variant)));
  }
  if (!(p.dims() == config.policy.dims)) {
    throw ConfigError("checkpoint '" + path.string() + "' has policy dims that differ from the run config");
  }
  if (!(p.scaling() == config.policy.scaling)) {
    throw ConfigError("checkpoint '" + path.string() + "' has input scaling that differs from the run config");
  }
  return p;
}

fs::path cmd_train(const TrainArgs& args, std::ostream& log) {
  ExperimentConfig c = load_config(args.config);
  if (args.seeds) c.run.seeds = *args.seeds;
  if (args.steps) c.run.total_steps = *args.steps;
  if (args.seeds || args.steps) {
    c = parse_config(to_text(c));  // re-derive and re-validate
  }
  const fs::path run_dir = args.out.value_or(fs::path(c.run.output_dir));
  fs::create_directories(run_dir);
  {
    std::ofstream f(run_dir / kResolvedConfig);
    f << to_text(c);
    if (!f) throw ConfigError("cannot write '" + (run_dir / kResolvedConfig).string() + "'");
  }

  const std::unique_ptr<sim::Env> prototype = make_env(c.env);
  const std::size_t jobs = c.run.seeds.size();
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr first_error;

  auto worker = [&] {
    for (std::size_t i = next++; i < jobs; i = next++) {
      const std::uint64_t seed = c.run.seeds[i];
      try {
        ppo::TrainOptions opts;
        opts.out_dir = seed_dir(run_dir, seed);
        opts.checkpoint_every = c.run.checkpoint_every;
        opts.record_wall_time = c.run.record_wall_time;
        opts.on_round = [&, seed](const ppo::TrainRecord& r, const policy::Policy&) {
          std::lock_guard lock(log_mutex);
          char line[160];
          std::snprintf(line, sizeof line, "seed %llu step %ld mean_return %.4g policy_loss %.4g value_loss %.4g\n",
                        static_cast<unsigned long long>(seed), r.step, r.mean_return, r.policy_loss,
                        r.value_loss);
          log << line << std::flush;
          return true;
        };
        const policy::Policy init = policy::Policy::init(seed, c.policy.variant, c.policy.dims, c.policy.scaling);
        ppo::train(*prototype, init, ppo_for_seed(c, seed), opts);
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  const unsigned n = worker_count(jobs);
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);
  return run_dir;
}

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "track") return EvalMode::kTrack;
  if (s == "ablate") return EvalMode::kAblate;
  throw ConfigError("--mode must be 'track' or 'ablate', got '" + s + "'");
}

analysis::EvalReport cmd_eval(const EvalArgs& args, std::ostream& log) {
  const ExperimentConfig c = load_run_config(args.run_dir);
  const std::unique_ptr<sim::Env> env = make_env(c.env);
  const auto levels = analysis::level_grid(c.env.schedule.ref_lo, c.env.schedule.ref_hi, c.run.eval_levels);
  analysis::EvalOptions opts{std::string(policy::variant_name(c.policy.variant)), c.run.warmup, kEvalEpisodeSeed};

  analysis::EvalReport report;
  for (const auto& [seed, path] : checkpoints_for(c, args.run_dir, args.checkpoint)) {
    const policy::Policy p = load_matching_checkpoint(path, c);
    const analysis::EvalReport r = args.mode == EvalMode::kTrack
                                       ? analysis::evaluate_tracking(p, c.policy.Kp, *env, levels, seed, opts)
                                       : analysis::ablate_feedforward(p, c.policy.Kp, *env, levels, seed, opts);
    report.rows.insert(report.rows.end(), r.rows.begin(), r.rows.end());
    char line[128];
    std::snprintf(line, sizeof line, "seed %llu mean rms error %.6g\n", static_cast<unsigned long long>(seed),
                  r.mean_rms_error());
    log << line;
  }
  const fs::path out =
      args.out.value_or(args.run_dir / (args.mode == EvalMode::kTrack ? "eval.csv" : "eval_ablate.csv"));
  analysis::write_eval_csv(report, out);
  log << "wrote " << out.string() << "\n";
  return report;
}

std::vector<StatefitSeedResult> cmd_statefit(const StatefitArgs& args, std::ostream& log) {
  const ExperimentConfig c = load_run_config(args.run_dir);
  const std::unique_ptr<sim::Env> env = make_env(c.env);
  const auto levels = analysis::level_grid(c.env.schedule.ref_lo, c.env.schedule.ref_hi, c.run.statefit_levels);

  std::vector<StatefitSeedResult> out;
  for (const auto& [seed, path] : checkpoints_for(c, args.run_dir, args.checkpoint)) {
    const policy::Policy p = load_matching_checkpoint(path, c);
    analysis::PolicyController controller(p, c.policy.Kp, env->action_bounds());
    const analysis::StatePairs pairs = analysis::collect_state_pairs(
        controller, *env, levels, c.run.statefit_steps, c.run.warmup, kEvalEpisodeSeed);
    analysis::StateFitResult fit = analysis::fit_state_map(pairs.xhat, pairs.x_true);
    const fs::path dir = path.parent_path();
    analysis::write_statefit_csv(fit, dir / "statefit.csv");
    analysis::write_scatter_csv(pairs, fit, dir / "scatter.csv");
    char line[160];
    std::snprintf(line, sizeof line, "seed %llu: %lld regressors, %zu samples, mean R^2 %.4f%s\n",
                  static_cast<unsigned long long>(seed), static_cast<long long>(pairs.xhat.cols()),
                  fit.sample_count, fit.mean_r_squared(), fit.rank_deficient ? " (rank deficient)" : "");
    log << line;
    out.push_back({seed, std::move(fit)});
  }
  return out;
}

int cmd_verify(const VerifyOptions& options, std::ostream& out) {
  const std::vector<CheckResult> results = run_verify(options);
  print_report(results, out);
  const bool ok = std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
  out << (ok ? "all checks passed\n" : "verification FAILED\n");
  return ok ? kExitOk : kExitVerifyFailed;
}

}  // namespace srlc::app
