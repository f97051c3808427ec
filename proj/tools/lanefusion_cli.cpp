// lanefusion: train, evaluate and compare lane-change agents.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lanefusion/checkpoint.hpp"
#include "lanefusion/config.hpp"
#include "lanefusion/fusion.hpp"
#include "lanefusion/harness.hpp"
#include "lanefusion/plot.hpp"

namespace lf = lanefusion;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRunFailure = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> schemes;
  std::string advisor;
  int episodes = 0;
  std::string out;
  std::string bridge_cmd;
  bool dump_trajectory = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Experiment config (JSON)");
  cmd->add_option("--seed", o.seeds, "Seed(s); overrides the config's seed list");
  cmd->add_option("--scheme", o.schemes,
                  "d3qn+advisor, ddqn+advisor, dqn+advisor, d3qn-no-advisor or all")
      ->delimiter(',');
  cmd->add_option("--advisor", o.advisor, "rule | bridge | replay | none")
      ->check(CLI::IsMember({"rule", "bridge", "replay", "none"}));
  cmd->add_option("--episodes", o.episodes, "Episodes (training, or evaluation for eval)");
  cmd->add_option("--out", o.out, "Output directory (falls back to $LANEFUSION_OUT)");
  cmd->add_option("--bridge-cmd", o.bridge_cmd, "Command line of the external advisor process");
  cmd->add_flag("--dump-trajectory", o.dump_trajectory, "Write trajectory.jsonl per run");
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

lf::ExperimentConfig resolve_config(const CommonOptions& o) {
  lf::ExperimentConfig cfg;
  bool explicit_out = false;
  if (!o.config_path.empty()) {
    cfg = lf::load_config(o.config_path);
    std::ifstream in(o.config_path);
    explicit_out = nlohmann::json::parse(in).contains("output_dir");
  }
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (o.episodes > 0) cfg.episodes = o.episodes;
  if (!o.advisor.empty()) cfg.advisor.kind = *lf::advisor_kind_from_name(o.advisor);
  if (!o.bridge_cmd.empty()) cfg.advisor.bridge_cmd = split_words(o.bridge_cmd);
  if (o.dump_trajectory) cfg.trajectory_dump = true;
  if (!o.out.empty()) {
    cfg.output_dir = o.out;
  } else if (!explicit_out) {
    if (const char* env = std::getenv("LANEFUSION_OUT"); env && *env) cfg.output_dir = env;
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw lf::ConfigError("", e.what());
  }
  return cfg;
}

std::vector<lf::Scheme> resolve_schemes(const CommonOptions& o, lf::Scheme fallback) {
  if (o.schemes.empty()) return {fallback};
  std::vector<lf::Scheme> out;
  for (const auto& name : o.schemes) {
    if (name == "all") return {lf::kAllSchemes.begin(), lf::kAllSchemes.end()};
    auto s = lf::scheme_from_name(name);
    if (!s) throw UsageError("unknown scheme: " + name);
    out.push_back(*s);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

int cmd_train(const CommonOptions& o) {
  const auto cfg = resolve_config(o);
  int status = kExitOk;
  for (auto scheme : resolve_schemes(o, lf::Scheme::D3qnAdvisor)) {
    for (auto seed : cfg.seeds) {
      const auto run = lf::train_run(cfg, scheme, seed);
      double tail = 0.0;
      const std::size_t n = std::min<std::size_t>(run.rows.size(), cfg.final_window);
      for (std::size_t i = run.rows.size() - n; i < run.rows.size(); ++i) tail += run.rows[i].return_env;
      std::cout << lf::scheme_name(scheme) << " seed " << seed << ": "
                << (run.ok ? "ok" : "FAILED (" + run.error + ")") << ", episodes "
                << run.rows.size() << ", final-window mean return_env "
                << fmt(n ? tail / static_cast<double>(n) : 0.0) << ", dir " << run.dir.string()
                << '\n';
      if (!run.ok) status = kExitRunFailure;
    }
  }
  return status;
}

int cmd_eval(const CommonOptions& o, const std::string& run_dir) {
  auto cfg = resolve_config(o);
  const auto record = lf::load_run_record(run_dir);
  if (o.config_path.empty()) {
    cfg = lf::config_from_json(record.config);
    if (o.episodes > 0) cfg.eval_episodes = o.episodes;
  } else if (o.episodes > 0) {
    cfg.eval_episodes = o.episodes;
  }
  const auto ckpt = lf::load_agent_checkpoint(std::filesystem::path(run_dir) / "checkpoint.json");
  const lf::Agent agent = lf::restore_agent(ckpt);
  const std::uint64_t seed = o.seeds.empty() ? record.seed : o.seeds.front();
  const auto ev = lf::evaluate_policy(agent, cfg.sim, cfg.eval_episodes, seed);
  std::cout << "episodes " << ev.returns.size() << ", mean return_env " << fmt(ev.mean)
            << ", std " << fmt(ev.stddev) << ", collisions " << ev.collisions << '\n';
  return kExitOk;
}

int cmd_sweep(const CommonOptions& o, const std::vector<int>& counts, const std::string& mode) {
  auto cfg = resolve_config(o);
  if (!counts.empty()) cfg.sweep.counts = counts;
  if (!mode.empty()) cfg.sweep.mode = mode == "transfer" ? lf::SweepMode::Transfer : lf::SweepMode::Retrain;
  const auto cells =
      lf::sweep_hv_counts(cfg, cfg.sweep.counts, resolve_schemes(o, lf::Scheme::D3qnAdvisor), cfg.seeds);
  bool failed = false;
  for (const auto& c : cells) {
    std::cout << lf::scheme_name(c.scheme) << " count " << c.count << ": mean " << fmt(c.mean)
              << " std " << fmt(c.stddev) << (c.ok ? "" : " FAILED: " + c.error) << '\n';
    failed = failed || !c.ok;
  }
  const auto& counts_used = cfg.sweep.counts;
  auto has = [&](int c) { return std::find(counts_used.begin(), counts_used.end(), c) != counts_used.end(); };
  if (has(35) && counts_used.front() < 35 && counts_used.back() > 35) {
    for (auto scheme : resolve_schemes(o, lf::Scheme::D3qnAdvisor)) {
      const auto verdict =
          lf::sweep_shape_check(cells, scheme, counts_used.front(), 35, counts_used.back());
      if (verdict != lf::ShapeVerdict::Peaked)
        std::cerr << "warning: " << lf::scheme_name(scheme)
                  << " does not peak at 35 vehicles in this sweep\n";
    }
  }
  return failed ? kExitRunFailure : kExitOk;
}

int cmd_compare(const CommonOptions& o, std::vector<std::string> run_dirs,
                const std::string& runs_root, int final_window, int min_runs) {
  auto cfg = resolve_config(o);
  if (!runs_root.empty()) {
    for (const auto& entry : std::filesystem::recursive_directory_iterator(runs_root))
      if (entry.path().filename() == "manifest.json") run_dirs.push_back(entry.path().parent_path().string());
    std::sort(run_dirs.begin(), run_dirs.end());
  }
  if (run_dirs.empty()) throw UsageError("compare: no run directories given");
  std::vector<lf::RunRecord> runs;
  for (const auto& d : run_dirs) runs.push_back(lf::load_run_record(d));
  const int window = final_window > 0 ? final_window : cfg.final_window;
  const auto report = lf::compare_schemes(runs, window, min_runs);
  const std::filesystem::path out = std::filesystem::path(cfg.output_dir) / "compare";
  lf::write_comparison(report, runs, out, cfg.smoothing_window);
  for (const auto& s : report.schemes)
    std::cout << lf::scheme_name(s.scheme) << ": mean final return_env " << fmt(s.mean) << " over "
              << s.seed_means.size() << " run(s)\n";
  for (const auto& g : report.gains)
    std::cout << lf::scheme_name(g.a) << " vs " << lf::scheme_name(g.b) << ": " << fmt(g.gain_percent)
              << "%\n";
  std::cout << "report written to " << out.string() << '\n';
  return kExitOk;
}

int cmd_plot(const std::vector<std::string>& metrics, const std::string& column, int window,
             const std::string& output, const std::string& title) {
  std::vector<std::vector<double>> series;
  std::vector<std::string> labels;
  for (const auto& path : metrics) {
    const auto rows = lf::read_metrics_csv(path);
    std::vector<double> ys;
    for (const auto& r : rows) {
      if (column == "return_env") ys.push_back(r.return_env);
      else if (column == "return_shaped") ys.push_back(r.return_shaped);
      else if (column == "steps") ys.push_back(r.steps);
      else if (column == "loss_mean") ys.push_back(r.loss_mean.value_or(0.0));
      else if (column == "consistency_rate") ys.push_back(r.consistency_rate.value_or(0.0));
      else throw UsageError("plot: unsupported column " + column);
    }
    series.push_back(std::move(ys));
    labels.push_back(std::filesystem::path(path).parent_path().string());
  }
  lf::PlotOptions opts;
  opts.title = title.empty() ? column : title;
  opts.y_label = column;
  opts.smoothing_window = window;
  lf::render_plot(series, labels, output, opts);
  std::cout << "wrote " << output << '\n';
  return kExitOk;
}

int cmd_export_scenes(const CommonOptions& o, int count, const std::string& output) {
  const auto cfg = resolve_config(o);
  const std::uint64_t seed = o.seeds.empty() ? 0 : o.seeds.front();
  std::ofstream out(output, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + output);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> steps_dist(0, 80);
  std::uniform_int_distribution<int> action_dist(0, lf::kActionCount - 1);
  for (int i = 0; i < count; ++i) {
    lf::SceneState state = lf::reset(cfg.sim, lf::episode_seed(seed, static_cast<std::uint64_t>(i)));
    const int k = steps_dist(rng);
    for (int s = 0; s < k; ++s) {
      auto r = lf::step(state, action_dist(rng), cfg.sim);
      if (r.done) break;
      state = std::move(r.next_state);
    }
    const auto obs = lf::observe(state, cfg.sim);
    const auto rec = lf::rule_recommendation(obs, cfg.sim);
    nlohmann::json line = {{"id", i},
                           {"scene_text", lf::scene_to_text(state, cfg.sim)},
                           {"obs", obs.values},
                           {"expected", lf::action_name(rec.action)},
                           {"confidence", rec.confidence}};
    out << line.dump() << '\n';
  }
  std::cout << "exported " << count << " scenes to " << output << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane-change decision agents with advisor fusion"};
  app.require_subcommand(1);

  CommonOptions train_opts, eval_opts, sweep_opts, compare_opts, export_opts;

  auto* train = app.add_subcommand("train", "Train one or more schemes");
  add_common(train, train_opts);

  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a trained run");
  add_common(eval, eval_opts);
  std::string run_dir;
  eval->add_option("--run", run_dir, "Run directory holding manifest.json and checkpoint.json")->required();

  auto* sweep = app.add_subcommand("sweep", "Human-vehicle-count sweep");
  add_common(sweep, sweep_opts);
  std::vector<int> counts;
  std::string sweep_mode;
  sweep->add_option("--counts", counts, "Vehicle counts")->delimiter(',');
  sweep->add_option("--sweep-mode", sweep_mode, "retrain | transfer")
      ->check(CLI::IsMember({"retrain", "transfer"}));

  auto* compare = app.add_subcommand("compare", "Compare finished runs");
  add_common(compare, compare_opts);
  std::vector<std::string> run_dirs;
  std::string runs_root;
  int final_window = 0;
  int min_runs = 2;
  compare->add_option("runs", run_dirs, "Run directories");
  compare->add_option("--runs-root", runs_root, "Collect every run below this directory");
  compare->add_option("--final-window", final_window, "Trailing episodes averaged per run");
  compare->add_option("--min-runs", min_runs, "Minimum runs per scheme");

  auto* plot = app.add_subcommand("plot", "Plot metrics.csv columns as SVG");
  std::vector<std::string> metrics;
  std::string column = "return_env";
  int window = 50;
  std::string plot_out = "plot.svg";
  std::string title;
  plot->add_option("metrics", metrics, "metrics.csv files")->required();
  plot->add_option("--column", column, "Column to plot");
  plot->add_option("--window", window, "Smoothing window")->check(CLI::PositiveNumber);
  plot->add_option("--out", plot_out, "Output SVG path");
  plot->add_option("--title", title, "Chart title");

  auto* export_scenes = app.add_subcommand("export-scenes", "Dump random scenes with rule-advisor answers");
  add_common(export_scenes, export_opts);
  int scene_count = 1000;
  std::string scenes_out = "scenes.jsonl";
  export_scenes->add_option("--count", scene_count, "Number of scenes")->check(CLI::PositiveNumber);
  export_scenes->add_option("--file", scenes_out, "Output JSON-lines path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_opts);
    if (*eval) return cmd_eval(eval_opts, run_dir);
    if (*sweep) return cmd_sweep(sweep_opts, counts, sweep_mode);
    if (*compare) return cmd_compare(compare_opts, run_dirs, runs_root, final_window, min_runs);
    if (*plot) return cmd_plot(metrics, column, window, plot_out, title);
    if (*export_scenes) return cmd_export_scenes(export_opts, scene_count, scenes_out);
  } catch (const lf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRunFailure;
  }
  return kExitUsage;
}
