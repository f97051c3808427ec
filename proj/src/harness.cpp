#include "lanefusion/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lanefusion/checkpoint.hpp"
#include "lanefusion/plot.hpp"

namespace lanefusion {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kInitStream = 0x1;
constexpr std::uint64_t kTrainStream = 0x2;
constexpr std::uint64_t kEvalStream = 0x3;

NetRng stream_rng(std::uint64_t seed, std::uint64_t stream) {
  return NetRng(splitmix64(splitmix64(seed) ^ splitmix64(stream << 32)));
}

std::string fmt_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

Agent make_agent(const ExperimentConfig& config, Scheme scheme, std::uint64_t seed) {
  AgentConfig ac = config.agent;
  ac.kind = scheme_agent_kind(scheme);
  NetRng init = stream_rng(seed, kInitStream);
  return Agent(ac, init);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

nlohmann::json step_record_json(const StepRecord& r) {
  return {{"episode", r.episode},
          {"step", r.step},
          {"action", action_name(r.action)},
          {"ego_pos", r.next_state.ego.longitudinal_pos},
          {"ego_lane", r.next_state.ego.lane},
          {"ego_speed", r.next_state.ego.speed},
          {"safety", r.reward.safety},
          {"efficiency_speed", r.reward.efficiency_speed},
          {"efficiency_lane_change", r.reward.efficiency_lane_change},
          {"comfort", r.reward.comfort},
          {"env_total", r.reward.env_total},
          {"shaping_bonus", r.reward.shaping_bonus},
          {"aborted", r.aborted},
          {"done", r.done},
          {"done_reason", done_reason_name(r.done_reason)}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::optional<double> parse_optional(const std::string& field) {
  if (field.empty()) return std::nullopt;
  return std::stod(field);
}

}  // namespace

std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::D3qnAdvisor: return "d3qn+advisor";
    case Scheme::DdqnAdvisor: return "ddqn+advisor";
    case Scheme::DqnAdvisor: return "dqn+advisor";
    case Scheme::D3qnNoAdvisor: return "d3qn-no-advisor";
  }
  return "d3qn+advisor";
}

std::optional<Scheme> scheme_from_name(std::string_view name) {
  for (Scheme s : kAllSchemes)
    if (scheme_name(s) == name || scheme_dir_name(s) == name) return s;
  return std::nullopt;
}

AgentKind scheme_agent_kind(Scheme s) {
  switch (s) {
    case Scheme::DdqnAdvisor: return AgentKind::DDQN;
    case Scheme::DqnAdvisor: return AgentKind::DQN;
    default: return AgentKind::D3QN;
  }
}

bool scheme_uses_advisor(Scheme s) { return s != Scheme::D3qnNoAdvisor; }

std::string scheme_dir_name(Scheme s) {
  std::string name(scheme_name(s));
  std::replace(name.begin(), name.end(), '+', '_');
  return name;
}

std::string metrics_row_to_csv(const MetricsRow& r) {
  std::string line = std::to_string(r.episode) + ',' + fmt_fixed(r.return_env) + ',' +
                     fmt_fixed(r.return_shaped) + ',' + std::to_string(r.steps) + ',' +
                     std::to_string(r.collided) + ',' + std::to_string(r.lane_changes) + ',' +
                     std::to_string(r.aborted_changes) + ',';
  if (r.consistency_rate) line += fmt_fixed(*r.consistency_rate);
  line += ',' + fmt_general(r.epsilon_or_noise) + ',';
  if (r.loss_mean) line += fmt_general(*r.loss_mean);
  return line;
}

MetricsRow metrics_row_from_csv(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      f.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  f.push_back(cur);
  if (f.size() != 10) throw std::runtime_error("metrics row: expected 10 fields: " + line);
  MetricsRow r;
  r.episode = std::stoi(f[0]);
  r.return_env = std::stod(f[1]);
  r.return_shaped = std::stod(f[2]);
  r.steps = std::stoi(f[3]);
  r.collided = std::stoi(f[4]);
  r.lane_changes = std::stoi(f[5]);
  r.aborted_changes = std::stoi(f[6]);
  r.consistency_rate = parse_optional(f[7]);
  r.epsilon_or_noise = std::stod(f[8]);
  r.loss_mean = parse_optional(f[9]);
  return r;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::string text(kMetricsHeader);
  text += '\n';
  for (const auto& r : rows) text += metrics_row_to_csv(r) + '\n';
  write_text(path, text);
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw std::runtime_error("metrics file has an unexpected header: " + path.string());
  std::vector<MetricsRow> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(metrics_row_from_csv(line));
  return rows;
}

std::uint64_t episode_seed(std::uint64_t run_seed, std::uint64_t episode) {
  return splitmix64(splitmix64(run_seed) ^ splitmix64(episode + 0x5EED));
}

TrainingSession::TrainingSession(const ExperimentConfig& config, Scheme scheme,
                                 std::uint64_t seed, SessionOptions options)
    : config_(config),
      scheme_(scheme),
      seed_(seed),
      options_(std::move(options)),
      rng_(stream_rng(seed, kTrainStream)),
      agent_(make_agent(config, scheme, seed)),
      buffer_(static_cast<std::size_t>(config.agent.buffer_capacity)) {
  config_.validate();
  fusion_active_ = scheme_uses_advisor(scheme) && !options_.compile_out_fusion;
  if (fusion_active_) {
    advisor_ = make_advisor(config_.advisor, config_.sim);
  } else {
    advisor_ = std::make_unique<NullAdvisor>();
  }
  if (fusion_active_ && !options_.output_dir.empty()) {
    feedback_ = std::make_unique<FeedbackLog>(options_.output_dir / "feedback.jsonl");
  } else {
    feedback_ = std::make_unique<FeedbackLog>();
  }
  if (config_.trajectory_dump && !options_.output_dir.empty()) {
    trajectory_ = std::make_unique<std::ofstream>(options_.output_dir / "trajectory.jsonl",
                                                  std::ios::trunc);
    if (!*trajectory_) throw std::runtime_error("cannot open trajectory dump");
  }
}

TrainingSession::~TrainingSession() = default;

MetricsRow TrainingSession::run_episode() {
  return fusion_active_ ? run_episode_impl<true>() : run_episode_impl<false>();
}

template <bool kFusion>
MetricsRow TrainingSession::run_episode_impl() {
  const SimConfig& sim = config_.sim;
  const FusionConfig& fusion = config_.advisor;
  const double fraction = static_cast<double>(episode_) / static_cast<double>(config_.episodes);

  MetricsRow row;
  row.episode = episode_;
  row.epsilon_or_noise = agent_.uses_noise() ? agent_.mean_noise_scale() : agent_.epsilon(fraction);

  SceneState state = reset(sim, episode_seed(seed_, static_cast<std::uint64_t>(episode_)));
  Observation obs = observe(state, sim);
  ConsistencyStats episode_stats;
  double loss_sum = 0.0;
  int loss_count = 0;

  for (;;) {
    std::optional<AdvisorRecommendation> rec;
    std::optional<QBias> bias;
    if constexpr (kFusion) {
      rec = advisor_->recommend(state, obs);
      if (fusion.mode == FusionMode::QBias && rec && rec->confidence >= fusion.confidence_threshold)
        bias = QBias{rec->action, fusion.q_bias_beta};
    }
    const Action action = select_action(agent_, obs, fraction, rng_, bias);
    StepResult result = step(state, action, sim);

    ConsistencyOutcome outcome = ConsistencyOutcome::NoAdvice;
    double bonus = 0.0;
    if constexpr (kFusion) {
      outcome = compare_actions(action, rec, fusion.confidence_threshold);
      episode_stats.record(outcome);
      totals_.record(outcome);
      if (fusion.mode == FusionMode::Shaping) bonus = consistency_bonus(outcome, fusion.delta_a);
      if (outcome == ConsistencyOutcome::Disagree) {
        feedback_->emit(FeedbackSample{obs, scene_to_text(state, sim), action, rec->action,
                                       episode_, state.step, std::nullopt});
      } else if (outcome == ConsistencyOutcome::Agree) {
        agreements_.note_agreement(bucket_of(obs, sim));
      }
    }
    result.reward.shaping_bonus = bonus;

    const Observation next_obs = observe(result.next_state, sim);
    const double reward_env = result.reward.env_total;
    const double reward_shaped = reward_env + bonus;
    buffer_.store(Transition{obs, action_index(action), reward_env, reward_shaped, next_obs,
                             result.done});
    total_bonus_ += bonus;
    ++env_steps_;
    if (env_steps_ % config_.agent.train_every == 0) {
      if (auto loss = train_step(agent_, buffer_, rng_)) {
        loss_sum += *loss;
        ++loss_count;
      }
    }

    row.return_env += reward_env;
    row.return_shaped += reward_shaped;
    row.steps += 1;
    row.lane_changes += result.lane_changed ? 1 : 0;
    row.aborted_changes += result.aborted_lane_change ? 1 : 0;
    if (result.done_reason == DoneReason::Collision) row.collided = 1;

    if (options_.step_observer || trajectory_) {
      StepRecord rec_out{episode_,
                         result.next_state.step,
                         action,
                         result.next_state,
                         result.reward,
                         reward_shaped,
                         outcome,
                         rec ? std::optional<Action>(rec->action) : std::nullopt,
                         result.done,
                         result.done_reason,
                         result.lane_changed,
                         result.aborted_lane_change};
      if (options_.step_observer) options_.step_observer(rec_out);
      if (trajectory_) *trajectory_ << step_record_json(rec_out).dump() << '\n';
    }

    state = std::move(result.next_state);
    obs = next_obs;
    if (result.done) break;
  }

  if constexpr (kFusion) row.consistency_rate = episode_stats.rate();
  if (loss_count > 0) row.loss_mean = loss_sum / loss_count;
  end_of_episode(row.return_env);
  ++episode_;
  return row;
}

void TrainingSession::end_of_episode(double return_env) {
  if (!fusion_active_) return;
  feedback_->close_episode(return_env);
  agreements_.close_episode(return_env);
  const auto& samples = feedback_->samples();
  for (; feedback_forwarded_ < samples.size(); ++feedback_forwarded_)
    advisor_->feedback(samples[feedback_forwarded_]);

  const int every = config_.advisor.adapt_every;
  if (every > 0 && (episode_ + 1) % every == 0) {
    if (auto* rule = dynamic_cast<RuleBasedAdvisor*>(advisor_.get()))
      adapt_advisor(*rule, samples, agreements_, config_.advisor.adapt_threshold);
  }
}

EvalSummary evaluate_policy(const Agent& agent, const SimConfig& sim, int episodes,
                            std::uint64_t seed) {
  EvalSummary out;
  for (int e = 0; e < episodes; ++e) {
    SceneState state = reset(sim, episode_seed(splitmix64(seed ^ (kEvalStream << 40)),
                                               static_cast<std::uint64_t>(e)));
    double ret = 0.0;
    for (;;) {
      const Action a = greedy_action(agent, observe(state, sim));
      StepResult r = step(state, a, sim);
      ret += r.reward.env_total;
      if (r.done_reason == DoneReason::Collision) ++out.collisions;
      state = std::move(r.next_state);
      if (r.done) break;
    }
    out.returns.push_back(ret);
  }
  out.mean = mean_of(out.returns);
  out.stddev = stddev_of(out.returns);
  return out;
}

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("sha1: context allocation failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1 computation failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xF];
  }
  return hex;
}

namespace {

struct TrainedRun {
  RunArtifacts artifacts;
  std::optional<Agent> agent;
};

TrainedRun train_run_impl(const ExperimentConfig& config, Scheme scheme, std::uint64_t seed) {
  TrainedRun out;
  RunArtifacts& art = out.artifacts;
  art.scheme = scheme;
  art.seed = seed;
  art.dir = std::filesystem::path(config.output_dir) / scheme_dir_name(scheme) / std::to_string(seed);
  std::filesystem::create_directories(art.dir);

  std::vector<std::string> eval_lines = {"episode,mean_return_env,std_return_env,collisions"};
  TrainingSession session(config, scheme, seed, SessionOptions{art.dir, false, {}});
  try {
    for (int e = 0; e < config.episodes; ++e) {
      art.rows.push_back(session.run_episode());
      if (config.eval_every > 0 && (e + 1) % config.eval_every == 0) {
        const auto ev = evaluate_policy(session.agent(), config.sim, config.eval_probe_episodes,
                                        seed + static_cast<std::uint64_t>(e));
        eval_lines.push_back(std::to_string(e + 1) + ',' + fmt_fixed(ev.mean) + ',' +
                             fmt_fixed(ev.stddev) + ',' + std::to_string(ev.collisions));
      }
    }
    art.ok = true;
  } catch (const TrainingDivergence& e) {
    art.ok = false;
    art.error = std::string("training divergence: ") + e.what();
  }

  write_metrics_csv(art.dir / "metrics.csv", art.rows);
  std::string eval_text;
  for (const auto& l : eval_lines) eval_text += l + '\n';
  write_text(art.dir / "eval.csv", eval_text);
  if (art.ok)
    save_agent_checkpoint(art.dir / "checkpoint.json",
                          make_checkpoint(session.agent(), session.buffer(),
                                          session.episodes_done()));

  art.agreements = session.totals().agreements;
  art.disagreements = session.totals().disagreements;
  art.feedback_lines = session.feedback_log().lines_written();

  const nlohmann::json config_json = config_to_json(config);
  nlohmann::json manifest = {
      {"format", "lanefusion.run"},
      {"version", 1},
      {"scheme", scheme_name(scheme)},
      {"seed", seed},
      {"config", config_json},
      {"config_sha1", git_blob_sha1(config_json.dump())},
      {"metrics_sha1", git_blob_sha1(read_text(art.dir / "metrics.csv"))},
      {"status", art.ok ? "ok" : "failed"},
      {"error", art.error},
      {"episodes_completed", static_cast<int>(art.rows.size())},
      {"agreements", art.agreements},
      {"disagreements", art.disagreements},
      {"feedback_lines", art.feedback_lines}};
  write_text(art.dir / "manifest.json", manifest.dump(2) + '\n');
  if (art.ok) out.agent.emplace(session.agent());
  return out;
}

}  // namespace

RunArtifacts train_run(const ExperimentConfig& config, Scheme scheme, std::uint64_t seed) {
  config.validate();
  return train_run_impl(config, scheme, seed).artifacts;
}

std::vector<SweepCell> sweep_hv_counts(const ExperimentConfig& config,
                                       const std::vector<int>& counts,
                                       const std::vector<Scheme>& schemes,
                                       const std::vector<std::uint64_t>& seeds) {
  config.validate();
  if (counts.empty() || schemes.empty() || seeds.empty())
    throw std::invalid_argument("sweep: counts, schemes and seeds must be non-empty");
  const std::filesystem::path root = std::filesystem::path(config.output_dir) / "sweep";
  std::filesystem::create_directories(root);

  std::vector<SweepCell> cells;
  for (Scheme scheme : schemes) {
    // Transfer mode trains once per seed at the configured count.
    std::map<std::uint64_t, std::optional<Agent>> transferred;
    std::map<std::uint64_t, std::string> transfer_errors;
    if (config.sweep.mode == SweepMode::Transfer) {
      ExperimentConfig cfg = config;
      cfg.output_dir = (root / "transfer").string();
      for (auto seed : seeds) {
        try {
          auto run = train_run_impl(cfg, scheme, seed);
          if (run.artifacts.ok) {
            transferred[seed] = std::move(run.agent);
          } else {
            transfer_errors[seed] = run.artifacts.error;
          }
        } catch (const std::exception& e) {
          transfer_errors[seed] = e.what();
        }
      }
    }

    for (int count : counts) {
      SweepCell cell;
      cell.scheme = scheme;
      cell.count = count;
      std::vector<double> pooled;
      ExperimentConfig cfg = config;
      cfg.sim.human_count = count;
      cfg.output_dir = (root / ("hv_" + std::to_string(count))).string();
      for (auto seed : seeds) {
        try {
          std::optional<Agent> agent;
          if (config.sweep.mode == SweepMode::Retrain) {
            auto run = train_run_impl(cfg, scheme, seed);
            if (!run.artifacts.ok) throw std::runtime_error(run.artifacts.error);
            agent = std::move(run.agent);
          } else {
            if (transfer_errors.contains(seed)) throw std::runtime_error(transfer_errors[seed]);
            agent = transferred.at(seed);
          }
          const auto ev = evaluate_policy(*agent, cfg.sim, config.eval_episodes, seed);
          pooled.insert(pooled.end(), ev.returns.begin(), ev.returns.end());
          cell.collisions += ev.collisions;
        } catch (const std::exception& e) {
          cell.ok = false;
          cell.error = e.what();
          std::cerr << "[lanefusion] warning: sweep cell " << scheme_name(scheme) << " count "
                    << count << " seed " << seed << " failed: " << e.what() << '\n';
        }
      }
      cell.episodes = static_cast<int>(pooled.size());
      cell.mean = mean_of(pooled);
      cell.stddev = stddev_of(pooled);
      cells.push_back(cell);
    }
  }

  std::string csv = "scheme,count,mean_return_env,std_return_env,episodes,collisions,status\n";
  for (const auto& c : cells)
    csv += std::string(scheme_name(c.scheme)) + ',' + std::to_string(c.count) + ',' +
           fmt_fixed(c.mean) + ',' + fmt_fixed(c.stddev) + ',' + std::to_string(c.episodes) + ',' +
           std::to_string(c.collisions) + ',' + (c.ok ? "ok" : "failed") + '\n';
  write_text(root / "sweep.csv", csv);

  PlotOptions opts;
  opts.x_label = "human-driven vehicles";
  opts.y_label = "mean evaluation return";
  opts.x_values.assign(counts.begin(), counts.end());
  std::vector<std::vector<double>> all_series;
  std::vector<std::string> all_labels;
  for (Scheme scheme : schemes) {
    std::vector<double> ys;
    for (const auto& c : cells)
      if (c.scheme == scheme) ys.push_back(c.mean);
    opts.title = "Average reward vs vehicle count: " + std::string(scheme_name(scheme));
    render_plot({ys}, {std::string(scheme_name(scheme))},
                root / ("sweep_" + scheme_dir_name(scheme) + ".svg"), opts);
    all_series.push_back(std::move(ys));
    all_labels.emplace_back(scheme_name(scheme));
  }
  opts.title = "Average reward vs vehicle count";
  render_plot(all_series, all_labels, root / "sweep.svg", opts);
  return cells;
}

ShapeVerdict sweep_shape_check(const std::vector<SweepCell>& cells, Scheme scheme, int low_count,
                               int peak_count, int high_count) {
  auto find = [&](int count) -> const SweepCell& {
    for (const auto& c : cells)
      if (c.scheme == scheme && c.count == count) return c;
    throw std::invalid_argument("sweep_shape_check: missing cell for count " +
                                std::to_string(count));
  };
  const auto& low = find(low_count);
  const auto& peak = find(peak_count);
  const auto& high = find(high_count);
  if (high.mean > peak.mean + 0.2 * std::abs(peak.mean)) return ShapeVerdict::Defect;
  if (peak.mean > low.mean && peak.mean > high.mean) return ShapeVerdict::Peaked;
  return ShapeVerdict::NotPeaked;
}

RunRecord load_run_record(const std::filesystem::path& run_dir) {
  const auto manifest = nlohmann::json::parse(read_text(run_dir / "manifest.json"));
  RunRecord r;
  const auto scheme = scheme_from_name(manifest.at("scheme").get<std::string>());
  if (!scheme) throw std::runtime_error("unknown scheme in " + (run_dir / "manifest.json").string());
  r.scheme = *scheme;
  r.seed = manifest.at("seed").get<std::uint64_t>();
  r.config = manifest.at("config");
  r.rows = read_metrics_csv(run_dir / "metrics.csv");
  return r;
}

double percent_gain(double a, double b) {
  if (b == 0.0) return a == 0.0 ? 0.0 : std::copysign(INFINITY, a);
  return (a - b) / std::abs(b) * 100.0;
}

ComparisonReport compare_schemes(const std::vector<RunRecord>& runs, int final_window,
                                 int min_runs) {
  if (final_window < 1) throw std::invalid_argument("compare: final_window must be >= 1");
  if (runs.empty()) throw std::invalid_argument("compare: no runs given");
  auto comparable = [](nlohmann::json c) {
    c.erase("seeds");
    c.erase("output_dir");
    return c;
  };
  const auto reference = comparable(runs.front().config);
  for (const auto& r : runs)
    if (comparable(r.config) != reference)
      throw std::invalid_argument("compare: runs were produced with different configs");

  ComparisonReport report;
  report.final_window = final_window;
  for (Scheme s : kAllSchemes) {
    SchemeSummary summary;
    summary.scheme = s;
    for (const auto& r : runs) {
      if (r.scheme != s) continue;
      if (r.rows.empty()) throw std::invalid_argument("compare: run without metrics rows");
      const std::size_t n = std::min(r.rows.size(), static_cast<std::size_t>(final_window));
      double sum = 0.0;
      for (std::size_t i = r.rows.size() - n; i < r.rows.size(); ++i) sum += r.rows[i].return_env;
      summary.seed_means.push_back(sum / static_cast<double>(n));
    }
    if (summary.seed_means.empty()) continue;
    if (static_cast<int>(summary.seed_means.size()) < min_runs)
      throw std::invalid_argument("compare: scheme " + std::string(scheme_name(s)) + " has " +
                                  std::to_string(summary.seed_means.size()) +
                                  " run(s), need at least " + std::to_string(min_runs));
    summary.mean = mean_of(summary.seed_means);
    report.schemes.push_back(summary);
  }
  for (const auto& a : report.schemes)
    for (const auto& b : report.schemes)
      if (a.scheme != b.scheme)
        report.gains.push_back({a.scheme, b.scheme, percent_gain(a.mean, b.mean)});
  return report;
}

void write_comparison(const ComparisonReport& report, const std::vector<RunRecord>& runs,
                      const std::filesystem::path& dir, int smoothing_window) {
  std::filesystem::create_directories(dir);
  std::string md = "# Scheme comparison\n\nMean return_env over the final " +
                   std::to_string(report.final_window) + " episodes, averaged across runs.\n\n";
  md += "| scheme | runs | mean return_env |\n|---|---|---|\n";
  std::string csv = "scheme,runs,mean_final_return_env\n";
  for (const auto& s : report.schemes) {
    md += "| " + std::string(scheme_name(s.scheme)) + " | " + std::to_string(s.seed_means.size()) +
          " | " + fmt_fixed(s.mean) + " |\n";
    csv += std::string(scheme_name(s.scheme)) + ',' + std::to_string(s.seed_means.size()) + ',' +
           fmt_fixed(s.mean) + '\n';
  }
  md += "\n## Pairwise gains\n\n| scheme | over | gain % |\n|---|---|---|\n";
  std::string gains_csv = "scheme,over,gain_percent\n";
  for (const auto& g : report.gains) {
    md += "| " + std::string(scheme_name(g.a)) + " | " + std::string(scheme_name(g.b)) + " | " +
          fmt_fixed(g.gain_percent) + " |\n";
    gains_csv += std::string(scheme_name(g.a)) + ',' + std::string(scheme_name(g.b)) + ',' +
                 fmt_fixed(g.gain_percent) + '\n';
  }
  write_text(dir / "report.md", md);
  write_text(dir / "report.csv", csv);
  write_text(dir / "gains.csv", gains_csv);

  std::vector<std::vector<double>> curves;
  std::vector<std::string> labels;
  for (const auto& s : report.schemes) {
    std::size_t len = SIZE_MAX;
    std::vector<const RunRecord*> mine;
    for (const auto& r : runs)
      if (r.scheme == s.scheme) {
        mine.push_back(&r);
        len = std::min(len, r.rows.size());
      }
    std::vector<double> curve(len, 0.0);
    for (const auto* r : mine)
      for (std::size_t i = 0; i < len; ++i) curve[i] += r->rows[i].return_env / mine.size();
    curves.push_back(std::move(curve));
    labels.emplace_back(scheme_name(s.scheme));
  }
  PlotOptions opts;
  opts.title = "Convergence (smoothed return_env)";
  opts.y_label = "return_env";
  opts.smoothing_window = smoothing_window;
  render_plot(curves, labels, dir / "convergence.svg", opts);
}

}  // namespace lanefusion
