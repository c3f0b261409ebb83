#include "v2x/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "v2x/table.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace v2x {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("rename failed: " + path);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

}  // namespace

void emit_cdf(const std::vector<double>& samples, const std::string& path) {
  if (samples.empty()) throw std::invalid_argument("emit_cdf: no samples");
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());

  std::string out = "value,cumulative_probability\n";
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    out += fmt(sorted[i]);
    out += ',';
    out += fmt(static_cast<double>(i + 1) / n);
    out += '\n';
  }
  write_text_atomic(path, out);
}

double network_availability(const std::vector<double>& worst_eps_per_slot,
                            double eps_max) {
  if (worst_eps_per_slot.empty()) return 100.0;
  std::size_t ok = 0;
  for (double e : worst_eps_per_slot)
    if (e <= eps_max) ++ok;
  return 100.0 * static_cast<double>(ok) /
         static_cast<double>(worst_eps_per_slot.size());
}

const SchemeRow* ComparisonReport::find(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return &r;
  return nullptr;
}

double ComparisonReport::feature_reduction_pct() const {
  const SchemeRow* orig = find("Original-MADRL");
  const SchemeRow* simp = find("Simplified-MADRL");
  if (!orig || !simp || orig->state_features == 0) return 0.0;
  return 100.0 * (1.0 - static_cast<double>(simp->state_features) /
                            static_cast<double>(orig->state_features));
}

double ComparisonReport::parameter_reduction_pct() const {
  const SchemeRow* orig = find("Original-MADRL");
  const SchemeRow* simp = find("Simplified-MADRL");
  if (!orig || !simp || orig->parameters == 0) return 0.0;
  return 100.0 * (1.0 - static_cast<double>(simp->parameters) /
                            static_cast<double>(orig->parameters));
}

void save_ensemble(const TrainedEnsemble& ens, const std::string& dir,
                   std::uint64_t master_seed) {
  fs::create_directories(dir);
  for (std::size_t k = 0; k < ens.agents.size(); ++k)
    save_checkpoint(ens.agents[k], dir + "/agent_" + std::to_string(k) + ".ckpt",
                    master_seed);
  json meta;
  meta["n_agents"] = ens.agents.size();
  meta["l_q"] = ens.l_q;
  meta["feature_subset"] = ens.feature_subset;
  write_text_atomic(dir + "/ensemble.json", meta.dump(2) + "\n");
}

TrainedEnsemble load_ensemble(const std::string& dir) {
  const json meta = json::parse(slurp(dir + "/ensemble.json"));
  TrainedEnsemble ens;
  ens.l_q = meta.at("l_q").get<int>();
  ens.feature_subset = meta.at("feature_subset").get<std::vector<int>>();
  const std::size_t n = meta.at("n_agents").get<std::size_t>();
  for (std::size_t k = 0; k < n; ++k) {
    ens.agents.push_back(
        load_checkpoint(dir + "/agent_" + std::to_string(k) + ".ckpt"));
    ens.targets.push_back(ens.agents.back());
  }
  return ens;
}

namespace {

std::vector<std::string> channel_columns(int K, int N) {
  std::vector<std::string> cols = {"episode", "t"};
  for (int k = 0; k < K; ++k)
    for (int n = 0; n < N; ++n)
      cols.push_back("dir_" + std::to_string(k) + "_" + std::to_string(n));
  for (int ks = 0; ks < K; ++ks)
    for (int kd = 0; kd < K; ++kd)
      for (int n = 0; n < N; ++n)
        cols.push_back("x_" + std::to_string(ks) + "_" + std::to_string(kd) +
                       "_" + std::to_string(n));
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k)
      cols.push_back("vk_" + std::to_string(n) + "_" + std::to_string(k));
  for (int k = 0; k < K; ++k)
    for (int n = 0; n < N; ++n)
      cols.push_back("vb_" + std::to_string(k) + "_" + std::to_string(n));
  for (int n = 0; n < N; ++n) cols.push_back("nb_" + std::to_string(n));
  // slot report summary so a reload does not have to re-derive it
  cols.push_back("reward");
  cols.push_back("objective");
  for (int n = 0; n < N; ++n) cols.push_back("rn_" + std::to_string(n));
  for (int k = 0; k < K; ++k) cols.push_back("sinr_" + std::to_string(k));
  for (int k = 0; k < K; ++k) cols.push_back("eps_" + std::to_string(k));
  for (int k = 0; k < K; ++k) cols.push_back("tput_" + std::to_string(k));
  for (int k = 0; k < K; ++k) cols.push_back("se_" + std::to_string(k));
  return cols;
}

}  // namespace

void save_holdout(const HoldoutData& data, const std::string& dir) {
  fs::create_directories(dir);
  if (data.slots.empty())
    throw std::invalid_argument("save_holdout: no slots captured");
  const int L = data.state_dim, M = data.action_dim;
  const int K = data.slots[0].ch.K, N = data.slots[0].ch.N;

  Table rows;
  rows.columns = {"episode", "t", "agent", "action"};
  for (int l = 0; l < L; ++l) rows.columns.push_back("s" + std::to_string(l));
  for (int m = 0; m < M; ++m) rows.columns.push_back("q" + std::to_string(m));

  Table slots;
  slots.columns = channel_columns(K, N);

  std::vector<double> row;
  for (const auto& slot : data.slots) {
    for (std::size_t a = 0; a < slot.states.size(); ++a) {
      row.clear();
      row.push_back(slot.episode);
      row.push_back(slot.t);
      row.push_back(static_cast<double>(a));
      row.push_back(slot.actions[a]);
      row.insert(row.end(), slot.states[a].begin(), slot.states[a].end());
      row.insert(row.end(), slot.qvalues[a].begin(), slot.qvalues[a].end());
      rows.append_row(row);
    }
    row.clear();
    row.push_back(slot.episode);
    row.push_back(slot.t);
    const ChannelMatrix& ch = slot.ch;
    row.insert(row.end(), ch.v2v_direct.begin(), ch.v2v_direct.end());
    row.insert(row.end(), ch.v2v_cross.begin(), ch.v2v_cross.end());
    row.insert(row.end(), ch.v2n_to_v2v.begin(), ch.v2n_to_v2v.end());
    row.insert(row.end(), ch.v2v_to_bs.begin(), ch.v2v_to_bs.end());
    row.insert(row.end(), ch.v2n_to_bs.begin(), ch.v2n_to_bs.end());
    const SlotReport& rep = slot.report;
    row.push_back(rep.reward);
    row.push_back(rep.objective);
    row.insert(row.end(), rep.v2n_rate_bps.begin(), rep.v2n_rate_bps.end());
    row.insert(row.end(), rep.v2v_sinr.begin(), rep.v2v_sinr.end());
    row.insert(row.end(), rep.v2v_eps.begin(), rep.v2v_eps.end());
    row.insert(row.end(), rep.v2v_throughput_bps.begin(),
               rep.v2v_throughput_bps.end());
    row.insert(row.end(), rep.v2v_shannon_se.begin(),
               rep.v2v_shannon_se.end());
    slots.append_row(row);
  }
  save_table(rows, dir + "/holdout_rows.tab");
  save_table(slots, dir + "/holdout_slots.tab");

  json meta;
  meta["state_dim"] = L;
  meta["action_dim"] = M;
  meta["l_q"] = data.l_q;
  meta["pairs"] = K;
  meta["bands"] = N;
  std::vector<int> vmask(data.virtual_mask.begin(), data.virtual_mask.end());
  meta["virtual_mask"] = vmask;
  write_text_atomic(dir + "/holdout.json", meta.dump(2) + "\n");
}

HoldoutData load_holdout(const std::string& dir) {
  const json meta = json::parse(slurp(dir + "/holdout.json"));
  HoldoutData data;
  data.state_dim = meta.at("state_dim").get<int>();
  data.action_dim = meta.at("action_dim").get<int>();
  data.l_q = meta.at("l_q").get<int>();
  const int K = meta.at("pairs").get<int>();
  const int N = meta.at("bands").get<int>();
  for (int v : meta.at("virtual_mask").get<std::vector<int>>())
    data.virtual_mask.push_back(v != 0);

  const Table rows = load_table(dir + "/holdout_rows.tab");
  const Table slots = load_table(dir + "/holdout_slots.tab");
  const int L = data.state_dim, M = data.action_dim;

  std::size_t r = 0;
  for (std::size_t s = 0; s < slots.rows(); ++s) {
    HoldoutSlot slot;
    slot.episode = static_cast<int>(slots.at(s, 0));
    slot.t = static_cast<int>(slots.at(s, 1));
    ChannelMatrix& ch = slot.ch;
    ch.K = K;
    ch.N = N;
    std::size_t c = 2;
    auto pull = [&](std::vector<double>& dst, std::size_t count) {
      dst.resize(count);
      for (std::size_t i = 0; i < count; ++i) dst[i] = slots.at(s, c++);
    };
    pull(ch.v2v_direct, static_cast<std::size_t>(K) * N);
    pull(ch.v2v_cross, static_cast<std::size_t>(K) * K * N);
    pull(ch.v2n_to_v2v, static_cast<std::size_t>(N) * K);
    pull(ch.v2v_to_bs, static_cast<std::size_t>(K) * N);
    pull(ch.v2n_to_bs, N);
    SlotReport& rep = slot.report;
    rep.reward = slots.at(s, c++);
    rep.objective = slots.at(s, c++);
    pull(rep.v2n_rate_bps, N);
    pull(rep.v2v_sinr, K);
    pull(rep.v2v_eps, K);
    pull(rep.v2v_throughput_bps, K);
    pull(rep.v2v_shannon_se, K);
    rep.v2v_virtual = data.virtual_mask;

    while (r < rows.rows() &&
           static_cast<int>(rows.at(r, 0)) == slot.episode &&
           static_cast<int>(rows.at(r, 1)) == slot.t) {
      slot.actions.push_back(static_cast<int>(rows.at(r, 3)));
      std::vector<double> state(L), q(M);
      for (int l = 0; l < L; ++l) state[l] = rows.at(r, 4 + l);
      for (int m = 0; m < M; ++m) q[m] = rows.at(r, 4 + L + m);
      slot.states.push_back(std::move(state));
      slot.qvalues.push_back(std::move(q));
      ++r;
    }
    data.slots.push_back(std::move(slot));
  }
  return data;
}

void save_background(const BackgroundCapture& xbg, int state_dim,
                     const std::string& path) {
  Table t;
  for (int l = 0; l < state_dim; ++l)
    t.columns.push_back("s" + std::to_string(l));
  t.columns.push_back("action");
  std::vector<double> row(state_dim + 1);
  for (std::size_t i = 0; i < xbg.states.size(); ++i) {
    std::copy(xbg.states[i].begin(), xbg.states[i].end(), row.begin());
    row[state_dim] = xbg.actions[i];
    t.append_row(row);
  }
  save_table(t, path);
}

BackgroundCapture load_background(const std::string& path) {
  const Table t = load_table(path);
  BackgroundCapture xbg;
  const std::size_t L = t.cols() - 1;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    std::vector<double> s(L);
    for (std::size_t l = 0; l < L; ++l) s[l] = t.at(r, l);
    xbg.states.push_back(std::move(s));
    xbg.actions.push_back(static_cast<int>(t.at(r, L)));
  }
  return xbg;
}

namespace {

std::string train_log_csv(const std::vector<TrainLogRow>& log, int k_links) {
  std::string out = "step,episode,epsilon,lr,loss,reward";
  for (int k = 0; k < k_links; ++k) out += ",eps_" + std::to_string(k);
  out += '\n';
  for (const auto& row : log) {
    out += std::to_string(row.step);
    out += ',' + std::to_string(row.episode);
    out += ',' + fmt(row.epsilon);
    out += ',' + fmt(row.lr);
    out += ',' + fmt(row.loss);
    out += ',' + fmt(row.reward);
    for (int k = 0; k < k_links; ++k)
      out += ',' + fmt(k < static_cast<int>(row.link_eps.size())
                           ? row.link_eps[k]
                           : 0.0);
    out += '\n';
  }
  return out;
}

struct EvalSeries {
  std::vector<double> rewards;
  std::vector<double> network_sum_rate_bps;
  std::vector<double> v2n_sum_rate_bps;
  std::vector<double> worst_eps;
};

std::string eval_log_csv(const std::vector<SlotMetrics>& metrics,
                         EvalSeries& series) {
  const int k_links =
      metrics.empty() ? 0 : static_cast<int>(metrics[0].report.v2v_eps.size());
  std::string out = "episode,t,reward,objective,v2n_sum_rate_bps,"
                    "network_sum_rate_bps,worst_eps";
  for (int k = 0; k < k_links; ++k) out += ",eps_" + std::to_string(k);
  out += '\n';
  for (const auto& m : metrics) {
    const SlotReport& r = m.report;
    series.rewards.push_back(r.reward);
    series.network_sum_rate_bps.push_back(r.network_sum_rate_bps());
    series.v2n_sum_rate_bps.push_back(r.v2n_sum_rate_bps());
    series.worst_eps.push_back(r.worst_eps());
    out += std::to_string(m.episode) + ',' + std::to_string(m.t);
    out += ',' + fmt(r.reward);
    out += ',' + fmt(r.objective);
    out += ',' + fmt(r.v2n_sum_rate_bps());
    out += ',' + fmt(r.network_sum_rate_bps());
    out += ',' + fmt(r.worst_eps());
    for (int k = 0; k < k_links; ++k) out += ',' + fmt(r.v2v_eps[k]);
    out += '\n';
  }
  return out;
}

std::string availability_csv(const std::vector<double>& worst_eps,
                             const std::vector<double>& thresholds) {
  std::string out = "eps_max,availability_pct\n";
  std::vector<double> sorted = thresholds;
  std::sort(sorted.begin(), sorted.end());
  for (double t : sorted)
    out += fmt(t) + ',' + fmt(network_availability(worst_eps, t)) + '\n';
  return out;
}

void write_scheme_outputs(const ExperimentConfig& cfg,
                          const std::string& scheme,
                          const std::vector<SlotMetrics>& metrics) {
  EvalSeries series;
  const std::string csv = eval_log_csv(metrics, series);
  write_text_atomic(cfg.out_dir + "/eval_" + scheme + ".csv", csv);
  emit_cdf(series.network_sum_rate_bps,
           cfg.out_dir + "/cdf_" + scheme + ".csv");
  write_text_atomic(cfg.out_dir + "/availability_" + scheme + ".csv",
                    availability_csv(series.worst_eps, cfg.sweep_eps_max));
}

std::vector<SlotMetrics> holdout_metrics(const HoldoutData& data) {
  std::vector<SlotMetrics> metrics;
  metrics.reserve(data.slots.size());
  for (const auto& slot : data.slots)
    metrics.push_back({slot.episode, slot.t, slot.report});
  return metrics;
}

void append_timing(const ExperimentConfig& cfg, const std::string& scheme,
                   double median_update_seconds) {
  const std::string path = cfg.out_dir + "/timing_report.csv";
  std::string content;
  if (fs::exists(path)) content = slurp(path);
  if (content.empty()) content = "scheme,median_update_seconds\n";
  content += scheme + ',' + fmt(median_update_seconds) + '\n';
  write_text_atomic(path, content);
}

}  // namespace

void stage_train(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  TrainResult result =
      train(cfg.env, cfg.hyper, cfg.weights, cfg.train_episodes,
            cfg.steps_per_episode, cfg.master_seed);
  save_ensemble(result.ensemble, cfg.out_dir + "/original", cfg.master_seed);
  write_text_atomic(cfg.out_dir + "/original/train_log.csv",
                    train_log_csv(result.ensemble.log, cfg.env.num_pairs()));
  save_background(result.xbg, (cfg.env.num_pairs() + 2) * cfg.env.n_v2n,
                  cfg.out_dir + "/xbg.tab");
  append_timing(cfg, "Original-MADRL", result.ensemble.median_update_seconds);

  if (cfg.run_sadrl) {
    SadrlAgent sadrl =
        train_sadrl(cfg.env, cfg.hyper, cfg.weights, cfg.train_episodes,
                    cfg.steps_per_episode, cfg.master_seed);
    fs::create_directories(cfg.out_dir + "/sadrl");
    save_checkpoint(sadrl.net, cfg.out_dir + "/sadrl/agent.ckpt",
                    cfg.master_seed);
    write_text_atomic(cfg.out_dir + "/sadrl/train_log.csv",
                      train_log_csv(sadrl.log, cfg.env.num_pairs()));
  }
}

void stage_eval(const ExperimentConfig& cfg, const std::string& scheme) {
  fs::create_directories(cfg.out_dir);
  if (scheme == "original" || scheme == "simplified") {
    const std::string dir = cfg.out_dir + "/" + scheme;
    TrainedEnsemble ens = load_ensemble(dir);
    HoldoutData data = execute(ens, cfg.env, cfg.weights, cfg.test_episodes,
                               cfg.steps_per_episode, cfg.master_seed);
    save_holdout(data, dir);
    write_scheme_outputs(cfg, scheme, holdout_metrics(data));
    return;
  }
  if (scheme == "random" || scheme == "full_power") {
    const auto metrics = evaluate_baseline(
        scheme == "random" ? BaselinePolicy::kRandom
                           : BaselinePolicy::kFullPower,
        cfg.env, cfg.weights, cfg.test_episodes, cfg.steps_per_episode,
        cfg.master_seed, cfg.hyper.l_q);
    write_scheme_outputs(cfg, scheme, metrics);
    return;
  }
  if (scheme == "sadrl") {
    SadrlAgent agent;
    agent.l_q = cfg.hyper.l_q;
    agent.n_segments = cfg.env.num_pairs();
    agent.net = load_checkpoint(cfg.out_dir + "/sadrl/agent.ckpt");
    agent.target = agent.net;
    const auto metrics =
        execute_sadrl(agent, cfg.env, cfg.weights, cfg.test_episodes,
                      cfg.steps_per_episode, cfg.master_seed);
    write_scheme_outputs(cfg, scheme, metrics);
    return;
  }
  throw std::invalid_argument("stage_eval: unknown scheme '" + scheme + "'");
}

namespace {

int summary_size(std::size_t rows, double fraction, int cap) {
  const int wanted =
      std::max(1, static_cast<int>(std::ceil(fraction * rows)));
  return std::min({wanted, cap, static_cast<int>(rows)});
}

std::string importance_csv(const ImportanceRanking& ranking, int n_pairs,
                           int n_bands) {
  std::vector<int> rank_of(ranking.order.size());
  for (std::size_t pos = 0; pos < ranking.order.size(); ++pos)
    rank_of[ranking.order[pos]] = static_cast<int>(pos) + 1;
  std::string out = "feature_index,group_label,mean_abs,transformed,rank\n";
  for (std::size_t l = 0; l < ranking.transformed.size(); ++l) {
    out += std::to_string(l);
    out += ',' + feature_group_label(static_cast<int>(l), n_pairs, n_bands);
    out += ',' + fmt(ranking.mean_abs.empty() ? 0.0 : ranking.mean_abs[l]);
    out += ',' + fmt(ranking.transformed[l]);
    out += ',' + std::to_string(rank_of[l]);
    out += '\n';
  }
  return out;
}

}  // namespace

std::string feature_group_label(int feature, int n_pairs, int n_bands) {
  const int direct_end = n_bands;
  const int cross_end = n_pairs * n_bands;
  const int v2n_end = (n_pairs + 1) * n_bands;
  if (feature < direct_end) return "direct";
  if (feature < cross_end) return "crossV2V";
  if (feature < v2n_end) return "V2N";
  return "interference";
}

void stage_explain(const ExperimentConfig& cfg) {
  TrainedEnsemble ens = load_ensemble(cfg.out_dir + "/original");
  BackgroundCapture xbg = load_background(cfg.out_dir + "/xbg.tab");
  HoldoutData holdout = load_holdout(cfg.out_dir + "/original");

  const int k_bg = summary_size(xbg.states.size(), 0.01, cfg.bg_summary_cap);
  const BackgroundSet bg = kmeans_summarize(
      xbg.states, k_bg, stream_seed(cfg.master_seed, "kmeans-bg"));

  std::vector<std::vector<double>> holdout_rows;
  for (const auto& slot : holdout.slots)
    for (const auto& s : slot.states) holdout_rows.push_back(s);
  const int k_rows =
      summary_size(holdout_rows.size(), 0.10, cfg.holdout_summary_cap);
  const BackgroundSet summarized_rows = kmeans_summarize(
      holdout_rows, k_rows, stream_seed(cfg.master_seed, "kmeans-holdout"));

  std::vector<std::vector<double>> per_agent_transformed;
  std::vector<std::vector<double>> per_agent_mean_abs;
  for (std::size_t k = 0; k < ens.agents.size(); ++k) {
    if (!holdout.virtual_mask.empty() && holdout.virtual_mask[k]) continue;
    const auto phis =
        explain_dataset(ens.agents[k], summarized_rows.samples, bg);
    auto mean_abs = aggregate_importance(phis);
    auto transformed = softmax_transform(mean_abs);
    const ImportanceRanking agent_ranking =
        make_ranking(mean_abs, transformed);
    write_text_atomic(
        cfg.out_dir + "/importance_agent" + std::to_string(k) + ".csv",
        importance_csv(agent_ranking, cfg.env.num_pairs(), cfg.env.n_v2n));
    per_agent_mean_abs.push_back(std::move(mean_abs));
    per_agent_transformed.push_back(std::move(transformed));
  }

  const ImportanceRanking global =
      average_across_agents(per_agent_transformed, per_agent_mean_abs);
  write_text_atomic(cfg.out_dir + "/importance_global.csv",
                    importance_csv(global, cfg.env.num_pairs(), cfg.env.n_v2n));

  Table ranking_tab;
  ranking_tab.columns = {"feature", "mean_abs", "transformed"};
  for (std::size_t l = 0; l < global.transformed.size(); ++l)
    ranking_tab.append_row({static_cast<double>(l), global.mean_abs[l],
                            global.transformed[l]});
  save_table(ranking_tab, cfg.out_dir + "/ranking.tab");
}

ImportanceRanking load_ranking(const std::string& out_dir) {
  const Table t = load_table(out_dir + "/ranking.tab");
  std::vector<double> mean_abs(t.rows()), transformed(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    mean_abs[r] = t.at(r, 1);
    transformed[r] = t.at(r, 2);
  }
  return make_ranking(std::move(mean_abs), std::move(transformed));
}

SelectionResult stage_select(const ExperimentConfig& cfg) {
  TrainedEnsemble ens = load_ensemble(cfg.out_dir + "/original");
  HoldoutData holdout = load_holdout(cfg.out_dir + "/original");
  const ImportanceRanking ranking = load_ranking(cfg.out_dir);

  const SelectionResult result =
      iterative_selection(ens, holdout, ranking, Delta{cfg.delta}, cfg.env,
                          cfg.weights, cfg.mask_mode);

  json report;
  report["delta"] = cfg.delta;
  report["mask_mode"] =
      cfg.mask_mode == MaskMode::kVariance ? "variance" : "mean";
  report["alpha_original"] = result.alpha_original;
  report["alpha_trace"] = result.alpha_trace;
  report["p_stop"] = result.p_stop;
  report["retained"] = result.retained;
  report["eliminated"] = result.eliminated;
  report["ranking_order"] = ranking.order;
  write_text_atomic(cfg.out_dir + "/selection_report.json",
                    report.dump(2) + "\n");
  return result;
}

void stage_retrain(const ExperimentConfig& cfg) {
  const json report =
      json::parse(slurp(cfg.out_dir + "/selection_report.json"));
  const auto retained = report.at("retained").get<std::vector<int>>();

  TrainResult result =
      rebuild_and_retrain(cfg.env, cfg.hyper, cfg.weights, retained,
                          cfg.train_episodes, cfg.steps_per_episode,
                          cfg.master_seed);
  save_ensemble(result.ensemble, cfg.out_dir + "/simplified", cfg.master_seed);
  write_text_atomic(cfg.out_dir + "/simplified/train_log.csv",
                    train_log_csv(result.ensemble.log, cfg.env.num_pairs()));
  append_timing(cfg, "Simplified-MADRL",
                result.ensemble.median_update_seconds);
}

namespace {

double scheme_mean_alpha(const ExperimentConfig& cfg,
                         const std::string& scheme) {
  const std::string path = cfg.out_dir + "/eval_" + scheme + ".csv";
  std::ifstream f(path);
  if (!f) throw std::runtime_error("stage_report: missing " + path);
  std::string line;
  std::getline(f, line);  // header
  std::vector<double> rewards;
  while (std::getline(f, line)) {
    // reward is the third column
    std::stringstream ss(line);
    std::string cell;
    for (int i = 0; i < 3 && std::getline(ss, cell, ','); ++i) {
    }
    rewards.push_back(std::stod(cell));
  }
  return mean_of(rewards);
}

}  // namespace

ComparisonReport stage_report(const ExperimentConfig& cfg) {
  ComparisonReport report;

  auto ensemble_row = [&](const std::string& name, const std::string& scheme) {
    TrainedEnsemble ens = load_ensemble(cfg.out_dir + "/" + scheme);
    SchemeRow row;
    row.name = name;
    row.mean_alpha = scheme_mean_alpha(cfg, scheme);
    row.cdf_path = "cdf_" + scheme + ".csv";
    row.availability_path = "availability_" + scheme + ".csv";
    row.state_features = ens.state_dim();
    row.parameters = param_count(ens.agents.front());
    report.rows.push_back(row);
  };
  ensemble_row("Original-MADRL", "original");
  ensemble_row("Simplified-MADRL", "simplified");

  auto baseline_row = [&](const std::string& name, const std::string& scheme) {
    SchemeRow row;
    row.name = name;
    row.mean_alpha = scheme_mean_alpha(cfg, scheme);
    row.cdf_path = "cdf_" + scheme + ".csv";
    row.availability_path = "availability_" + scheme + ".csv";
    report.rows.push_back(row);
  };
  if (cfg.run_random) baseline_row("Random", "random");
  if (cfg.run_full_power) baseline_row("Full-power", "full_power");
  if (cfg.run_sadrl) baseline_row("SADRL", "sadrl");

  std::string csv =
      "scheme,mean_alpha,state_features,parameters_per_agent,"
      "feature_reduction_pct,parameter_reduction_pct,cdf_path,"
      "availability_path\n";
  for (const auto& row : report.rows) {
    const bool simplified = row.name == "Simplified-MADRL";
    csv += row.name;
    csv += ',' + fmt(row.mean_alpha);
    csv += ',' + std::to_string(row.state_features);
    csv += ',' + std::to_string(row.parameters);
    csv += ',' + (simplified ? fmt(report.feature_reduction_pct())
                             : std::string("0"));
    csv += ',' + (simplified ? fmt(report.parameter_reduction_pct())
                             : std::string("0"));
    csv += ',' + row.cdf_path;
    csv += ',' + row.availability_path;
    csv += '\n';
  }
  write_text_atomic(cfg.out_dir + "/comparison_report.csv", csv);
  return report;
}

void stage_sweep(const ExperimentConfig& cfg, const std::string& axis) {
  fs::create_directories(cfg.out_dir);
  if (axis == "delta") {
    TrainedEnsemble ens = load_ensemble(cfg.out_dir + "/original");
    HoldoutData holdout = load_holdout(cfg.out_dir + "/original");
    const ImportanceRanking ranking = load_ranking(cfg.out_dir);
    const double alpha0 = average_network_performance(
        ens, holdout, cfg.env, cfg.weights, {}, cfg.mask_mode);
    std::vector<double> deltas = cfg.sweep_deltas;
    if (deltas.empty())
      for (double frac : {0.005, 0.01, 0.02, 0.05, 0.10, 0.20, 0.50})
        deltas.push_back(std::max(1e-12, frac * std::fabs(alpha0)));
    std::string csv = "delta,retained_count,p_stop,alpha_original\n";
    for (double d : deltas) {
      const SelectionResult sel =
          iterative_selection(ens, holdout, ranking, Delta{d}, cfg.env,
                              cfg.weights, cfg.mask_mode);
      csv += fmt(d) + ',' + std::to_string(sel.retained.size()) + ',' +
             std::to_string(sel.p_stop) + ',' + fmt(sel.alpha_original) + '\n';
    }
    write_text_atomic(cfg.out_dir + "/sweep_delta.csv", csv);
    return;
  }
  if (axis == "vehicle_count") {
    std::string csv = "k_v2v,mean_v2n_sum_rate_bps,mean_reward\n";
    for (int k : cfg.sweep_vehicle_counts) {
      ExperimentConfig point = cfg;
      point.env.k_v2v = k;
      point.weights.eps_max.resize(k, cfg.weights.eps_max.back());
      const auto metrics = evaluate_baseline(
          BaselinePolicy::kRandom, point.env, point.weights,
          point.test_episodes, point.steps_per_episode, point.master_seed,
          point.hyper.l_q);
      std::vector<double> v2n, rewards;
      for (const auto& m : metrics) {
        v2n.push_back(m.report.v2n_sum_rate_bps());
        rewards.push_back(m.report.reward);
      }
      csv += std::to_string(k) + ',' + fmt(mean_of(v2n)) + ',' +
             fmt(mean_of(rewards)) + '\n';
    }
    write_text_atomic(cfg.out_dir + "/sweep_vehicle_count.csv", csv);
    return;
  }
  if (axis == "speed") {
    std::string csv = "speed_kmh,mean_network_sum_rate_bps,mean_reward\n";
    for (double kmh : cfg.sweep_speeds_kmh) {
      ExperimentConfig point = cfg;
      point.env.speed_mps = kmh / 3.6;
      const auto metrics = evaluate_baseline(
          BaselinePolicy::kRandom, point.env, point.weights,
          point.test_episodes, point.steps_per_episode, point.master_seed,
          point.hyper.l_q);
      std::vector<double> rates, rewards;
      for (const auto& m : metrics) {
        rates.push_back(m.report.network_sum_rate_bps());
        rewards.push_back(m.report.reward);
      }
      csv += fmt(kmh) + ',' + fmt(mean_of(rates)) + ',' +
             fmt(mean_of(rewards)) + '\n';
    }
    write_text_atomic(cfg.out_dir + "/sweep_speed.csv", csv);
    return;
  }
  if (axis == "eps_max") {
    HoldoutData holdout = load_holdout(cfg.out_dir + "/original");
    std::vector<double> worst;
    for (const auto& slot : holdout.slots)
      worst.push_back(slot.report.worst_eps());
    std::string csv = "eps_max,availability_pct\n";
    std::vector<double> thresholds = cfg.sweep_eps_max;
    std::sort(thresholds.begin(), thresholds.end());
    for (double t : thresholds)
      csv += fmt(t) + ',' + fmt(network_availability(worst, t)) + '\n';
    write_text_atomic(cfg.out_dir + "/sweep_eps_max.csv", csv);
    return;
  }
  throw std::invalid_argument("stage_sweep: unknown axis '" + axis + "'");
}

void run_pipeline(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  // fresh timing file per pipeline run
  const std::string timing = cfg.out_dir + "/timing_report.csv";
  if (fs::exists(timing)) fs::remove(timing);

  auto guarded = [&cfg](const char* stage, auto&& fn) {
    try {
      fn();
    } catch (...) {
      write_text_atomic(cfg.out_dir + "/FAILED_" + stage,
                        std::string("stage '") + stage + "' failed\n");
      throw;
    }
  };

  guarded("train", [&] { stage_train(cfg); });
  guarded("eval_original", [&] { stage_eval(cfg, "original"); });
  if (cfg.run_random) guarded("eval_random", [&] { stage_eval(cfg, "random"); });
  if (cfg.run_full_power)
    guarded("eval_full_power", [&] { stage_eval(cfg, "full_power"); });
  if (cfg.run_sadrl) guarded("eval_sadrl", [&] { stage_eval(cfg, "sadrl"); });
  guarded("explain", [&] { stage_explain(cfg); });
  guarded("select", [&] { stage_select(cfg); });
  guarded("retrain", [&] { stage_retrain(cfg); });
  guarded("eval_simplified", [&] { stage_eval(cfg, "simplified"); });
  guarded("report", [&] { stage_report(cfg); });
}

}  // namespace v2x
