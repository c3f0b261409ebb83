#include "v2x/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace v2x {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key +
                                "' has a malformed number: '" + v + "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v);
  if (d != std::floor(d))
    throw std::invalid_argument("config: key '" + key +
                                "' must be an integer, got '" + v + "'");
  return static_cast<int>(d);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: key '" + key +
                              "' must be a boolean, got '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (double d : parse_double_list(key, v)) {
    if (d != std::floor(d))
      throw std::invalid_argument("config: key '" + key +
                                  "' must list integers");
    out.push_back(static_cast<int>(d));
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (kv.count(key))
      throw std::invalid_argument("config: duplicate key '" + key + "'");
    kv[key] = value;
  }

  ExperimentConfig cfg;
  std::vector<std::string> unknown;
  bool saw_eps_max = false;
  bool saw_lambda1 = false;

  auto take = [&kv](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    return &it->second;
  };
  auto used = [&kv](const std::string& key) { kv.erase(key); };

  struct Handler {
    const char* key;
    std::function<void(const std::string&)> apply;
  };

  auto dbl = [&](double& field) {
    return [&field](const std::string& key, const std::string& v) {
      field = parse_double(key, v);
    };
  };

  // Flat, typed schema with units in the key names.
  const std::vector<std::pair<std::string,
                              std::function<void(const std::string&,
                                                 const std::string&)>>>
      schema = {
          {"k_v2v", [&](auto k, auto v) { cfg.env.k_v2v = parse_int(k, v); }},
          {"n_v2n", [&](auto k, auto v) { cfg.env.n_v2n = parse_int(k, v); }},
          {"area_width_m", dbl(cfg.env.area_width_m)},
          {"area_height_m", dbl(cfg.env.area_height_m)},
          {"lanes", [&](auto k, auto v) { cfg.env.lanes = parse_int(k, v); }},
          {"min_spacing_m", dbl(cfg.env.min_spacing_m)},
          {"carrier_freq_hz", dbl(cfg.env.carrier_freq_hz)},
          {"speed_kmh",
           [&](auto k, auto v) {
             cfg.env.speed_mps = parse_double(k, v) / 3.6;
           }},
          {"bandwidth_hz", dbl(cfg.env.bandwidth_hz)},
          {"noise_power_dbm", dbl(cfg.env.noise_power_dbm)},
          {"shadowing_std_db", dbl(cfg.env.shadowing_std_db)},
          {"bs_antenna_gain_db", dbl(cfg.env.bs_antenna_gain_db)},
          {"bs_noise_figure_db", dbl(cfg.env.bs_noise_figure_db)},
          {"vehicle_antenna_gain_db", dbl(cfg.env.vehicle_antenna_gain_db)},
          {"vehicle_noise_figure_db", dbl(cfg.env.vehicle_noise_figure_db)},
          {"bs_height_m", dbl(cfg.env.bs_height_m)},
          {"vehicle_height_m", dbl(cfg.env.vehicle_height_m)},
          {"p_max_dbm", dbl(cfg.env.p_max_dbm)},
          {"p_v2n_dbm", dbl(cfg.env.p_v2n_dbm)},
          {"slot_ms",
           [&](auto k, auto v) {
             cfg.env.slot_s = parse_double(k, v) / 1000.0;
           }},
          {"payload_bits",
           [&](auto k, auto v) { cfg.env.payload_bits = parse_int(k, v); }},
          {"virtual_gain_floor", dbl(cfg.env.virtual_gain_floor)},
          {"lr0", dbl(cfg.hyper.lr0)},
          {"lr_decay", dbl(cfg.hyper.lr_decay)},
          {"discount", dbl(cfg.hyper.discount)},
          {"batch_size",
           [&](auto k, auto v) { cfg.hyper.batch_size = parse_int(k, v); }},
          {"eps_greedy0", dbl(cfg.hyper.eps0)},
          {"eps_greedy_decay", dbl(cfg.hyper.eps_decay)},
          {"warmup_steps",
           [&](auto k, auto v) { cfg.hyper.warmup_steps = parse_int(k, v); }},
          {"target_copy_steps",
           [&](auto k, auto v) {
             cfg.hyper.target_copy_steps = parse_int(k, v);
           }},
          {"replay_capacity",
           [&](auto k, auto v) {
             cfg.hyper.replay_capacity = parse_int(k, v);
           }},
          {"l_q", [&](auto k, auto v) { cfg.hyper.l_q = parse_int(k, v); }},
          {"linear_output",
           [&](auto k, auto v) { cfg.hyper.linear_output = parse_bool(k, v); }},
          {"lambda1",
           [&](auto k, auto v) {
             cfg.weights.lambda1 = parse_double(k, v);
             saw_lambda1 = true;
           }},
          {"lambda2", dbl(cfg.weights.lambda2)},
          {"lambda3", dbl(cfg.weights.lambda3)},
          {"omega1", dbl(cfg.weights.omega1)},
          {"omega2", dbl(cfg.weights.omega2)},
          {"eps_max",
           [&](auto k, auto v) {
             cfg.weights.eps_max = parse_double_list(k, v);
             saw_eps_max = true;
           }},
          {"train_episodes",
           [&](auto k, auto v) { cfg.train_episodes = parse_int(k, v); }},
          {"test_episodes",
           [&](auto k, auto v) { cfg.test_episodes = parse_int(k, v); }},
          {"steps_per_episode",
           [&](auto k, auto v) { cfg.steps_per_episode = parse_int(k, v); }},
          {"delta", [&](auto k, auto v) { cfg.delta = parse_double(k, v); }},
          {"mask_mode",
           [&](auto k, auto v) {
             if (v == "variance")
               cfg.mask_mode = MaskMode::kVariance;
             else if (v == "mean")
               cfg.mask_mode = MaskMode::kMean;
             else
               throw std::invalid_argument(
                   "config: mask_mode must be 'variance' or 'mean'");
             (void)k;
           }},
          {"run_sadrl",
           [&](auto k, auto v) { cfg.run_sadrl = parse_bool(k, v); }},
          {"run_full_power",
           [&](auto k, auto v) { cfg.run_full_power = parse_bool(k, v); }},
          {"run_random",
           [&](auto k, auto v) { cfg.run_random = parse_bool(k, v); }},
          {"bg_summary_cap",
           [&](auto k, auto v) { cfg.bg_summary_cap = parse_int(k, v); }},
          {"holdout_summary_cap",
           [&](auto k, auto v) { cfg.holdout_summary_cap = parse_int(k, v); }},
          {"out_dir", [&](auto k, auto v) {
             cfg.out_dir = v;
             (void)k;
           }},
          {"master_seed",
           [&](auto k, auto v) {
             cfg.master_seed =
                 static_cast<std::uint64_t>(parse_double(k, v));
           }},
          {"sweep_speeds_kmh",
           [&](auto k, auto v) { cfg.sweep_speeds_kmh = parse_double_list(k, v); }},
          {"sweep_vehicle_counts",
           [&](auto k, auto v) { cfg.sweep_vehicle_counts = parse_int_list(k, v); }},
          {"sweep_eps_max",
           [&](auto k, auto v) { cfg.sweep_eps_max = parse_double_list(k, v); }},
          {"sweep_deltas",
           [&](auto k, auto v) { cfg.sweep_deltas = parse_double_list(k, v); }},
      };

  for (const auto& [key, apply] : schema) {
    if (const std::string* v = take(key)) {
      apply(key, *v);
      used(key);
    }
  }
  for (const auto& [key, value] : kv) unknown.push_back(key);
  if (!unknown.empty()) {
    std::string msg = "config: unknown keys:";
    for (const auto& k : unknown) msg += " '" + k + "'";
    throw std::invalid_argument(msg);
  }
  if (!saw_eps_max)
    throw std::invalid_argument(
        "config: required key 'eps_max' is missing (one threshold per V2V "
        "link, comma separated)");
  if (!saw_lambda1) cfg.weights.lambda1 = 1.0 / (5.0 * cfg.env.k_v2v);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void ExperimentConfig::validate() const {
  env.validate();
  if (static_cast<int>(weights.eps_max.size()) != env.k_v2v)
    throw std::invalid_argument(
        "config: eps_max must list exactly one threshold per V2V link (K=" +
        std::to_string(env.k_v2v) + ", got " +
        std::to_string(weights.eps_max.size()) + ")");
  for (double e : weights.eps_max)
    if (!(e > 0.0) || !(e < 1.0))
      throw std::invalid_argument("config: eps_max entries must be in (0,1)");
  if (train_episodes < 1 || test_episodes < 1 || steps_per_episode < 1)
    throw std::invalid_argument("config: episode/step counts must be >= 1");
  if (hyper.l_q < 1) throw std::invalid_argument("config: l_q must be >= 1");
  if (hyper.batch_size < 1)
    throw std::invalid_argument("config: batch_size must be >= 1");
  if (!(delta > 0.0))
    throw std::invalid_argument("config: delta must be > 0");
  if (bg_summary_cap < 1 || holdout_summary_cap < 1)
    throw std::invalid_argument("config: summary caps must be >= 1");
}

void ExperimentConfig::apply_scale(const std::string& scale) {
  if (scale == "desk") return;
  if (scale == "paper") {
    train_episodes = 4000;
    test_episodes = 1000;
    bg_summary_cap = 4000;
    holdout_summary_cap = 1000;
    return;
  }
  throw std::invalid_argument("scale must be 'desk' or 'paper'");
}

}  // namespace v2x
