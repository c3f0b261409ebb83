#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "v2x/env.hpp"
#include "v2x/marl.hpp"
#include "v2x/phy.hpp"
#include "v2x/select.hpp"

namespace v2x {

// Full experiment description, read from a flat key=value file. Unknown keys
// are rejected; eps_max is required and must list one threshold per V2V
// link. See README for the schema.
struct ExperimentConfig {
  EnvConfig env;
  TrainHyper hyper;
  RewardWeights weights;

  int train_episodes = 300;
  int test_episodes = 50;
  int steps_per_episode = 100;

  double delta = 2.0;
  MaskMode mask_mode = MaskMode::kVariance;

  bool run_sadrl = false;
  bool run_full_power = true;
  bool run_random = true;

  int bg_summary_cap = 100;
  int holdout_summary_cap = 500;

  std::string out_dir = "out";
  std::uint64_t master_seed = 1;

  std::vector<double> sweep_speeds_kmh = {20, 40, 60, 80, 100, 120};
  std::vector<int> sweep_vehicle_counts = {2, 3, 4};
  std::vector<double> sweep_eps_max = {1e-5, 1e-4, 1e-3, 1e-2};
  std::vector<double> sweep_deltas;  // empty -> fractions of alpha

  void validate() const;
  // Paper-scale episode counts and summary sizes (4000/1000 episodes,
  // 4000/1000 summaries); desk scale keeps the values above.
  void apply_scale(const std::string& scale);
};

ExperimentConfig load_config(const std::string& path);

// Parses the same format from memory (used by tests).
ExperimentConfig parse_config(const std::string& text);

}  // namespace v2x
