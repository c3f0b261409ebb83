#pragma once

#include <string>
#include <vector>

#include "v2x/config.hpp"
#include "v2x/marl.hpp"
#include "v2x/select.hpp"
#include "v2x/shap.hpp"

namespace v2x {

// Two-column CSV (value, cumulative probability), sorted ascending with
// duplicate values collapsed to their last step; final probability is 1.
void emit_cdf(const std::vector<double>& samples, const std::string& path);

// Percentage of slots whose worst-case real-link decoding error stays at or
// below the threshold.
double network_availability(const std::vector<double>& worst_eps_per_slot,
                            double eps_max);

struct SchemeRow {
  std::string name;
  double mean_alpha = 0.0;
  std::string cdf_path;
  std::string availability_path;
  int state_features = 0;
  std::size_t parameters = 0;  // per agent
  double median_update_seconds = 0.0;
};

struct ComparisonReport {
  std::vector<SchemeRow> rows;

  const SchemeRow* find(const std::string& name) const;
  // (1 - simplified/original) * 100, derived from the stored counts.
  double feature_reduction_pct() const;
  double parameter_reduction_pct() const;
};

// Ensemble persistence: one checkpoint per agent plus a JSON meta file.
void save_ensemble(const TrainedEnsemble& ens, const std::string& dir,
                   std::uint64_t master_seed);
TrainedEnsemble load_ensemble(const std::string& dir);

void save_holdout(const HoldoutData& data, const std::string& dir);
HoldoutData load_holdout(const std::string& dir);

void save_background(const BackgroundCapture& xbg, int state_dim,
                     const std::string& path);
BackgroundCapture load_background(const std::string& path);

// Pipeline stages. Every stage reads its inputs from and writes its outputs
// under cfg.out_dir; reruns with the same (config, seed) reproduce the
// metric files byte for byte. Wall-clock timings go to a separate file that
// carries no determinism guarantee.
void stage_train(const ExperimentConfig& cfg);
void stage_eval(const ExperimentConfig& cfg, const std::string& scheme);
void stage_explain(const ExperimentConfig& cfg);
SelectionResult stage_select(const ExperimentConfig& cfg);
void stage_retrain(const ExperimentConfig& cfg);
ComparisonReport stage_report(const ExperimentConfig& cfg);
void stage_sweep(const ExperimentConfig& cfg, const std::string& axis);

// train -> eval + baselines -> explain -> select -> retrain -> eval of the
// simplified ensemble -> report. A failed stage leaves the artifacts
// produced so far plus a FAILED_<stage> marker, then rethrows.
void run_pipeline(const ExperimentConfig& cfg);

// Shared helpers used by stages and tests.
std::string feature_group_label(int feature, int n_pairs, int n_bands);
ImportanceRanking load_ranking(const std::string& out_dir);

}  // namespace v2x
