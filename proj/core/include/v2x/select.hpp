#pragma once

#include <cstdint>
#include <vector>

#include "v2x/marl.hpp"
#include "v2x/shap.hpp"

namespace v2x {

// Allowed change of the average network performance before the masking loop
// stops. The recommended operating band is 1-10% of alpha.
struct Delta {
  double value = 2.0;
};

enum class MaskMode { kVariance, kMean };

struct SelectionResult {
  std::vector<int> retained;    // ascending feature indices
  std::vector<int> eliminated;  // ascending feature indices
  int p_stop = 0;               // iteration that tripped the threshold, or L
  double alpha_original = 0.0;
  std::vector<double> alpha_trace;  // alpha_simplified at p = 1, 2, ...
};

// Mean reward over the hold-out slots when every agent re-decides from the
// (possibly feature-masked) states. masked_features are replaced, in the
// model-input copy only, by the column statistic computed over all real
// agent rows of the dataset.
double average_network_performance(const TrainedEnsemble& ens,
                                   const HoldoutData& data,
                                   const EnvConfig& cfg,
                                   const RewardWeights& weights,
                                   const std::vector<int>& masked_features = {},
                                   MaskMode mode = MaskMode::kVariance);

// Population statistic of each state column over all real agent rows.
std::vector<double> column_statistics(const HoldoutData& data, MaskMode mode);

// Replaces the named columns of every row with the column's population
// variance (or mean) computed over the rows themselves.
void mask_features(std::vector<std::vector<double>>& rows,
                   const std::vector<int>& features,
                   MaskMode mode = MaskMode::kVariance);

// Iterative masking-based selection: mask the p least important features for
// p = 1..L-1 and stop at the first p where |alpha_original - alpha_simplified|
// >= delta, eliminating the p-1 least important; loop exhaustion eliminates
// L-1.
SelectionResult iterative_selection(const TrainedEnsemble& ens,
                                    const HoldoutData& data,
                                    const ImportanceRanking& ranking,
                                    Delta delta, const EnvConfig& cfg,
                                    const RewardWeights& weights,
                                    MaskMode mode = MaskMode::kVariance);

// Builds a fresh ensemble whose input is the retained subset (sizing rule
// re-applied) and re-runs the full training once.
TrainResult rebuild_and_retrain(const EnvConfig& cfg, const TrainHyper& hyper,
                                const RewardWeights& weights,
                                const std::vector<int>& retained, int episodes,
                                int steps_per_episode,
                                std::uint64_t master_seed);

}  // namespace v2x
