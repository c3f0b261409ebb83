#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "v2x/mlp.hpp"

namespace v2x {

// Reference samples defining the "feature absent" expectation. Weights are
// cluster cardinalities when the set comes from a k-means summary and sum to
// the size of the summarised dataset.
struct BackgroundSet {
  std::vector<std::vector<double>> samples;
  std::vector<double> weights;

  std::size_t size() const { return samples.size(); }
  double total_weight() const;
  // Weighted mean of one coordinate.
  double mean(std::size_t column) const;
};

// Lloyd's algorithm with k-means++ seeding (at most 100 iterations),
// centroid weight = cluster cardinality.
BackgroundSet kmeans_summarize(const std::vector<std::vector<double>>& rows,
                               int k, std::uint64_t seed);

using ScalarModel = std::function<double(const std::vector<double>&)>;

// Exact Shapley values by full coalition enumeration; masked-out features
// are replaced by background samples (weighted expectation). Only feasible
// for small feature counts; throws beyond 15 features.
std::vector<double> exact_shapley(const ScalarModel& model,
                                  const std::vector<double>& x,
                                  const BackgroundSet& bg);

struct SampledShapley {
  std::vector<double> phi;
  std::vector<double> stderr_;  // standard error of each estimate
};

// Unbiased permutation-sampling estimator of the Shapley values.
SampledShapley sampled_shapley(const ScalarModel& model,
                               const std::vector<double>& x,
                               const BackgroundSet& bg, int n_perm,
                               std::uint64_t seed);

// Attribution of every feature to every output unit plus the expected model
// output over the background. Rows satisfy local accuracy:
// sum_l values[m][l] + base_values[m] == f_m(x).
struct ShapMatrix {
  int outputs = 0;
  int features = 0;
  std::vector<double> values;  // [m * features + l]
  std::vector<double> base_values;

  double at(int m, int l) const { return values[m * features + l]; }
};

// DeepLIFT rescale-rule propagation averaged over the background set
// ("Deep-SHAP"). Exact for linear networks; degenerate rescale slopes
// (|delta input| < 1e-9) fall back to the activation derivative at the
// reference.
ShapMatrix deep_shap(const Mlp& net, const std::vector<double>& x,
                     const BackgroundSet& bg);

// Per-sample attribution of the argmax output unit (ties to lowest index).
std::vector<std::vector<double>> explain_dataset(
    const Mlp& net, const std::vector<std::vector<double>>& rows,
    const BackgroundSet& bg);

// Elementwise mean of |phi| across samples.
std::vector<double> aggregate_importance(
    const std::vector<std::vector<double>>& phis);

// exp(|phi_l|) / sum_l' exp(|phi_l'|), computed with max subtraction.
std::vector<double> softmax_transform(const std::vector<double>& mean_abs);

struct ImportanceRanking {
  std::vector<double> mean_abs;
  std::vector<double> transformed;  // probabilities, sum to 1
  std::vector<int> order;           // feature indices, descending importance
};

ImportanceRanking make_ranking(std::vector<double> mean_abs,
                               std::vector<double> transformed);

// Elementwise mean of the per-agent transformed scores; the ranking sorts by
// the averaged value, ties to the lower feature index.
ImportanceRanking average_across_agents(
    const std::vector<std::vector<double>>& per_agent_transformed,
    const std::vector<std::vector<double>>& per_agent_mean_abs = {});

}  // namespace v2x
