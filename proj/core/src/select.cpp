#include "v2x/select.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace v2x {

std::vector<double> column_statistics(const HoldoutData& data, MaskMode mode) {
  const int L = data.state_dim;
  std::vector<double> sum(L, 0.0), sumsq(L, 0.0);
  double n = 0.0;
  for (const auto& slot : data.slots) {
    for (const auto& state : slot.states) {
      for (int l = 0; l < L; ++l) {
        sum[l] += state[l];
        sumsq[l] += state[l] * state[l];
      }
      n += 1.0;
    }
  }
  if (n == 0.0)
    throw std::invalid_argument("column_statistics: empty hold-out data");
  std::vector<double> stat(L);
  for (int l = 0; l < L; ++l) {
    const double mean = sum[l] / n;
    stat[l] = mode == MaskMode::kMean
                  ? mean
                  : std::max(0.0, sumsq[l] / n - mean * mean);
  }
  return stat;
}

void mask_features(std::vector<std::vector<double>>& rows,
                   const std::vector<int>& features, MaskMode mode) {
  if (rows.empty() || features.empty()) return;
  const std::size_t L = rows[0].size();
  for (int f : features)
    if (f < 0 || static_cast<std::size_t>(f) >= L)
      throw std::out_of_range("mask_features: feature index");

  const double n = static_cast<double>(rows.size());
  for (int f : features) {
    double sum = 0.0, sumsq = 0.0;
    for (const auto& r : rows) {
      sum += r[f];
      sumsq += r[f] * r[f];
    }
    const double mean = sum / n;
    const double value = mode == MaskMode::kMean
                             ? mean
                             : std::max(0.0, sumsq / n - mean * mean);
    for (auto& r : rows) r[f] = value;
  }
}

namespace {

// Recomputes the slot allocation from the (masked) states and re-evaluates
// the common reward against the stored channel snapshot. No environment
// interaction happens here: channels and histories stay as logged.
double alpha_over_slots(const TrainedEnsemble& ens, const HoldoutData& data,
                        const EnvConfig& cfg, const RewardWeights& weights,
                        const std::vector<int>& masked,
                        const std::vector<double>& stat) {
  const int n_pairs = cfg.num_pairs();
  double total = 0.0;
  std::vector<double> model_state;
  for (const auto& slot : data.slots) {
    Allocation alloc;
    alloc.band.assign(n_pairs, 0);
    alloc.power_w.assign(n_pairs, 0.0);
    alloc.p_v2n_w = cfg.p_v2n_w();

    std::size_t row = 0;
    for (int k = 0; k < n_pairs; ++k) {
      const bool is_virtual =
          !data.virtual_mask.empty() && data.virtual_mask[k];
      int action = 0;
      if (is_virtual) {
        // placeholder transmits at floor gain; its decision is irrelevant
        alloc.band[k] = 0;
        alloc.power_w[k] = power_of_level(0, ens.l_q, cfg.p_max_w());
        continue;
      }
      std::vector<double> state = slot.states[row++];
      for (int f : masked) state[f] = stat[f];
      if (ens.feature_subset.empty()) {
        model_state = std::move(state);
      } else {
        model_state.clear();
        for (int idx : ens.feature_subset) model_state.push_back(state[idx]);
      }
      const auto q = forward(ens.agents[k], model_state);
      for (int i = 1; i < static_cast<int>(q.size()); ++i)
        if (q[i] > q[action]) action = i;
      const BandLevel bl = decode_action(action, cfg.n_v2n, ens.l_q);
      alloc.band[k] = bl.band;
      alloc.power_w[k] = power_of_level(bl.level, ens.l_q, cfg.p_max_w());
    }
    const SlotReport rep =
        evaluate_slot(slot.ch, alloc, cfg, weights,
                      data.virtual_mask.empty() ? nullptr : &data.virtual_mask);
    total += rep.reward;
  }
  return total / static_cast<double>(data.slots.size());
}

}  // namespace

double average_network_performance(const TrainedEnsemble& ens,
                                   const HoldoutData& data,
                                   const EnvConfig& cfg,
                                   const RewardWeights& weights,
                                   const std::vector<int>& masked_features,
                                   MaskMode mode) {
  if (data.slots.empty())
    throw std::invalid_argument("average_network_performance: empty hold-out");
  std::vector<double> stat;
  if (!masked_features.empty()) stat = column_statistics(data, mode);
  return alpha_over_slots(ens, data, cfg, weights, masked_features, stat);
}

SelectionResult iterative_selection(const TrainedEnsemble& ens,
                                    const HoldoutData& data,
                                    const ImportanceRanking& ranking,
                                    Delta delta, const EnvConfig& cfg,
                                    const RewardWeights& weights,
                                    MaskMode mode) {
  const int L = data.state_dim;
  if (static_cast<int>(ranking.order.size()) != L)
    throw std::invalid_argument(
        "iterative_selection: ranking does not cover all features");
  if (!(delta.value > 0.0))
    throw std::invalid_argument("iterative_selection: delta must be > 0");

  SelectionResult result;
  result.alpha_original =
      average_network_performance(ens, data, cfg, weights, {}, mode);

  // ranking.order is descending importance; least important come from the
  // back.
  auto least_important = [&ranking, L](int p) {
    std::vector<int> feats(ranking.order.end() - p, ranking.order.end());
    (void)L;
    return feats;
  };

  int eliminate_count = L - 1;  // loop exhaustion default
  result.p_stop = L;
  for (int p = 1; p < L; ++p) {
    const auto masked = least_important(p);
    const double alpha_simplified =
        average_network_performance(ens, data, cfg, weights, masked, mode);
    result.alpha_trace.push_back(alpha_simplified);
    if (std::fabs(result.alpha_original - alpha_simplified) >= delta.value) {
      eliminate_count = p - 1;
      result.p_stop = p;
      break;
    }
  }

  std::vector<int> elim = eliminate_count > 0
                              ? least_important(eliminate_count)
                              : std::vector<int>{};
  std::sort(elim.begin(), elim.end());
  result.eliminated = elim;
  for (int l = 0; l < L; ++l)
    if (!std::binary_search(elim.begin(), elim.end(), l))
      result.retained.push_back(l);
  return result;
}

TrainResult rebuild_and_retrain(const EnvConfig& cfg, const TrainHyper& hyper,
                                const RewardWeights& weights,
                                const std::vector<int>& retained, int episodes,
                                int steps_per_episode,
                                std::uint64_t master_seed) {
  if (retained.empty())
    throw std::invalid_argument("rebuild_and_retrain: empty feature set");
  return train(cfg, hyper, weights, episodes, steps_per_episode, master_seed,
               retained);
}

}  // namespace v2x
