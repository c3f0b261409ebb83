#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "v2x/env.hpp"
#include "v2x/mlp.hpp"
#include "v2x/phy.hpp"
#include "v2x/rng.hpp"

namespace v2x {

struct TrainHyper {
  double lr0 = 0.01;
  double lr_decay = 1.0e-4;   // lr <- (1 - lr_decay) * lr per step
  double discount = 0.99;
  int batch_size = 100;
  double eps0 = 0.1;
  double eps_decay = 1.0e-4;  // eps <- max(0, (1 - eps_decay) * eps)
  int warmup_steps = 100;     // T_b, global steps before updates start
  int target_copy_steps = 400;  // T_c
  int replay_capacity = 100000;
  int l_q = 4;                // transmit power levels
  bool linear_output = false; // switch the Q-net output to linear
};

// Fixed affine feature transforms; attributions stay comparable across runs
// because these never adapt to the data.
double gain_feature(double gain_linear);
double interference_feature(double interference_w);

// Aggregate interference each link would have measured per band, given the
// previous slot's allocation and the current gains.
std::vector<double> prev_interference(const ChannelMatrix& ch,
                                      const Allocation& prev, int k,
                                      double p_v2n_w);

// Observation of agent k, laid out as
// [direct gains (N) | cross V2V gains, k' ascending (K-1)*N |
//  V2N interferer gains (N) | previous-slot interference (N)].
// Virtual agents observe all-zero vectors.
std::vector<double> build_state(int k, const ChannelMatrix& ch,
                                const Allocation& prev, double p_v2n_w,
                                bool is_virtual = false);

int encode_action(int band, int level, int l_q);
struct BandLevel {
  int band;
  int level;
};
BandLevel decode_action(int index, int n_bands, int l_q);

// Power of a quantisation level: (level+1)/L_Q * P_max, level in [0, L_Q).
double power_of_level(int level, int l_q, double p_max_w);

// Epsilon-greedy over the Q-net output; ties resolve to the lowest index.
int select_action(const Mlp& net, std::span<const double> state, double eps,
                  SplitMix64& rng);

struct Experience {
  std::vector<double> s;
  int a = 0;
  double r = 0.0;
  std::vector<double> s2;
};

struct SadrlExperience {
  std::vector<double> s;
  std::vector<int> a;  // one global action index per segment
  double r = 0.0;
  std::vector<double> s2;
};

// Ring buffer shared by all agents; uniform minibatch sampling without
// replacement (Floyd's algorithm).
template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : cap_(capacity) {
    buf_.reserve(capacity);
  }

  void push(T e) {
    if (buf_.size() < cap_) {
      buf_.push_back(std::move(e));
    } else {
      buf_[head_] = std::move(e);
      head_ = (head_ + 1) % cap_;
    }
  }

  std::size_t size() const { return buf_.size(); }
  std::size_t capacity() const { return cap_; }

  std::vector<const T*> sample(std::size_t d, SplitMix64& rng) const {
    if (d > buf_.size())
      throw std::invalid_argument("ReplayBuffer::sample: not enough entries");
    std::vector<std::size_t> picked;
    picked.reserve(d);
    for (std::size_t j = buf_.size() - d; j < buf_.size(); ++j) {
      const std::size_t t = rng.below(j + 1);
      bool dup = false;
      for (std::size_t p : picked)
        if (p == t) {
          dup = true;
          break;
        }
      picked.push_back(dup ? j : t);
    }
    std::vector<const T*> out;
    out.reserve(d);
    for (std::size_t i : picked) out.push_back(&buf_[i]);
    return out;
  }

 private:
  std::vector<T> buf_;
  std::size_t cap_;
  std::size_t head_ = 0;
};

struct TrainLogRow {
  long step = 0;
  int episode = 0;
  double epsilon = 0.0;
  double lr = 0.0;
  double loss = 0.0;
  double reward = 0.0;
  std::vector<double> link_eps;
};

struct TrainedEnsemble {
  std::vector<Mlp> agents;   // evaluation nets, one per V2V pair
  std::vector<Mlp> targets;
  std::vector<int> feature_subset;  // ascending indices into the full state
  int l_q = 4;
  std::vector<TrainLogRow> log;
  double median_update_seconds = 0.0;

  int state_dim() const { return agents.front().input_dim(); }
  int action_dim() const { return agents.front().output_dim(); }
};

// Background dataset captured during training: one (state, action) row per
// agent per slot.
struct BackgroundCapture {
  std::vector<std::vector<double>> states;
  std::vector<int> actions;
};

struct TrainResult {
  TrainedEnsemble ensemble;
  BackgroundCapture xbg;
};

// Centralized training: per slot every agent acts epsilon-greedily, the
// common reward is evaluated once, experiences go to one shared buffer, and
// each agent's net takes a minibatch step once the global step count passes
// the warmup. Targets are refreshed every target_copy_steps.
TrainResult train(const EnvConfig& cfg, const TrainHyper& hyper,
                  const RewardWeights& weights, int episodes,
                  int steps_per_episode, std::uint64_t master_seed,
                  std::vector<int> feature_subset = {});

// One observed slot of the greedy execution phase, with everything needed to
// re-evaluate the reward under different (e.g. masked-input) decisions.
struct HoldoutSlot {
  int episode = 0;
  int t = 0;
  ChannelMatrix ch;
  std::vector<std::vector<double>> states;   // per real agent, full layout
  std::vector<std::vector<double>> qvalues;  // per real agent
  std::vector<int> actions;                  // greedy actions taken
  SlotReport report;
};

struct HoldoutData {
  int state_dim = 0;
  int action_dim = 0;
  int l_q = 4;
  std::vector<bool> virtual_mask;  // per pair
  std::vector<HoldoutSlot> slots;

  std::size_t row_count() const;  // real-agent rows across all slots
};

// Greedy execution over fresh evaluation episodes; captures the hold-out
// dataset (states plus full Q-vectors) and per-slot metrics.
HoldoutData execute(const TrainedEnsemble& ens, const EnvConfig& cfg,
                    const RewardWeights& weights, int episodes,
                    int steps_per_episode, std::uint64_t master_seed);

// Lowest measured-interference band at maximum power; ties to lowest band.
Allocation baseline_full_power(const ChannelMatrix& ch, const Allocation& prev,
                               double p_v2n_w, double p_max_w, int l_q);

// Uniform band and power level per link.
Allocation baseline_random(int n_pairs, int n_bands, int l_q, double p_max_w,
                           double p_v2n_w, SplitMix64& rng);

struct SlotMetrics {
  int episode = 0;
  int t = 0;
  SlotReport report;
};

enum class BaselinePolicy { kRandom, kFullPower };

// Which derived seed streams an evaluation walks: the training episodes or
// the held-out evaluation episodes.
enum class StreamSet { kEval, kTrain };

// Runs a baseline policy over the same episodes as execute() (kEval) or the
// exact episode sequence train() saw (kTrain).
std::vector<SlotMetrics> evaluate_baseline(BaselinePolicy policy,
                                           const EnvConfig& cfg,
                                           const RewardWeights& weights,
                                           int episodes, int steps_per_episode,
                                           std::uint64_t master_seed, int l_q,
                                           StreamSet streams = StreamSet::kEval);

// Centralized single-agent baseline: one net sees the concatenation of all
// agent states and owns one N*L_Q output segment per agent.
struct SadrlAgent {
  Mlp net;
  Mlp target;
  int l_q = 4;
  int n_segments = 0;
  std::vector<TrainLogRow> log;
};

SadrlAgent train_sadrl(const EnvConfig& cfg, const TrainHyper& hyper,
                       const RewardWeights& weights, int episodes,
                       int steps_per_episode, std::uint64_t master_seed);

std::vector<SlotMetrics> execute_sadrl(const SadrlAgent& agent,
                                       const EnvConfig& cfg,
                                       const RewardWeights& weights,
                                       int episodes, int steps_per_episode,
                                       std::uint64_t master_seed);

}  // namespace v2x
