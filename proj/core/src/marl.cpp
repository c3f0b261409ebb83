#include "v2x/marl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace v2x {

namespace {

// Episode-scoped environment state shared by the train / execute loops.
struct EpisodeEnv {
  WorldState world;
  ChannelMatrix ch;
  Allocation alloc;          // previous slot's decision
  std::vector<bool> virtual_mask;
};

Allocation random_allocation(int n_pairs, int n_bands, int l_q,
                             double p_max_w, double p_v2n_w, SplitMix64& rng) {
  Allocation a;
  a.band.resize(n_pairs);
  a.power_w.resize(n_pairs);
  a.p_v2n_w = p_v2n_w;
  for (int k = 0; k < n_pairs; ++k) {
    a.band[k] = static_cast<int>(rng.below(n_bands));
    a.power_w[k] =
        power_of_level(static_cast<int>(rng.below(l_q)), l_q, p_max_w);
  }
  return a;
}

EpisodeEnv start_episode(const EnvConfig& cfg, const TrainHyper& hyper,
                         std::uint64_t master_seed, const char* topo_tag,
                         const char* fading_tag, const char* alloc_tag,
                         int episode) {
  EpisodeEnv env;
  env.world = init_topology(cfg, stream_seed(master_seed, topo_tag, episode));
  env.ch = sample_channels(env.world, cfg,
                           stream_seed(master_seed, fading_tag, episode, 0));
  SplitMix64 rng(stream_seed(master_seed, alloc_tag, episode));
  env.alloc = random_allocation(cfg.num_pairs(), cfg.n_v2n, hyper.l_q,
                                cfg.p_max_w(), cfg.p_v2n_w(), rng);
  env.virtual_mask.resize(cfg.num_pairs());
  for (int k = 0; k < cfg.num_pairs(); ++k)
    env.virtual_mask[k] = env.world.v2v_pairs[k].is_virtual;
  return env;
}

void advance_episode(EpisodeEnv& env, const EnvConfig& cfg,
                     std::uint64_t master_seed, const char* fading_tag,
                     int episode, int next_t, const Allocation& taken) {
  env.world = step_mobility(env.world, cfg.slot_s);
  env.ch = sample_channels(
      env.world, cfg, stream_seed(master_seed, fading_tag, episode, next_t));
  env.alloc = taken;
}

std::vector<double> project_state(const std::vector<double>& full,
                                  const std::vector<int>& subset) {
  if (subset.empty()) return full;
  std::vector<double> out;
  out.reserve(subset.size());
  for (int idx : subset) out.push_back(full[idx]);
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double gain_feature(double gain_linear) {
  return (10.0 * std::log10(gain_linear) + 120.0) / 60.0;
}

double interference_feature(double interference_w) {
  return (10.0 * std::log10(interference_w * 1000.0) + 90.0) / 40.0;
}

std::vector<double> prev_interference(const ChannelMatrix& ch,
                                      const Allocation& prev, int k,
                                      double p_v2n_w) {
  std::vector<double> interference(ch.N);
  for (int n = 0; n < ch.N; ++n) {
    double sum = p_v2n_w * ch.v2n_interf(n, k);
    for (int kp = 0; kp < ch.K; ++kp)
      if (kp != k && prev.band[kp] == n)
        sum += prev.power_w[kp] * ch.cross(kp, k, n);
    interference[n] = sum;
  }
  return interference;
}

std::vector<double> build_state(int k, const ChannelMatrix& ch,
                                const Allocation& prev, double p_v2n_w,
                                bool is_virtual) {
  const int K = ch.K, N = ch.N;
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(K + 2) * N);
  if (is_virtual) {
    s.assign(static_cast<std::size_t>(K + 2) * N, 0.0);
    return s;
  }
  for (int n = 0; n < N; ++n) s.push_back(gain_feature(ch.direct(k, n)));
  for (int kp = 0; kp < K; ++kp) {
    if (kp == k) continue;
    for (int n = 0; n < N; ++n) s.push_back(gain_feature(ch.cross(kp, k, n)));
  }
  for (int n = 0; n < N; ++n) s.push_back(gain_feature(ch.v2n_interf(n, k)));
  const auto interference = prev_interference(ch, prev, k, p_v2n_w);
  for (int n = 0; n < N; ++n)
    s.push_back(interference_feature(interference[n]));
  return s;
}

int encode_action(int band, int level, int l_q) {
  if (band < 0 || level < 0 || level >= l_q)
    throw std::out_of_range("encode_action: band/level out of range");
  return band * l_q + level;
}

BandLevel decode_action(int index, int n_bands, int l_q) {
  if (index < 0 || index >= n_bands * l_q)
    throw std::out_of_range("decode_action: index out of range");
  return {index / l_q, index % l_q};
}

double power_of_level(int level, int l_q, double p_max_w) {
  if (level < 0 || level >= l_q)
    throw std::out_of_range("power_of_level: level out of range");
  return p_max_w * static_cast<double>(level + 1) / static_cast<double>(l_q);
}

int select_action(const Mlp& net, std::span<const double> state, double eps,
                  SplitMix64& rng) {
  if (eps < 0.0 || eps > 1.0)
    throw std::domain_error("select_action: eps must be in [0,1]");
  if (eps > 0.0 && rng.uniform01() < eps)
    return static_cast<int>(rng.below(net.output_dim()));
  const auto q = forward(net, state);
  int best = 0;
  for (int i = 1; i < static_cast<int>(q.size()); ++i)
    if (q[i] > q[best]) best = i;
  return best;
}

std::size_t HoldoutData::row_count() const {
  std::size_t n = 0;
  for (const auto& slot : slots) n += slot.states.size();
  return n;
}

TrainResult train(const EnvConfig& cfg, const TrainHyper& hyper,
                  const RewardWeights& weights, int episodes,
                  int steps_per_episode, std::uint64_t master_seed,
                  std::vector<int> feature_subset) {
  cfg.validate();
  const int n_pairs = cfg.num_pairs();
  const int full_dim = (n_pairs + 2) * cfg.n_v2n;
  const int action_dim = cfg.n_v2n * hyper.l_q;
  std::sort(feature_subset.begin(), feature_subset.end());
  const int input_dim =
      feature_subset.empty() ? full_dim : static_cast<int>(feature_subset.size());
  if (!feature_subset.empty() &&
      (feature_subset.front() < 0 || feature_subset.back() >= full_dim))
    throw std::invalid_argument("train: feature subset index out of range");

  TrainResult result;
  TrainedEnsemble& ens = result.ensemble;
  ens.l_q = hyper.l_q;
  ens.feature_subset = feature_subset;
  for (int k = 0; k < n_pairs; ++k) {
    ens.agents.push_back(build_mlp(input_dim, action_dim,
                                   stream_seed(master_seed, "weights", k),
                                   hyper.linear_output));
    ens.targets.push_back(ens.agents.back());
  }

  ReplayBuffer<Experience> replay(hyper.replay_capacity);
  SplitMix64 explore_rng(stream_seed(master_seed, "exploration"));
  SplitMix64 replay_rng(stream_seed(master_seed, "replay"));

  double eps = hyper.eps0;
  double lr = hyper.lr0;
  long global_step = 0;
  std::vector<double> update_seconds;
  Batch batch;
  batch.x.resize(hyper.batch_size);
  batch.action.resize(hyper.batch_size);
  batch.target.resize(hyper.batch_size);

  for (int episode = 0; episode < episodes; ++episode) {
    EpisodeEnv env = start_episode(cfg, hyper, master_seed, "topology",
                                   "fading", "init-alloc", episode);
    std::vector<std::vector<double>> states(n_pairs);
    for (int k = 0; k < n_pairs; ++k)
      states[k] = project_state(
          build_state(k, env.ch, env.alloc, cfg.p_v2n_w(), env.virtual_mask[k]),
          feature_subset);

    for (int t = 0; t < steps_per_episode; ++t) {
      Allocation alloc;
      alloc.band.resize(n_pairs);
      alloc.power_w.resize(n_pairs);
      alloc.p_v2n_w = cfg.p_v2n_w();
      std::vector<int> actions(n_pairs);
      for (int k = 0; k < n_pairs; ++k) {
        actions[k] = select_action(ens.agents[k], states[k], eps, explore_rng);
        const BandLevel bl = decode_action(actions[k], cfg.n_v2n, hyper.l_q);
        alloc.band[k] = bl.band;
        alloc.power_w[k] = power_of_level(bl.level, hyper.l_q, cfg.p_max_w());
      }

      const SlotReport report =
          evaluate_slot(env.ch, alloc, cfg, weights, &env.virtual_mask);

      advance_episode(env, cfg, master_seed, "fading", episode, t + 1, alloc);
      std::vector<std::vector<double>> next_states(n_pairs);
      for (int k = 0; k < n_pairs; ++k)
        next_states[k] = project_state(
            build_state(k, env.ch, env.alloc, cfg.p_v2n_w(),
                        env.virtual_mask[k]),
            feature_subset);

      for (int k = 0; k < n_pairs; ++k) {
        if (env.virtual_mask[k]) continue;  // placeholders learn nothing
        replay.push({states[k], actions[k], report.reward, next_states[k]});
        result.xbg.states.push_back(states[k]);
        result.xbg.actions.push_back(actions[k]);
      }

      double slot_loss = 0.0;
      int updated = 0;
      if (global_step > hyper.warmup_steps &&
          replay.size() >= static_cast<std::size_t>(hyper.batch_size)) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<double> next_q, scratch;
        for (int k = 0; k < n_pairs; ++k) {
          if (env.virtual_mask[k]) continue;
          const auto sampled =
              replay.sample(static_cast<std::size_t>(hyper.batch_size),
                            replay_rng);
          for (int i = 0; i < hyper.batch_size; ++i) {
            const Experience& e = *sampled[i];
            forward_into(ens.targets[k], e.s2, next_q, scratch);
            const double max_next =
                *std::max_element(next_q.begin(), next_q.end());
            batch.x[i] = e.s;
            batch.action[i] = e.a;
            batch.target[i] = e.r + hyper.discount * max_next;
          }
          slot_loss += backward_update(ens.agents[k], batch, lr);
          ++updated;
        }
        const auto t1 = std::chrono::steady_clock::now();
        if (updated > 0) {
          update_seconds.push_back(
              std::chrono::duration<double>(t1 - t0).count() / updated);
          slot_loss /= updated;
        }
        if (global_step % hyper.target_copy_steps == 0)
          for (int k = 0; k < n_pairs; ++k)
            copy_weights(ens.agents[k], ens.targets[k]);
      }

      TrainLogRow row;
      row.step = global_step;
      row.episode = episode;
      row.epsilon = eps;
      row.lr = lr;
      row.loss = slot_loss;
      row.reward = report.reward;
      row.link_eps = report.v2v_eps;
      ens.log.push_back(std::move(row));

      states = std::move(next_states);
      eps = std::max(0.0, (1.0 - hyper.eps_decay) * eps);
      lr = (1.0 - hyper.lr_decay) * lr;
      ++global_step;
    }
  }
  ens.median_update_seconds = median(std::move(update_seconds));
  return result;
}

HoldoutData execute(const TrainedEnsemble& ens, const EnvConfig& cfg,
                    const RewardWeights& weights, int episodes,
                    int steps_per_episode, std::uint64_t master_seed) {
  cfg.validate();
  const int n_pairs = cfg.num_pairs();
  const int full_dim = (n_pairs + 2) * cfg.n_v2n;
  TrainHyper hyper;
  hyper.l_q = ens.l_q;

  HoldoutData data;
  data.state_dim = full_dim;
  data.action_dim = ens.action_dim();
  data.l_q = ens.l_q;

  for (int episode = 0; episode < episodes; ++episode) {
    EpisodeEnv env = start_episode(cfg, hyper, master_seed, "eval-topology",
                                   "eval-fading", "eval-init-alloc", episode);
    if (episode == 0)
      data.virtual_mask = env.virtual_mask;

    for (int t = 0; t < steps_per_episode; ++t) {
      HoldoutSlot slot;
      slot.episode = episode;
      slot.t = t;
      slot.ch = env.ch;

      Allocation alloc;
      alloc.band.resize(n_pairs);
      alloc.power_w.resize(n_pairs);
      alloc.p_v2n_w = cfg.p_v2n_w();
      for (int k = 0; k < n_pairs; ++k) {
        const auto full_state =
            build_state(k, env.ch, env.alloc, cfg.p_v2n_w(),
                        env.virtual_mask[k]);
        const auto model_state =
            ens.feature_subset.empty()
                ? full_state
                : [&] {
                    std::vector<double> s;
                    s.reserve(ens.feature_subset.size());
                    for (int idx : ens.feature_subset)
                      s.push_back(full_state[idx]);
                    return s;
                  }();
        const auto q = forward(ens.agents[k], model_state);
        int best = 0;
        for (int i = 1; i < static_cast<int>(q.size()); ++i)
          if (q[i] > q[best]) best = i;
        const BandLevel bl = decode_action(best, cfg.n_v2n, ens.l_q);
        alloc.band[k] = bl.band;
        alloc.power_w[k] = power_of_level(bl.level, ens.l_q, cfg.p_max_w());
        if (!env.virtual_mask[k]) {
          slot.states.push_back(full_state);
          slot.qvalues.push_back(q);
          slot.actions.push_back(best);
        }
      }

      slot.report = evaluate_slot(env.ch, alloc, cfg, weights,
                                  &env.virtual_mask);
      data.slots.push_back(std::move(slot));
      advance_episode(env, cfg, master_seed, "eval-fading", episode, t + 1,
                      alloc);
    }
  }
  return data;
}

Allocation baseline_full_power(const ChannelMatrix& ch, const Allocation& prev,
                               double p_v2n_w, double p_max_w, int l_q) {
  Allocation a;
  a.band.resize(ch.K);
  a.power_w.assign(ch.K, p_max_w);
  a.p_v2n_w = p_v2n_w;
  for (int k = 0; k < ch.K; ++k) {
    const auto interference = prev_interference(ch, prev, k, p_v2n_w);
    int best = 0;
    for (int n = 1; n < ch.N; ++n)
      if (interference[n] < interference[best]) best = n;
    a.band[k] = best;
  }
  (void)l_q;
  return a;
}

Allocation baseline_random(int n_pairs, int n_bands, int l_q, double p_max_w,
                           double p_v2n_w, SplitMix64& rng) {
  return random_allocation(n_pairs, n_bands, l_q, p_max_w, p_v2n_w, rng);
}

std::vector<SlotMetrics> evaluate_baseline(BaselinePolicy policy,
                                           const EnvConfig& cfg,
                                           const RewardWeights& weights,
                                           int episodes, int steps_per_episode,
                                           std::uint64_t master_seed, int l_q,
                                           StreamSet streams) {
  cfg.validate();
  const int n_pairs = cfg.num_pairs();
  TrainHyper hyper;
  hyper.l_q = l_q;
  const bool eval = streams == StreamSet::kEval;
  const char* topo = eval ? "eval-topology" : "topology";
  const char* fading = eval ? "eval-fading" : "fading";
  const char* init_alloc = eval ? "eval-init-alloc" : "init-alloc";
  SplitMix64 rng(stream_seed(master_seed, "baseline"));
  std::vector<SlotMetrics> metrics;
  metrics.reserve(static_cast<std::size_t>(episodes) * steps_per_episode);

  for (int episode = 0; episode < episodes; ++episode) {
    EpisodeEnv env =
        start_episode(cfg, hyper, master_seed, topo, fading, init_alloc,
                      episode);
    for (int t = 0; t < steps_per_episode; ++t) {
      Allocation alloc =
          policy == BaselinePolicy::kRandom
              ? baseline_random(n_pairs, cfg.n_v2n, l_q, cfg.p_max_w(),
                                cfg.p_v2n_w(), rng)
              : baseline_full_power(env.ch, env.alloc, cfg.p_v2n_w(),
                                    cfg.p_max_w(), l_q);
      SlotMetrics m;
      m.episode = episode;
      m.t = t;
      m.report = evaluate_slot(env.ch, alloc, cfg, weights, &env.virtual_mask);
      metrics.push_back(std::move(m));
      advance_episode(env, cfg, master_seed, fading, episode, t + 1, alloc);
    }
  }
  return metrics;
}

namespace {

std::vector<double> joint_state(const std::vector<std::vector<double>>& states) {
  std::vector<double> s;
  for (const auto& part : states) s.insert(s.end(), part.begin(), part.end());
  return s;
}

// Per-segment argmax over the factored output head.
std::vector<int> decode_joint(const std::vector<double>& q, int n_segments,
                              int seg_width) {
  std::vector<int> actions(n_segments);
  for (int k = 0; k < n_segments; ++k) {
    const int base = k * seg_width;
    int best = 0;
    for (int i = 1; i < seg_width; ++i)
      if (q[base + i] > q[base + best]) best = i;
    actions[k] = base + best;
  }
  return actions;
}

}  // namespace

SadrlAgent train_sadrl(const EnvConfig& cfg, const TrainHyper& hyper,
                       const RewardWeights& weights, int episodes,
                       int steps_per_episode, std::uint64_t master_seed) {
  cfg.validate();
  const int n_pairs = cfg.num_pairs();
  const int seg_width = cfg.n_v2n * hyper.l_q;
  const int input_dim = n_pairs * (n_pairs + 2) * cfg.n_v2n;
  const int output_dim = n_pairs * seg_width;

  SadrlAgent agent;
  agent.l_q = hyper.l_q;
  agent.n_segments = n_pairs;
  agent.net = build_mlp(input_dim, output_dim,
                        stream_seed(master_seed, "sadrl-weights"),
                        hyper.linear_output);
  agent.target = agent.net;

  ReplayBuffer<SadrlExperience> replay(hyper.replay_capacity);
  SplitMix64 explore_rng(stream_seed(master_seed, "sadrl-exploration"));
  SplitMix64 replay_rng(stream_seed(master_seed, "sadrl-replay"));

  double eps = hyper.eps0;
  double lr = hyper.lr0;
  long global_step = 0;
  Batch batch;

  for (int episode = 0; episode < episodes; ++episode) {
    EpisodeEnv env = start_episode(cfg, hyper, master_seed, "topology",
                                   "fading", "init-alloc", episode);
    std::vector<std::vector<double>> parts(n_pairs);
    for (int k = 0; k < n_pairs; ++k)
      parts[k] = build_state(k, env.ch, env.alloc, cfg.p_v2n_w(),
                             env.virtual_mask[k]);
    std::vector<double> state = joint_state(parts);

    for (int t = 0; t < steps_per_episode; ++t) {
      const auto q = forward(agent.net, state);
      std::vector<int> actions = decode_joint(q, n_pairs, seg_width);
      for (int k = 0; k < n_pairs; ++k)
        if (eps > 0.0 && explore_rng.uniform01() < eps)
          actions[k] =
              k * seg_width + static_cast<int>(explore_rng.below(seg_width));

      Allocation alloc;
      alloc.band.resize(n_pairs);
      alloc.power_w.resize(n_pairs);
      alloc.p_v2n_w = cfg.p_v2n_w();
      for (int k = 0; k < n_pairs; ++k) {
        const BandLevel bl =
            decode_action(actions[k] - k * seg_width, cfg.n_v2n, hyper.l_q);
        alloc.band[k] = bl.band;
        alloc.power_w[k] = power_of_level(bl.level, hyper.l_q, cfg.p_max_w());
      }

      const SlotReport report =
          evaluate_slot(env.ch, alloc, cfg, weights, &env.virtual_mask);
      advance_episode(env, cfg, master_seed, "fading", episode, t + 1, alloc);
      for (int k = 0; k < n_pairs; ++k)
        parts[k] = build_state(k, env.ch, env.alloc, cfg.p_v2n_w(),
                               env.virtual_mask[k]);
      std::vector<double> next_state = joint_state(parts);
      replay.push({state, actions, report.reward, next_state});

      double slot_loss = 0.0;
      if (global_step > hyper.warmup_steps &&
          replay.size() >= static_cast<std::size_t>(hyper.batch_size)) {
        const auto sampled = replay.sample(
            static_cast<std::size_t>(hyper.batch_size), replay_rng);
        batch.x.clear();
        batch.action.clear();
        batch.target.clear();
        for (const SadrlExperience* e : sampled) {
          const auto next_q = forward(agent.target, e->s2);
          for (int k = 0; k < n_pairs; ++k) {
            const int base = k * seg_width;
            double max_next = next_q[base];
            for (int i = 1; i < seg_width; ++i)
              max_next = std::max(max_next, next_q[base + i]);
            batch.x.push_back(e->s);
            batch.action.push_back(e->a[k]);
            batch.target.push_back(e->r + hyper.discount * max_next);
          }
        }
        slot_loss = backward_update(agent.net, batch, lr);
        if (global_step % hyper.target_copy_steps == 0)
          copy_weights(agent.net, agent.target);
      }

      TrainLogRow row;
      row.step = global_step;
      row.episode = episode;
      row.epsilon = eps;
      row.lr = lr;
      row.loss = slot_loss;
      row.reward = report.reward;
      row.link_eps = report.v2v_eps;
      agent.log.push_back(std::move(row));

      state = std::move(next_state);
      eps = std::max(0.0, (1.0 - hyper.eps_decay) * eps);
      lr = (1.0 - hyper.lr_decay) * lr;
      ++global_step;
    }
  }
  return agent;
}

std::vector<SlotMetrics> execute_sadrl(const SadrlAgent& agent,
                                       const EnvConfig& cfg,
                                       const RewardWeights& weights,
                                       int episodes, int steps_per_episode,
                                       std::uint64_t master_seed) {
  cfg.validate();
  const int n_pairs = cfg.num_pairs();
  const int seg_width = cfg.n_v2n * agent.l_q;
  TrainHyper hyper;
  hyper.l_q = agent.l_q;
  std::vector<SlotMetrics> metrics;

  for (int episode = 0; episode < episodes; ++episode) {
    EpisodeEnv env = start_episode(cfg, hyper, master_seed, "eval-topology",
                                   "eval-fading", "eval-init-alloc", episode);
    std::vector<std::vector<double>> parts(n_pairs);
    for (int t = 0; t < steps_per_episode; ++t) {
      for (int k = 0; k < n_pairs; ++k)
        parts[k] = build_state(k, env.ch, env.alloc, cfg.p_v2n_w(),
                               env.virtual_mask[k]);
      const auto q = forward(agent.net, joint_state(parts));
      const auto actions = decode_joint(q, n_pairs, seg_width);

      Allocation alloc;
      alloc.band.resize(n_pairs);
      alloc.power_w.resize(n_pairs);
      alloc.p_v2n_w = cfg.p_v2n_w();
      for (int k = 0; k < n_pairs; ++k) {
        const BandLevel bl =
            decode_action(actions[k] - k * seg_width, cfg.n_v2n, agent.l_q);
        alloc.band[k] = bl.band;
        alloc.power_w[k] = power_of_level(bl.level, agent.l_q, cfg.p_max_w());
      }
      SlotMetrics m;
      m.episode = episode;
      m.t = t;
      m.report = evaluate_slot(env.ch, alloc, cfg, weights, &env.virtual_mask);
      metrics.push_back(std::move(m));
      advance_episode(env, cfg, master_seed, "eval-fading", episode, t + 1,
                      alloc);
    }
  }
  return metrics;
}

}  // namespace v2x
