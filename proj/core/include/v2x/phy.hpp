#pragma once

#include <vector>

#include "v2x/env.hpp"

namespace v2x {

// Joint decision of one slot: each V2V link holds exactly one sub-band and
// one transmit power; the V2N uplink power is fixed.
struct Allocation {
  std::vector<int> band;       // [k] -> sub-band in [0, N)
  std::vector<double> power_w; // [k] -> watts, 0 <= p <= P_max
  double p_v2n_w = 0.0;
};

// Per-link reliability thresholds and the reward / objective weights.
// lambda2 <= 0 selects the per-slot normalisation 1/R' where R' is the sum
// V2V Shannon spectral efficiency of that slot.
struct RewardWeights {
  double lambda1 = 0.05;
  double lambda2 = 0.0;
  double lambda3 = 1.0;
  double omega1 = 1.0;
  double omega2 = 1.0;
  std::vector<double> eps_max;  // per V2V link, in (0,1)

  static RewardWeights defaults_for(int k_v2v);
};

// Everything measured in one slot under a given allocation.
struct SlotReport {
  std::vector<double> v2n_rate_bps;       // per n
  std::vector<double> v2v_sinr;           // per k
  std::vector<double> v2v_eps;            // per k
  std::vector<double> v2v_throughput_bps; // per k
  std::vector<double> v2v_shannon_se;     // C(gamma_k), bps/Hz
  std::vector<bool> v2v_virtual;          // per k
  double reward = 0.0;
  double objective = 0.0;

  double v2n_sum_rate_bps() const;
  double network_sum_rate_bps() const;
  // Worst decoding error over real (non-virtual) links.
  double worst_eps() const;
};

double v2n_sinr(const ChannelMatrix& ch, const Allocation& a, int n,
                double noise_w);
double v2n_rate(double gamma, double bandwidth_hz);
double v2v_sinr(const ChannelMatrix& ch, const Allocation& a, int k,
                double noise_w);

// Gaussian tail Q(x) and its inverse. q_inverse uses a rational
// approximation refined by Newton steps; |error| <= 1e-9 on (0,1).
double q_function(double x);
double q_inverse(double p);

// Finite-blocklength decoding error for payload_bits over m = B_w * dt
// symbols at SINR gamma; returns 1 at gamma = 0.
double decoding_error_prob(double gamma, double bandwidth_hz, double dt_s,
                           int payload_bits);

// Normal-approximation achievable rate at blocklength m and target error
// eps, floored at 0. eps outside (0,1) is a domain error.
double v2v_rate_fbl(double gamma, double eps, double bandwidth_hz,
                    double dt_s);

double v2v_throughput(double rate_bps, double eps);

// r = l1 * sum_n R_n + l2 * sum_k T_k - l3 * sum_k max(eps_k - eps_max_k, 0).
// Rates enter as spectral efficiencies so the three terms stay comparable;
// virtual links are skipped. If the slot's sum Shannon SE is zero the second
// term is zero.
double reward_value(const SlotReport& rep, const RewardWeights& w,
                    double bandwidth_hz);

// Eq-style network utility: omega1 * sum_n R_n + omega2 * sum_k T_k, in bps.
double objective_value(const SlotReport& rep, const RewardWeights& w);

// Computes the full SlotReport (SINRs, rates, error probabilities,
// throughputs, reward and objective) for one slot.
SlotReport evaluate_slot(const ChannelMatrix& ch, const Allocation& a,
                         const EnvConfig& cfg, const RewardWeights& w,
                         const std::vector<bool>* virtual_mask = nullptr);

}  // namespace v2x
