#include "v2x/phy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace v2x {

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kSqrt2 = 1.4142135623730951;

double shannon_se(double gamma) { return std::log2(1.0 + gamma); }

double dispersion(double gamma) {
  const double a = 1.0 + gamma;
  return 1.0 - 1.0 / (a * a);
}

// Acklam's rational approximation of the standard normal quantile.
double norm_quantile_approx(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double q, r;
  if (p < p_low) {
    q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p <= 1.0 - p_low) {
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r +
            a[5]) *
           q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  q = std::sqrt(-2.0 * std::log(1.0 - p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
           c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / 2.5066282746310002;
}

}  // namespace

double q_function(double x) { return 0.5 * std::erfc(x / kSqrt2); }

double q_inverse(double p) {
  if (!(p > 0.0) || !(p < 1.0))
    throw std::domain_error("q_inverse: p must be in (0,1)");
  // Q(x) = p  <=>  x = Phi^{-1}(1-p) = -Phi^{-1}(p)
  double x = -norm_quantile_approx(p);
  // Newton refinement on f(x) = Q(x) - p, f'(x) = -pdf(x).
  for (int i = 0; i < 2; ++i) {
    const double pdf = norm_pdf(x);
    if (pdf <= 0.0) break;  // |x| > ~38, approximation already at fp limit
    x += (q_function(x) - p) / pdf;
  }
  return x;
}

double v2n_sinr(const ChannelMatrix& ch, const Allocation& a, int n,
                double noise_w) {
  if (n < 0 || n >= ch.N) throw std::out_of_range("v2n_sinr: band index");
  double interference = 0.0;
  for (int k = 0; k < ch.K; ++k)
    if (a.band[k] == n) interference += a.power_w[k] * ch.to_bs(k, n);
  return a.p_v2n_w * ch.v2n_direct(n) / (noise_w + interference);
}

double v2n_rate(double gamma, double bandwidth_hz) {
  return bandwidth_hz * shannon_se(gamma);
}

double v2v_sinr(const ChannelMatrix& ch, const Allocation& a, int k,
                double noise_w) {
  if (k < 0 || k >= ch.K) throw std::out_of_range("v2v_sinr: link index");
  const int n = a.band[k];
  double interference = a.p_v2n_w * ch.v2n_interf(n, k);
  for (int kp = 0; kp < ch.K; ++kp)
    if (kp != k && a.band[kp] == n)
      interference += a.power_w[kp] * ch.cross(kp, k, n);
  return a.power_w[k] * ch.direct(k, n) / (noise_w + interference);
}

double decoding_error_prob(double gamma, double bandwidth_hz, double dt_s,
                           int payload_bits) {
  if (gamma < 0.0)
    throw std::domain_error("decoding_error_prob: gamma must be >= 0");
  const double m = bandwidth_hz * dt_s;
  if (m < 1.0)
    throw std::invalid_argument("decoding_error_prob: blocklength < 1");
  if (gamma == 0.0) return 1.0;  // V -> 0 with C below the coding rate
  const double v = dispersion(gamma);
  const double arg = kLn2 * std::sqrt(m / v) *
                     (shannon_se(gamma) - static_cast<double>(payload_bits) / m);
  return q_function(arg);
}

double v2v_rate_fbl(double gamma, double eps, double bandwidth_hz,
                    double dt_s) {
  if (gamma < 0.0) throw std::domain_error("v2v_rate_fbl: gamma must be >= 0");
  if (!(eps > 0.0) || !(eps < 1.0))
    throw std::domain_error("v2v_rate_fbl: eps must be in (0,1)");
  const double m = bandwidth_hz * dt_s;
  if (m < 1.0) throw std::invalid_argument("v2v_rate_fbl: blocklength < 1");
  if (gamma == 0.0) return 0.0;
  const double rate =
      bandwidth_hz * (shannon_se(gamma) -
                      std::sqrt(dispersion(gamma) / m) * q_inverse(eps) / kLn2);
  return std::max(0.0, rate);
}

double v2v_throughput(double rate_bps, double eps) {
  return rate_bps * (1.0 - eps);
}

RewardWeights RewardWeights::defaults_for(int k_v2v) {
  RewardWeights w;
  w.lambda1 = 1.0 / (5.0 * k_v2v);
  w.lambda2 = 0.0;  // per-slot 1/R'
  w.lambda3 = 1.0;
  w.omega1 = 1.0;
  w.omega2 = 1.0;
  w.eps_max.assign(k_v2v, 1.0e-3);
  return w;
}

double SlotReport::v2n_sum_rate_bps() const {
  double s = 0.0;
  for (double r : v2n_rate_bps) s += r;
  return s;
}

double SlotReport::network_sum_rate_bps() const {
  double s = v2n_sum_rate_bps();
  for (std::size_t k = 0; k < v2v_throughput_bps.size(); ++k)
    if (v2v_virtual.empty() || !v2v_virtual[k]) s += v2v_throughput_bps[k];
  return s;
}

double SlotReport::worst_eps() const {
  double worst = 0.0;
  for (std::size_t k = 0; k < v2v_eps.size(); ++k)
    if (v2v_virtual.empty() || !v2v_virtual[k])
      worst = std::max(worst, v2v_eps[k]);
  return worst;
}

double reward_value(const SlotReport& rep, const RewardWeights& w,
                    double bandwidth_hz) {
  double v2n_se = 0.0;
  for (double r : rep.v2n_rate_bps) v2n_se += r / bandwidth_hz;

  double tput_se = 0.0, shannon_se_sum = 0.0, penalty = 0.0;
  for (std::size_t k = 0; k < rep.v2v_eps.size(); ++k) {
    if (!rep.v2v_virtual.empty() && rep.v2v_virtual[k]) continue;
    tput_se += rep.v2v_throughput_bps[k] / bandwidth_hz;
    shannon_se_sum += rep.v2v_shannon_se[k];
    const double ceiling = k < w.eps_max.size() ? w.eps_max[k] : 1.0;
    penalty += std::max(rep.v2v_eps[k] - ceiling, 0.0);
  }
  const double lambda2 =
      w.lambda2 > 0.0 ? w.lambda2
                      : (shannon_se_sum > 0.0 ? 1.0 / shannon_se_sum : 0.0);
  return w.lambda1 * v2n_se + lambda2 * tput_se - w.lambda3 * penalty;
}

double objective_value(const SlotReport& rep, const RewardWeights& w) {
  double tput = 0.0;
  for (std::size_t k = 0; k < rep.v2v_throughput_bps.size(); ++k)
    if (rep.v2v_virtual.empty() || !rep.v2v_virtual[k])
      tput += rep.v2v_throughput_bps[k];
  return w.omega1 * rep.v2n_sum_rate_bps() + w.omega2 * tput;
}

SlotReport evaluate_slot(const ChannelMatrix& ch, const Allocation& a,
                         const EnvConfig& cfg, const RewardWeights& w,
                         const std::vector<bool>* virtual_mask) {
  const double noise_w = cfg.noise_power_w();
  SlotReport rep;
  rep.v2n_rate_bps.resize(ch.N);
  rep.v2v_sinr.resize(ch.K);
  rep.v2v_eps.resize(ch.K);
  rep.v2v_throughput_bps.resize(ch.K);
  rep.v2v_shannon_se.resize(ch.K);
  if (virtual_mask)
    rep.v2v_virtual.assign(virtual_mask->begin(), virtual_mask->end());

  for (int n = 0; n < ch.N; ++n)
    rep.v2n_rate_bps[n] =
        v2n_rate(v2n_sinr(ch, a, n, noise_w), cfg.bandwidth_hz);

  for (int k = 0; k < ch.K; ++k) {
    const double gamma = v2v_sinr(ch, a, k, noise_w);
    const double eps =
        decoding_error_prob(gamma, cfg.bandwidth_hz, cfg.slot_s,
                            cfg.payload_bits);
    rep.v2v_sinr[k] = gamma;
    rep.v2v_eps[k] = eps;
    rep.v2v_shannon_se[k] = shannon_se(gamma);
    // The transmitter sends at the coding rate payload/dt; what gets through
    // is that rate discounted by the decoding error.
    const double coded_rate_bps = cfg.payload_bits / cfg.slot_s;
    rep.v2v_throughput_bps[k] = v2v_throughput(coded_rate_bps, eps);
  }

  rep.reward = reward_value(rep, w, cfg.bandwidth_hz);
  rep.objective = objective_value(rep, w);
  return rep;
}

}  // namespace v2x
