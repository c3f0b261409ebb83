#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "v2x/phy.hpp"

using namespace v2x;

namespace {

constexpr double kBw = 180.0e3;
constexpr double kDt = 1.0e-3;
constexpr int kPayload = 100;

// one V2V pair, two bands, all gains controllable
ChannelMatrix tiny_channels(int K, int N, double fill = 1.0e-30) {
  ChannelMatrix ch;
  ch.K = K;
  ch.N = N;
  ch.v2v_direct.assign(K * N, fill);
  ch.v2v_cross.assign(K * K * N, fill);
  ch.v2n_to_v2v.assign(N * K, fill);
  ch.v2v_to_bs.assign(K * N, fill);
  ch.v2n_to_bs.assign(N, fill);
  return ch;
}

}  // namespace

TEST_CASE("v2n sinr definition") {
  const double noise = 1.0e-13;
  ChannelMatrix ch = tiny_channels(2, 2);
  Allocation a;
  a.band = {1, 1};           // nobody on band 0
  a.power_w = {0.1, 0.1};
  a.p_v2n_w = 1.0;
  ch.v2n_to_bs[0] = noise;   // received signal power == noise

  CHECK(v2n_sinr(ch, a, 0, noise) == doctest::Approx(1.0).epsilon(1e-9));

  // one sharer contributing 2*noise of interference
  a.band = {0, 1};
  a.power_w = {2.0, 0.1};
  ch.v2v_to_bs[0 * 2 + 0] = noise;  // link 0 on band 0: 2.0 * noise
  CHECK(v2n_sinr(ch, a, 0, noise) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

  // doubling every sharer's power strictly decreases the SINR
  const double before = v2n_sinr(ch, a, 0, noise);
  for (auto& p : a.power_w) p *= 2.0;
  CHECK(v2n_sinr(ch, a, 0, noise) < before);

  CHECK_THROWS_AS(v2n_sinr(ch, a, 5, noise), std::out_of_range);
}

TEST_CASE("v2n rate") {
  CHECK(v2n_rate(1.0, kBw) == doctest::Approx(180.0e3).epsilon(1e-12));
  CHECK(v2n_rate(0.0, kBw) == 0.0);
  CHECK(v2n_rate(3.0, kBw) == doctest::Approx(360.0e3).epsilon(1e-12));
}

TEST_CASE("v2v sinr definition") {
  const double noise = 1.0e-13;
  ChannelMatrix ch = tiny_channels(2, 2);
  Allocation a;
  a.band = {0, 1};
  a.power_w = {1.0, 1.0};
  a.p_v2n_w = 1.0;

  // sole occupant, V2N interferer negligible, signal == noise
  ch.v2v_direct[0 * 2 + 0] = noise;
  CHECK(v2v_sinr(ch, a, 0, noise) == doctest::Approx(1.0).epsilon(1e-9));

  a.power_w[0] = 0.0;
  CHECK(v2v_sinr(ch, a, 0, noise) == 0.0);

  // a co-band link never increases the SINR
  a.power_w = {1.0, 1.0};
  const double alone = v2v_sinr(ch, a, 0, noise);
  a.band[1] = 0;
  ch.v2v_cross[(1 * 2 + 0) * 2 + 0] = noise;
  CHECK(v2v_sinr(ch, a, 0, noise) < alone);
}

TEST_CASE("q_inverse round-trips against the erfc oracle") {
  CHECK(q_inverse(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(q_inverse(1.0e-5) == doctest::Approx(4.264890793922825).epsilon(1e-9));
  for (double p = 1.0e-1; p >= 1.0e-8; p /= 10.0) {
    const double x = q_inverse(p);
    const double back = 0.5 * std::erfc(x / std::sqrt(2.0));  // oracle
    CHECK(std::fabs(back - p) / p < 1.0e-9);
  }
  CHECK_THROWS_AS(q_inverse(0.0), std::domain_error);
  CHECK_THROWS_AS(q_inverse(1.0), std::domain_error);
  CHECK_THROWS_AS(q_inverse(-0.5), std::domain_error);
}

TEST_CASE("decoding error probability") {
  // C(gamma) == coding rate  =>  eps = 1/2
  const double gamma_star = std::pow(2.0, 100.0 / 180.0) - 1.0;
  CHECK(decoding_error_prob(gamma_star, kBw, kDt, kPayload) ==
        doctest::Approx(0.5).epsilon(1e-9));

  CHECK(decoding_error_prob(0.0, kBw, kDt, kPayload) == 1.0);

  // gamma=10: argument ~27.12, eps far below 1e-12
  CHECK(decoding_error_prob(10.0, kBw, kDt, kPayload) < 1.0e-12);

  // monotone nonincreasing in gamma and in blocklength
  double prev = 1.1;
  for (double g : {0.01, 0.1, 0.3, 0.5, 1.0, 2.0, 5.0, 10.0}) {
    const double e = decoding_error_prob(g, kBw, kDt, kPayload);
    CHECK(e <= prev);
    prev = e;
  }
  const double g = 0.8;
  CHECK(decoding_error_prob(g, 2.0 * kBw, kDt, kPayload) <=
        decoding_error_prob(g, kBw, kDt, kPayload));
  CHECK(decoding_error_prob(g, 10.0 * kBw, kDt, kPayload) <=
        decoding_error_prob(g, 2.0 * kBw, kDt, kPayload));
}

TEST_CASE("finite-blocklength rate") {
  // eps = 1/2 removes the dispersion penalty
  CHECK(v2v_rate_fbl(3.0, 0.5, kBw, kDt) ==
        doctest::Approx(kBw * 2.0).epsilon(1e-9));
  CHECK(v2v_rate_fbl(0.0, 1.0e-5, kBw, kDt) == 0.0);
  CHECK(v2v_rate_fbl(10.0, 1.0e-5, kBw, kDt) ==
        doctest::Approx(540489.206).epsilon(1e-6));
  CHECK_THROWS_AS(v2v_rate_fbl(1.0, 0.0, kBw, kDt), std::domain_error);
  CHECK_THROWS_AS(v2v_rate_fbl(1.0, 1.0, kBw, kDt), std::domain_error);

  // below Shannon for eps < 1/2, approaching it as the blocklength grows
  const double gamma = 2.0, eps2 = 1.0e-3;
  const double shannon = kBw * std::log2(1.0 + gamma);
  double prev_gap = 1.0e300;
  for (double mult : {1.0, 10.0, 100.0}) {  // m = 180, 1800, 18000
    const double r = v2v_rate_fbl(gamma, eps2, kBw, mult * kDt);
    CHECK(r <= shannon);
    const double gap = shannon - r;
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
}

TEST_CASE("error/rate round trip recovers the coding rate") {
  int checked = 0;
  for (double gamma : {0.3, 0.5, 0.8, 1.2, 2.0}) {
    for (double bw : {90.0e3, 180.0e3, 360.0e3}) {
      const double eps = decoding_error_prob(gamma, bw, kDt, kPayload);
      // eps within ~1e-8 of 1 no longer carries enough precision in a
      // double for the inversion; the identity holds on the rest.
      if (eps <= 0.0 || eps >= 1.0 - 1.0e-8) continue;
      const double rate = v2v_rate_fbl(gamma, eps, bw, kDt);
      const double coding_rate = kPayload / kDt;
      CHECK(std::fabs(rate - coding_rate) / coding_rate < 1.0e-6);
      ++checked;
    }
  }
  CHECK(checked >= 10);
}

TEST_CASE("throughput") {
  CHECK(v2v_throughput(1.0e5, 0.0) == 1.0e5);
  CHECK(v2v_throughput(1.0e5, 1.0) == 0.0);
  CHECK(v2v_throughput(1.0e5, 0.2) == doctest::Approx(8.0e4).epsilon(1e-12));
}

TEST_CASE("reward normalisation and penalty") {
  CHECK(RewardWeights::defaults_for(4).lambda1 ==
        doctest::Approx(1.0 / 20.0).epsilon(1e-15));

  RewardWeights w = RewardWeights::defaults_for(1);
  SlotReport rep;
  rep.v2n_rate_bps = {0.0};
  rep.v2v_eps = {0.0};
  rep.v2v_throughput_bps = {0.0};
  rep.v2v_shannon_se = {0.0};
  CHECK(reward_value(rep, w, kBw) == 0.0);  // R'=0 guard included

  // a single violation of 0.1 with everything else zero
  rep.v2v_eps = {w.eps_max[0] + 0.1};
  CHECK(reward_value(rep, w, kBw) == doctest::Approx(-0.1).epsilon(1e-12));

  // reward weakly decreases when eps crosses the ceiling
  rep.v2n_rate_bps = {1.0e5};
  rep.v2v_throughput_bps = {5.0e4};
  rep.v2v_shannon_se = {1.0};
  rep.v2v_eps = {w.eps_max[0] * 0.5};
  const double ok = reward_value(rep, w, kBw);
  rep.v2v_eps = {w.eps_max[0] + 0.2};
  CHECK(reward_value(rep, w, kBw) < ok);
}

TEST_CASE("objective") {
  RewardWeights w;
  w.omega1 = 1.0;
  w.omega2 = 1.0;
  SlotReport rep;
  rep.v2n_rate_bps = {5.0};
  rep.v2v_throughput_bps = {3.0};
  rep.v2v_eps = {0.0};
  rep.v2v_shannon_se = {0.0};
  CHECK(objective_value(rep, w) == doctest::Approx(8.0).epsilon(1e-12));
  w.omega2 = 0.0;
  CHECK(objective_value(rep, w) == doctest::Approx(5.0).epsilon(1e-12));
  rep.v2n_rate_bps = {0.0};
  rep.v2v_throughput_bps = {0.0};
  w.omega2 = 1.0;
  CHECK(objective_value(rep, w) == 0.0);
}
