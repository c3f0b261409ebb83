#include "v2x/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "v2x/rng.hpp"

namespace v2x {

namespace {

constexpr double kSpeedOfLight = 299792458.0;
constexpr double kMinLinkDistanceM = 1.0;

double dbm_to_w(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double wrap(double v, double span) {
  v = std::fmod(v, span);
  return v < 0.0 ? v + span : v;
}

// Shortest displacement on the torus.
double torus_delta(double a, double b, double span) {
  double d = std::fabs(a - b);
  return std::min(d, span - d);
}

double torus_distance(const Vehicle& a, const Vehicle& b, double w, double h) {
  const double dx = torus_delta(a.x, b.x, w);
  const double dy = torus_delta(a.y, b.y, h);
  return std::max(kMinLinkDistanceM, std::hypot(dx, dy));
}

}  // namespace

double EnvConfig::noise_power_w() const { return dbm_to_w(noise_power_dbm); }
double EnvConfig::p_max_w() const { return dbm_to_w(p_max_dbm); }
double EnvConfig::p_v2n_w() const { return dbm_to_w(p_v2n_dbm); }

void EnvConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string("EnvConfig: ") + name +
                                  " must be positive and finite");
  };
  if (k_v2v < 1 || n_v2n < 1)
    throw std::invalid_argument("EnvConfig: K and N must be >= 1");
  if (lanes < 1) throw std::invalid_argument("EnvConfig: lanes must be >= 1");
  positive(area_width_m, "area_width_m");
  positive(area_height_m, "area_height_m");
  positive(min_spacing_m, "min_spacing_m");
  positive(carrier_freq_hz, "carrier_freq_hz");
  if (speed_mps < 0.0 || !std::isfinite(speed_mps))
    throw std::invalid_argument("EnvConfig: speed_mps must be >= 0");
  positive(bandwidth_hz, "bandwidth_hz");
  positive(shadowing_std_db, "shadowing_std_db");
  positive(slot_s, "slot_s");
  positive(virtual_gain_floor, "virtual_gain_floor");
  if (payload_bits < 1)
    throw std::invalid_argument("EnvConfig: payload_bits must be >= 1");
}

double cellular_path_loss_db(double d_m) {
  const double d_km = std::max(d_m, kMinLinkDistanceM) / 1000.0;
  return 128.1 + 37.6 * std::log10(d_km);
}

double winner_b1_path_loss_db(double d_m, double carrier_freq_hz) {
  constexpr double A = 22.7, B = 41.0, C = 20.0;
  const double d = std::max(d_m, kMinLinkDistanceM);
  const double f_ghz = carrier_freq_hz / 1.0e9;
  return A * std::log10(d) + B + C * std::log10(f_ghz / 5.0);
}

double coherence_time_s(double carrier_freq_hz, double speed_mps) {
  if (!(speed_mps > 0.0))
    throw std::domain_error("coherence_time: speed must be > 0");
  const double f_d = carrier_freq_hz * speed_mps / kSpeedOfLight;
  return std::sqrt(9.0 / (16.0 * M_PI * f_d * f_d));
}

WorldState init_topology(const EnvConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int n_veh = cfg.num_vehicles();

  // Quick feasibility bound before attempting the rejection sampler: each
  // vehicle excludes a disc of radius min_spacing/2.
  const double excluded =
      n_veh * M_PI * 0.25 * cfg.min_spacing_m * cfg.min_spacing_m;
  if (excluded > 0.5 * cfg.area_width_m * cfg.area_height_m)
    throw std::invalid_argument(
        "init_topology: area too small for requested vehicle count at the "
        "configured minimum spacing");

  WorldState w;
  w.area_width_m = cfg.area_width_m;
  w.area_height_m = cfg.area_height_m;
  w.speed_mps = cfg.speed_mps;
  w.slot_index = 0;

  SplitMix64 rng(stream_seed(seed, "topology"));
  const double lane_pitch = cfg.area_height_m / cfg.lanes;

  int attempts = 0;
  while (static_cast<int>(w.vehicles.size()) < n_veh) {
    if (++attempts > 1000 * n_veh)
      throw std::invalid_argument(
          "init_topology: could not place vehicles with minimum spacing; "
          "area too small");
    Vehicle v;
    v.x = rng.uniform01() * cfg.area_width_m;
    v.y = rng.uniform01() * cfg.area_height_m;
    bool ok = true;
    for (const Vehicle& u : w.vehicles) {
      if (torus_distance(u, v, cfg.area_width_m, cfg.area_height_m) <
          cfg.min_spacing_m) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    // Snap to the nearest lane; adjacent lanes run in opposite directions.
    int lane = static_cast<int>(v.y / lane_pitch);
    lane = std::min(lane, cfg.lanes - 1);
    v.lane_id = lane;
    v.hx = (lane % 2 == 0) ? 1.0 : -1.0;
    v.hy = 0.0;
    w.vehicles.push_back(v);
  }

  w.v2n_links.resize(cfg.n_v2n);
  for (int n = 0; n < cfg.n_v2n; ++n) w.v2n_links[n] = n;

  const int n_pairs = cfg.num_pairs();
  w.v2v_pairs.resize(n_pairs);
  for (int k = 0; k < n_pairs; ++k) {
    int nearest = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n_veh; ++j) {
      if (j == k) continue;
      const double d = torus_distance(w.vehicles[k], w.vehicles[j],
                                      cfg.area_width_m, cfg.area_height_m);
      if (d < best) {
        best = d;
        nearest = j;
      }
    }
    if (nearest < 0) nearest = k;  // single-vehicle corner: self pair
    w.v2v_pairs[k] = {k, nearest, k >= cfg.k_v2v};
  }

  // Per-episode log-normal shadowing, one draw per directed vehicle pair and
  // per vehicle->BS path.
  w.shadow_v2v_db.resize(static_cast<std::size_t>(n_veh) * n_veh);
  w.shadow_bs_db.resize(n_veh);
  for (int i = 0; i < n_veh; ++i) {
    for (int j = 0; j < n_veh; ++j) {
      SplitMix64 s(stream_seed(seed, "shadow-v2v", i, j));
      w.shadow_v2v_db[static_cast<std::size_t>(i) * n_veh + j] =
          cfg.shadowing_std_db * s.normal();
    }
    SplitMix64 s(stream_seed(seed, "shadow-bs", i));
    w.shadow_bs_db[i] = cfg.shadowing_std_db * s.normal();
  }
  return w;
}

WorldState step_mobility(const WorldState& world, double dt_s) {
  if (!(dt_s > 0.0)) throw std::invalid_argument("step_mobility: dt must be > 0");
  WorldState next = world;
  for (Vehicle& v : next.vehicles) {
    v.x = wrap(v.x + world.speed_mps * dt_s * v.hx, world.area_width_m);
    v.y = wrap(v.y + world.speed_mps * dt_s * v.hy, world.area_height_m);
  }
  next.slot_index = world.slot_index + 1;
  return next;
}

namespace {

struct GainContext {
  const WorldState& w;
  const EnvConfig& cfg;
  std::uint64_t slot_seed;
  double bs_x, bs_y;
  double veh_ant_db;  // vehicle->vehicle link budget term
  double bs_ant_db;   // vehicle->BS link budget term

  double fading(std::uint64_t link_id, int band) const {
    SplitMix64 r(stream_seed(slot_seed, "fading", link_id, band));
    return r.exponential();
  }

  double v2v_gain(int tx, int rx, std::uint64_t link_id, int band) const {
    const double d = torus_distance(w.vehicles[tx], w.vehicles[rx],
                                    w.area_width_m, w.area_height_m);
    const double pl = winner_b1_path_loss_db(d, cfg.carrier_freq_hz);
    const double sh =
        w.shadow_v2v_db[static_cast<std::size_t>(tx) * w.vehicles.size() + rx];
    const double large_db = -(pl + sh) + veh_ant_db;
    return std::pow(10.0, large_db / 10.0) * fading(link_id, band);
  }

  double bs_gain(int tx, std::uint64_t link_id, int band) const {
    const double dx = w.vehicles[tx].x - bs_x;
    const double dy = w.vehicles[tx].y - bs_y;
    const double d = std::max(kMinLinkDistanceM, std::hypot(dx, dy));
    const double pl = cellular_path_loss_db(d);
    const double sh = w.shadow_bs_db[tx];
    const double large_db = -(pl + sh) + bs_ant_db;
    return std::pow(10.0, large_db / 10.0) * fading(link_id, band);
  }
};

}  // namespace

ChannelMatrix sample_channels(const WorldState& world, const EnvConfig& cfg,
                              std::uint64_t seed) {
  const int K = static_cast<int>(world.v2v_pairs.size());
  const int N = static_cast<int>(world.v2n_links.size());
  ChannelMatrix ch;
  ch.K = K;
  ch.N = N;
  ch.v2v_direct.assign(static_cast<std::size_t>(K) * N, 0.0);
  ch.v2v_cross.assign(static_cast<std::size_t>(K) * K * N, 0.0);
  ch.v2n_to_v2v.assign(static_cast<std::size_t>(N) * K, 0.0);
  ch.v2v_to_bs.assign(static_cast<std::size_t>(K) * N, 0.0);
  ch.v2n_to_bs.assign(N, 0.0);

  GainContext g{world,
                cfg,
                seed,
                0.5 * world.area_width_m,
                0.5 * world.area_height_m,
                2.0 * cfg.vehicle_antenna_gain_db - cfg.vehicle_noise_figure_db,
                cfg.vehicle_antenna_gain_db + cfg.bs_antenna_gain_db -
                    cfg.bs_noise_figure_db};

  // Stable link ids keep the fading stream of one link independent of all
  // others: [0, K*K) pair->pair, [K*K, K*K+N*K) v2n->pair, then pair->BS and
  // v2n->BS.
  const std::uint64_t kk = static_cast<std::uint64_t>(K) * K;
  const std::uint64_t nk = static_cast<std::uint64_t>(N) * K;

  for (int k = 0; k < K; ++k) {
    const V2VPair& p = world.v2v_pairs[k];
    for (int n = 0; n < N; ++n) {
      if (p.is_virtual) {
        ch.v2v_direct[k * N + n] = cfg.virtual_gain_floor;
        ch.v2v_to_bs[k * N + n] = cfg.virtual_gain_floor;
        continue;
      }
      ch.v2v_direct[k * N + n] =
          g.v2v_gain(p.tx, p.rx, static_cast<std::uint64_t>(k) * K + k, n);
      ch.v2v_to_bs[k * N + n] = g.bs_gain(p.tx, kk + nk + k, n);
    }
  }
  for (int ks = 0; ks < K; ++ks) {
    for (int kd = 0; kd < K; ++kd) {
      if (ks == kd) continue;
      const bool dead =
          world.v2v_pairs[ks].is_virtual || world.v2v_pairs[kd].is_virtual;
      for (int n = 0; n < N; ++n) {
        ch.v2v_cross[(static_cast<std::size_t>(ks) * K + kd) * N + n] =
            dead ? cfg.virtual_gain_floor
                 : g.v2v_gain(world.v2v_pairs[ks].tx, world.v2v_pairs[kd].rx,
                              static_cast<std::uint64_t>(ks) * K + kd, n);
      }
    }
  }
  for (int n = 0; n < N; ++n) {
    const int tx = world.v2n_links[n];
    for (int k = 0; k < K; ++k) {
      ch.v2n_to_v2v[static_cast<std::size_t>(n) * K + k] =
          world.v2v_pairs[k].is_virtual
              ? cfg.virtual_gain_floor
              : g.v2v_gain(tx, world.v2v_pairs[k].rx,
                           kk + static_cast<std::uint64_t>(n) * K + k, n);
    }
    ch.v2n_to_bs[n] = g.bs_gain(tx, kk + nk + static_cast<std::uint64_t>(K) + n, n);
  }
  return ch;
}

}  // namespace v2x
