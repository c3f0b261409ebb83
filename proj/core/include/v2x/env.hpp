#pragma once

#include <cstdint>
#include <vector>

namespace v2x {

// Scenario parameters for the vehicular network. Physical quantities carry
// their unit in the field name; validate() rejects non-physical values.
struct EnvConfig {
  int k_v2v = 4;  // V2V pairs carrying traffic
  int n_v2n = 4;  // V2N uplinks == orthogonal sub-bands

  double area_width_m = 100.0;
  double area_height_m = 100.0;
  int lanes = 4;
  double min_spacing_m = 5.0;

  double carrier_freq_hz = 2.0e9;
  double speed_mps = 60.0 / 3.6;
  double bandwidth_hz = 180.0e3;
  double noise_power_dbm = -114.0;
  double shadowing_std_db = 3.0;

  double bs_antenna_gain_db = 8.0;
  double bs_noise_figure_db = 5.0;
  double vehicle_antenna_gain_db = 3.0;
  double vehicle_noise_figure_db = 9.0;
  double bs_height_m = 25.0;
  double vehicle_height_m = 1.5;

  double p_max_dbm = 23.0;
  double p_v2n_dbm = 23.0;  // V2N uplink power, fixed
  double slot_s = 1.0e-3;
  int payload_bits = 100;

  // Gain applied to every link of a virtual (placeholder) pair.
  double virtual_gain_floor = 1.0e-20;

  std::uint64_t master_seed = 1;

  // One vehicle per V2N link plus extras when K > N; pair count matches so
  // the agent population has a fixed size.
  int num_vehicles() const { return k_v2v > n_v2n ? k_v2v : n_v2n; }
  int num_pairs() const { return num_vehicles(); }

  double noise_power_w() const;
  double p_max_w() const;
  double p_v2n_w() const;

  void validate() const;  // throws std::invalid_argument
};

struct Vehicle {
  double x = 0.0, y = 0.0;   // meters
  double hx = 1.0, hy = 0.0; // unit heading
  int lane_id = 0;
};

struct V2VPair {
  int tx = 0, rx = 0;
  bool is_virtual = false;
};

// Snapshot of the vehicular topology plus the per-episode slow fading draws.
// Shadowing is redrawn when the topology is generated (once per episode) and
// held fixed while vehicles move.
struct WorldState {
  double area_width_m = 0.0, area_height_m = 0.0;
  double speed_mps = 0.0;
  std::vector<Vehicle> vehicles;
  std::vector<int> v2n_links;      // vehicle index of the n-th uplink
  std::vector<V2VPair> v2v_pairs;  // K real pairs, then virtual padding
  long slot_index = 0;

  // shadowing in dB: [tx_vehicle * n + rx_vehicle] and [vehicle] -> BS
  std::vector<double> shadow_v2v_db;
  std::vector<double> shadow_bs_db;
};

// Linear power gains for every (transmitter, receiver, sub-band) triple of
// one scheduling slot. K counts all pairs including virtual ones.
struct ChannelMatrix {
  int K = 0, N = 0;
  std::vector<double> v2v_direct;  // [k*N + n]
  std::vector<double> v2v_cross;   // [(ksrc*K + kdst)*N + n], ksrc != kdst
  std::vector<double> v2n_to_v2v;  // [n*K + k]
  std::vector<double> v2v_to_bs;   // [k*N + n]
  std::vector<double> v2n_to_bs;   // [n]

  double direct(int k, int n) const { return v2v_direct[k * N + n]; }
  double cross(int ksrc, int kdst, int n) const {
    return v2v_cross[(ksrc * K + kdst) * N + n];
  }
  double v2n_interf(int n, int k) const { return v2n_to_v2v[n * K + k]; }
  double to_bs(int k, int n) const { return v2v_to_bs[k * N + n]; }
  double v2n_direct(int n) const { return v2n_to_bs[n]; }
};

// Cellular (vehicle -> BS) path loss, d in meters internally, model takes km.
double cellular_path_loss_db(double d_m);

// WINNER B1 LOS path loss between vehicles (A = 22.7, B = 41.0, C = 20).
double winner_b1_path_loss_db(double d_m, double carrier_freq_hz);

// sqrt(9 / (16 pi f_D^2)) with f_D = f_c v / c; throws for v <= 0.
double coherence_time_s(double carrier_freq_hz, double speed_mps);

// Drops num_vehicles() vehicles by a homogeneous spatial Poisson process
// (uniform given the count) with a minimum spacing, assigns lanes and
// headings, pairs each V2V transmitter with its nearest neighbour and flags
// the N-K virtual pairs. Deterministic in (cfg, seed).
WorldState init_topology(const EnvConfig& cfg, std::uint64_t seed);

// Advances every vehicle speed * dt along its heading, wrapping toroidally.
WorldState step_mobility(const WorldState& world, double dt_s);

// Samples all channel gains of the current slot: path loss from current
// positions, per-episode shadowing from the world, fresh Rayleigh fading per
// (link, sub-band) from `seed`. Virtual pairs get the configured gain floor.
ChannelMatrix sample_channels(const WorldState& world, const EnvConfig& cfg,
                              std::uint64_t seed);

}  // namespace v2x
