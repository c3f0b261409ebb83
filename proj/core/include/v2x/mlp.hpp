#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace v2x {

enum class Activation : std::uint8_t { kLinear = 0, kTanh = 1, kRelu = 2 };

// Feed-forward Q-network. Hidden widths follow the sizing rule
// (5*in+8, 3*in, 2*in) with activations Tanh/ReLU/Tanh and a ReLU output
// (switchable to linear). Flat row-major storage; double precision
// throughout. The RMSProp second moments live with the parameters so a
// checkpoint fully captures the optimiser state constants.
struct Mlp {
  std::vector<int> dims;                        // [in, h1, h2, h3, out]
  std::vector<Activation> acts;                 // one per affine layer
  std::vector<std::vector<double>> weights;     // [layer][out*in], row-major
  std::vector<std::vector<double>> biases;      // [layer][out]
  std::vector<std::vector<double>> rms_w;       // second moments
  std::vector<std::vector<double>> rms_b;
  double rms_decay = 0.9;
  double rms_eps = 1.0e-8;
  std::uint64_t init_seed = 0;

  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
  int layer_count() const { return static_cast<int>(acts.size()); }
};

// Arbitrary topology, uniform(+-1/sqrt(fan_in)) init.
Mlp make_mlp(std::vector<int> dims, std::vector<Activation> acts,
             std::uint64_t seed);

// Sizing-rule network for a given input/output width.
Mlp build_mlp(int input_dim, int output_dim, std::uint64_t seed,
              bool linear_output = false);

std::vector<double> forward(const Mlp& net, std::span<const double> x);

// Allocation-free variant for hot loops; `out` and `scratch` are reused.
void forward_into(const Mlp& net, std::span<const double> x,
                  std::vector<double>& out, std::vector<double>& scratch);

// Pre- and post-activation vectors of every layer, needed by the
// attribution backward pass.
struct Trace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;
};
std::vector<double> forward_with_trace(const Mlp& net,
                                       std::span<const double> x, Trace& tr);

struct Batch {
  std::vector<std::vector<double>> x;
  std::vector<int> action;
  std::vector<double> target;
  std::size_t size() const { return x.size(); }
};

struct Gradients {
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> b;
};

// Mean squared TD error over the batch; the gradient flows only through the
// taken action's output unit. Returns the loss, fills grads.
double td_loss_and_gradients(const Mlp& net, const Batch& batch,
                             Gradients& grads);

void rmsprop_step(Mlp& net, const Gradients& grads, double lr);

// One training step: loss + gradients + RMSProp update. Returns the
// pre-step loss; throws on non-finite loss (divergence signal).
double backward_update(Mlp& net, const Batch& batch, double lr);

// dst <- src parameters (bitwise). Shapes must match.
void copy_weights(const Mlp& src, Mlp& dst);

std::size_t param_count(const Mlp& net);

// 64-bit FNV-1a over all parameter bytes; used to detect target staleness.
std::uint64_t param_hash(const Mlp& net);

// Versioned little-endian checkpoint (see README for the exact layout).
void save_checkpoint(const Mlp& net, const std::string& path,
                     std::uint64_t master_seed);
Mlp load_checkpoint(const std::string& path,
                    std::uint64_t* master_seed = nullptr);

}  // namespace v2x
