#include "v2x/mlp.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "v2x/rng.hpp"

namespace v2x {

namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kLinear: return z;
    case Activation::kTanh: return std::tanh(z);
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
  }
  return z;
}

double activate_grad(Activation a, double z) {
  switch (a) {
    case Activation::kLinear: return 1.0;
    case Activation::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

void check_dims(const Mlp& net, std::size_t got) {
  if (static_cast<int>(got) != net.input_dim())
    throw std::invalid_argument("mlp: input has " + std::to_string(got) +
                                " entries, expected " +
                                std::to_string(net.input_dim()));
}

}  // namespace

Mlp make_mlp(std::vector<int> dims, std::vector<Activation> acts,
             std::uint64_t seed) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1)
    throw std::invalid_argument("make_mlp: dims/acts mismatch");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("make_mlp: layer width < 1");

  Mlp net;
  net.dims = std::move(dims);
  net.acts = std::move(acts);
  net.init_seed = seed;
  SplitMix64 rng(stream_seed(seed, "weights"));
  for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
    const int in = net.dims[l], out = net.dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    std::vector<double> b(out);
    for (double& v : w) v = (2.0 * rng.uniform01() - 1.0) * bound;
    // nonnegative bias init keeps relu units responsive at the start
    for (double& v : b) v = rng.uniform01() * bound;
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
    net.rms_w.emplace_back(static_cast<std::size_t>(in) * out, 0.0);
    net.rms_b.emplace_back(out, 0.0);
  }
  return net;
}

Mlp build_mlp(int input_dim, int output_dim, std::uint64_t seed,
              bool linear_output) {
  if (input_dim < 1 || output_dim < 1)
    throw std::invalid_argument("build_mlp: dims must be >= 1");
  const std::vector<int> dims = {input_dim, 5 * input_dim + 8, 3 * input_dim,
                                 2 * input_dim, output_dim};
  const std::vector<Activation> acts = {
      Activation::kTanh, Activation::kRelu, Activation::kTanh,
      linear_output ? Activation::kLinear : Activation::kRelu};
  return make_mlp(dims, acts, seed);
}

void forward_into(const Mlp& net, std::span<const double> x,
                  std::vector<double>& out, std::vector<double>& scratch) {
  check_dims(net, x.size());
  out.assign(x.begin(), x.end());
  for (int l = 0; l < net.layer_count(); ++l) {
    const int in = net.dims[l], n_out = net.dims[l + 1];
    scratch.assign(n_out, 0.0);
    const double* w = net.weights[l].data();
    for (int j = 0; j < n_out; ++j) {
      double z = net.biases[l][j];
      const double* row = w + static_cast<std::size_t>(j) * in;
      for (int i = 0; i < in; ++i) z += row[i] * out[i];
      scratch[j] = activate(net.acts[l], z);
    }
    out.swap(scratch);
  }
}

std::vector<double> forward(const Mlp& net, std::span<const double> x) {
  std::vector<double> out, scratch;
  forward_into(net, x, out, scratch);
  return out;
}

std::vector<double> forward_with_trace(const Mlp& net,
                                       std::span<const double> x, Trace& tr) {
  check_dims(net, x.size());
  // resize (not assign) so a reused Trace keeps its buffer capacity
  tr.pre.resize(net.layer_count());
  tr.post.resize(net.layer_count());
  std::vector<double> cur(x.begin(), x.end());
  for (int l = 0; l < net.layer_count(); ++l) {
    const int in = net.dims[l], out = net.dims[l + 1];
    auto& pre = tr.pre[l];
    auto& post = tr.post[l];
    pre.assign(out, 0.0);
    post.assign(out, 0.0);
    const double* w = net.weights[l].data();
    for (int j = 0; j < out; ++j) {
      double z = net.biases[l][j];
      const double* row = w + static_cast<std::size_t>(j) * in;
      for (int i = 0; i < in; ++i) z += row[i] * cur[i];
      pre[j] = z;
      post[j] = activate(net.acts[l], z);
    }
    cur = post;
  }
  return cur;
}

double td_loss_and_gradients(const Mlp& net, const Batch& batch,
                             Gradients& grads) {
  if (batch.size() == 0)
    throw std::invalid_argument("td_loss_and_gradients: empty batch");
  const int n_layers = net.layer_count();
  grads.w.assign(n_layers, {});
  grads.b.assign(n_layers, {});
  for (int l = 0; l < n_layers; ++l) {
    grads.w[l].assign(net.weights[l].size(), 0.0);
    grads.b[l].assign(net.biases[l].size(), 0.0);
  }

  const double inv_d = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  Trace tr;
  std::vector<double> delta, prev_delta;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& x = batch.x[s];
    const int a = batch.action[s];
    if (a < 0 || a >= net.output_dim())
      throw std::invalid_argument("td_loss_and_gradients: action index");
    const auto q = forward_with_trace(net, x, tr);
    const double err = batch.target[s] - q[a];
    loss += err * err * inv_d;

    // dL/dq[a] = -2 err / D, other outputs do not contribute.
    delta.assign(net.output_dim(), 0.0);
    delta[a] = -2.0 * err * inv_d *
               activate_grad(net.acts[n_layers - 1], tr.pre[n_layers - 1][a]);
    for (int l = n_layers - 1; l >= 0; --l) {
      const int in = net.dims[l], out = net.dims[l + 1];
      const std::vector<double>& below =
          l == 0 ? x : tr.post[l - 1];
      double* gw = grads.w[l].data();
      for (int j = 0; j < out; ++j) {
        const double dj = delta[j];
        if (dj == 0.0) continue;
        grads.b[l][j] += dj;
        double* row = gw + static_cast<std::size_t>(j) * in;
        for (int i = 0; i < in; ++i) row[i] += dj * below[i];
      }
      if (l == 0) break;
      prev_delta.assign(in, 0.0);
      const double* w = net.weights[l].data();
      for (int j = 0; j < out; ++j) {
        const double dj = delta[j];
        if (dj == 0.0) continue;
        const double* row = w + static_cast<std::size_t>(j) * in;
        for (int i = 0; i < in; ++i) prev_delta[i] += dj * row[i];
      }
      for (int i = 0; i < in; ++i)
        prev_delta[i] *= activate_grad(net.acts[l - 1], tr.pre[l - 1][i]);
      delta.swap(prev_delta);
    }
  }
  return loss;
}

void rmsprop_step(Mlp& net, const Gradients& grads, double lr) {
  const double rho = net.rms_decay, eps = net.rms_eps;
  for (int l = 0; l < net.layer_count(); ++l) {
    for (std::size_t i = 0; i < net.weights[l].size(); ++i) {
      const double g = grads.w[l][i];
      double& v = net.rms_w[l][i];
      v = rho * v + (1.0 - rho) * g * g;
      net.weights[l][i] -= lr * g / (std::sqrt(v) + eps);
    }
    for (std::size_t i = 0; i < net.biases[l].size(); ++i) {
      const double g = grads.b[l][i];
      double& v = net.rms_b[l][i];
      v = rho * v + (1.0 - rho) * g * g;
      net.biases[l][i] -= lr * g / (std::sqrt(v) + eps);
    }
  }
}

double backward_update(Mlp& net, const Batch& batch, double lr) {
  Gradients grads;
  const double loss = td_loss_and_gradients(net, batch, grads);
  if (!std::isfinite(loss))
    throw std::runtime_error("backward_update: non-finite loss (divergence)");
  rmsprop_step(net, grads, lr);
  return loss;
}

void copy_weights(const Mlp& src, Mlp& dst) {
  if (src.dims != dst.dims || src.acts != dst.acts)
    throw std::invalid_argument("copy_weights: layer shape mismatch");
  dst.weights = src.weights;
  dst.biases = src.biases;
}

std::size_t param_count(const Mlp& net) {
  std::size_t n = 0;
  for (int l = 0; l < net.layer_count(); ++l)
    n += net.weights[l].size() + net.biases[l].size();
  return n;
}

std::uint64_t param_hash(const Mlp& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::vector<double>& v) {
    for (double d : v) {
      const auto bits = std::bit_cast<std::uint64_t>(d);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  };
  for (int l = 0; l < net.layer_count(); ++l) {
    feed(net.weights[l]);
    feed(net.biases[l]);
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'V', '2', 'X', 'M', 'L', 'P', '0', '1'};

void put_u32(std::ofstream& f, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  f.write(b, 4);
}

void put_u64(std::ofstream& f, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  f.write(b, 8);
}

void put_f64(std::ofstream& f, double d) {
  put_u64(f, std::bit_cast<std::uint64_t>(d));
}

std::uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& f) {
  return std::bit_cast<double>(get_u64(f));
}

}  // namespace

void save_checkpoint(const Mlp& net, const std::string& path,
                     std::uint64_t master_seed) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + tmp);
    f.write(kMagic, 8);
    put_u32(f, 1);  // format version
    put_u32(f, static_cast<std::uint32_t>(net.layer_count()));
    for (int d : net.dims) put_u32(f, static_cast<std::uint32_t>(d));
    for (Activation a : net.acts)
      put_u32(f, static_cast<std::uint32_t>(a));
    put_f64(f, net.rms_decay);
    put_f64(f, net.rms_eps);
    put_u64(f, master_seed);
    for (int l = 0; l < net.layer_count(); ++l) {
      for (double v : net.weights[l]) put_f64(f, v);
      for (double v : net.biases[l]) put_f64(f, v);
    }
    if (!f) throw std::runtime_error("save_checkpoint: write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("save_checkpoint: rename failed: " + path);
}

Mlp load_checkpoint(const std::string& path, std::uint64_t* master_seed) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  const std::uint32_t version = get_u32(f);
  if (version != 1)
    throw std::runtime_error("load_checkpoint: unsupported version");
  const std::uint32_t n_layers = get_u32(f);
  if (n_layers == 0 || n_layers > 64)
    throw std::runtime_error("load_checkpoint: corrupt layer count");

  Mlp net;
  net.dims.resize(n_layers + 1);
  for (auto& d : net.dims) d = static_cast<int>(get_u32(f));
  net.acts.resize(n_layers);
  for (auto& a : net.acts) a = static_cast<Activation>(get_u32(f));
  net.rms_decay = get_f64(f);
  net.rms_eps = get_f64(f);
  const std::uint64_t seed = get_u64(f);
  if (master_seed) *master_seed = seed;
  net.init_seed = seed;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const std::size_t in = net.dims[l], out = net.dims[l + 1];
    std::vector<double> w(in * out), b(out);
    for (double& v : w) v = get_f64(f);
    for (double& v : b) v = get_f64(f);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
    net.rms_w.emplace_back(in * out, 0.0);
    net.rms_b.emplace_back(out, 0.0);
  }
  if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
  return net;
}

}  // namespace v2x
