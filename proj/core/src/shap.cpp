#include "v2x/shap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "v2x/rng.hpp"

namespace v2x {

double BackgroundSet::total_weight() const {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

double BackgroundSet::mean(std::size_t column) const {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    num += weights[i] * samples[i][column];
    den += weights[i];
  }
  return num / den;
}

BackgroundSet kmeans_summarize(const std::vector<std::vector<double>>& rows,
                               int k, std::uint64_t seed) {
  if (rows.empty()) throw std::invalid_argument("kmeans_summarize: empty data");
  if (k < 1 || static_cast<std::size_t>(k) > rows.size())
    throw std::invalid_argument("kmeans_summarize: k out of range");
  const std::size_t n = rows.size(), dim = rows[0].size();
  SplitMix64 rng(stream_seed(seed, "kmeans"));

  auto sqdist = [dim](const std::vector<double>& a,
                      const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = a[j] - b[j];
      s += d * d;
    }
    return s;
  };

  // k-means++ seeding
  std::vector<std::vector<double>> centroids;
  centroids.reserve(k);
  centroids.push_back(rows[rng.below(n)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, sqdist(rows[i], c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // all remaining points coincide with a centroid; pick any
      centroids.push_back(rows[rng.below(n)]);
      continue;
    }
    double target = rng.uniform01() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= d2[i];
      if (target <= 0.0) {
        pick = i;
        break;
      }
    }
    centroids.push_back(rows[pick]);
  }

  std::vector<int> assign(n, -1);
  std::vector<double> counts(k, 0.0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = sqdist(rows[i], centroids[0]);
      for (int c = 1; c < k; ++c) {
        const double d = sqdist(rows[i], centroids[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    counts.assign(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      counts[assign[i]] += 1.0;
      for (std::size_t j = 0; j < dim; ++j) sums[assign[i]][j] += rows[i][j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0.0) {
        // re-seed an empty cluster at the point farthest from its centroid
        std::size_t far = 0;
        double fd = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sqdist(rows[i], centroids[assign[i]]);
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        centroids[c] = rows[far];
        assign[far] = c;
        counts[c] = 1.0;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j)
        centroids[c][j] = sums[c][j] / counts[c];
    }
  }

  BackgroundSet bg;
  bg.samples = std::move(centroids);
  bg.weights.assign(counts.begin(), counts.end());
  return bg;
}

namespace {

// E_b[f(x with coalition features, background elsewhere)], weighted.
double coalition_value(const ScalarModel& model, const std::vector<double>& x,
                       const BackgroundSet& bg, const std::vector<bool>& in) {
  double num = 0.0, den = 0.0;
  std::vector<double> probe(x.size());
  for (std::size_t b = 0; b < bg.size(); ++b) {
    for (std::size_t l = 0; l < x.size(); ++l)
      probe[l] = in[l] ? x[l] : bg.samples[b][l];
    num += bg.weights[b] * model(probe);
    den += bg.weights[b];
  }
  return num / den;
}

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace

std::vector<double> exact_shapley(const ScalarModel& model,
                                  const std::vector<double>& x,
                                  const BackgroundSet& bg) {
  const int L = static_cast<int>(x.size());
  if (L > 15)
    throw std::invalid_argument(
        "exact_shapley: feature count exceeds the enumeration budget (15); "
        "use sampled_shapley");
  if (bg.size() == 0) throw std::invalid_argument("exact_shapley: empty bg");

  // Value of every coalition, indexed by bitmask.
  const std::size_t n_sets = std::size_t{1} << L;
  std::vector<double> value(n_sets);
  std::vector<bool> in(L);
  for (std::size_t mask = 0; mask < n_sets; ++mask) {
    for (int l = 0; l < L; ++l) in[l] = (mask >> l) & 1u;
    value[mask] = coalition_value(model, x, bg, in);
  }

  const double l_fact = factorial(L);
  std::vector<double> phi(L, 0.0);
  for (int l = 0; l < L; ++l) {
    const std::size_t bit = std::size_t{1} << l;
    for (std::size_t mask = 0; mask < n_sets; ++mask) {
      if (mask & bit) continue;
      const int s = std::popcount(mask);
      const double w = factorial(s) * factorial(L - s - 1) / l_fact;
      phi[l] += w * (value[mask | bit] - value[mask]);
    }
  }
  return phi;
}

SampledShapley sampled_shapley(const ScalarModel& model,
                               const std::vector<double>& x,
                               const BackgroundSet& bg, int n_perm,
                               std::uint64_t seed) {
  if (n_perm < 1)
    throw std::invalid_argument("sampled_shapley: n_perm must be >= 1");
  if (bg.size() == 0) throw std::invalid_argument("sampled_shapley: empty bg");
  const int L = static_cast<int>(x.size());
  SplitMix64 rng(stream_seed(seed, "shap-sampling"));

  std::vector<double> sum(L, 0.0), sumsq(L, 0.0);
  std::vector<int> perm(L);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<bool> in(L);

  for (int p = 0; p < n_perm; ++p) {
    for (int i = L - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.below(i + 1)]);
    std::fill(in.begin(), in.end(), false);
    double prev = coalition_value(model, x, bg, in);
    for (int pos = 0; pos < L; ++pos) {
      const int l = perm[pos];
      in[l] = true;
      const double cur = coalition_value(model, x, bg, in);
      const double marginal = cur - prev;
      sum[l] += marginal;
      sumsq[l] += marginal * marginal;
      prev = cur;
    }
  }

  SampledShapley out;
  out.phi.resize(L);
  out.stderr_.assign(L, 0.0);
  for (int l = 0; l < L; ++l) {
    const double mean = sum[l] / n_perm;
    out.phi[l] = mean;
    if (n_perm > 1) {
      const double var =
          std::max(0.0, (sumsq[l] - n_perm * mean * mean) / (n_perm - 1));
      out.stderr_[l] = std::sqrt(var / n_perm);
    }
  }
  return out;
}

namespace {

double activation_deriv(Activation a, double z) {
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

constexpr double kRescaleFloor = 1.0e-9;

}  // namespace

ShapMatrix deep_shap(const Mlp& net, const std::vector<double>& x,
                     const BackgroundSet& bg) {
  if (bg.size() == 0) throw std::invalid_argument("deep_shap: empty bg");
  const int M = net.output_dim();
  const int L = net.input_dim();
  const int n_layers = net.layer_count();

  ShapMatrix out;
  out.outputs = M;
  out.features = L;
  out.values.assign(static_cast<std::size_t>(M) * L, 0.0);
  out.base_values.assign(M, 0.0);

  Trace tx, tb;
  forward_with_trace(net, x, tx);
  const double total_w = bg.total_weight();

  // multipliers[m][unit]; propagated from the outputs down to the inputs.
  std::vector<std::vector<double>> mult(M), next(M);

  for (std::size_t b = 0; b < bg.size(); ++b) {
    const auto& ref = bg.samples[b];
    const auto fb = forward_with_trace(net, ref, tb);
    const double w = bg.weights[b] / total_w;
    for (int m = 0; m < M; ++m) out.base_values[m] += w * fb[m];

    for (int m = 0; m < M; ++m) {
      mult[m].assign(net.dims[n_layers], 0.0);
      mult[m][m] = 1.0;
    }
    for (int l = n_layers - 1; l >= 0; --l) {
      const int in_w = net.dims[l], out_w = net.dims[l + 1];
      // rescale rule through the nonlinearity of layer l
      for (int j = 0; j < out_w; ++j) {
        const double dz = tx.pre[l][j] - tb.pre[l][j];
        const double slope =
            std::fabs(dz) < kRescaleFloor
                ? activation_deriv(net.acts[l], tb.pre[l][j])
                : (tx.post[l][j] - tb.post[l][j]) / dz;
        for (int m = 0; m < M; ++m) mult[m][j] *= slope;
      }
      // linear rule through the affine map
      const double* wts = net.weights[l].data();
      for (int m = 0; m < M; ++m) {
        next[m].assign(in_w, 0.0);
        for (int j = 0; j < out_w; ++j) {
          const double mj = mult[m][j];
          if (mj == 0.0) continue;
          const double* row = wts + static_cast<std::size_t>(j) * in_w;
          for (int i = 0; i < in_w; ++i) next[m][i] += mj * row[i];
        }
        mult[m].swap(next[m]);
      }
    }
    for (int m = 0; m < M; ++m)
      for (int l = 0; l < L; ++l)
        out.values[static_cast<std::size_t>(m) * L + l] +=
            w * mult[m][l] * (x[l] - ref[l]);
  }
  return out;
}

std::vector<std::vector<double>> explain_dataset(
    const Mlp& net, const std::vector<std::vector<double>>& rows,
    const BackgroundSet& bg) {
  std::vector<std::vector<double>> phis;
  phis.reserve(rows.size());
  for (const auto& x : rows) {
    const auto q = forward(net, x);
    int best = 0;
    for (int i = 1; i < static_cast<int>(q.size()); ++i)
      if (q[i] > q[best]) best = i;
    const ShapMatrix s = deep_shap(net, x, bg);
    std::vector<double> phi(s.features);
    for (int l = 0; l < s.features; ++l) phi[l] = s.at(best, l);
    phis.push_back(std::move(phi));
  }
  return phis;
}

std::vector<double> aggregate_importance(
    const std::vector<std::vector<double>>& phis) {
  if (phis.empty())
    throw std::invalid_argument("aggregate_importance: no samples");
  const std::size_t L = phis[0].size();
  std::vector<double> mean(L, 0.0);
  for (const auto& phi : phis) {
    if (phi.size() != L)
      throw std::invalid_argument("aggregate_importance: ragged input");
    for (std::size_t l = 0; l < L; ++l) mean[l] += std::fabs(phi[l]);
  }
  for (double& v : mean) v /= static_cast<double>(phis.size());
  return mean;
}

std::vector<double> softmax_transform(const std::vector<double>& mean_abs) {
  std::vector<double> out(mean_abs.size());
  if (mean_abs.empty()) return out;
  double mx = std::fabs(mean_abs[0]);
  for (double v : mean_abs) mx = std::max(mx, std::fabs(v));
  double sum = 0.0;
  for (std::size_t l = 0; l < mean_abs.size(); ++l) {
    out[l] = std::exp(std::fabs(mean_abs[l]) - mx);
    sum += out[l];
  }
  for (double& v : out) v /= sum;
  return out;
}

ImportanceRanking make_ranking(std::vector<double> mean_abs,
                               std::vector<double> transformed) {
  ImportanceRanking r;
  r.order.resize(transformed.size());
  std::iota(r.order.begin(), r.order.end(), 0);
  const auto& key = transformed;
  std::stable_sort(r.order.begin(), r.order.end(), [&key](int a, int b) {
    if (key[a] != key[b]) return key[a] > key[b];
    return a < b;
  });
  r.mean_abs = std::move(mean_abs);
  r.transformed = std::move(transformed);
  return r;
}

ImportanceRanking average_across_agents(
    const std::vector<std::vector<double>>& per_agent_transformed,
    const std::vector<std::vector<double>>& per_agent_mean_abs) {
  if (per_agent_transformed.empty())
    throw std::invalid_argument("average_across_agents: no agents");
  const std::size_t L = per_agent_transformed[0].size();
  std::vector<double> avg(L, 0.0);
  for (const auto& v : per_agent_transformed) {
    if (v.size() != L)
      throw std::invalid_argument("average_across_agents: length mismatch");
    for (std::size_t l = 0; l < L; ++l) avg[l] += v[l];
  }
  for (double& v : avg) v /= static_cast<double>(per_agent_transformed.size());

  std::vector<double> mean_abs(L, 0.0);
  if (!per_agent_mean_abs.empty()) {
    for (const auto& v : per_agent_mean_abs) {
      if (v.size() != L)
        throw std::invalid_argument("average_across_agents: length mismatch");
      for (std::size_t l = 0; l < L; ++l) mean_abs[l] += v[l];
    }
    for (double& v : mean_abs)
      v /= static_cast<double>(per_agent_mean_abs.size());
  }
  return make_ranking(std::move(mean_abs), std::move(avg));
}

}  // namespace v2x
