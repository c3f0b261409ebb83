#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "v2x/mlp.hpp"
#include "v2x/rng.hpp"
#include "v2x/shap.hpp"

using namespace v2x;

namespace {

BackgroundSet single_bg(std::vector<double> sample) {
  BackgroundSet bg;
  bg.samples = {std::move(sample)};
  bg.weights = {1.0};
  return bg;
}

std::vector<std::vector<double>> random_rows(int n, int dim, SplitMix64& rng,
                                             double lo = -1.0,
                                             double hi = 1.0) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(dim));
  for (auto& r : rows)
    for (auto& v : r) v = lo + (hi - lo) * rng.uniform01();
  return rows;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

}  // namespace

TEST_CASE("kmeans summary basics") {
  SplitMix64 rng(11);
  const auto rows = random_rows(50, 3, rng);

  SUBCASE("k=1 centroid is the column mean with full weight") {
    const BackgroundSet bg = kmeans_summarize(rows, 1, 5);
    REQUIRE(bg.size() == 1);
    CHECK(bg.weights[0] == doctest::Approx(50.0));
    for (int j = 0; j < 3; ++j) {
      double mean = 0.0;
      for (const auto& r : rows) mean += r[j] / rows.size();
      CHECK(bg.samples[0][j] == doctest::Approx(mean).epsilon(1e-12));
    }
  }

  SUBCASE("k=n returns the points themselves") {
    const BackgroundSet bg = kmeans_summarize(rows, 50, 5);
    REQUIRE(bg.size() == 50);
    CHECK(std::accumulate(bg.weights.begin(), bg.weights.end(), 0.0) ==
          doctest::Approx(50.0));
    auto sorted_rows = rows;
    auto sorted_centroids = bg.samples;
    std::sort(sorted_rows.begin(), sorted_rows.end());
    std::sort(sorted_centroids.begin(), sorted_centroids.end());
    CHECK(sorted_rows == sorted_centroids);
  }

  SUBCASE("two well-separated blobs") {
    SplitMix64 g(21);
    std::vector<std::vector<double>> blobs;
    std::vector<double> mean_a(2, 0.0), mean_b(2, 0.0);
    for (int i = 0; i < 200; ++i) {
      std::vector<double> p = {g.normal() * 0.5, g.normal() * 0.5};
      if (i % 2 == 1) {
        p[0] += 10.0;
        p[1] += 10.0;
        mean_b[0] += p[0] / 100.0;
        mean_b[1] += p[1] / 100.0;
      } else {
        mean_a[0] += p[0] / 100.0;
        mean_a[1] += p[1] / 100.0;
      }
      blobs.push_back(std::move(p));
    }
    const BackgroundSet bg = kmeans_summarize(blobs, 2, 5);
    REQUIRE(bg.size() == 2);
    const bool first_is_a = bg.samples[0][0] < 5.0;
    const auto& ca = bg.samples[first_is_a ? 0 : 1];
    const auto& cb = bg.samples[first_is_a ? 1 : 0];
    CHECK(std::hypot(ca[0] - mean_a[0], ca[1] - mean_a[1]) < 0.5);
    CHECK(std::hypot(cb[0] - mean_b[0], cb[1] - mean_b[1]) < 0.5);
    CHECK(bg.weights[0] == doctest::Approx(100.0));
    CHECK(bg.weights[1] == doctest::Approx(100.0));
  }

  CHECK_THROWS_AS(kmeans_summarize({}, 1, 5), std::invalid_argument);
}

TEST_CASE("exact Shapley on closed-form models") {
  SUBCASE("linear model: phi_l = w_l (x_l - E[b_l])") {
    const std::vector<double> w = {2.0, -1.0, 0.5};
    const ScalarModel model = [&w](const std::vector<double>& x) {
      return w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + 4.0;
    };
    BackgroundSet bg;
    bg.samples = {{1.0, 0.0, -1.0}, {3.0, 2.0, 1.0}};
    bg.weights = {3.0, 1.0};  // weighted mean = (1.5, 0.5, -0.5)
    const std::vector<double> x = {2.0, 1.0, 0.0};
    const auto phi = exact_shapley(model, x, bg);
    CHECK(phi[0] == doctest::Approx(2.0 * (2.0 - 1.5)).epsilon(1e-12));
    CHECK(phi[1] == doctest::Approx(-1.0 * (1.0 - 0.5)).epsilon(1e-12));
    CHECK(phi[2] == doctest::Approx(0.5 * (0.0 + 0.5)).epsilon(1e-12));
  }

  SUBCASE("f = x1*x2 against the 4-coalition hand oracle") {
    const ScalarModel model = [](const std::vector<double>& x) {
      return x[0] * x[1];
    };
    const auto phi = exact_shapley(model, {1.0, 1.0}, single_bg({0.0, 0.0}));
    CHECK(phi[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(phi[1] == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("symmetric features receive equal attribution") {
    const ScalarModel model = [](const std::vector<double>& x) {
      return std::exp(x[0] + x[1]) + 3.0 * (x[0] + x[1]);
    };
    const auto phi =
        exact_shapley(model, {0.7, 0.7}, single_bg({-0.2, -0.2}));
    CHECK(phi[0] == doctest::Approx(phi[1]).epsilon(1e-12));
  }

  SUBCASE("enumeration budget") {
    const ScalarModel model = [](const std::vector<double>& x) {
      return x[0];
    };
    const std::vector<double> x(16, 0.0);
    CHECK_THROWS_AS(exact_shapley(model, x, single_bg(x)),
                    std::invalid_argument);
  }
}

TEST_CASE("sampled Shapley is an unbiased estimator") {
  const std::vector<double> w = {1.5, -2.0, 0.25, 3.0};
  const ScalarModel linear = [&w](const std::vector<double>& x) {
    double s = 1.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
    return s;
  };
  BackgroundSet bg;
  bg.samples = {{0.0, 1.0, -1.0, 0.5}, {1.0, -1.0, 0.0, 0.0}};
  bg.weights = {1.0, 1.0};
  const std::vector<double> x = {0.9, 0.4, -0.3, 1.2};

  SUBCASE("matches the closed form within 3 standard errors") {
    const SampledShapley est = sampled_shapley(linear, x, bg, 2000, 99);
    const auto truth = exact_shapley(linear, x, bg);
    for (std::size_t l = 0; l < w.size(); ++l)
      CHECK(std::fabs(est.phi[l] - truth[l]) <=
            3.0 * est.stderr_[l] + 1e-12);
  }

  SUBCASE("agrees with exact enumeration on a 6-feature MLP") {
    const Mlp net = build_mlp(6, 1, 404);
    const ScalarModel model = [&net](const std::vector<double>& x) {
      return forward(net, x)[0];
    };
    SplitMix64 rng(8);
    const auto rows = random_rows(4, 6, rng);
    BackgroundSet mlp_bg;
    mlp_bg.samples = rows;
    mlp_bg.weights.assign(rows.size(), 1.0);
    const std::vector<double> probe = {0.4, -0.6, 0.2, 0.8, -0.1, 0.3};
    const auto truth = exact_shapley(model, probe, mlp_bg);
    const SampledShapley est = sampled_shapley(model, probe, mlp_bg, 10000, 5);
    for (std::size_t l = 0; l < probe.size(); ++l)
      CHECK(std::fabs(est.phi[l] - truth[l]) <= 0.05 * max_abs(truth));
  }

  SUBCASE("error shrinks like 1/sqrt(n)") {
    // needs a nonlinear model: linear marginals have zero variance
    const ScalarModel curved = [](const std::vector<double>& v) {
      return v[0] * v[1] + std::sin(3.0 * v[2]) * v[3] + 0.5 * v[3] * v[3];
    };
    const auto truth = exact_shapley(curved, x, bg);
    auto err_at = [&](int n_perm) {
      const SampledShapley est = sampled_shapley(curved, x, bg, n_perm, 31);
      double e = 0.0;
      for (std::size_t l = 0; l < truth.size(); ++l)
        e = std::max(e, std::fabs(est.phi[l] - truth[l]));
      return e;
    };
    const double e2 = err_at(100), e4 = err_at(10000);
    CHECK(e4 < e2 / 3.0);
  }

  CHECK_THROWS_AS(sampled_shapley(linear, x, bg, 0, 1),
                  std::invalid_argument);
}

TEST_CASE("deep shap: hand-computed rescale example") {
  // 2 -> relu(2) -> linear(1); one background sample
  Mlp net = make_mlp({2, 2, 1}, {Activation::kRelu, Activation::kLinear}, 0);
  net.weights[0] = {1.0, -1.0, 0.5, 0.25};
  net.biases[0] = {-0.5, 0.1};
  net.weights[1] = {2.0, -3.0};
  net.biases[1] = {0.4};

  const std::vector<double> x = {1.0, 2.0};
  const ShapMatrix s = deep_shap(net, x, single_bg({-1.0, 0.5}));
  REQUIRE(s.outputs == 1);
  REQUIRE(s.features == 2);
  CHECK(s.at(0, 0) == doctest::Approx(-2.4).epsilon(1e-12));
  CHECK(s.at(0, 1) == doctest::Approx(-0.9).epsilon(1e-12));
  CHECK(s.base_values[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(s.at(0, 0) + s.at(0, 1) + s.base_values[0] ==
        doctest::Approx(forward(net, x)[0]).epsilon(1e-12));
}

TEST_CASE("deep shap equals exact Shapley on linear networks") {
  Mlp net = make_mlp({4, 3}, {Activation::kLinear}, 17);
  const ScalarModel unit0 = [&net](const std::vector<double>& x) {
    return forward(net, x)[0];
  };
  SplitMix64 rng(3);
  BackgroundSet bg;
  bg.samples = random_rows(5, 4, rng);
  bg.weights = {1.0, 2.0, 0.5, 1.5, 3.0};
  const std::vector<double> x = {0.3, -0.9, 0.5, 0.1};

  const ShapMatrix s = deep_shap(net, x, bg);
  const auto truth = exact_shapley(unit0, x, bg);
  for (int l = 0; l < 4; ++l)
    CHECK(s.at(0, l) == doctest::Approx(truth[l]).epsilon(1e-9));
}

TEST_CASE("deep shap local accuracy on the production topology") {
  const Mlp net = build_mlp(8, 8, 2024);
  SplitMix64 rng(12);
  BackgroundSet bg;
  bg.samples = random_rows(7, 8, rng, 0.0, 1.5);
  bg.weights = {4.0, 1.0, 2.0, 5.0, 1.0, 3.0, 2.0};

  for (int rep = 0; rep < 20; ++rep) {
    const auto x = random_rows(1, 8, rng, 0.0, 1.5)[0];
    const ShapMatrix s = deep_shap(net, x, bg);
    const auto out = forward(net, x);
    for (int m = 0; m < s.outputs; ++m) {
      double sum = s.base_values[m];
      for (int l = 0; l < s.features; ++l) sum += s.at(m, l);
      CHECK(sum == doctest::Approx(out[m]).epsilon(1e-6));
    }
  }
}

TEST_CASE("missingness: constant features get zero attribution") {
  const Mlp net = build_mlp(5, 3, 55);
  SplitMix64 rng(9);
  auto bg_rows = random_rows(4, 5, rng);
  std::vector<double> x = random_rows(1, 5, rng)[0];
  for (auto& r : bg_rows) r[2] = 0.77;  // feature 2 frozen everywhere
  x[2] = 0.77;
  BackgroundSet bg;
  bg.samples = bg_rows;
  bg.weights.assign(4, 1.0);

  const ShapMatrix s = deep_shap(net, x, bg);
  for (int m = 0; m < s.outputs; ++m)
    CHECK(std::fabs(s.at(m, 2)) <= 1e-9);

  const ScalarModel unit1 = [&net](const std::vector<double>& v) {
    return forward(net, v)[1];
  };
  const auto phi = exact_shapley(unit1, x, bg);
  CHECK(phi[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("explain_dataset picks the argmax row") {
  const Mlp net = build_mlp(6, 4, 77);
  SplitMix64 rng(14);
  const auto rows = random_rows(9, 6, rng, 0.0, 1.0);
  BackgroundSet bg;
  bg.samples = random_rows(3, 6, rng, 0.0, 1.0);
  bg.weights = {1.0, 1.0, 1.0};

  const auto phis = explain_dataset(net, rows, bg);
  REQUIRE(phis.size() == rows.size());

  // rows match the ShapMatrix row of the argmax action
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto q = forward(net, rows[i]);
    const int best = static_cast<int>(std::max_element(q.begin(), q.end()) -
                                      q.begin());
    const ShapMatrix s = deep_shap(net, rows[i], bg);
    for (int l = 0; l < s.features; ++l)
      CHECK(phis[i][l] == doctest::Approx(s.at(best, l)).epsilon(1e-12));
  }

  // determinism
  CHECK(explain_dataset(net, rows, bg) == phis);

  // positive scaling of the outputs never changes the selected row
  Mlp scaled = net;
  for (auto& w : scaled.weights.back()) w *= 7.5;
  for (auto& b : scaled.biases.back()) b *= 7.5;
  for (const auto& row : rows) {
    const auto q1 = forward(net, row);
    const auto q2 = forward(scaled, row);
    CHECK(std::max_element(q1.begin(), q1.end()) - q1.begin() ==
          std::max_element(q2.begin(), q2.end()) - q2.begin());
  }
}

TEST_CASE("importance aggregation, softmax and cross-agent averaging") {
  const std::vector<std::vector<double>> phis = {{1.0, -1.0}, {-1.0, 0.0}};
  const auto mean_abs = aggregate_importance(phis);
  CHECK(mean_abs[0] == doctest::Approx(1.0));
  CHECK(mean_abs[1] == doctest::Approx(0.5));

  const auto one = aggregate_importance({{-0.25, 0.5}});
  CHECK(one[0] == doctest::Approx(0.25));
  CHECK(one[1] == doctest::Approx(0.5));

  auto shuffled = phis;
  std::swap(shuffled[0], shuffled[1]);
  CHECK(aggregate_importance(shuffled) == mean_abs);

  SUBCASE("softmax") {
    const auto uniform = softmax_transform({0.3, 0.3, 0.3, 0.3});
    for (double v : uniform) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    const auto two = softmax_transform({0.0, std::log(2.0)});
    CHECK(two[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(two[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    double sum = 0.0;
    for (double v : softmax_transform({5.0, 1.0, 0.1, 3.3, 2.2})) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("average across agents") {
    const ImportanceRanking same =
        average_across_agents({{0.25, 0.75}, {0.25, 0.75}});
    CHECK(same.transformed == std::vector<double>{0.25, 0.75});

    const ImportanceRanking avg =
        average_across_agents({{0.6, 0.4}, {0.2, 0.8}});
    CHECK(avg.transformed[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(avg.transformed[1] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(avg.order == std::vector<int>{1, 0});
    double sum = 0.0;
    for (double v : avg.transformed) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    // tie -> lower feature index ranks first
    const ImportanceRanking tie = average_across_agents({{0.5, 0.5}});
    CHECK(tie.order == std::vector<int>{0, 1});

    CHECK_THROWS_AS(average_across_agents({{0.5, 0.5}, {1.0}}),
                    std::invalid_argument);
  }
}
