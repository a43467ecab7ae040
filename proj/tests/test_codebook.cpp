#include <algorithm>
#include <numeric>

#include "test_util.hpp"
#include "vidrep/codebook.hpp"

using namespace vidrep;
using testutil::error_kind;

namespace {

DescriptorSet blobs(Rng& rng, std::size_t n_a, std::size_t n_b, std::size_t d, double sep, double noise) {
  DescriptorSet x(n_a + n_b, d);
  for (std::size_t i = 0; i < x.n_items; ++i)
    for (std::size_t j = 0; j < d; ++j) x.row(i)[j] = static_cast<float>((i < n_a ? 0.0 : sep) + noise * rng.normal());
  return x;
}

}  // namespace

TEST_SUITE("codebook") {
  TEST_CASE("separated clusters recover their means") {
    Rng rng(4);
    const auto x = blobs(rng, 40, 60, 3, 20.0, 0.5);
    KMeansOptions o;
    o.k = 2;
    const auto cb = fit_kmeans(x, o);
    std::vector<double> mean_a(3, 0.0), mean_b(3, 0.0);
    for (std::size_t i = 0; i < 100; ++i)
      for (std::size_t j = 0; j < 3; ++j) (i < 40 ? mean_a : mean_b)[j] += x.row(i)[j] / (i < 40 ? 40.0 : 60.0);
    const std::size_t a = cb.center(0)[0] < 10.0f ? 0 : 1;
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(cb.center(a)[j] == doctest::Approx(mean_a[j]).epsilon(1e-6).scale(1.0));
      CHECK(cb.center(1 - a)[j] == doctest::Approx(mean_b[j]).epsilon(1e-6).scale(1.0));
    }
  }

  TEST_CASE("k equal to n reproduces the points") {
    Rng rng(6);
    const auto x = testutil::random_set(rng, 7, 2);
    KMeansOptions o;
    o.k = 7;
    const auto cb = fit_kmeans(x, o);
    for (std::size_t i = 0; i < 7; ++i) {
      double d = 0.0;
      nearest_center(cb, x.row(i), &d);
      CHECK(d == 0.0);
    }
  }

  TEST_CASE("objective is non-increasing and fits are deterministic") {
    Rng rng(7);
    const auto x = testutil::gaussian_set(rng, 400, 4);
    KMeansOptions o;
    o.k = 9;
    o.seed = 3;
    KMeansTrace trace;
    const auto a = fit_kmeans(x, o, &trace);
    REQUIRE(trace.objective.size() >= 2);
    for (std::size_t i = 1; i < trace.objective.size(); ++i) CHECK(trace.objective[i] <= trace.objective[i - 1]);
    CHECK(fit_kmeans(x, o) == a);
    CHECK(error_kind([&] {
            KMeansOptions big;
            big.k = 401;
            fit_kmeans(x, big);
          }) == ErrorKind::InsufficientData);
  }

  TEST_CASE("nearest centers order and ties") {
    Codebook cb{3, 1, {0.0f, 2.0f, -2.0f}};
    const std::vector<float> x{1.0f};
    CHECK(nearest_center(cb, x) == 0);
    CHECK(nearest_centers(cb, x, 3) == std::vector<std::size_t>{0, 1, 2});
  }

  TEST_CASE("single component gmm is the sample MLE") {
    Rng rng(12);
    const auto x = testutil::gaussian_set(rng, 200, 3, 2.0);
    GmmOptions o;
    o.k = 1;
    const auto g = fit_gmm(x, o);
    for (std::size_t j = 0; j < 3; ++j) {
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < 200; ++i) mean += x.row(i)[j] / 200.0;
      for (std::size_t i = 0; i < 200; ++i) var += (x.row(i)[j] - mean) * (x.row(i)[j] - mean) / 200.0;
      CHECK(g.means[j] == doctest::Approx(mean).epsilon(1e-5).scale(1.0));
      CHECK(g.variances[j] == doctest::Approx(var).epsilon(1e-4));
    }
    CHECK(g.priors[0] == doctest::Approx(1.0));
    CHECK(posteriors(g, x.row(0)) == std::vector<double>{1.0});
  }

  TEST_CASE("two blobs give priors near their fractions") {
    Rng rng(13);
    const auto x = blobs(rng, 300, 700, 2, 15.0, 1.0);
    GmmOptions o;
    o.k = 2;
    GmmTrace trace;
    const auto g = fit_gmm(x, o, &trace);
    const float low = g.means[0] < 7.5f ? g.priors[0] : g.priors[1];
    CHECK(std::abs(low - 0.3) <= 0.02);
    double sum = 0.0;
    for (float p : g.priors) {
      CHECK(p > 0.0f);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
    for (float v : g.variances) CHECK(v >= trace.var_floor);
  }

  TEST_CASE("em log likelihood never decreases") {
    Rng rng(14);
    const auto x = testutil::gaussian_set(rng, 600, 3);
    GmmOptions o;
    o.k = 6;
    o.rel_tol = 0.0;
    o.max_iter = 40;
    GmmTrace trace;
    const auto g = fit_gmm(x, o, &trace);
    REQUIRE(trace.log_likelihood.size() >= 2);
    for (std::size_t i = 1; i < trace.log_likelihood.size(); ++i)
      CHECK(trace.log_likelihood[i] >= trace.log_likelihood[i - 1] - 1e-6);
    CHECK(fit_gmm(x, o) == g);
  }

  TEST_CASE("posteriors are a distribution and favour the owning component") {
    GmmModel g;
    g.k = 2;
    g.dim = 2;
    g.means = {0, 0, 50, 50};
    g.variances = {1, 1, 1, 1};
    g.priors = {0.5f, 0.5f};
    const std::vector<float> at_mu{0, 0};
    CHECK(posteriors(g, at_mu)[0] > 0.999);
    Rng rng(15);
    for (int t = 0; t < 200; ++t) {
      const std::vector<float> x{static_cast<float>(rng.uniform(-100, 100)), static_cast<float>(rng.uniform(-100, 100))};
      const auto q = posteriors(g, x);
      CHECK(std::abs(q[0] + q[1] - 1.0) <= 1e-9);
      for (double v : q) CHECK((v >= 0.0 && v <= 1.0));
    }
  }

  TEST_CASE("model files round trip") {
    Rng rng(16);
    const auto x = testutil::gaussian_set(rng, 100, 2);
    KMeansOptions ko;
    ko.k = 4;
    const auto cb = fit_kmeans(x, ko);
    CHECK(codebook_from_model(to_model_file(cb)) == cb);
    GmmOptions go;
    go.k = 3;
    const auto g = fit_gmm(x, go);
    CHECK(gmm_from_model(to_model_file(g)) == g);
  }
}
