#include <algorithm>

#include "test_util.hpp"
#include "vidrep/preprocess.hpp"

using namespace vidrep;
using testutil::error_kind;

namespace {

std::vector<std::vector<double>> covariance(const DescriptorSet& x) {
  const std::size_t d = x.dim, n = x.n_items;
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x.row(i)[j] / static_cast<double>(n);
  std::vector<std::vector<double>> c(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) c[a][b] += (x.row(i)[a] - mean[a]) * (x.row(i)[b] - mean[b]);
  for (auto& row : c)
    for (auto& v : row) v /= static_cast<double>(n - 1);
  return c;
}

DescriptorSet normalized_sample(Rng& rng, std::size_t n, std::size_t d) {
  DescriptorSet x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x.row(i)[j] = static_cast<float>(rng.normal() * (1.0 + j) + 0.3 * j);
  l2_normalize_rows(x);
  return x;
}

}  // namespace

TEST_SUITE("preprocess") {
  TEST_CASE("l2 normalize examples") {
    const std::vector<float> v{3, 4};
    const auto u = l2_normalize(v);
    CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-7));
    CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-7));
    const std::vector<float> z{0, 0};
    CHECK(l2_normalize(z) == z);
    const std::vector<float> bad{1, std::numeric_limits<float>::infinity()};
    CHECK(error_kind([&] { l2_normalize(bad); }) == ErrorKind::Data);
  }

  TEST_CASE("l2 normalize is idempotent") {
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
      std::vector<float> v(1 + rng.index(40));
      for (auto& x : v) x = static_cast<float>(rng.normal() * 100.0);
      const auto once = l2_normalize(v);
      const auto twice = l2_normalize(once);
      for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(once[i] - twice[i]) <= 1e-7);
    }
  }

  TEST_CASE("axis aligned data projects on the axis") {
    DescriptorSet x(4, 2, {-2, 0, -1, 0, 1, 0, 2, 0});
    const auto m = fit_pca(x, 1, false);
    CHECK(m.component(0, 0) == doctest::Approx(1.0));
    CHECK(m.component(1, 0) == doctest::Approx(0.0));
    CHECK(m.eigenvalues[0] == doctest::Approx(10.0 / 3.0));
  }

  TEST_CASE("principal directions are eigenvectors of the sample covariance") {
    Rng rng(5);
    const auto x = normalized_sample(rng, 300, 6);
    const auto c = covariance(x);
    const auto m = fit_pca(x, 4, false);
    for (std::size_t k = 0; k < 4; ++k) {
      if (k > 0) CHECK(m.eigenvalues[k] <= m.eigenvalues[k - 1]);
      CHECK(m.eigenvalues[k] >= 0.0f);
      float largest = 0.0f;
      for (std::size_t a = 0; a < 6; ++a) {
        if (std::abs(m.component(a, k)) > std::abs(largest)) largest = m.component(a, k);
        double cp = 0.0;
        for (std::size_t b = 0; b < 6; ++b) cp += c[a][b] * m.component(b, k);
        CHECK(cp == doctest::Approx(m.eigenvalues[k] * m.component(a, k)).epsilon(1e-3).scale(1e-3));
      }
      CHECK(largest > 0.0f);
      for (std::size_t l = 0; l < 4; ++l) {
        double dot = 0.0;
        for (std::size_t a = 0; a < 6; ++a) dot += m.component(a, k) * m.component(a, l);
        CHECK(std::abs(dot - (k == l ? 1.0 : 0.0)) <= 1e-4);
      }
    }
  }

  TEST_CASE("projected variance equals eigenvalue or one") {
    Rng rng(8);
    const auto x = normalized_sample(rng, 500, 5);
    for (bool whiten : {false, true}) {
      const auto m = fit_pca(x, 5, whiten);
      const auto y = apply_pca(m, x);
      const auto c = covariance(y);
      for (std::size_t j = 0; j < 5; ++j) {
        const double expect = whiten ? 1.0 : m.eigenvalues[j];
        CHECK(c[j][j] == doctest::Approx(expect).epsilon(1e-3));
        for (std::size_t k = 0; k < 5; ++k)
          if (k != j) CHECK(std::abs(c[j][k]) <= 1e-3 * std::max(1.0, expect));
      }
    }
  }

  TEST_CASE("apply is affine without whitening") {
    Rng rng(9);
    const auto x = normalized_sample(rng, 100, 6);
    const auto m = fit_pca(x, 3, false);
    for (int t = 0; t < 50; ++t) {
      const auto a = testutil::random_set(rng, 1, 6), b = testutil::random_set(rng, 1, 6);
      const double alpha = rng.uniform();
      std::vector<float> mix(6);
      for (std::size_t j = 0; j < 6; ++j)
        mix[j] = static_cast<float>(alpha * a.data[j] + (1 - alpha) * b.data[j]);
      const auto ya = apply_pca(m, a.row(0)), yb = apply_pca(m, b.row(0)), ym = apply_pca(m, mix);
      for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(ym[j] - (alpha * ya[j] + (1 - alpha) * yb[j])) <= 1e-5);
    }
    const auto at_mean = apply_pca(m, m.mean);
    for (float v : at_mean) CHECK(v == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  }

  TEST_CASE("identity model gives x minus mean") {
    PcaModel m;
    m.input_dim = m.output_dim = 3;
    m.mean = {1, 2, 3};
    m.projection = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    m.eigenvalues = {1, 1, 1};
    const std::vector<float> x{4, 4, 4};
    CHECK(apply_pca(m, x) == std::vector<float>{3, 2, 1});
    const std::vector<float> short_x{1, 2};
    CHECK(error_kind([&] { apply_pca(m, short_x); }) == ErrorKind::Shape);
  }

  TEST_CASE("fit errors") {
    Rng rng(1);
    const auto x = testutil::random_set(rng, 3, 4);
    CHECK(error_kind([&] { fit_pca(x, 3, false); }) == ErrorKind::InsufficientData);
    DescriptorSet flat(10, 3);
    CHECK(error_kind([&] { fit_pca(flat, 2, false); }) == ErrorKind::Degenerate);
  }

  TEST_CASE("model file round trip") {
    Rng rng(2);
    const auto m = fit_pca(normalized_sample(rng, 50, 4), 2, true);
    CHECK(pca_from_model(to_model_file(m)) == m);
  }
}
