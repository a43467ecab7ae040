#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vidrep/descriptor_set.hpp"
#include "vidrep/io.hpp"

namespace vidrep {

struct Codebook {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<float> centers;  // k x dim

  std::span<const float> center(std::size_t j) const { return {centers.data() + j * dim, dim}; }

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

struct KMeansOptions {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double tol = 1e-6;  // stop once total center movement falls below this
};

/// Per-iteration diagnostics: objective after each assignment step.
struct KMeansTrace {
  std::vector<double> objective;
  std::size_t iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations. Empty clusters are moved
/// to the point farthest from its assigned center.
Codebook fit_kmeans(const DescriptorSet& train, const KMeansOptions& options, KMeansTrace* trace = nullptr);

/// Index of the closest center (lowest index on ties).
std::size_t nearest_center(const Codebook& codebook, std::span<const float> x, double* sq_dist = nullptr);

/// Indices of the `k` closest centers ordered by distance, ties by index.
std::vector<std::size_t> nearest_centers(const Codebook& codebook, std::span<const float> x, std::size_t k);

double squared_distance(std::span<const float> a, std::span<const float> b);

struct GmmModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<float> means;      // k x dim
  std::vector<float> variances;  // k x dim, diagonal
  std::vector<float> priors;     // k

  std::span<const float> mean(std::size_t j) const { return {means.data() + j * dim, dim}; }
  std::span<const float> variance(std::size_t j) const { return {variances.data() + j * dim, dim}; }

  friend bool operator==(const GmmModel&, const GmmModel&) = default;
};

struct GmmOptions {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  /// Absolute variance floor; <= 0 selects 1e-4 x mean per-dimension variance.
  double var_floor = 0.0;
  double rel_tol = 1e-5;
};

struct GmmTrace {
  std::vector<double> log_likelihood;  // total data log-likelihood after each E-step
  double var_floor = 0.0;
};

/// EM for a diagonal-covariance mixture, initialized from fit_kmeans.
GmmModel fit_gmm(const DescriptorSet& train, const GmmOptions& options, GmmTrace* trace = nullptr);

/// Component responsibilities for x, computed with a log-space max shift.
std::vector<double> posteriors(const GmmModel& gmm, std::span<const float> x);

/// Per-component constants cached for repeated posterior evaluation.
class GmmEvaluator {
 public:
  explicit GmmEvaluator(const GmmModel& gmm);

  /// Fills `out` (size k) with responsibilities; returns log p(x).
  double posteriors(std::span<const float> x, std::span<double> out) const;

  const GmmModel& model() const noexcept { return gmm_; }

 private:
  const GmmModel& gmm_;
  std::vector<double> log_weight_;  // log prior - 0.5 * sum log(2 pi var)
  std::vector<double> inv_var_;
};

/// Mean per-sample log-likelihood of the rows under the mixture.
double log_likelihood(const GmmModel& gmm, const DescriptorSet& data);

io::ModelFile to_model_file(const Codebook& codebook);
Codebook codebook_from_model(const io::ModelFile& file);
io::ModelFile to_model_file(const GmmModel& gmm);
GmmModel gmm_from_model(const io::ModelFile& file);

}  // namespace vidrep
