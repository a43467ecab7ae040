#include "vidrep/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vidrep/error.hpp"
#include "vidrep/random.hpp"

namespace vidrep {

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = static_cast<double>(a[d]) - b[d];
    s += diff * diff;
  }
  return s;
}

std::size_t nearest_center(const Codebook& codebook, std::span<const float> x, double* sq_dist) {
  require(x.size() == codebook.dim, ErrorKind::Shape, "nearest_center: dimension mismatch");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < codebook.k; ++j) {
    const double d = squared_distance(x, codebook.center(j));
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  if (sq_dist) *sq_dist = best_d;
  return best;
}

std::vector<std::size_t> nearest_centers(const Codebook& codebook, std::span<const float> x, std::size_t k) {
  require(x.size() == codebook.dim, ErrorKind::Shape, "nearest_centers: dimension mismatch");
  require(k >= 1 && k <= codebook.k, ErrorKind::Parameter,
          "nearest_centers: k=" + std::to_string(k) + " outside [1, " + std::to_string(codebook.k) + "]");
  std::vector<std::pair<double, std::size_t>> dist(codebook.k);
  for (std::size_t j = 0; j < codebook.k; ++j) dist[j] = {squared_distance(x, codebook.center(j)), j};
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
  return out;
}

namespace {

std::vector<float> kmeanspp_seed(const DescriptorSet& train, std::size_t k, Rng& rng) {
  const std::size_t n = train.n_items;
  const std::size_t dim = train.dim;
  std::vector<float> centers;
  centers.reserve(k * dim);
  std::vector<char> chosen(n, 0);

  std::size_t first = rng.index(n);
  chosen[first] = 1;
  auto r0 = train.row(first);
  centers.insert(centers.end(), r0.begin(), r0.end());

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(train.row(i), r0);

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        cum += d2[i];
        pick = i;
        if (cum > target) break;
      }
    }
    if (pick == n) {
      // Every remaining point coincides with a chosen center.
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    chosen[pick] = 1;
    auto row = train.row(pick);
    centers.insert(centers.end(), row.begin(), row.end());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(train.row(i), row));
  }
  return centers;
}

}  // namespace

Codebook fit_kmeans(const DescriptorSet& train, const KMeansOptions& options, KMeansTrace* trace) {
  const std::size_t n = train.n_items;
  const std::size_t k = options.k;
  const std::size_t dim = train.dim;
  require(k >= 1, ErrorKind::Parameter, "fit_kmeans: K must be >= 1");
  require(n >= k, ErrorKind::InsufficientData,
          "fit_kmeans: " + std::to_string(n) + " rows for K=" + std::to_string(k));

  Rng rng(options.seed);
  Codebook cb;
  cb.k = k;
  cb.dim = dim;
  cb.centers = kmeanspp_seed(train, k, rng);

  std::vector<std::size_t> assign(n);
  std::vector<double> dist(n);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);

  std::size_t iter = 0;
  for (; iter < options.max_iter; ++iter) {
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = nearest_center(cb, train.row(i), &dist[i]);
      objective += dist[i];
    }
    if (trace) trace->objective.push_back(objective);

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = train.row(i);
      double* s = sums.data() + assign[i] * dim;
      for (std::size_t d = 0; d < dim; ++d) s[d] += row[d];
      ++counts[assign[i]];
    }

    std::vector<float> updated(k * dim);
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        updated[j * dim + d] = static_cast<float>(sums[j * dim + d] / static_cast<double>(counts[j]));
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] != 0) continue;
      // Farthest point from its own center; lowest index wins ties.
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (dist[i] > dist[far]) far = i;
      }
      auto row = train.row(far);
      std::copy(row.begin(), row.end(), updated.begin() + static_cast<std::ptrdiff_t>(j * dim));
      dist[far] = -1.0;
    }

    double movement = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      movement += std::sqrt(squared_distance({updated.data() + j * dim, dim}, cb.center(j)));
    }
    cb.centers = std::move(updated);
    if (movement < options.tol) {
      ++iter;
      break;
    }
  }
  if (trace) trace->iterations = iter;
  return cb;
}

// ---- GMM -------------------------------------------------------------------

GmmEvaluator::GmmEvaluator(const GmmModel& gmm) : gmm_(gmm), log_weight_(gmm.k), inv_var_(gmm.k * gmm.dim) {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (std::size_t j = 0; j < gmm.k; ++j) {
    double w = std::log(static_cast<double>(gmm.priors[j]));
    for (std::size_t d = 0; d < gmm.dim; ++d) {
      const double var = gmm.variances[j * gmm.dim + d];
      w -= 0.5 * (log2pi + std::log(var));
      inv_var_[j * gmm.dim + d] = 1.0 / var;
    }
    log_weight_[j] = w;
  }
}

double GmmEvaluator::posteriors(std::span<const float> x, std::span<double> out) const {
  const std::size_t k = gmm_.k;
  const std::size_t dim = gmm_.dim;
  require(x.size() == dim, ErrorKind::Shape, "posteriors: dimension mismatch");
  require(out.size() == k, ErrorKind::Shape, "posteriors: output size mismatch");
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    const float* mu = gmm_.means.data() + j * dim;
    const double* iv = inv_var_.data() + j * dim;
    double q = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = static_cast<double>(x[d]) - mu[d];
      q += diff * diff * iv[d];
    }
    out[j] = log_weight_[j] - 0.5 * q;
    max_log = std::max(max_log, out[j]);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    out[j] = std::exp(out[j] - max_log);
    total += out[j];
  }
  for (std::size_t j = 0; j < k; ++j) out[j] /= total;
  return max_log + std::log(total);
}

std::vector<double> posteriors(const GmmModel& gmm, std::span<const float> x) {
  for (float v : x) require(std::isfinite(v), ErrorKind::Data, "posteriors: non-finite input");
  GmmEvaluator eval(gmm);
  std::vector<double> q(gmm.k);
  eval.posteriors(x, q);
  return q;
}

double log_likelihood(const GmmModel& gmm, const DescriptorSet& data) {
  require(data.n_items >= 1, ErrorKind::EmptyInput, "log_likelihood: no rows");
  GmmEvaluator eval(gmm);
  std::vector<double> q(gmm.k);
  double total = 0.0;
  for (std::size_t i = 0; i < data.n_items; ++i) total += eval.posteriors(data.row(i), q);
  return total / static_cast<double>(data.n_items);
}

namespace {

// EM state kept in double; converted to float once training ends.
struct MixtureState {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> means, variances, priors;
};

// Total log-likelihood plus sufficient statistics for the M-step.
double e_step(const DescriptorSet& train, const MixtureState& s, std::vector<double>& nk, std::vector<double>& s1,
              std::vector<double>& s2) {
  const std::size_t k = s.k;
  const std::size_t dim = s.dim;
  const double log2pi = std::log(2.0 * std::numbers::pi);
  std::vector<double> log_weight(k);
  std::vector<double> inv_var(k * dim);
  for (std::size_t j = 0; j < k; ++j) {
    double w = std::log(s.priors[j]);
    for (std::size_t d = 0; d < dim; ++d) {
      w -= 0.5 * (log2pi + std::log(s.variances[j * dim + d]));
      inv_var[j * dim + d] = 1.0 / s.variances[j * dim + d];
    }
    log_weight[j] = w;
  }
  std::fill(nk.begin(), nk.end(), 0.0);
  std::fill(s1.begin(), s1.end(), 0.0);
  std::fill(s2.begin(), s2.end(), 0.0);
  std::vector<double> q(k);
  double total = 0.0;
  for (std::size_t i = 0; i < train.n_items; ++i) {
    const auto x = train.row(i);
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = x[d] - s.means[j * dim + d];
        acc += diff * diff * inv_var[j * dim + d];
      }
      q[j] = log_weight[j] - 0.5 * acc;
      max_log = std::max(max_log, q[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      q[j] = std::exp(q[j] - max_log);
      z += q[j];
    }
    total += max_log + std::log(z);
    for (std::size_t j = 0; j < k; ++j) {
      const double r = q[j] / z;
      if (r == 0.0) continue;
      nk[j] += r;
      double* a1 = s1.data() + j * dim;
      double* a2 = s2.data() + j * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        const double v = x[d];
        a1[d] += r * v;
        a2[d] += r * v * v;
      }
    }
  }
  return total;
}

}  // namespace

GmmModel fit_gmm(const DescriptorSet& train, const GmmOptions& options, GmmTrace* trace) {
  const std::size_t n = train.n_items;
  const std::size_t k = options.k;
  const std::size_t dim = train.dim;
  require(k >= 1, ErrorKind::Parameter, "fit_gmm: K must be >= 1");
  require(n >= k, ErrorKind::InsufficientData, "fit_gmm: " + std::to_string(n) + " rows for K=" + std::to_string(k));

  // Variance floor relative to the data's mean per-dimension variance.
  double floor = options.var_floor;
  if (floor <= 0.0) {
    std::vector<double> mean(dim, 0.0), sq(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = train.row(i);
      for (std::size_t d = 0; d < dim; ++d) mean[d] += x[d];
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = train.row(i);
      for (std::size_t d = 0; d < dim; ++d) sq[d] += (x[d] - mean[d]) * (x[d] - mean[d]);
    }
    double avg = 0.0;
    for (double v : sq) avg += v / static_cast<double>(n);
    floor = 1e-4 * avg / static_cast<double>(dim);
    if (!(floor > 0.0)) floor = 1e-10;
  }
  if (trace) trace->var_floor = floor;

  KMeansOptions km;
  km.k = k;
  km.seed = options.seed;
  km.max_iter = options.max_iter;
  Codebook init = fit_kmeans(train, km);

  std::vector<std::size_t> assign(n);
  std::vector<std::size_t> counts(k);
  Rng reseed(options.seed ^ 0x9e3779b97f4a7c15ull);
  for (int attempt = 0;; ++attempt) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[assign[i] = nearest_center(init, train.row(i))];
    const bool any_empty = std::find(counts.begin(), counts.end(), 0) != counts.end();
    if (!any_empty) break;
    if (attempt == 3) fail(ErrorKind::Degenerate, "fit_gmm: empty component after 3 re-seeding attempts");
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] != 0) continue;
      auto row = train.row(reseed.index(n));
      std::copy(row.begin(), row.end(), init.centers.begin() + static_cast<std::ptrdiff_t>(j * dim));
    }
  }

  MixtureState s;
  s.k = k;
  s.dim = dim;
  s.means.assign(init.centers.begin(), init.centers.end());
  s.variances.assign(k * dim, 0.0);
  s.priors.assign(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = train.row(i);
    const std::size_t j = assign[i];
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = x[d] - s.means[j * dim + d];
      s.variances[j * dim + d] += diff * diff;
    }
  }
  for (std::size_t j = 0; j < k; ++j) {
    s.priors[j] = static_cast<double>(counts[j]) / static_cast<double>(n);
    for (std::size_t d = 0; d < dim; ++d) {
      double& v = s.variances[j * dim + d];
      v = std::max(v / static_cast<double>(counts[j]), floor);
    }
  }

  std::vector<double> nk(k), s1(k * dim), s2(k * dim);
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    const double ll = e_step(train, s, nk, s1, s2);
    if (!std::isfinite(ll)) fail(ErrorKind::Numeric, "fit_gmm: non-finite log-likelihood");
    if (trace) trace->log_likelihood.push_back(ll);
    if (iter > 0 && ll - prev < options.rel_tol * std::abs(prev)) break;
    prev = ll;

    bool clamped = false;
    for (std::size_t j = 0; j < k; ++j) {
      if (nk[j] <= 1e-12) {
        // Component captured no mass: keep its Gaussian, give it a token prior.
        s.priors[j] = 1e-10;
        clamped = true;
        continue;
      }
      s.priors[j] = nk[j] / static_cast<double>(n);
      for (std::size_t d = 0; d < dim; ++d) {
        const double mu = s1[j * dim + d] / nk[j];
        const double var = s2[j * dim + d] / nk[j] - mu * mu;
        s.means[j * dim + d] = mu;
        s.variances[j * dim + d] = std::max(var, floor);
      }
    }
    if (clamped) {
      double total = 0.0;
      for (double p : s.priors) total += p;
      for (double& p : s.priors) p /= total;
    }
  }

  GmmModel gmm;
  gmm.k = k;
  gmm.dim = dim;
  gmm.means.assign(s.means.begin(), s.means.end());
  gmm.variances.resize(k * dim);
  for (std::size_t i = 0; i < k * dim; ++i) {
    gmm.variances[i] = std::max(static_cast<float>(s.variances[i]), static_cast<float>(floor));
  }
  gmm.priors.assign(s.priors.begin(), s.priors.end());
  return gmm;
}

// ---- persistence -----------------------------------------------------------

io::ModelFile to_model_file(const Codebook& codebook) {
  io::ModelFile file;
  file.kind = "kmeans";
  file.params = {{"K", codebook.k}, {"dim", codebook.dim}};
  file.blocks.push_back({"centers", {codebook.k, codebook.dim}, codebook.centers});
  return file;
}

Codebook codebook_from_model(const io::ModelFile& file) {
  require(file.kind == "kmeans", ErrorKind::Format, "expected a kmeans model, got '" + file.kind + "'");
  io::validate_model(file);
  Codebook cb;
  try {
    cb.k = file.params.at("K").get<std::size_t>();
    cb.dim = file.params.at("dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("kmeans model params: ") + e.what());
  }
  const auto& centers = file.block("centers");
  require(cb.k >= 1 && centers.shape == std::vector<std::size_t>{cb.k, cb.dim}, ErrorKind::Format,
          "kmeans centers shape disagrees with params");
  cb.centers = centers.data;
  return cb;
}

io::ModelFile to_model_file(const GmmModel& gmm) {
  io::ModelFile file;
  file.kind = "gmm";
  file.params = {{"K", gmm.k}, {"dim", gmm.dim}};
  file.blocks.push_back({"means", {gmm.k, gmm.dim}, gmm.means});
  file.blocks.push_back({"variances", {gmm.k, gmm.dim}, gmm.variances});
  file.blocks.push_back({"priors", {gmm.k}, gmm.priors});
  return file;
}

GmmModel gmm_from_model(const io::ModelFile& file) {
  require(file.kind == "gmm", ErrorKind::Format, "expected a gmm model, got '" + file.kind + "'");
  io::validate_model(file);
  GmmModel gmm;
  try {
    gmm.k = file.params.at("K").get<std::size_t>();
    gmm.dim = file.params.at("dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("gmm model params: ") + e.what());
  }
  const std::vector<std::size_t> kd{gmm.k, gmm.dim};
  require(gmm.k >= 1 && file.block("means").shape == kd && file.block("variances").shape == kd &&
              file.block("priors").shape == std::vector<std::size_t>{gmm.k},
          ErrorKind::Format, "gmm block shapes disagree with params");
  gmm.means = file.block("means").data;
  gmm.variances = file.block("variances").data;
  gmm.priors = file.block("priors").data;
  for (float v : gmm.variances) require(v > 0.0f, ErrorKind::Format, "gmm variances must be positive");
  for (float p : gmm.priors) require(p > 0.0f, ErrorKind::Format, "gmm priors must be positive");
  return gmm;
}

}  // namespace vidrep
