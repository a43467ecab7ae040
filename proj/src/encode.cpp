#include "vidrep/encode.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vidrep/error.hpp"
#include "vidrep/preprocess.hpp"

namespace vidrep {

const char* to_string(Encoder encoder) noexcept {
  switch (encoder) {
    case Encoder::Avg: return "avg";
    case Encoder::Fv: return "fv";
    case Encoder::Vlad: return "vlad";
  }
  return "?";
}

Encoder parse_encoder(const std::string& name) {
  if (name == "avg") return Encoder::Avg;
  if (name == "fv") return Encoder::Fv;
  if (name == "vlad") return Encoder::Vlad;
  fail(ErrorKind::Parameter, "unknown encoder '" + name + "' (expected avg, fv or vlad)");
}

const char* to_string(NormStep step) noexcept {
  switch (step) {
    case NormStep::Intra: return "intra";
    case NormStep::Ssr: return "ssr";
    case NormStep::L2: return "l2";
  }
  return "?";
}

std::vector<NormStep> parse_norm_order(const std::string& text) {
  std::vector<NormStep> order;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "intra") {
      order.push_back(NormStep::Intra);
    } else if (item == "ssr") {
      order.push_back(NormStep::Ssr);
    } else if (item == "l2") {
      order.push_back(NormStep::L2);
    } else {
      fail(ErrorKind::Parameter, "unknown normalization step '" + item + "'");
    }
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      require(order[i] != order[j], ErrorKind::Parameter, "normalization step listed twice");
    }
  }
  return order;
}

void ssr_inplace(std::span<float> v) {
  for (float& z : v) z = std::copysign(std::sqrt(std::abs(z)), z);
}

std::vector<float> ssr(std::span<const float> v) {
  std::vector<float> out(v.begin(), v.end());
  ssr_inplace(out);
  return out;
}

void intra_normalize_inplace(std::span<float> v, std::size_t k, std::size_t block_dim) {
  require(v.size() == k * block_dim, ErrorKind::Shape,
          "intra_normalize: length " + std::to_string(v.size()) + " != " + std::to_string(k) + "x" +
              std::to_string(block_dim));
  for (std::size_t j = 0; j < k; ++j) l2_normalize_inplace(v.subspan(j * block_dim, block_dim));
}

std::vector<float> intra_normalize(std::span<const float> v, std::size_t k, std::size_t block_dim) {
  std::vector<float> out(v.begin(), v.end());
  intra_normalize_inplace(out, k, block_dim);
  return out;
}

namespace {

void require_frames(const DescriptorSet& frames, const char* who) {
  require(frames.n_items >= 1, ErrorKind::EmptyInput, std::string(who) + ": video has no descriptors");
}

std::vector<float> to_float(const std::vector<double>& acc) { return {acc.begin(), acc.end()}; }

}  // namespace

VideoRepresentation average_pool(const DescriptorSet& frames) {
  require_frames(frames, "average_pool");
  std::vector<double> acc(frames.dim, 0.0);
  std::vector<float> unit(frames.dim);
  for (std::size_t i = 0; i < frames.n_items; ++i) {
    const auto row = frames.row(i);
    std::copy(row.begin(), row.end(), unit.begin());
    l2_normalize_inplace(unit);
    for (std::size_t d = 0; d < frames.dim; ++d) acc[d] += unit[d];
  }
  const double inv_n = 1.0 / static_cast<double>(frames.n_items);
  for (double& a : acc) a *= inv_n;

  VideoRepresentation rep;
  rep.encoder = Encoder::Avg;
  rep.d_prime = frames.dim;
  rep.l2 = true;
  rep.vector = to_float(acc);
  l2_normalize_inplace(rep.vector);
  return rep;
}

VideoRepresentation fisher_encode(const GmmModel& gmm, const DescriptorSet& frames, const FisherOptions& options) {
  require_frames(frames, "fisher_encode");
  require(frames.dim == gmm.dim, ErrorKind::Shape,
          "fisher_encode: descriptor dim " + std::to_string(frames.dim) + " != gmm dim " + std::to_string(gmm.dim));
  const std::size_t k = gmm.k;
  const std::size_t dim = gmm.dim;
  GmmEvaluator eval(gmm);

  std::vector<double> first(k * dim, 0.0), second(k * dim, 0.0);
  std::vector<double> q(k);
  std::vector<double> inv_sigma(k * dim);
  for (std::size_t i = 0; i < k * dim; ++i) inv_sigma[i] = 1.0 / std::sqrt(static_cast<double>(gmm.variances[i]));

  for (std::size_t i = 0; i < frames.n_items; ++i) {
    const auto x = frames.row(i);
    eval.posteriors(x, q);
    for (std::size_t j = 0; j < k; ++j) {
      const double r = q[j];
      if (r < options.posterior_threshold) continue;
      const float* mu = gmm.means.data() + j * dim;
      const double* is = inv_sigma.data() + j * dim;
      double* u = first.data() + j * dim;
      double* v = second.data() + j * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        const double z = (static_cast<double>(x[d]) - mu[d]) * is[d];
        u[d] += r * z;
        v[d] += r * (z * z - 1.0);
      }
    }
  }

  const double n = static_cast<double>(frames.n_items);
  VideoRepresentation rep;
  rep.encoder = Encoder::Fv;
  rep.k = k;
  rep.d_prime = dim;
  rep.ssr = options.ssr;
  rep.l2 = options.l2;
  rep.vector.resize(2 * k * dim);
  for (std::size_t j = 0; j < k; ++j) {
    const double pi = gmm.priors[j];
    const double su = 1.0 / (n * std::sqrt(pi));
    const double sv = 1.0 / (n * std::sqrt(2.0 * pi));
    for (std::size_t d = 0; d < dim; ++d) {
      rep.vector[j * dim + d] = static_cast<float>(first[j * dim + d] * su);
      rep.vector[k * dim + j * dim + d] = static_cast<float>(second[j * dim + d] * sv);
    }
  }
  if (options.ssr) ssr_inplace(rep.vector);
  if (options.l2) l2_normalize_inplace(rep.vector);
  return rep;
}

VideoRepresentation vlad_encode(const Codebook& codebook, const DescriptorSet& frames, const VladOptions& options) {
  require_frames(frames, "vlad_encode");
  require(frames.dim == codebook.dim, ErrorKind::Shape,
          "vlad_encode: descriptor dim " + std::to_string(frames.dim) + " != codebook dim " +
              std::to_string(codebook.dim));
  require(options.knn >= 1 && options.knn <= codebook.k, ErrorKind::Parameter,
          "vlad_encode: knn=" + std::to_string(options.knn) + " outside [1, K=" + std::to_string(codebook.k) + "]");
  auto listed = [&](NormStep s) { return std::find(options.order.begin(), options.order.end(), s) != options.order.end(); };
  require((!options.intra || listed(NormStep::Intra)) && (!options.ssr || listed(NormStep::Ssr)) &&
              (!options.l2 || listed(NormStep::L2)),
          ErrorKind::Parameter, "vlad_encode: an enabled normalization step is missing from the order");
  const std::size_t k = codebook.k;
  const std::size_t dim = codebook.dim;

  std::vector<double> acc(k * dim, 0.0);
  for (std::size_t i = 0; i < frames.n_items; ++i) {
    const auto x = frames.row(i);
    for (std::size_t j : nearest_centers(codebook, x, options.knn)) {
      const auto c = codebook.center(j);
      double* block = acc.data() + j * dim;
      for (std::size_t d = 0; d < dim; ++d) block[d] += static_cast<double>(x[d]) - c[d];
    }
  }

  VideoRepresentation rep;
  rep.encoder = Encoder::Vlad;
  rep.k = k;
  rep.d_prime = dim;
  rep.knn = options.knn;
  rep.intra = options.intra;
  rep.ssr = options.ssr;
  rep.l2 = options.l2;
  rep.vector = to_float(acc);
  for (NormStep step : options.order) {
    switch (step) {
      case NormStep::Intra:
        if (options.intra) intra_normalize_inplace(rep.vector, k, dim);
        break;
      case NormStep::Ssr:
        if (options.ssr) ssr_inplace(rep.vector);
        break;
      case NormStep::L2:
        if (options.l2) l2_normalize_inplace(rep.vector);
        break;
    }
  }
  return rep;
}

}  // namespace vidrep
