#include "vidrep/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "vidrep/error.hpp"

namespace vidrep {

void l2_normalize_inplace(std::span<float> v) {
  double sq = 0.0;
  for (float x : v) {
    if (!std::isfinite(x)) fail(ErrorKind::Data, "l2_normalize: non-finite input");
    sq += static_cast<double>(x) * x;
  }
  if (sq == 0.0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (float& x : v) x = static_cast<float>(x * inv);
}

std::vector<float> l2_normalize(std::span<const float> v) {
  std::vector<float> out(v.begin(), v.end());
  l2_normalize_inplace(out);
  return out;
}

void l2_normalize_rows(DescriptorSet& set) {
  for (std::size_t i = 0; i < set.n_items; ++i) l2_normalize_inplace(set.row(i));
}

PcaModel fit_pca(const DescriptorSet& train, std::size_t d_out, bool whiten, double eps) {
  const std::size_t n = train.n_items;
  const std::size_t dim = train.dim;
  require(d_out >= 1, ErrorKind::Parameter, "fit_pca: d_out must be >= 1");
  require(d_out <= dim, ErrorKind::Parameter,
          "fit_pca: d_out " + std::to_string(d_out) + " exceeds input dim " + std::to_string(dim));
  require(n > d_out, ErrorKind::InsufficientData,
          "fit_pca: need more than " + std::to_string(d_out) + " rows, got " + std::to_string(n));
  require(eps >= 0.0, ErrorKind::Parameter, "fit_pca: eps must be non-negative");

  using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> x(train.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  const Eigen::RowVectorXd mean = x.cast<double>().colwise().mean();
  const Eigen::MatrixXd centered = x.cast<double>().rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.adjoint() * centered) / static_cast<double>(n - 1);
  if (!(cov.trace() > 0.0)) fail(ErrorKind::Degenerate, "fit_pca: training data has zero variance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) fail(ErrorKind::Numeric, "fit_pca: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd& values = solver.eigenvalues();
  const Eigen::MatrixXd& vectors = solver.eigenvectors();

  PcaModel model;
  model.input_dim = dim;
  model.output_dim = d_out;
  model.whiten = whiten;
  model.eps = eps;
  model.mean.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) model.mean[d] = static_cast<float>(mean(static_cast<Eigen::Index>(d)));
  model.projection.assign(dim * d_out, 0.0f);
  model.eigenvalues.resize(d_out);
  for (std::size_t j = 0; j < d_out; ++j) {
    const auto src = static_cast<Eigen::Index>(dim - 1 - j);
    model.eigenvalues[j] = static_cast<float>(std::max(0.0, values(src)));
    Eigen::VectorXd column = vectors.col(src);
    Eigen::Index pivot = 0;
    column.cwiseAbs().maxCoeff(&pivot);
    if (column(pivot) < 0.0) column = -column;
    for (std::size_t d = 0; d < dim; ++d) {
      model.projection[d * d_out + j] = static_cast<float>(column(static_cast<Eigen::Index>(d)));
    }
  }
  return model;
}

std::vector<float> apply_pca(const PcaModel& model, std::span<const float> x) {
  require(x.size() == model.input_dim, ErrorKind::Shape,
          "apply_pca: input length " + std::to_string(x.size()) + " != " + std::to_string(model.input_dim));
  std::vector<double> acc(model.output_dim, 0.0);
  for (std::size_t d = 0; d < model.input_dim; ++d) {
    const double centered = static_cast<double>(x[d]) - model.mean[d];
    if (centered == 0.0) continue;
    const float* row = model.projection.data() + d * model.output_dim;
    for (std::size_t j = 0; j < model.output_dim; ++j) acc[j] += centered * row[j];
  }
  std::vector<float> y(model.output_dim);
  for (std::size_t j = 0; j < model.output_dim; ++j) {
    double v = acc[j];
    if (model.whiten) v /= std::sqrt(static_cast<double>(model.eigenvalues[j]) + model.eps);
    y[j] = static_cast<float>(v);
  }
  return y;
}

DescriptorSet apply_pca(const PcaModel& model, const DescriptorSet& set) {
  DescriptorSet out(set.n_items, model.output_dim);
  for (std::size_t i = 0; i < set.n_items; ++i) {
    const auto y = apply_pca(model, set.row(i));
    std::copy(y.begin(), y.end(), out.row(i).begin());
  }
  return out;
}

io::ModelFile to_model_file(const PcaModel& model) {
  io::ModelFile file;
  file.kind = "pca";
  file.params = {{"input_dim", model.input_dim},
                 {"output_dim", model.output_dim},
                 {"whiten", model.whiten},
                 {"eps", model.eps}};
  file.blocks.push_back({"mean", {model.input_dim}, model.mean});
  file.blocks.push_back({"projection", {model.input_dim, model.output_dim}, model.projection});
  file.blocks.push_back({"eigenvalues", {model.output_dim}, model.eigenvalues});
  return file;
}

PcaModel pca_from_model(const io::ModelFile& file) {
  require(file.kind == "pca", ErrorKind::Format, "expected a pca model, got '" + file.kind + "'");
  io::validate_model(file);
  PcaModel model;
  try {
    model.input_dim = file.params.at("input_dim").get<std::size_t>();
    model.output_dim = file.params.at("output_dim").get<std::size_t>();
    model.whiten = file.params.at("whiten").get<bool>();
    model.eps = file.params.at("eps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("pca model params: ") + e.what());
  }
  const auto& mean = file.block("mean");
  const auto& proj = file.block("projection");
  const auto& eig = file.block("eigenvalues");
  require(mean.shape == std::vector<std::size_t>{model.input_dim} &&
              proj.shape == std::vector<std::size_t>{model.input_dim, model.output_dim} &&
              eig.shape == std::vector<std::size_t>{model.output_dim},
          ErrorKind::Format, "pca model block shapes disagree with params");
  model.mean = mean.data;
  model.projection = proj.data;
  model.eigenvalues = eig.data;
  return model;
}

}  // namespace vidrep
