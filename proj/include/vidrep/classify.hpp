#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vidrep/descriptor_set.hpp"
#include "vidrep/io.hpp"

namespace vidrep {

/// Converts 0/1 relevance labels to -1/+1 targets.
std::vector<int> to_signed_labels(std::span<const int> labels01);

struct LinearClassifier {
  std::vector<float> w;
  double bias = 0.0;
  double C = 1.0;

  friend bool operator==(const LinearClassifier&, const LinearClassifier&) = default;
};

struct SvmTrace {
  /// Primal objective of the returned iterate at the end of every solver
  /// epoch (n working-set updates); non-increasing.
  std::vector<double> primal;
  std::vector<double> dual;
  double duality_gap = 0.0;  // relative, at exit
  std::size_t iterations = 0;
};

/// Soft-margin linear SVM, (1/2)|w|^2 + C * sum hinge(y (w.x + b)) with an
/// unregularized bias, solved in the dual to a relative duality gap <= 1e-3.
/// The solver is deterministic; `seed` is accepted for interface parity.
LinearClassifier train_linear_svm(const DescriptorSet& x, std::span<const int> y, double C, std::uint64_t seed = 0,
                                  SvmTrace* trace = nullptr);

double predict_linear(const LinearClassifier& clf, std::span<const float> x);
std::vector<double> predict_linear(const LinearClassifier& clf, const DescriptorSet& x);

double linear_primal_objective(std::span<const double> w, double bias, const DescriptorSet& x, std::span<const int> y,
                               double C);

enum class KernelKind { ExpChi2, Rbf };

const char* to_string(KernelKind kind) noexcept;
KernelKind parse_kernel(const std::string& name);

/// (1/2) sum (x-y)^2 / (x+y+eps); negative components are rejected.
double chi2_distance(std::span<const float> a, std::span<const float> b, double eps = 1e-10);
/// (1/2) sum (x-y)^2.
double rbf_distance(std::span<const float> a, std::span<const float> b);
double kernel_distance(KernelKind kind, std::span<const float> a, std::span<const float> b);

/// Mean distance over all unordered pairs i < j.
double mean_distance(const DescriptorSet& x, KernelKind kind);

/// Dense row-major matrix of doubles.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

DenseMatrix distance_matrix(const DescriptorSet& a, const DescriptorSet& b, KernelKind kind);

/// K[i][j] = exp(-Dist(a_i, b_j) / (A sigma^2)).
DenseMatrix kernel_matrix(const DescriptorSet& a, const DescriptorSet& b, KernelKind kind, double sigma, double A);
DenseMatrix kernel_from_distances(const DenseMatrix& distances, double sigma, double A);

struct DualSolution {
  std::vector<double> alpha;  // in [0, C]
  double bias = 0.0;          // decision = sum alpha_i y_i K(x_i, x) + bias
  double objective = 0.0;     // sum alpha - (1/2) alpha' Q alpha
  double kkt_violation = 0.0;
  std::size_t iterations = 0;
};

/// Soft-margin SVM dual on a precomputed symmetric kernel, solved to a
/// maximal KKT violation <= tol.
DualSolution train_kernel_svm(const DenseMatrix& kernel, std::span<const int> y, double C, double tol = 1e-3);

/// sum alpha - (1/2) sum_ij alpha_i alpha_j y_i y_j K_ij.
double dual_objective(const DenseMatrix& kernel, std::span<const int> y, std::span<const double> alpha);

struct KernelSvmModel {
  KernelKind kernel = KernelKind::ExpChi2;
  double sigma = 1.0;
  double A = 1.0;
  double C = 1.0;
  double bias = 0.0;
  DescriptorSet support_vectors;
  std::vector<float> dual_coefs;  // alpha_i * y_i

  friend bool operator==(const KernelSvmModel&, const KernelSvmModel&) = default;
};

KernelSvmModel fit_kernel_svm(const DescriptorSet& x, std::span<const int> y, KernelKind kind, double sigma, double C);
double predict_kernel(const KernelSvmModel& model, std::span<const float> x);
std::vector<double> predict_kernel(const KernelSvmModel& model, const DescriptorSet& x);

struct CvPoint {
  double C = 0.0;
  double sigma = 0.0;
  double mean_ap = 0.0;
};

struct CvResult {
  double C = 0.0;
  double sigma = 0.0;
  double mean_ap = 0.0;
  std::size_t folds = 0;
  std::vector<CvPoint> grid;
  std::vector<std::string> warnings;
};

/// Stratified fold assignment (fold index per row).
std::vector<std::size_t> stratified_folds(std::span<const int> y, std::size_t folds, std::uint64_t seed,
                                          std::size_t* folds_used = nullptr, std::vector<std::string>* warnings = nullptr);

/// Picks C maximizing mean held-out AP; ties go to the smaller C.
CvResult cross_validate_linear(const DescriptorSet& x, std::span<const int> y, std::span<const double> c_grid,
                               std::size_t folds, std::uint64_t seed);

/// Joint (C, sigma) search; ties go to the smaller C, then the smaller sigma.
CvResult cross_validate_kernel(const DescriptorSet& x, std::span<const int> y, KernelKind kind,
                               std::span<const double> c_grid, std::span<const double> sigma_grid, std::size_t folds,
                               std::uint64_t seed);

io::ModelFile to_model_file(const LinearClassifier& clf);
LinearClassifier linear_from_model(const io::ModelFile& file);
io::ModelFile to_model_file(const KernelSvmModel& model);
KernelSvmModel kernel_svm_from_model(const io::ModelFile& file);

}  // namespace vidrep
