#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vidrep/descriptor_set.hpp"
#include "vidrep/io.hpp"

namespace vidrep {

/// Unit-norm copy of v; the zero vector is returned unchanged.
std::vector<float> l2_normalize(std::span<const float> v);
void l2_normalize_inplace(std::span<float> v);
/// Normalizes every row of the set in place.
void l2_normalize_rows(DescriptorSet& set);

struct PcaModel {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<float> mean;         // input_dim
  std::vector<float> projection;   // input_dim x output_dim, row-major; columns are principal directions
  std::vector<float> eigenvalues;  // output_dim, non-increasing
  bool whiten = false;
  double eps = 1e-8;

  float component(std::size_t row, std::size_t col) const { return projection[row * output_dim + col]; }

  friend bool operator==(const PcaModel&, const PcaModel&) = default;
};

/// Fits PCA on rows of `train` (sample covariance with the n-1 divisor).
/// Each principal direction's sign is fixed so its largest-magnitude entry is
/// positive. Callers are expected to l2-normalize the rows beforehand.
PcaModel fit_pca(const DescriptorSet& train, std::size_t d_out, bool whiten, double eps = 1e-8);

std::vector<float> apply_pca(const PcaModel& model, std::span<const float> x);
DescriptorSet apply_pca(const PcaModel& model, const DescriptorSet& set);

io::ModelFile to_model_file(const PcaModel& model);
PcaModel pca_from_model(const io::ModelFile& file);

}  // namespace vidrep
