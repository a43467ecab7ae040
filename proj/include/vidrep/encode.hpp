#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vidrep/codebook.hpp"
#include "vidrep/descriptor_set.hpp"

namespace vidrep {

enum class Encoder { Avg, Fv, Vlad };

const char* to_string(Encoder encoder) noexcept;
Encoder parse_encoder(const std::string& name);

/// Post-aggregation normalization steps; the VLAD pipeline applies them in a
/// configurable order.
enum class NormStep { Intra, Ssr, L2 };

const char* to_string(NormStep step) noexcept;
/// Parses a comma list such as "intra,ssr,l2".
std::vector<NormStep> parse_norm_order(const std::string& text);

struct VideoRepresentation {
  Encoder encoder = Encoder::Avg;
  std::vector<float> vector;
  std::size_t k = 0;        // codebook / mixture size (0 for avg)
  std::size_t d_prime = 0;  // descriptor dimension fed to the encoder
  std::size_t knn = 0;
  bool ssr = false;
  bool intra = false;
  bool l2 = false;

  std::size_t dim() const noexcept { return vector.size(); }
};

/// Frame-wise l2, mean over frames, then l2 again.
VideoRepresentation average_pool(const DescriptorSet& frames);

struct FisherOptions {
  bool ssr = true;
  bool l2 = true;
  /// Responsibilities below this are skipped during accumulation.
  double posterior_threshold = 1e-6;
};

/// First- and second-order Fisher vector: all mean-deviation blocks followed
/// by all variance-deviation blocks (length 2 * dim * K).
VideoRepresentation fisher_encode(const GmmModel& gmm, const DescriptorSet& frames, const FisherOptions& options = {});

struct VladOptions {
  std::size_t knn = 5;
  bool intra = true;
  bool ssr = true;
  bool l2 = true;
  std::vector<NormStep> order{NormStep::Intra, NormStep::Ssr, NormStep::L2};
};

/// VLAD-k: every descriptor adds its residual to each of its knn nearest
/// centers' blocks (length dim * K).
VideoRepresentation vlad_encode(const Codebook& codebook, const DescriptorSet& frames, const VladOptions& options = {});

void ssr_inplace(std::span<float> v);
std::vector<float> ssr(std::span<const float> v);

/// l2-normalizes each contiguous block of `block_dim` values; zero blocks stay zero.
void intra_normalize_inplace(std::span<float> v, std::size_t k, std::size_t block_dim);
std::vector<float> intra_normalize(std::span<const float> v, std::size_t k, std::size_t block_dim);

}  // namespace vidrep
