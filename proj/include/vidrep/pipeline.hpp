#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vidrep/classify.hpp"
#include "vidrep/encode.hpp"
#include "vidrep/synth.hpp"

namespace vidrep {

/// Every knob of the frames-to-mAP pipeline.
struct PipelineConfig {
  Encoder encoder = Encoder::Vlad;
  std::size_t pca_dim = 32;  // 0 keeps the frame dimension
  bool whiten = true;
  std::size_t k = 32;
  std::size_t knn = 5;
  bool ssr = true;
  bool intra = true;
  bool l2 = true;
  std::vector<NormStep> order{NormStep::Intra, NormStep::Ssr, NormStep::L2};
  std::size_t sample_frames = 50000;  // training frames used for PCA and codebooks
  std::size_t max_iter = 100;

  double C = 1.0;
  bool cross_validate = false;
  std::vector<double> c_grid{1e-2, 1e-1, 1.0, 10.0, 100.0};
  std::size_t folds = 5;

  bool pq = false;
  std::size_t pq_sub_len = 4;
  unsigned pq_bits = 8;
  std::size_t pq_max_iter = 25;

  std::uint64_t seed = 0;
  std::size_t threads = 1;

  /// Throws a parameter error naming the first invalid field.
  void validate() const;
  /// key=value lines, one per field, for logging.
  std::string describe() const;
};

struct EventResult {
  std::string event;
  double ap = 0.0;
  double ap_pq = 0.0;
  double C = 0.0;
};

struct PipelineResult {
  std::vector<EventResult> events;
  double map = 0.0;
  double map_pq = 0.0;
  DescriptorSet train_reps;
  DescriptorSet test_reps;
};

/// Encodes every video with `config` (fitting PCA and the codebook on
/// training frames only), trains one linear SVM per event and scores the
/// test split, optionally also through product quantization.
PipelineResult run_pipeline(const SynthCorpus& corpus, const PipelineConfig& config);

/// Encodes all videos; the models are fitted on `train` frames.
struct EncodedSplits {
  DescriptorSet train;
  DescriptorSet test;
};
EncodedSplits encode_corpus(const SynthCorpus& corpus, const PipelineConfig& config);

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers. Each index is
/// handled exactly once, so writes to per-index slots stay deterministic.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace vidrep
