#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vidrep/descriptor_set.hpp"
#include "vidrep/io.hpp"

namespace vidrep {

enum class ApMode {
  NonInterpolated,  // mean precision at the rank of every positive
  Interpolated11,   // 11-point interpolated
};

struct RankedEntry {
  std::string video_id;
  double score = 0.0;
  int label = 0;
};

/// Joins scores with labels and sorts by score descending, ties by video_id
/// ascending. Every scored id must have a label.
std::vector<RankedEntry> rank(const std::vector<io::ScoreRow>& scores, const std::vector<io::LabelRow>& labels);

/// AP of an already ranked list of 0/1 labels.
double average_precision_ranked(std::span<const int> ranked_labels, ApMode mode = ApMode::NonInterpolated);

double average_precision(const std::vector<io::ScoreRow>& scores, const std::vector<io::LabelRow>& labels,
                         ApMode mode = ApMode::NonInterpolated);

/// AP for parallel score/label arrays; ties broken by position (lower first).
double average_precision(std::span<const double> scores, std::span<const int> labels,
                         ApMode mode = ApMode::NonInterpolated);

double mean_ap(std::span<const double> per_event_aps);

/// Per-video mean of the input score lists. With `znorm`, each list is first
/// shifted and scaled to zero mean and unit variance.
std::vector<io::ScoreRow> late_fuse(const std::vector<std::vector<io::ScoreRow>>& inputs, bool znorm = true);

struct SimilarityHistogram {
  std::vector<double> edges;  // bins + 1 values spanning [-1, 1]
  std::vector<double> pos_pos;
  std::vector<double> pos_neg;
  double pos_pos_mean = 0.0;
  double pos_neg_mean = 0.0;
  std::size_t pos_pos_pairs = 0;
  std::size_t pos_neg_pairs = 0;
};

/// Cosine similarities over all unordered positive pairs and all
/// positive/negative pairs, histogrammed into `bins` equal bins on [-1, 1].
SimilarityHistogram simstats(const DescriptorSet& positives, const DescriptorSet& negatives, std::size_t bins = 100);

/// Pools per-group pairs (e.g. one group per event) into one histogram:
/// pos-pos pairs stay within a group, pos-neg pairs pair a group's positives
/// with that group's negatives.
SimilarityHistogram simstats_grouped(const std::vector<DescriptorSet>& positives,
                                     const std::vector<DescriptorSet>& negatives, std::size_t bins = 100);

/// CSV with header "bin_low,bin_high,pos_pos,pos_neg".
std::string histogram_csv(const SimilarityHistogram& hist);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace vidrep
