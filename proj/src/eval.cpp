#include "vidrep/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "vidrep/error.hpp"

namespace vidrep {

std::vector<RankedEntry> rank(const std::vector<io::ScoreRow>& scores, const std::vector<io::LabelRow>& labels) {
  std::map<std::string, int> label_of;
  for (const auto& l : labels) label_of.emplace(l.video_id, l.label);
  std::vector<RankedEntry> ranked;
  ranked.reserve(scores.size());
  std::set<std::string> seen;
  for (const auto& s : scores) {
    auto it = label_of.find(s.video_id);
    if (it == label_of.end()) fail(ErrorKind::Data, "no label for scored video '" + s.video_id + "'");
    if (!seen.insert(s.video_id).second) fail(ErrorKind::Data, "video '" + s.video_id + "' scored twice");
    require(std::isfinite(s.score), ErrorKind::Data, "non-finite score for '" + s.video_id + "'");
    ranked.push_back({s.video_id, static_cast<double>(s.score), it->second});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.video_id < b.video_id;
  });
  return ranked;
}

double average_precision_ranked(std::span<const int> ranked_labels, ApMode mode) {
  std::size_t positives = 0;
  for (int l : ranked_labels) positives += l != 0;
  require(positives > 0, ErrorKind::Data, "average_precision: no positive labels");

  if (mode == ApMode::NonInterpolated) {
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ranked_labels.size(); ++r) {
      if (ranked_labels[r] == 0) continue;
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    return sum / static_cast<double>(positives);
  }

  // precision/recall after each rank, then the max precision at recall >= t.
  std::vector<double> precision, recall;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranked_labels.size(); ++r) {
    hits += ranked_labels[r] != 0;
    precision.push_back(static_cast<double>(hits) / static_cast<double>(r + 1));
    recall.push_back(static_cast<double>(hits) / static_cast<double>(positives));
  }
  double sum = 0.0;
  for (int t = 0; t <= 10; ++t) {
    const double level = t / 10.0;
    double best = 0.0;
    for (std::size_t r = 0; r < precision.size(); ++r) {
      if (recall[r] + 1e-12 >= level) best = std::max(best, precision[r]);
    }
    sum += best;
  }
  return sum / 11.0;
}

double average_precision(const std::vector<io::ScoreRow>& scores, const std::vector<io::LabelRow>& labels,
                         ApMode mode) {
  const auto ranked = rank(scores, labels);
  std::vector<int> ranked_labels;
  ranked_labels.reserve(ranked.size());
  for (const auto& e : ranked) ranked_labels.push_back(e.label);
  return average_precision_ranked(ranked_labels, mode);
}

double average_precision(std::span<const double> scores, std::span<const int> labels, ApMode mode) {
  require(scores.size() == labels.size(), ErrorKind::Shape, "average_precision: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<int> ranked(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) ranked[i] = labels[order[i]];
  return average_precision_ranked(ranked, mode);
}

double mean_ap(std::span<const double> per_event_aps) {
  require(!per_event_aps.empty(), ErrorKind::EmptyInput, "mean_ap: no events");
  double sum = 0.0;
  for (double ap : per_event_aps) sum += ap;
  return sum / static_cast<double>(per_event_aps.size());
}

std::vector<io::ScoreRow> late_fuse(const std::vector<std::vector<io::ScoreRow>>& inputs, bool znorm) {
  require(!inputs.empty(), ErrorKind::EmptyInput, "late_fuse: no score lists");
  const auto& reference = inputs.front();
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (!position.emplace(reference[i].video_id, i).second) {
      fail(ErrorKind::Data, "late_fuse: duplicate video '" + reference[i].video_id + "'");
    }
  }

  std::vector<double> fused(reference.size(), 0.0);
  for (std::size_t f = 0; f < inputs.size(); ++f) {
    const auto& list = inputs[f];
    std::set<std::string> ids;
    for (const auto& row : list) ids.insert(row.video_id);
    std::vector<std::string> diff;
    for (const auto& row : reference) {
      if (!ids.count(row.video_id)) diff.push_back(row.video_id);
    }
    for (const auto& id : ids) {
      if (!position.count(id)) diff.push_back(id);
    }
    if (!diff.empty() || ids.size() != list.size()) {
      std::string msg = "late_fuse: input " + std::to_string(f) + " has a different id set; symmetric difference:";
      for (const auto& id : diff) msg += " " + id;
      fail(ErrorKind::Data, msg);
    }

    double mean = 0.0, scale = 1.0;
    if (znorm && !list.empty()) {
      for (const auto& row : list) mean += row.score;
      mean /= static_cast<double>(list.size());
      double var = 0.0;
      for (const auto& row : list) var += (row.score - mean) * (row.score - mean);
      var /= static_cast<double>(list.size());
      scale = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    }
    for (const auto& row : list) fused[position[row.video_id]] += (row.score - mean) * scale;
  }

  std::vector<io::ScoreRow> out(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    out[i].video_id = reference[i].video_id;
    out[i].score = static_cast<float>(fused[i] / static_cast<double>(inputs.size()));
  }
  return out;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size(), ErrorKind::Shape, "cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    dot += static_cast<double>(a[d]) * b[d];
    na += static_cast<double>(a[d]) * a[d];
    nb += static_cast<double>(b[d]) * b[d];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

struct PairCounts {
  std::vector<double> pos_pos, pos_neg;
  double pp_sum = 0.0, pn_sum = 0.0;
  std::size_t pp = 0, pn = 0;

  explicit PairCounts(std::size_t bins) : pos_pos(bins, 0.0), pos_neg(bins, 0.0) {}

  std::size_t bin(double c) const {
    const auto bins = static_cast<double>(pos_pos.size());
    const double pos = std::floor((c + 1.0) / 2.0 * bins);
    return static_cast<std::size_t>(std::clamp(pos, 0.0, bins - 1.0));
  }

  void add(const DescriptorSet& positives, const DescriptorSet& negatives) {
    require(positives.dim == negatives.dim || negatives.n_items == 0, ErrorKind::Shape, "simstats: dim mismatch");
    for (std::size_t i = 0; i < positives.n_items; ++i) {
      for (std::size_t j = i + 1; j < positives.n_items; ++j) {
        const double c = cosine_similarity(positives.row(i), positives.row(j));
        pos_pos[bin(c)] += 1.0;
        pp_sum += c;
        ++pp;
      }
      for (std::size_t j = 0; j < negatives.n_items; ++j) {
        const double c = cosine_similarity(positives.row(i), negatives.row(j));
        pos_neg[bin(c)] += 1.0;
        pn_sum += c;
        ++pn;
      }
    }
  }

  SimilarityHistogram finish() const {
    require(pp > 0 && pn > 0, ErrorKind::InsufficientData, "simstats: need >= 2 positives and >= 1 negative");
    SimilarityHistogram h;
    const std::size_t bins = pos_pos.size();
    for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(-1.0 + 2.0 * static_cast<double>(i) / bins);
    h.pos_pos = pos_pos;
    h.pos_neg = pos_neg;
    for (auto& v : h.pos_pos) v /= static_cast<double>(pp);
    for (auto& v : h.pos_neg) v /= static_cast<double>(pn);
    h.pos_pos_mean = pp_sum / static_cast<double>(pp);
    h.pos_neg_mean = pn_sum / static_cast<double>(pn);
    h.pos_pos_pairs = pp;
    h.pos_neg_pairs = pn;
    return h;
  }
};

}  // namespace

SimilarityHistogram simstats(const DescriptorSet& positives, const DescriptorSet& negatives, std::size_t bins) {
  require(bins >= 1, ErrorKind::Parameter, "simstats: bins must be >= 1");
  require(positives.n_items >= 2 && negatives.n_items >= 1, ErrorKind::InsufficientData,
          "simstats: need >= 2 positives and >= 1 negative");
  PairCounts counts(bins);
  counts.add(positives, negatives);
  return counts.finish();
}

SimilarityHistogram simstats_grouped(const std::vector<DescriptorSet>& positives,
                                     const std::vector<DescriptorSet>& negatives, std::size_t bins) {
  require(bins >= 1, ErrorKind::Parameter, "simstats: bins must be >= 1");
  require(positives.size() == negatives.size(), ErrorKind::Shape, "simstats: group count mismatch");
  PairCounts counts(bins);
  for (std::size_t g = 0; g < positives.size(); ++g) counts.add(positives[g], negatives[g]);
  return counts.finish();
}

std::string histogram_csv(const SimilarityHistogram& hist) {
  std::string out = "bin_low,bin_high,pos_pos,pos_neg\n";
  char buf[64];
  auto put = [&](double v, char sep) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
    out += sep;
  };
  for (std::size_t i = 0; i < hist.pos_pos.size(); ++i) {
    put(hist.edges[i], ',');
    put(hist.edges[i + 1], ',');
    put(hist.pos_pos[i], ',');
    put(hist.pos_neg[i], '\n');
  }
  return out;
}

}  // namespace vidrep
