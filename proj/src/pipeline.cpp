#include "vidrep/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "vidrep/codebook.hpp"
#include "vidrep/error.hpp"
#include "vidrep/eval.hpp"
#include "vidrep/pq.hpp"
#include "vidrep/preprocess.hpp"
#include "vidrep/random.hpp"

namespace vidrep {

void PipelineConfig::validate() const {
  require(k >= 1, ErrorKind::Parameter, "config: k must be >= 1");
  if (encoder == Encoder::Vlad) {
    require(knn >= 1 && knn <= k, ErrorKind::Parameter, "config: knn must be in [1, k]");
    for (auto [on, step] : {std::pair{intra, NormStep::Intra}, {ssr, NormStep::Ssr}, {l2, NormStep::L2}}) {
      require(!on || std::find(order.begin(), order.end(), step) != order.end(), ErrorKind::Parameter,
              std::string("config: norm order lacks enabled step ") + to_string(step));
    }
  }
  require(sample_frames >= 2, ErrorKind::Parameter, "config: sample_frames must be >= 2");
  require(max_iter >= 1 && pq_max_iter >= 1, ErrorKind::Parameter, "config: iteration caps must be >= 1");
  require(C > 0.0, ErrorKind::Parameter, "config: C must be positive");
  require(!cross_validate || folds >= 2, ErrorKind::Parameter, "config: folds must be >= 2");
  for (double c : c_grid) require(c > 0.0, ErrorKind::Parameter, "config: C grid values must be positive");
  require(!cross_validate || !c_grid.empty(), ErrorKind::Parameter, "config: empty C grid");
  require(pq_sub_len >= 1, ErrorKind::Parameter, "config: pq sub_len must be >= 1");
  require(pq_bits >= 1 && pq_bits <= 16, ErrorKind::Parameter, "config: pq bits must be in [1, 16]");
  require(threads >= 1, ErrorKind::Parameter, "config: threads must be >= 1");
}

std::string PipelineConfig::describe() const {
  std::ostringstream out;
  out << "encoder=" << to_string(encoder) << "\npca_dim=" << pca_dim << "\nwhiten=" << whiten << "\nk=" << k
      << "\nknn=" << knn << "\nssr=" << ssr << "\nintra=" << intra << "\nl2=" << l2 << "\nnorm_order=";
  for (std::size_t i = 0; i < order.size(); ++i) out << (i ? "," : "") << to_string(order[i]);
  out << "\nsample_frames=" << sample_frames << "\nmax_iter=" << max_iter << "\nC=" << C
      << "\ncross_validate=" << cross_validate << "\nc_grid=";
  for (std::size_t i = 0; i < c_grid.size(); ++i) out << (i ? "," : "") << c_grid[i];
  out << "\nfolds=" << folds << "\npq=" << pq << "\npq_sub_len=" << pq_sub_len << "\npq_bits=" << pq_bits
      << "\npq_max_iter=" << pq_max_iter << "\nseed=" << seed << "\nthreads=" << threads << "\n";
  return out.str();
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

DescriptorSet normalized(const DescriptorSet& frames) {
  DescriptorSet out = frames;
  l2_normalize_rows(out);
  return out;
}

DescriptorSet sample_training_frames(const std::vector<SynthVideo>& train, std::size_t cap, std::uint64_t seed) {
  std::size_t total = 0;
  std::size_t dim = 0;
  for (const auto& v : train) {
    total += v.frames.n_items;
    dim = v.frames.dim;
  }
  require(total >= 2, ErrorKind::InsufficientData, "pipeline: fewer than two training frames");
  std::vector<std::size_t> picks(total);
  for (std::size_t i = 0; i < total; ++i) picks[i] = i;
  if (total > cap) {
    Rng rng(seed);
    for (std::size_t i = 0; i < cap; ++i) std::swap(picks[i], picks[i + rng.index(total - i)]);
    picks.resize(cap);
    std::sort(picks.begin(), picks.end());
  }
  DescriptorSet out(picks.size(), dim);
  std::size_t video = 0, base = 0, row = 0;
  for (std::size_t p : picks) {
    while (p >= base + train[video].frames.n_items) base += train[video++].frames.n_items;
    auto dst = out.row(row++);
    const auto src = train[video].frames.row(p - base);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  l2_normalize_rows(out);
  return out;
}

}  // namespace

EncodedSplits encode_corpus(const SynthCorpus& corpus, const PipelineConfig& config) {
  config.validate();
  require(!corpus.train.empty() && !corpus.test.empty(), ErrorKind::EmptyInput, "pipeline: empty corpus split");

  std::function<std::vector<float>(const DescriptorSet&)> encode;
  PcaModel pca;
  Codebook codebook;
  GmmModel gmm;
  const bool use_pca = config.encoder != Encoder::Avg && config.pca_dim > 0;

  if (config.encoder == Encoder::Avg) {
    encode = [](const DescriptorSet& frames) { return average_pool(frames).vector; };
  } else {
    DescriptorSet sample = sample_training_frames(corpus.train, config.sample_frames, config.seed);
    if (use_pca) {
      pca = fit_pca(sample, config.pca_dim, config.whiten);
      sample = apply_pca(pca, sample);
    }
    if (config.encoder == Encoder::Vlad) {
      KMeansOptions ko;
      ko.k = config.k;
      ko.seed = config.seed;
      ko.max_iter = config.max_iter;
      codebook = fit_kmeans(sample, ko);
      VladOptions vo;
      vo.knn = config.knn;
      vo.intra = config.intra;
      vo.ssr = config.ssr;
      vo.l2 = config.l2;
      vo.order = config.order;
      encode = [&, vo](const DescriptorSet& frames) {
        DescriptorSet x = normalized(frames);
        if (use_pca) x = apply_pca(pca, x);
        return vlad_encode(codebook, x, vo).vector;
      };
    } else {
      GmmOptions go;
      go.k = config.k;
      go.seed = config.seed;
      go.max_iter = config.max_iter;
      gmm = fit_gmm(sample, go);
      FisherOptions fo;
      fo.ssr = config.ssr;
      fo.l2 = config.l2;
      encode = [&, fo](const DescriptorSet& frames) {
        DescriptorSet x = normalized(frames);
        if (use_pca) x = apply_pca(pca, x);
        return fisher_encode(gmm, x, fo).vector;
      };
    }
  }

  auto encode_split = [&](const std::vector<SynthVideo>& videos) {
    std::vector<std::vector<float>> rows(videos.size());
    parallel_for(videos.size(), config.threads, [&](std::size_t i) { rows[i] = encode(videos[i].frames); });
    DescriptorSet out(videos.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), out.row(i).begin());
    return out;
  };
  EncodedSplits splits;
  splits.train = encode_split(corpus.train);
  splits.test = encode_split(corpus.test);
  return splits;
}

PipelineResult run_pipeline(const SynthCorpus& corpus, const PipelineConfig& config) {
  require(corpus.events >= 1, ErrorKind::EmptyInput, "pipeline: corpus has no events");
  auto splits = encode_corpus(corpus, config);
  PipelineResult result;

  PqModel pq;
  std::optional<BatchCodes> codes;
  if (config.pq) {
    PqFitOptions po;
    po.sub_len = config.pq_sub_len;
    po.bits = config.pq_bits;
    po.seed = config.seed;
    po.max_iter = config.pq_max_iter;
    pq = fit_pq(splits.train, po);
    codes.emplace(splits.test.n_items, pq.subspaces(), pq.bits);
    for (std::size_t i = 0; i < splits.test.n_items; ++i) {
      const auto code = pq_encode(pq, splits.test.row(i));
      for (std::size_t s = 0; s < code.size(); ++s) codes->set(i, s, code[s]);
    }
  }

  result.events.resize(corpus.events);
  std::vector<double> aps, aps_pq;
  for (std::size_t e = 0; e < corpus.events; ++e) {
    const auto y = to_signed_labels(corpus.train_labels[e]);
    EventResult& er = result.events[e];
    er.event = event_name(e);
    er.C = config.C;
    if (config.cross_validate) {
      er.C = cross_validate_linear(splits.train, y, config.c_grid, config.folds, config.seed).C;
    }
    const auto clf = train_linear_svm(splits.train, y, er.C, config.seed);
    er.ap = average_precision(predict_linear(clf, splits.test), corpus.test_labels[e]);
    aps.push_back(er.ap);
    if (config.pq) {
      const ScoreLut lut = build_lut(pq, clf.w, clf.bias);
      std::vector<double> scores(splits.test.n_items);
      score_compressed_batch(lut, *codes, scores);
      er.ap_pq = average_precision(scores, corpus.test_labels[e]);
      aps_pq.push_back(er.ap_pq);
    }
  }
  result.map = mean_ap(aps);
  if (config.pq) result.map_pq = mean_ap(aps_pq);
  result.train_reps = std::move(splits.train);
  result.test_reps = std::move(splits.test);
  return result;
}

}  // namespace vidrep
