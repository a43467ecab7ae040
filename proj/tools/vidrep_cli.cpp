#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vidrep/classify.hpp"
#include "vidrep/codebook.hpp"
#include "vidrep/encode.hpp"
#include "vidrep/error.hpp"
#include "vidrep/eval.hpp"
#include "vidrep/io.hpp"
#include "vidrep/lcd.hpp"
#include "vidrep/pipeline.hpp"
#include "vidrep/pq.hpp"
#include "vidrep/preprocess.hpp"
#include "vidrep/random.hpp"
#include "vidrep/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vidrep;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--seed", common.seed, "Random seed")->capture_default_str();
  sub->add_option("--threads", common.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

// Representation files keep one row per video; the ids sit next to them in
// <file>.ids, one per line, in row order.
fs::path ids_path(const fs::path& reps) { return fs::path(reps.string() + ".ids"); }

std::vector<std::string> read_ids(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open id list " + path.string());
  std::vector<std::string> ids;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    require(seen.insert(line).second, ErrorKind::Data, path.string() + ": duplicate id '" + line + "'");
    ids.push_back(line);
  }
  return ids;
}

void write_ids(const fs::path& path, const std::vector<std::string>& ids) {
  std::string text;
  for (const auto& id : ids) text += id + "\n";
  io::write_file_atomic(path, text);
}

struct Reps {
  DescriptorSet x;
  std::vector<std::string> ids;
};

Reps read_reps(const fs::path& path) {
  Reps r{io::read_descriptors(path), {}};
  if (fs::exists(ids_path(path))) {
    r.ids = read_ids(ids_path(path));
    require(r.ids.size() == r.x.n_items, ErrorKind::Data,
            ids_path(path).string() + " lists " + std::to_string(r.ids.size()) + " ids for " +
                std::to_string(r.x.n_items) + " rows");
  } else {
    for (std::size_t i = 0; i < r.x.n_items; ++i) r.ids.push_back(std::to_string(i));
  }
  return r;
}

void write_reps(const fs::path& path, const DescriptorSet& x, const std::vector<std::string>& ids) {
  io::write_descriptors(path, x);
  write_ids(ids_path(path), ids);
}

std::vector<int> labels_for(const std::vector<std::string>& ids, const fs::path& label_file) {
  std::map<std::string, int> label_of;
  for (const auto& row : io::read_labels(label_file)) label_of[row.video_id] = row.label;
  std::vector<int> labels;
  for (const auto& id : ids) {
    auto it = label_of.find(id);
    if (it == label_of.end()) fail(ErrorKind::Data, label_file.string() + " has no label for '" + id + "'");
    labels.push_back(it->second);
  }
  return labels;
}

DescriptorSet load_frames(const std::vector<std::string>& inputs, std::size_t cap, std::uint64_t seed) {
  DescriptorSet all;
  for (const auto& path : inputs) {
    const auto set = io::read_descriptors(path);
    if (all.dim == 0) all.dim = set.dim;
    require(set.dim == all.dim, ErrorKind::Shape, path + ": dim " + std::to_string(set.dim) + " != " + std::to_string(all.dim));
    all.data.insert(all.data.end(), set.data.begin(), set.data.end());
    all.n_items += set.n_items;
  }
  require(!all.empty(), ErrorKind::EmptyInput, "no descriptors in the input files");
  if (cap > 0 && all.n_items > cap) {
    Rng rng(seed);
    std::vector<std::size_t> picks(all.n_items);
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
    for (std::size_t i = 0; i < cap; ++i) std::swap(picks[i], picks[i + rng.index(all.n_items - i)]);
    picks.resize(cap);
    std::sort(picks.begin(), picks.end());
    DescriptorSet sample(cap, all.dim);
    for (std::size_t i = 0; i < cap; ++i) std::copy_n(all.row(picks[i]).begin(), all.dim, sample.row(i).begin());
    all = std::move(sample);
  }
  l2_normalize_rows(all);
  return all;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string stem_of(const fs::path& p) { return p.stem().string(); }

void print_json(const json& j) { std::cout << j.dump() << "\n"; }

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parameter:
      return 2;
    case ErrorKind::Degenerate:
    case ErrorKind::Numeric:
      return 4;
    default:
      return 3;
  }
}

void emit_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video representations for event detection: encoders, PQ, SVMs and mAP"};
  app.set_config("--config", "", "INI/TOML configuration file");
  app.require_subcommand(1);

  std::vector<std::pair<CLI::App*, std::function<void()>>> handlers;
  Common common;

  // fit-pca
  {
    auto* sub = app.add_subcommand("fit-pca", "Fit PCA (optionally whitened) on l2-normalized frame descriptors");
    static std::vector<std::string> inputs;
    static std::size_t dim = 0, sample = 0;
    static bool whiten = false;
    static double eps = 1e-8;
    static std::string out;
    sub->add_option("inputs", inputs, "Descriptor files (.vdsc)")->required()->check(CLI::ExistingFile);
    sub->add_option("--dim", dim, "Output dimension")->required();
    sub->add_flag("--whiten", whiten, "Divide by sqrt(eigenvalue + eps)");
    sub->add_option("--eps", eps, "Whitening epsilon")->capture_default_str();
    sub->add_option("--sample", sample, "Use at most this many frames (0 = all)")->capture_default_str();
    sub->add_option("-o,--output", out, "Model file (.vmdl)")->required();
    add_common(sub, common);
    handlers.emplace_back(sub, [&] {
      const auto frames = load_frames(inputs, sample, common.seed);
      const auto model = fit_pca(frames, dim, whiten, eps);
      io::write_model(out, to_model_file(model));
      print_json({{"model", out}, {"input_dim", model.input_dim}, {"output_dim", model.output_dim}, {"frames", frames.n_items}});
    });
  }

  // fit-kmeans / fit-gmm
  static std::vector<std::string> cb_inputs;
  static std::size_t cb_k = 0, cb_sample = 0, cb_iter = 100;
  static std::string cb_pca, cb_out;
  for (const std::string name : {"fit-kmeans", "fit-gmm"}) {
    const bool gmm = name == "fit-gmm";
    auto* sub = app.add_subcommand(name, gmm ? "Fit a diagonal GMM with EM" : "Fit a k-means codebook (k-means++ seeding)");
    sub->add_option("inputs", cb_inputs, "Descriptor files (.vdsc)")->required()->check(CLI::ExistingFile);
    sub->add_option("-k,--k", cb_k, "Number of centers / components")->required();
    sub->add_option("--pca", cb_pca, "PCA model applied after l2 normalization")->check(CLI::ExistingFile);
    sub->add_option("--sample", cb_sample, "Use at most this many frames (0 = all)")->capture_default_str();
    sub->add_option("--max-iter", cb_iter, "Iteration cap")->capture_default_str();
    sub->add_option("-o,--output", cb_out, "Model file (.vmdl)")->required();
    add_common(sub, common);
    handlers.emplace_back(sub, [&, gmm] {
      auto frames = load_frames(cb_inputs, cb_sample, common.seed);
      if (!cb_pca.empty()) frames = apply_pca(pca_from_model(io::read_model(cb_pca)), frames);
      json summary{{"model", cb_out}, {"frames", frames.n_items}, {"dim", frames.dim}};
      if (gmm) {
        GmmOptions o;
        o.k = cb_k;
        o.seed = common.seed;
        o.max_iter = cb_iter;
        GmmTrace trace;
        io::write_model(cb_out, to_model_file(fit_gmm(frames, o, &trace)));
        summary["log_likelihood"] = trace.log_likelihood.empty() ? 0.0 : trace.log_likelihood.back();
      } else {
        KMeansOptions o;
        o.k = cb_k;
        o.seed = common.seed;
        o.max_iter = cb_iter;
        KMeansTrace trace;
        io::write_model(cb_out, to_model_file(fit_kmeans(frames, o, &trace)));
        summary["objective"] = trace.objective.empty() ? 0.0 : trace.objective.back();
      }
      print_json(summary);
    });
  }

  // lcd
  {
    auto* sub = app.add_subcommand("lcd", "Latent concept descriptors from pool5 tensors");
    static std::string in, out, levels = "6,3,2,1";
    static bool no_spp = false;
    sub->add_option("input", in, "Pool5 tensor file (.vp5t)")->required()->check(CLI::ExistingFile);
    sub->add_option("output", out, "Descriptor file (.vdsc)")->required();
    sub->add_flag("--no-spp", no_spp, "One descriptor per grid cell instead of pyramid pooling");
    sub->add_option("--levels", levels, "Pyramid levels")->capture_default_str();
    add_common(sub, common);
    handlers.emplace_back(sub, [&] {
      const auto tensor = io::read_pool5(in);
      std::optional<SppConfig> cfg;
      if (!no_spp) {
        cfg.emplace();
        cfg->levels.clear();
        for (const auto& s : split_list(levels)) cfg->levels.push_back(std::stoul(s));
      }
      const auto set = lcd_video(tensor, cfg);
      io::write_descriptors(out, set);
      print_json({{"output", out}, {"descriptors", set.n_items}, {"dim", set.dim}});
    });
  }

  // encode
  {
    auto* sub = app.add_subcommand("encode", "Encode frame descriptors of each input video into one row");
    static std::vector<std::string> files;
    static std::string method = "vlad", codebook, pca, norm_order = "intra,ssr,l2";
    static std::size_t knn = 5;
    static bool no_ssr = false, no_intra = false, no_l2 = false;
    sub->add_option("files", files, "Input .vdsc files followed by the output .vdsc")->required()->expected(2, -1);
    sub->add_option("--method", method, "avg, fv or vlad")->capture_default_str();
    sub->add_option("--codebook", codebook, "kmeans (vlad) or gmm (fv) model")->check(CLI::ExistingFile);
    sub->add_option("--pca", pca, "PCA model applied to l2-normalized frames")->check(CLI::ExistingFile);
    sub->add_option("--knn", knn, "Nearest centers per descriptor (VLAD-k)")->capture_default_str();
    sub->add_flag("--no-ssr", no_ssr, "Skip signed square root");
    sub->add_flag("--no-intra", no_intra, "Skip intra-normalization (VLAD)");
    sub->add_flag("--no-l2", no_l2, "Skip the final l2 normalization");
    sub->add_option("--norm-order", norm_order, "Order of VLAD normalization steps")->capture_default_str();
    add_common(sub, common);
    handlers.emplace_back(sub, [&] {
      const std::vector<std::string> inputs(files.begin(), files.end() - 1);
      const std::string out = files.back();
      const Encoder enc = parse_encoder(method);
      std::optional<PcaModel> pca_model;
      if (!pca.empty()) pca_model = pca_from_model(io::read_model(pca));
      Codebook cb;
      GmmModel gmm;
      if (enc != Encoder::Avg) {
        require(!codebook.empty(), ErrorKind::Parameter, "encode: --codebook is required for " + method);
        if (enc == Encoder::Vlad) {
          cb = codebook_from_model(io::read_model(codebook));
        } else {
          gmm = gmm_from_model(io::read_model(codebook));
        }
      }
      VladOptions vo;
      vo.knn = knn;
      vo.ssr = !no_ssr;
      vo.intra = !no_intra;
      vo.l2 = !no_l2;
      vo.order = parse_norm_order(norm_order);
      FisherOptions fo;
      fo.ssr = !no_ssr;
      fo.l2 = !no_l2;
      std::vector<std::vector<float>> rows(inputs.size());
      parallel_for(inputs.size(), common.threads, [&](std::size_t i) {
        auto frames = io::read_descriptors(inputs[i]);
        if (enc == Encoder::Avg) {
          rows[i] = average_pool(frames).vector;
          return;
        }
        l2_normalize_rows(frames);
        if (pca_model) frames = apply_pca(*pca_model, frames);
        rows[i] = enc == Encoder::Vlad ? vlad_encode(cb, frames, vo).vector : fisher_encode(gmm, frames, fo).vector;
      });
      DescriptorSet x(rows.size(), rows.front().size());
      std::vector<std::string> ids;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(rows[i].begin(), rows[i].end(), x.row(i).begin());
        ids.push_back(stem_of(inputs[i]));
      }
      write_reps(out, x, ids);
      print_json({{"output", out}, {"videos", x.n_items}, {"dim", x.dim}, {"method", to_string(enc)}});
    });
  }

  // fit-pq
  {
    auto* sub = app.add_subcommand("fit-pq", "Fit a product quantizer on video representations");
    static std::string reps, out;
    static std::size_t sub_len = 4, iters = 100;
    static unsigned bits = 8;
    sub->add_option("reps", reps, "Representation file (.vdsc)")->required()->check(CLI::ExistingFile);
    sub->add_option("-B,--sub-len", sub_len, "Sub-vector length")->capture_default_str();
    sub->add_option("-m,--bits", bits, "Bits per sub-vector code")->capture_default_str();
    sub->add_option("--max-iter", iters, "k-means iteration cap per sub-space")->capture_default_str();
    sub->add_option("-o,--output", out, "Model file (.vmdl)")->required();
    add_common(sub, common);
    handlers.emplace_back(sub, [&] {
      PqFitOptions o;
      o.sub_len = sub_len;
      o.bits = bits;
      o.seed = common.seed;
      o.max_iter = iters;
      const auto model = fit_pq(io::read_descriptors(reps), o);
      io::write_model(out, to_model_file(model));
      print_json({{"model", out}, {"subspaces", model.subspaces()}, {"compression_ratio", compression_ratio(sub_len, bits)}});
    });
  }

  // pq-encode
  {
    auto* sub = app.add_subcommand("pq-encode", "Compress representations into PQ codes");
    static std::string reps, pq, out;
    sub->add_option("reps", reps, "Representation file (.vdsc)")->required()->check(CLI::ExistingFile);
    sub->add_option("--pq", pq, "PQ model")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--output", out, "Code file (.vpqc)")->required();
    add_common(sub, common);
    handlers.emplace_back(sub, [&] {
      const auto model = pq_from_model(io::read_model(pq));
      const auto r = read_reps(reps);
      PqCodeSet codes;
      codes.subspaces = model.subspaces();
      codes.bits = model.bits;
      for (std::size_t i = 0; i < r.x.n_items; ++i) codes.append(r.ids[i], pq_encode(model, r.x.row(i)));
      write_pq_codes(out, codes);
      print_json({{"output", out}, {"videos", codes.size()}, {"bytes_per_video", packed_code_bytes(codes.subspaces, codes.bits)}});
    });
  }

  // train / cv
  static std::string tr_reps, tr_labels, tr_kernel = "linear", tr_out;
  static double tr_c = 1.0, tr_sigma = 1.0;
  static std::vector<double> cv_c_grid{1e-2, 1e-1, 1.0, 10.0, 100.0}, cv_sigma_grid{0.5, 1.0, 2.0, 4.0};
  static std::size_t cv_folds = 5;
  for (const std::string name : {"train", "cv"}) {
    const bool cv = name == "cv";
    auto* sub = app.add_subcommand(name, cv ? "Cross-validate C (and sigma) by mean held-out AP"
                                            : "Train a linear or kernel SVM for one event");
    sub->add_option("reps", tr_reps, "Representation file (.vdsc with .ids)")->required()->check(CLI::ExistingFile);
    sub->add_option("--labels", tr_labels, "Label CSV (video_id,label)")->required()->check(CLI::ExistingFile);
    sub->add_option("--kernel", tr_kernel, "linear, exp_chi2 or rbf")->capture_default_str();
    if (cv) {
      sub->add_option("--c-grid", cv_c_grid, "C values")->delimiter(',')->capture_default_str();
      sub->add_option("--sigma-grid", cv_sigma_grid, "sigma values (kernels)")->delimiter(',')->capture_default_str();
      sub->add_option("--folds", cv_folds, "Folds")->capture_default_str();
      sub->add_option("-o,--output", tr_out, "Optional model trained with the selected parameters");
    } else {
      sub->add_option("-C,--C", tr_c, "Regularization constant")->capture_default_str();
      sub->add_option("--sigma", tr_sigma, "Kernel bandwidth")->capture_default_str();
      sub->add_option("-o,--output", tr_out, "Model file (.vmdl)")->required();
    }
    add_common(sub, common);
    handlers.emplace_back(sub, [&, cv] {
      const auto r = read_reps(tr_reps);
      const auto y = to_signed_labels(labels_for(r.ids, tr_labels));
      const bool linear = tr_kernel == "linear";
      const KernelKind kind = linear ? KernelKind::Rbf : parse_kernel(tr_kernel);
      double c = tr_c, sigma = tr_sigma;
      json summary{{"kernel", tr_kernel}};
      if (cv) {
        const CvResult res = linear ? cross_validate_linear(r.x, y, cv_c_grid, cv_folds, common.seed)
                                    : cross_validate_kernel(r.x, y, kind, cv_c_grid, cv_sigma_grid, cv_folds, common.seed);
        for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
        json grid = json::array();
        for (const auto& p : res.grid) grid.push_back({{"C", p.C}, {"sigma", p.sigma}, {"mean_ap", p.mean_ap}});
        summary.update({{"C", res.C}, {"mean_ap", res.mean_ap}, {"folds", res.folds}, {"grid", grid}});
        if (!linear) summary["sigma"] = res.sigma;
        c = res.C;
        sigma = res.sigma;
        if (tr_out.empty()) {
          print_json(summary);
          return;
        }
      }
      if (linear) {
        SvmTrace trace;
        const auto clf = train_linear_svm(r.x, y, c, common.seed, &trace);
        io::write_model(tr_out, to_model_file(clf));
        summary.update({{"duality_gap", trace.duality_gap}, {"iterations", trace.iterations}});
      } else {
        const auto model = fit_kernel_svm(r.x, y, kind, sigma, c);
        io::write_model(tr_out, to_model_file(model));
        summary.update({{"support_vectors", model.support_vectors.n_items}, {"A", model.A}});
      }
      summary.update({{"model", tr_out}, {"C", c}});
      print_json(summary);
    });
  }

  // predict
  {
    auto* sub = app.add_subcommand("predict", "Score representations with a trained SVM");
    static std::string reps, model, out;
    sub->add_option("reps", reps, "Representation file (.vdsc with .ids)")->required()->check(CLI::ExistingFile);
    sub->add_option("--model", model, "linsvm or ksvm model")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--output", out, "Score CSV")->required();
    add_common(sub, common);
    handlers.emplace_back(sub, [&] {
      const auto r = read_reps(reps);
      const auto file = io::read_model(model);
      const auto scores = file.kind == "ksvm" ? predict_kernel(kernel_svm_from_model(file), r.x)
                                              : predict_linear(linear_from_model(file), r.x);
      std::vector<io::ScoreRow> rows;
      for (std::size_t i = 0; i < scores.size(); ++i) rows.push_back({r.ids[i], static_cast<float>(scores[i])});
      io::write_scores(out, rows);
      print_json({{"output", out}, {"videos", rows.size()}});
    });
  }

  // predict-pq
  {
    auto* sub = app.add_subcommand("predict-pq", "Score PQ codes with a linear SVM through lookup tables");
    static std::string codes, model, pq, out;
    sub->add_option("codes", codes, "Code file (.vpqc)")->required()->check(CLI::ExistingFile);
    sub->add_option("--model", model, "linsvm model")->required()->check(CLI::ExistingFile);
    sub->add_option("--pq", pq, "PQ model")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--output", out, "Score CSV")->required();
    add_common(sub, common);
    handlers.emplace_back(sub, [&] {
      const auto clf = linear_from_model(io::read_model(model));
      const auto quantizer = pq_from_model(io::read_model(pq));
      const auto set = read_pq_codes(codes);
      require(set.subspaces == quantizer.subspaces() && set.bits == quantizer.bits, ErrorKind::Shape,
              "predict-pq: codes do not match the PQ model");
      const ScoreLut lut = build_lut(quantizer, clf.w, clf.bias);
      std::vector<double> scores(set.size());
      score_compressed_batch(lut, BatchCodes(set), scores);
      std::vector<io::ScoreRow> rows;
      for (std::size_t i = 0; i < scores.size(); ++i) rows.push_back({set.ids[i], static_cast<float>(scores[i])});
      io::write_scores(out, rows);
      print_json({{"output", out}, {"videos", rows.size()}});
    });
  }

  // eval
  {
    auto* sub = app.add_subcommand("eval", "Average precision of score files against label files");
    static std::vector<std::string> pairs;
    static bool interpolated = false;
    sub->add_option("pairs", pairs, "scores.csv labels.csv [scores.csv labels.csv ...]")->required()->check(CLI::ExistingFile);
    sub->add_flag("--interpolated", interpolated, "11-point interpolated AP");
    add_common(sub, common);
    handlers.emplace_back(sub, [&] {
      require(pairs.size() % 2 == 0, ErrorKind::Parameter, "eval: expects score/label file pairs");
      const ApMode mode = interpolated ? ApMode::Interpolated11 : ApMode::NonInterpolated;
      json per = json::array();
      std::vector<double> aps;
      for (std::size_t i = 0; i < pairs.size(); i += 2) {
        const double ap = average_precision(io::read_scores(pairs[i]), io::read_labels(pairs[i + 1]), mode);
        aps.push_back(ap);
        per.push_back({{"scores", pairs[i]}, {"labels", pairs[i + 1]}, {"ap", ap}});
      }
      print_json({{"events", per}, {"map", mean_ap(aps)}});
    });
  }

  // fuse
  {
    auto* sub = app.add_subcommand("fuse", "Average late fusion of score files");
    static std::vector<std::string> inputs;
    static std::string out;
    static bool raw = false;
    sub->add_option("inputs", inputs, "Score CSVs")->required()->check(CLI::ExistingFile);
    sub->add_flag("--raw", raw, "Average raw scores without z-normalization");
    sub->add_option("-o,--output", out, "Fused score CSV")->required();
    add_common(sub, common);
    handlers.emplace_back(sub, [&] {
      std::vector<std::vector<io::ScoreRow>> lists;
      for (const auto& p : inputs) lists.push_back(io::read_scores(p));
      const auto fused = late_fuse(lists, !raw);
      io::write_scores(out, fused);
      print_json({{"output", out}, {"videos", fused.size()}, {"inputs", inputs.size()}});
    });
  }

  // simstats
  {
    auto* sub = app.add_subcommand("simstats", "Pos-pos vs pos-neg cosine similarity histograms");
    static std::string reps, out;
    static std::vector<std::string> labels;
    static std::size_t bins = 100;
    static bool pooled = false;
    sub->add_option("reps", reps, "Representation file (.vdsc with .ids)")->required()->check(CLI::ExistingFile);
    sub->add_option("--labels", labels, "One label CSV per event")->required()->check(CLI::ExistingFile);
    sub->add_option("--bins", bins, "Histogram bins on [-1, 1]")->capture_default_str();
    sub->add_flag("--pooled", pooled,
                  "Pool positives of all events into one positive set instead of grouping pairs per event");
    sub->add_option("-o,--output", out, "Histogram CSV");
    add_common(sub, common);
    handlers.emplace_back(sub, [&] {
      const auto r = read_reps(reps);
      std::vector<DescriptorSet> pos, neg;
      std::vector<int> any_pos(r.x.n_items, 0);
      for (const auto& l : labels) {
        const auto y = labels_for(r.ids, l);
        DescriptorSet p, n;
        p.dim = n.dim = r.x.dim;
        for (std::size_t i = 0; i < y.size(); ++i) {
          (y[i] ? p : n).append_row(r.x.row(i));
          any_pos[i] |= y[i];
        }
        pos.push_back(std::move(p));
        neg.push_back(std::move(n));
      }
      SimilarityHistogram h;
      if (pooled) {
        DescriptorSet p, n;
        p.dim = n.dim = r.x.dim;
        for (std::size_t i = 0; i < any_pos.size(); ++i) (any_pos[i] ? p : n).append_row(r.x.row(i));
        h = simstats(p, n, bins);
      } else {
        h = simstats_grouped(pos, neg, bins);
      }
      if (!out.empty()) io::write_file_atomic(out, histogram_csv(h));
      print_json({{"pos_pos_mean", h.pos_pos_mean}, {"pos_neg_mean", h.pos_neg_mean},
                  {"pos_pos_pairs", h.pos_pos_pairs}, {"pos_neg_pairs", h.pos_neg_pairs}});
    });
  }

  // synth
  static SynthOptions so;
  {
    auto* sub = app.add_subcommand("synth", "Generate a seeded synthetic descriptor corpus");
    static std::string out;
    sub->add_option("--events", so.events)->capture_default_str();
    sub->add_option("--pos", so.pos, "Training positives per event")->capture_default_str();
    sub->add_option("--neg", so.neg, "Background training videos")->capture_default_str();
    sub->add_option("--test", so.test, "Test videos")->capture_default_str();
    sub->add_option("--test-pos", so.test_pos, "Test positives per event")->capture_default_str();
    sub->add_option("--dim", so.dim)->capture_default_str();
    sub->add_option("--components", so.components)->capture_default_str();
    sub->add_option("--min-frames", so.min_frames)->capture_default_str();
    sub->add_option("--max-frames", so.max_frames)->capture_default_str();
    sub->add_option("--event-fraction", so.event_fraction)->capture_default_str();
    sub->add_option("--event-shift", so.event_shift)->capture_default_str();
    sub->add_option("--noise", so.noise)->capture_default_str();
    sub->add_option("--offset", so.offset)->capture_default_str();
    sub->add_option("--concentration", so.concentration)->capture_default_str();
    sub->add_option("-o,--output", out, "Output directory")->required();
    add_common(sub, common);
    handlers.emplace_back(sub, [&] {
      so.seed = common.seed;
      const auto corpus = make_synthetic_corpus(so);
      write_corpus(out, corpus);
      print_json({{"output", out}, {"train", corpus.train.size()}, {"test", corpus.test.size()}, {"events", corpus.events}});
    });
  }

  // run / ablate share the pipeline knobs
  static PipelineConfig pc;
  static std::string pc_encoder = "vlad", pc_order = "intra,ssr,l2", corpus_dir;
  static bool pc_no_whiten = false, pc_no_ssr = false, pc_no_intra = false, pc_no_l2 = false;
  static std::vector<std::size_t> ab_pca{128, 256, 512, 1024}, ab_k{32, 64, 128, 256, 512}, ab_knn{1, 5};
  static std::vector<std::string> ab_axes{"pca", "k", "knn", "ssr", "intra"};
  for (const std::string name : {"run", "ablate"}) {
    const bool ablate = name == "ablate";
    auto* sub = app.add_subcommand(name, ablate ? "Vary one pipeline knob at a time and report mAP"
                                                : "Run the encode/train/score pipeline on a corpus");
    sub->add_option("corpus", corpus_dir, "Corpus directory written by synth")->required()->check(CLI::ExistingDirectory);
    sub->add_option("--encoder", pc_encoder, "avg, fv or vlad")->capture_default_str();
    sub->add_option("--pca-dim", pc.pca_dim, "PCA output dimension (0 = none)")->capture_default_str();
    sub->add_flag("--no-whiten", pc_no_whiten);
    sub->add_option("-k,--k", pc.k, "Codebook size")->capture_default_str();
    sub->add_option("--knn", pc.knn)->capture_default_str();
    sub->add_flag("--no-ssr", pc_no_ssr);
    sub->add_flag("--no-intra", pc_no_intra);
    sub->add_flag("--no-l2", pc_no_l2);
    sub->add_option("--norm-order", pc_order)->capture_default_str();
    sub->add_option("--sample-frames", pc.sample_frames)->capture_default_str();
    sub->add_option("--max-iter", pc.max_iter)->capture_default_str();
    sub->add_option("-C,--C", pc.C)->capture_default_str();
    sub->add_flag("--cv", pc.cross_validate, "Choose C per event by cross-validation");
    sub->add_option("--c-grid", pc.c_grid)->delimiter(',')->capture_default_str();
    sub->add_option("--folds", pc.folds)->capture_default_str();
    sub->add_flag("--pq", pc.pq, "Also score through product quantization");
    sub->add_option("-B,--pq-sub-len", pc.pq_sub_len)->capture_default_str();
    sub->add_option("-m,--pq-bits", pc.pq_bits)->capture_default_str();
    if (ablate) {
      sub->add_option("--axes", ab_axes, "Axes to vary: pca, k, knn, ssr, intra")->delimiter(',')->capture_default_str();
      sub->add_option("--pca-dims", ab_pca)->delimiter(',')->capture_default_str();
      sub->add_option("--ks", ab_k)->delimiter(',')->capture_default_str();
      sub->add_option("--knns", ab_knn)->delimiter(',')->capture_default_str();
    }
    add_common(sub, common);
    handlers.emplace_back(sub, [&, ablate] {
      pc.encoder = parse_encoder(pc_encoder);
      pc.whiten = !pc_no_whiten;
      pc.ssr = !pc_no_ssr;
      pc.intra = !pc_no_intra;
      pc.l2 = !pc_no_l2;
      pc.order = parse_norm_order(pc_order);
      pc.seed = common.seed;
      pc.threads = common.threads;
      std::vector<std::pair<std::string, PipelineConfig>> runs;
      if (!ablate) {
        runs.emplace_back("base", pc);
      } else {
        for (const auto& axis : ab_axes) {
          if (axis == "pca") {
            for (auto v : ab_pca) runs.emplace_back("pca_dim=" + std::to_string(v), pc), runs.back().second.pca_dim = v;
          } else if (axis == "k") {
            for (auto v : ab_k) runs.emplace_back("k=" + std::to_string(v), pc), runs.back().second.k = v;
          } else if (axis == "knn") {
            for (auto v : ab_knn) runs.emplace_back("knn=" + std::to_string(v), pc), runs.back().second.knn = v;
          } else if (axis == "ssr" || axis == "intra") {
            for (bool on : {true, false}) {
              runs.emplace_back(axis + "=" + (on ? "on" : "off"), pc);
              (axis == "ssr" ? runs.back().second.ssr : runs.back().second.intra) = on;
            }
          } else {
            fail(ErrorKind::Parameter, "ablate: unknown axis '" + axis + "'");
          }
        }
      }
      for (const auto& [label, cfg] : runs) cfg.validate();
      const auto corpus = read_corpus(corpus_dir);
      for (const auto& [label, cfg] : runs) {
        const auto res = run_pipeline(corpus, cfg);
        json events = json::array();
        for (const auto& e : res.events) {
          json ej{{"event", e.event}, {"ap", e.ap}, {"C", e.C}};
          if (cfg.pq) ej["ap_pq"] = e.ap_pq;
          events.push_back(ej);
        }
        json line{{"run", label}, {"dim", res.train_reps.dim}, {"map", res.map}, {"events", events}};
        if (cfg.pq) line["map_pq"] = res.map_pq;
        print_json(line);
      }
    });
  }

  // Every option can also come from VIDREP_<NAME>, e.g. VIDREP_SEED.
  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) {
    for (auto* opt : sub->get_options()) {
      if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
      std::string env = "VIDREP_" + opt->get_lnames().front();
      for (auto& ch : env) ch = ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      opt->envname(env);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    emit_error("usage", e.what());
    return 2;
  }

  for (auto& [sub, run] : handlers) {
    if (!sub->parsed()) continue;
    std::cerr << "# vidrep " << sub->get_name() << " resolved config (seed=" << common.seed
              << ", threads=" << common.threads << ")\n"
              << sub->config_to_str(true, false);
    try {
      run();
    } catch (const Error& e) {
      emit_error(to_string(e.kind()), e.what());
      return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
      emit_error("io", e.what());
      return 3;
    } catch (const std::bad_alloc&) {
      emit_error("numeric", "out of memory");
      return 4;
    } catch (const std::exception& e) {
      emit_error("data", e.what());
      return 3;
    }
    return 0;
  }
  return 2;
}
