#include "vidrep/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "vidrep/error.hpp"
#include "vidrep/io.hpp"
#include "vidrep/random.hpp"

namespace vidrep {

void SynthOptions::validate() const {
  require(events >= 1, ErrorKind::Parameter, "synth: events must be >= 1");
  require(pos >= 1 && neg >= 1, ErrorKind::Parameter, "synth: pos and neg must be >= 1");
  require(events * test_pos <= test, ErrorKind::Parameter, "synth: events * test_pos exceeds test");
  require(test_pos >= 1, ErrorKind::Parameter, "synth: test_pos must be >= 1");
  require(dim >= 1 && components >= 1, ErrorKind::Parameter, "synth: dim and components must be >= 1");
  require(min_frames >= 1 && min_frames <= max_frames, ErrorKind::Parameter, "synth: need 1 <= min_frames <= max_frames");
  require(event_fraction > 0.0 && event_fraction <= 1.0, ErrorKind::Parameter, "synth: event_fraction must be in (0, 1]");
  require(noise > 0.0 && concentration > 0.0 && offset >= 0.0, ErrorKind::Parameter, "synth: noise and concentration must be positive, offset non-negative");
}

std::string event_name(std::size_t e) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "E%02zu", e + 1);
  return buf;
}

namespace {

// Marsaglia and Tsang, with the shape < 1 boost.
double gamma_draw(Rng& rng, double shape) {
  if (shape < 1.0) {
    double u = 0.0;
    do {
      u = rng.uniform();
    } while (u <= 0.0);
    return gamma_draw(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0, v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> dirichlet(Rng& rng, std::size_t k, double concentration) {
  std::vector<double> w(k);
  double sum = 0.0;
  for (auto& v : w) sum += v = gamma_draw(rng, concentration);
  if (sum <= 0.0) {
    w.assign(k, 1.0 / static_cast<double>(k));
    return w;
  }
  for (auto& v : w) v /= sum;
  return w;
}

std::size_t categorical(Rng& rng, const std::vector<double>& w) {
  double u = rng.uniform();
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (u < w[j]) return j;
    u -= w[j];
  }
  return w.size() - 1;
}

struct Mixtures {
  std::vector<std::vector<double>> background;          // components x dim
  std::vector<std::vector<std::vector<double>>> shift;  // events x components x dim
};

Mixtures make_mixtures(const SynthOptions& o, Rng& rng) {
  Mixtures m;
  std::vector<double> common(o.dim);
  for (auto& v : common) v = o.offset * std::abs(rng.normal());
  m.background.assign(o.components, std::vector<double>(o.dim));
  for (auto& mu : m.background) {
    for (std::size_t d = 0; d < o.dim; ++d) mu[d] = common[d] + rng.normal();
  }
  m.shift.assign(o.events, std::vector<std::vector<double>>(o.components, std::vector<double>(o.dim)));
  for (auto& ev : m.shift) {
    std::vector<double> mean(o.dim, 0.0);
    for (auto& delta : ev) {
      for (std::size_t d = 0; d < o.dim; ++d) {
        delta[d] = o.event_shift * rng.normal();
        mean[d] += delta[d] / static_cast<double>(o.components);
      }
    }
    // Offsets cancel on average so the event barely moves the frame mean.
    for (auto& delta : ev) {
      for (std::size_t d = 0; d < o.dim; ++d) delta[d] -= mean[d];
    }
  }
  return m;
}

SynthVideo make_video(const SynthOptions& o, const Mixtures& m, Rng& rng, std::string id, long event) {
  const std::size_t span = o.max_frames - o.min_frames + 1;
  const std::size_t n = o.min_frames + rng.index(span);
  const auto weights = dirichlet(rng, o.components, o.concentration);
  SynthVideo video{std::move(id), DescriptorSet(n, o.dim)};
  for (std::size_t f = 0; f < n; ++f) {
    const std::size_t j = categorical(rng, weights);
    const bool eventful = event >= 0 && rng.uniform() < o.event_fraction;
    auto row = video.frames.row(f);
    for (std::size_t d = 0; d < o.dim; ++d) {
      double v = m.background[j][d] + o.noise * rng.normal();
      if (eventful) v += m.shift[static_cast<std::size_t>(event)][j][d];
      row[d] = static_cast<float>(v);
    }
  }
  return video;
}

std::string video_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%06zu", prefix, i);
  return buf;
}

}  // namespace

SynthCorpus make_synthetic_corpus(const SynthOptions& o) {
  o.validate();
  Rng rng(o.seed);
  const Mixtures m = make_mixtures(o, rng);
  SynthCorpus corpus;
  corpus.events = o.events;

  std::vector<long> train_event;
  for (std::size_t e = 0; e < o.events; ++e) {
    for (std::size_t i = 0; i < o.pos; ++i) train_event.push_back(static_cast<long>(e));
  }
  for (std::size_t i = 0; i < o.neg; ++i) train_event.push_back(-1);
  std::vector<long> test_event;
  for (std::size_t e = 0; e < o.events; ++e) {
    for (std::size_t i = 0; i < o.test_pos; ++i) test_event.push_back(static_cast<long>(e));
  }
  while (test_event.size() < o.test) test_event.push_back(-1);
  for (std::size_t i = test_event.size(); i > 1; --i) std::swap(test_event[i - 1], test_event[rng.index(i)]);

  corpus.train_labels.assign(o.events, std::vector<int>(train_event.size(), 0));
  corpus.test_labels.assign(o.events, std::vector<int>(test_event.size(), 0));
  for (std::size_t i = 0; i < train_event.size(); ++i) {
    corpus.train.push_back(make_video(o, m, rng, video_id('v', i), train_event[i]));
    if (train_event[i] >= 0) corpus.train_labels[static_cast<std::size_t>(train_event[i])][i] = 1;
  }
  for (std::size_t i = 0; i < test_event.size(); ++i) {
    corpus.test.push_back(make_video(o, m, rng, video_id('t', i), test_event[i]));
    if (test_event[i] >= 0) corpus.test_labels[static_cast<std::size_t>(test_event[i])][i] = 1;
  }
  return corpus;
}

namespace {

void write_split(const std::filesystem::path& dir, const std::string& name, const std::vector<SynthVideo>& videos,
                 const std::vector<std::vector<int>>& labels) {
  std::string list;
  for (const auto& v : videos) {
    io::write_descriptors(dir / "videos" / (v.id + ".vdsc"), v.frames);
    list += v.id + "\n";
  }
  io::write_file_atomic(dir / (name + ".txt"), list);
  for (std::size_t e = 0; e < labels.size(); ++e) {
    std::vector<io::LabelRow> rows;
    for (std::size_t i = 0; i < videos.size(); ++i) rows.push_back({videos[i].id, labels[e][i]});
    io::write_labels(dir / (name + "_" + event_name(e) + ".csv"), rows);
  }
}

std::vector<SynthVideo> read_split(const std::filesystem::path& dir, const std::string& name) {
  std::ifstream in(dir / (name + ".txt"));
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + (dir / (name + ".txt")).string());
  std::vector<SynthVideo> videos;
  std::string id;
  while (std::getline(in, id)) {
    if (id.empty()) continue;
    videos.push_back({id, io::read_descriptors(dir / "videos" / (id + ".vdsc"))});
  }
  return videos;
}

std::vector<int> labels_for(const std::vector<SynthVideo>& videos, const std::filesystem::path& path) {
  const auto rows = io::read_labels(path);
  std::vector<int> out(videos.size(), -1);
  std::size_t i = 0;
  for (const auto& row : rows) {
    require(i < videos.size() && row.video_id == videos[i].id, ErrorKind::Data,
            path.string() + ": label rows do not follow the split order");
    out[i++] = row.label;
  }
  require(i == videos.size(), ErrorKind::Data, path.string() + ": missing labels");
  return out;
}

}  // namespace

void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus) {
  std::filesystem::create_directories(dir / "videos");
  write_split(dir, "train", corpus.train, corpus.train_labels);
  write_split(dir, "test", corpus.test, corpus.test_labels);
}

SynthCorpus read_corpus(const std::filesystem::path& dir) {
  SynthCorpus corpus;
  corpus.train = read_split(dir, "train");
  corpus.test = read_split(dir, "test");
  for (std::size_t e = 0;; ++e) {
    const auto train_path = dir / ("train_" + event_name(e) + ".csv");
    if (!std::filesystem::exists(train_path)) break;
    corpus.train_labels.push_back(labels_for(corpus.train, train_path));
    corpus.test_labels.push_back(labels_for(corpus.test, dir / ("test_" + event_name(e) + ".csv")));
  }
  corpus.events = corpus.train_labels.size();
  require(corpus.events > 0, ErrorKind::Data, "corpus at " + dir.string() + " has no event label files");
  return corpus;
}

}  // namespace vidrep
