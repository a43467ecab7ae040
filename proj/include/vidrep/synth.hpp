#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vidrep/descriptor_set.hpp"

namespace vidrep {

struct SynthOptions {
  std::size_t events = 5;
  std::size_t pos = 100;       // training positives per event
  std::size_t neg = 1000;      // shared background training videos
  std::size_t test = 2000;     // test videos in total
  std::size_t test_pos = 40;   // test positives per event, drawn from `test`
  std::size_t dim = 64;
  std::size_t components = 16;  // background mixture size
  std::size_t min_frames = 10;
  std::size_t max_frames = 50;
  double event_fraction = 0.5;  // share of a positive video's frames that carry the event
  double event_shift = 0.6;     // per-component offset of event frames
  double noise = 0.45;          // per-coordinate frame noise
  double offset = 3.0;          // per-coordinate scale of the mean shared by every component
  double concentration = 0.3;   // Dirichlet concentration of per-video mixture weights
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthVideo {
  std::string id;
  DescriptorSet frames;
};

/// Two-class style corpus: background videos draw frames from a shared
/// Gaussian mixture; an event's positives replace part of their frames with
/// draws from that event's own mixture (the shared means shifted per
/// component). Frame counts vary in [min_frames, max_frames].
struct SynthCorpus {
  std::size_t events = 0;
  std::vector<SynthVideo> train;
  std::vector<SynthVideo> test;
  std::vector<std::vector<int>> train_labels;  // events x train, 0/1
  std::vector<std::vector<int>> test_labels;   // events x test, 0/1
};

SynthCorpus make_synthetic_corpus(const SynthOptions& options);

/// Layout: videos/<id>.vdsc, train.txt and test.txt (one id per line),
/// train_E<ee>.csv and test_E<ee>.csv label files.
void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus);
SynthCorpus read_corpus(const std::filesystem::path& dir);

std::string event_name(std::size_t e);

}  // namespace vidrep
