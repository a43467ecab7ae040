#include "vidrep/lcd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vidrep/error.hpp"

namespace vidrep {

void SppConfig::validate(std::size_t a) const {
  require(!levels.empty(), ErrorKind::Parameter, "spp: at least one level required");
  for (std::size_t n : levels) {
    require(n >= 1, ErrorKind::Parameter, "spp: level must be >= 1");
    require(n <= a, ErrorKind::Parameter,
            "spp: level " + std::to_string(n) + " exceeds grid side " + std::to_string(a));
    const std::size_t last_end = stride(a, n) * (n - 1) + window(a, n);
    require(last_end <= a, ErrorKind::Parameter, "spp: level " + std::to_string(n) + " windows overrun the grid");
  }
}

std::size_t SppConfig::locations() const {
  std::size_t total = 0;
  for (std::size_t n : levels) total += n * n;
  return total;
}

namespace {

void check_frame(std::span<const float> frame, std::size_t side, std::size_t channels) {
  require(side >= 1 && channels >= 1, ErrorKind::Shape, "lcd: side and channels must be >= 1");
  require(frame.size() == side * side * channels, ErrorKind::Shape,
          "lcd: frame holds " + std::to_string(frame.size()) + " values, expected " +
              std::to_string(side * side * channels));
  for (float v : frame) require(std::isfinite(v), ErrorKind::Data, "lcd: non-finite activation");
}

}  // namespace

DescriptorSet extract_lcd(std::span<const float> frame, std::size_t side, std::size_t channels) {
  check_frame(frame, side, channels);
  // (row, col, channel) storage already is one M-vector per location.
  return DescriptorSet(side * side, channels, std::vector<float>(frame.begin(), frame.end()));
}

DescriptorSet spp_lcd(std::span<const float> frame, std::size_t side, std::size_t channels, const SppConfig& cfg) {
  check_frame(frame, side, channels);
  cfg.validate(side);
  DescriptorSet out(cfg.locations(), channels);
  std::size_t row = 0;
  for (std::size_t n : cfg.levels) {
    const std::size_t win = SppConfig::window(side, n);
    const std::size_t step = SppConfig::stride(side, n);
    for (std::size_t wr = 0; wr < n; ++wr) {
      for (std::size_t wc = 0; wc < n; ++wc, ++row) {
        auto dst = out.row(row);
        std::fill(dst.begin(), dst.end(), -std::numeric_limits<float>::infinity());
        for (std::size_t r = wr * step; r < wr * step + win; ++r) {
          for (std::size_t c = wc * step; c < wc * step + win; ++c) {
            const float* src = frame.data() + (r * side + c) * channels;
            for (std::size_t m = 0; m < channels; ++m) dst[m] = std::max(dst[m], src[m]);
          }
        }
      }
    }
  }
  return out;
}

DescriptorSet lcd_video(const Pool5Tensor& tensors, const std::optional<SppConfig>& cfg) {
  require(tensors.n_frames >= 1, ErrorKind::EmptyInput, "lcd_video: tensor file has no frames");
  if (cfg) cfg->validate(tensors.side);
  const std::size_t per_frame = cfg ? cfg->locations() : tensors.side * tensors.side;
  DescriptorSet out;
  out.dim = tensors.channels;
  out.data.reserve(tensors.n_frames * per_frame * tensors.channels);
  for (std::size_t f = 0; f < tensors.n_frames; ++f) {
    const auto rows = cfg ? spp_lcd(tensors.frame(f), tensors.side, tensors.channels, *cfg)
                          : extract_lcd(tensors.frame(f), tensors.side, tensors.channels);
    out.data.insert(out.data.end(), rows.data.begin(), rows.data.end());
    out.n_items += rows.n_items;
  }
  return out;
}

}  // namespace vidrep
