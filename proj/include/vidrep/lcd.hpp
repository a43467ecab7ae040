#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "vidrep/descriptor_set.hpp"

namespace vidrep {

/// Multi-level max pooling over the a x a grid. Level n pools n x n windows of
/// side ceil(a/n) moved by floor(a/n).
struct SppConfig {
  std::vector<std::size_t> levels{6, 3, 2, 1};

  static std::size_t window(std::size_t a, std::size_t n) { return (a + n - 1) / n; }
  static std::size_t stride(std::size_t a, std::size_t n) { return a / n; }

  /// Throws a parameter error unless every level fits inside an a x a grid.
  void validate(std::size_t a) const;
  /// Descriptors produced per frame (sum of n^2).
  std::size_t locations() const;
};

/// One row per spatial location (row-major), each the M-channel activation.
/// `frame` holds a*a*M values in (row, col, channel) order.
DescriptorSet extract_lcd(std::span<const float> frame, std::size_t side, std::size_t channels);

DescriptorSet spp_lcd(std::span<const float> frame, std::size_t side, std::size_t channels, const SppConfig& cfg);

/// Concatenates per-frame descriptors in frame order; plain LCD when `cfg` is empty.
DescriptorSet lcd_video(const Pool5Tensor& tensors, const std::optional<SppConfig>& cfg);

}  // namespace vidrep
