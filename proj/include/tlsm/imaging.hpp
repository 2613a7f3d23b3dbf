#pragma once

// Image metrics on indicator maps: contrast ratio, relative thresholding,
// defect/background neighbourhoods and 16-bit graymap output.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tlsm/triallib.hpp"
#include "tlsm/wavesim.hpp"

namespace tlsm::imaging {

using triallib::SamplingGrid;

struct RegionMask {
  SamplingGrid grid;
  std::vector<std::size_t> defect;      ///< sampling indices, increasing
  std::vector<std::size_t> background;  ///< sampling indices, increasing

  void validate() const;
};

/// Maximum over the defect cells divided by the RMS over the background.
double contrast_metric(std::span<const double> values, const RegionMask& mask);

struct Thresholded {
  std::vector<std::uint8_t> keep;
  bool degenerate = false;  ///< map maximum was not positive
};

/// keep[s] = values[s] > fraction * max.
Thresholded threshold_map(std::span<const double> values, double fraction);

/// Defect cells lie within radius + dilation of a circle centre; background
/// cells lie farther than radius + dilation + gap from every centre.
RegionMask make_disk_masks(const SamplingGrid& grid,
                           const std::vector<wavesim::CircularVoid>& circles, double dilation,
                           double gap);

/// Binary P5 graymap, maxval 65535, big-endian samples, rows along depth.
/// The map minimum renders to 0 and its maximum to 65535.
std::vector<char> pgm_bytes(std::span<const double> values, std::size_t nx, std::size_t nz);
void render_map(const std::filesystem::path& path, std::span<const double> values,
                std::size_t nx, std::size_t nz);

}  // namespace tlsm::imaging
