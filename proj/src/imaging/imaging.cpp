#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "tlsm/imaging.hpp"

namespace tlsm::imaging {

void RegionMask::validate() const {
  require(!defect.empty() && !background.empty(), ErrorKind::degenerate,
          "mask needs nonempty defect and background sets");
  std::vector<std::size_t> both;
  std::set_intersection(defect.begin(), defect.end(), background.begin(), background.end(),
                        std::back_inserter(both));
  require(both.empty(), ErrorKind::geometry, "defect and background sets overlap");
  require(defect.back() < grid.size() && background.back() < grid.size(), ErrorKind::geometry,
          "mask index outside the grid");
}

double contrast_metric(std::span<const double> values, const RegionMask& mask) {
  mask.validate();
  require(values.size() == mask.grid.size(), ErrorKind::dimension,
          "map does not match the mask grid");
  double peak = -std::numeric_limits<double>::infinity();
  for (auto s : mask.defect) peak = std::max(peak, values[s]);
  double sum2 = 0.0;
  for (auto s : mask.background) sum2 += values[s] * values[s];
  const double rms = std::sqrt(sum2 / static_cast<double>(mask.background.size()));
  if (!(rms > 0.0)) fail(ErrorKind::degenerate, "background RMS is zero");
  return peak / rms;
}

Thresholded threshold_map(std::span<const double> values, double fraction) {
  require(fraction > 0.0 && fraction < 1.0, ErrorKind::parameter,
          "threshold fraction must lie in (0, 1)");
  Thresholded out;
  out.keep.assign(values.size(), 0);
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, v);
  if (!(peak > 0.0)) {
    out.degenerate = true;
    return out;
  }
  const double level = fraction * peak;
  for (std::size_t s = 0; s < values.size(); ++s) out.keep[s] = values[s] > level ? 1 : 0;
  return out;
}

RegionMask make_disk_masks(const SamplingGrid& grid,
                           const std::vector<wavesim::CircularVoid>& circles, double dilation,
                           double gap) {
  grid.validate();
  require(!circles.empty(), ErrorKind::geometry, "need at least one defect circle");
  require(dilation >= 0.0 && gap >= 0.0, ErrorKind::parameter,
          "dilation and gap must be nonnegative");
  const double tol = 1e-9 * std::max(grid.x_max - grid.x_min, grid.z_max - grid.z_min);
  for (const auto& c : circles)
    require(c.x >= grid.x_min - tol && c.x <= grid.x_max + tol && c.z >= grid.z_min - tol &&
                c.z <= grid.z_max + tol,
            ErrorKind::geometry, "defect circle centre lies outside the sampling grid");
  RegionMask mask;
  mask.grid = grid;
  for (std::size_t s = 0; s < grid.size(); ++s) {
    const Point2 p = grid.point(s);
    bool inside = false, far = true;
    for (const auto& c : circles) {
      const double d = std::hypot(p.x - c.x, p.z - c.z);
      inside = inside || d <= c.radius + dilation;
      far = far && d > c.radius + dilation + gap;
    }
    if (inside)
      mask.defect.push_back(s);
    else if (far)
      mask.background.push_back(s);
  }
  require(!mask.background.empty(), ErrorKind::geometry, "mask leaves no background cells");
  require(!mask.defect.empty(), ErrorKind::geometry, "mask contains no defect cells");
  return mask;
}

std::vector<char> pgm_bytes(std::span<const double> values, std::size_t nx, std::size_t nz) {
  require(values.size() == nx * nz && !values.empty(), ErrorKind::dimension,
          "map does not match the image size");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  const std::string header =
      "P5\n" + std::to_string(nx) + " " + std::to_string(nz) + "\n65535\n";
  std::vector<char> out(header.begin(), header.end());
  out.reserve(header.size() + 2 * values.size());
  for (double v : values) {
    const double t = span > 0.0 ? (v - lo) / span : 0.0;
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
    out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xff));
  }
  return out;
}

void render_map(const std::filesystem::path& path, std::span<const double> values,
                std::size_t nx, std::size_t nz) {
  const auto bytes = pgm_bytes(values, nx, nz);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "write to '" + path.string() + "' failed");
}

}  // namespace tlsm::imaging
