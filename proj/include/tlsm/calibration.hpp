#pragma once

// Background identification from arrival-time picks: through-origin speed
// fits for the surface-skimming and Rayleigh arrivals, then plate thickness
// from the bottom echoes.

#include <filesystem>
#include <string_view>
#include <vector>

#include "tlsm/wavesim.hpp"

namespace tlsm::calibration {

enum class Mode { ssl, saw, ll, ss, ls };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

/// Root in (0, c_S) of (2 - c^2/c_S^2)^2 = 4 sqrt(1 - c^2/c_L^2) sqrt(1 - c^2/c_S^2).
double rayleigh_speed(double c_long, double c_shear);
/// Left-hand minus right-hand side of the secular equation at speed c.
double rayleigh_residual(double c, double c_long, double c_shear);
/// Shear speed whose Rayleigh speed equals c_rayleigh for the given c_long.
double shear_from_rayleigh(double c_rayleigh, double c_long);

/// Travel time for offset d in a plate of thickness h.
double predict_arrival(Mode mode, double d, double c_long, double c_shear, double h);

struct Pick {
  Mode mode = Mode::ssl;
  std::size_t source = 0;
  std::size_t receiver = 0;
  double time = 0.0;
};

struct ArrivalPickSet {
  std::vector<Pick> picks;
  wavesim::ArrayGeometry geometry;

  double offset(const Pick& p) const;
  void validate() const;
};

struct FitOptions {
  /// Fit a trigger delay shared by every pick (unknown trigger time).
  bool time_offset = false;
};

struct FitResult {
  double c_long = 0.0;
  double c_shear = 0.0;
  double c_rayleigh = 0.0;
  double thickness = 0.0;
  double thickness_ll = 0.0;  ///< 0 when no LL picks
  double thickness_ss = 0.0;  ///< 0 when no SS picks
  double time_offset = 0.0;
  /// RMS misfit per mode in seconds, indexed by Mode; LS is verification only.
  std::vector<double> rms;
  std::vector<std::size_t> counts;
};

FitResult fit_background(const ArrivalPickSet& picks, const FitOptions& options = {});

/// CSV with header mode,source_index,receiver_index,time_s.
std::vector<Pick> read_picks(const std::filesystem::path& path);
void write_picks(const std::filesystem::path& path, const std::vector<Pick>& picks);

}  // namespace tlsm::calibration
