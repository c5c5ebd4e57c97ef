#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "acuity/datamodel.hpp"

namespace acuity::signal {

inline constexpr double kTargetRateHz = 10.0;
inline constexpr double kMaxInterpGapSeconds = 5.0;
inline constexpr double kMinCoverage = 0.5;

// One 4-hour (by default) 3-channel window ending at an assessment time.
// Values are raw g until apply_scale, [0,1] afterwards.
struct SampleWindow {
  std::string patient_id;
  double assessment_time = 0.0;
  std::array<std::vector<double>, 3> data;  // x, y, z at 10 Hz / factor
  int downsample_factor = 1;

  std::size_t length() const { return data[0].size(); }
};

struct WindowRejection {
  std::string patient_id;
  double assessment_time = 0.0;
  std::string reason;
};

struct ScaleParams {
  std::array<double, 3> min{};
  std::array<double, 3> max{};
};

// Fraction of [t_start, t_end) lying under sampling runs whose inter-sample
// gaps stay within kMaxInterpGapSeconds.
double coverage(const AccelTrace& trace, double t_start, double t_end);

// Uniform 10 Hz grid over [t_start, t_end), linear interpolation between
// neighbours. Gaps wider than 5 s and the lead-in/tail are held at the
// nearest observed value rather than interpolated across. Throws DataError
// when coverage is below 50%.
std::array<std::vector<double>, 3> resample_to_10hz(const AccelTrace& trace, double t_start,
                                                    double t_end);

// Per-channel global min/max over the given (development split) windows.
ScaleParams fit_scale(const std::vector<const SampleWindow*>& dev_windows);

// v' = clamp((v - min) / (max - min), 0, 1), in place.
void apply_scale(SampleWindow& window, const ScaleParams& params);

// Non-overlapping block means of width `factor` (1, 2 or 4); factor 1 is the
// identity. Window length must divide evenly.
void decimate(SampleWindow& window, int factor);

struct CutResult {
  std::vector<SampleWindow> windows;
  std::vector<WindowRejection> rejections;
};

// One candidate window [a - window_hours, a) per assessment time; windows
// with insufficient history or coverage are reported, not fabricated.
CutResult cut_windows(const AccelTrace& trace, const std::vector<double>& assessments,
                      double window_hours = 4.0);

// Number of 10 Hz samples per channel for an undecimated window.
std::size_t window_length(double window_hours);

// Debug dump: t,x,y,z rows for plotting.
void dump_window_csv(const SampleWindow& window, const std::filesystem::path& path);

}  // namespace acuity::signal
