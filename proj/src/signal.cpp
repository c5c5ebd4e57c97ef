#include "acuity/signal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace acuity::signal {

std::size_t window_length(double window_hours) {
  double raw = window_hours * 3600.0 * kTargetRateHz;
  double rounded = std::round(raw);
  if (rounded < 1.0 || std::abs(raw - rounded) > 1e-6)
    throw DataError("window_hours " + format_double(window_hours) +
                    " does not yield an integral sample count at 10 Hz");
  return static_cast<std::size_t>(rounded);
}

double coverage(const AccelTrace& trace, double t_start, double t_end) {
  if (t_end <= t_start) throw DataError("coverage: empty interval");
  const auto& s = trace.samples;
  if (s.empty()) return 0.0;
  double covered = 0.0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    double a = s[i].t, b = s[i + 1].t;
    if (b - a > kMaxInterpGapSeconds) continue;
    double lo = std::max(a, t_start), hi = std::min(b, t_end);
    if (hi > lo) covered += hi - lo;
  }
  return covered / (t_end - t_start);
}

std::array<std::vector<double>, 3> resample_to_10hz(const AccelTrace& trace, double t_start,
                                                    double t_end) {
  const double cov = coverage(trace, t_start, t_end);
  if (cov < kMinCoverage)
    throw DataError("resample_to_10hz: coverage " + format_double(cov) +
                    " below threshold for patient '" + trace.patient_id + "'");

  const std::size_t n =
      static_cast<std::size_t>(std::llround((t_end - t_start) * kTargetRateHz));
  const auto& s = trace.samples;
  std::array<std::vector<double>, 3> out;
  for (auto& ch : out) ch.resize(n);

  std::size_t j = 0;  // s[j].t <= t < s[j+1].t sweep cursor
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t_start + static_cast<double>(i) / kTargetRateHz;
    while (j + 1 < s.size() && s[j + 1].t <= t) ++j;
    double x, y, z;
    if (t <= s.front().t) {
      x = s.front().x; y = s.front().y; z = s.front().z;
    } else if (j + 1 >= s.size()) {
      x = s.back().x; y = s.back().y; z = s.back().z;
    } else {
      const AccelSample& a = s[j];
      const AccelSample& b = s[j + 1];
      if (b.t - a.t > kMaxInterpGapSeconds) {
        // hold the last observed value through long gaps
        x = a.x; y = a.y; z = a.z;
      } else {
        const double w = (t - a.t) / (b.t - a.t);
        x = a.x + w * (b.x - a.x);
        y = a.y + w * (b.y - a.y);
        z = a.z + w * (b.z - a.z);
      }
    }
    out[0][i] = x;
    out[1][i] = y;
    out[2][i] = z;
  }
  return out;
}

ScaleParams fit_scale(const std::vector<const SampleWindow*>& dev_windows) {
  if (dev_windows.empty()) throw DataError("fit_scale: empty development split");
  ScaleParams p;
  for (int c = 0; c < 3; ++c) {
    p.min[c] = std::numeric_limits<double>::infinity();
    p.max[c] = -std::numeric_limits<double>::infinity();
  }
  for (const SampleWindow* w : dev_windows)
    for (int c = 0; c < 3; ++c)
      for (double v : w->data[c]) {
        p.min[c] = std::min(p.min[c], v);
        p.max[c] = std::max(p.max[c], v);
      }
  static const char* names[3] = {"x", "y", "z"};
  for (int c = 0; c < 3; ++c)
    if (!(p.max[c] > p.min[c]))
      throw DataError(std::string("fit_scale: degenerate channel ") + names[c] +
                      " (max == min)");
  return p;
}

void apply_scale(SampleWindow& window, const ScaleParams& params) {
  for (int c = 0; c < 3; ++c) {
    const double lo = params.min[c], inv = 1.0 / (params.max[c] - params.min[c]);
    for (double& v : window.data[c]) v = std::clamp((v - lo) * inv, 0.0, 1.0);
  }
}

void decimate(SampleWindow& window, int factor) {
  if (factor != 1 && factor != 2 && factor != 4)
    throw DataError("decimate: factor must be 1, 2 or 4");
  if (factor == 1) return;
  const std::size_t L = window.length();
  if (L % factor != 0)
    throw DataError("decimate: length " + std::to_string(L) + " not divisible by " +
                    std::to_string(factor));
  const std::size_t Lout = L / factor;
  for (auto& ch : window.data) {
    for (std::size_t i = 0; i < Lout; ++i) {
      double s = 0.0;
      for (int j = 0; j < factor; ++j) s += ch[i * factor + j];
      ch[i] = s / factor;
    }
    ch.resize(Lout);
  }
  window.downsample_factor *= factor;
}

CutResult cut_windows(const AccelTrace& trace, const std::vector<double>& assessments,
                      double window_hours) {
  CutResult res;
  const double span = window_hours * 3600.0;
  const std::size_t L = window_length(window_hours);
  const double trace_start = trace.samples.empty() ? 0.0 : trace.samples.front().t;
  for (double a : assessments) {
    const double t0 = a - span;
    if (trace.samples.empty() || t0 < trace_start) {
      res.rejections.push_back({trace.patient_id, a, "insufficient history"});
      continue;
    }
    const double cov = coverage(trace, t0, a);
    if (cov < kMinCoverage) {
      res.rejections.push_back(
          {trace.patient_id, a, "coverage " + format_double(cov) + " below 0.5"});
      continue;
    }
    SampleWindow w;
    w.patient_id = trace.patient_id;
    w.assessment_time = a;
    w.data = resample_to_10hz(trace, t0, a);
    if (w.length() != L)
      throw DataError("cut_windows: internal length mismatch");  // invariant
    res.windows.push_back(std::move(w));
  }
  return res;
}

void dump_window_csv(const SampleWindow& window, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "t,x,y,z\n";
  const double dt = static_cast<double>(window.downsample_factor) / kTargetRateHz;
  const double t0 = window.assessment_time - dt * static_cast<double>(window.length());
  for (std::size_t i = 0; i < window.length(); ++i) {
    out << format_double(t0 + dt * static_cast<double>(i)) << ',' << format_double(window.data[0][i])
        << ',' << format_double(window.data[1][i]) << ',' << format_double(window.data[2][i])
        << "\n";
  }
}

}  // namespace acuity::signal
