#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "acuity/datamodel.hpp"

namespace acuity::phenotype {

enum class Trigger { vasopressor, ventilation, crrt, massive_transfusion };

std::string to_string(Trigger);

struct WindowLabel {
  double assessment_time = 0.0;
  Acuity label = Acuity::stable;
  std::set<Trigger> triggers;  // nonempty iff label == unstable
  std::optional<int> sofa;
};

inline constexpr double kTransfusionLookbackHours = 24.0;
inline constexpr int kMassiveTransfusionUnits = 10;

// Life-support rules for the window ending at `a`. Vasopressor, ventilation
// and CRRT are checked in [a - window_hours, a); massive transfusion counts
// transfusion_unit events over [a - 24 h, a] with a closed threshold of 10
// units. A death or discharge at or before `a` excludes the window. Events
// must be sorted by time.
WindowLabel label_window(std::span<const TherapyEvent> events, double a,
                         double window_hours = 4.0,
                         double transfusion_lookback_hours = kTransfusionLookbackHours);

// Most recent sofa_observation in [a - 24 h, a]; absent if none.
std::optional<int> sofa_at(std::span<const TherapyEvent> events, double a,
                           double lookback_hours = kTransfusionLookbackHours);

// Audit dump, one row per window with its triggers.
void write_label_audit(const std::vector<std::pair<std::string, WindowLabel>>& rows,
                       const std::filesystem::path& path);

std::vector<std::pair<std::string, WindowLabel>> read_label_audit(
    const std::filesystem::path& path);

}  // namespace acuity::phenotype
