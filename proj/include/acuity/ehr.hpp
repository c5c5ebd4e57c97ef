#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "acuity/datamodel.hpp"

namespace acuity::ehr {

inline constexpr std::size_t kDemographicLen = 11;  // 4 scaled numerics + 2 + 3 + 2 one-hot
inline constexpr std::size_t kClinicalLen = 8;      // 5 scaled means + 3 cognitive one-hot
inline constexpr std::size_t kNumClinicalNumerics = 5;

// Min/max per demographic numeric (age, height, weight, los), development
// split only.
struct DemographicScale {
  std::array<double, 4> min{};
  std::array<double, 4> max{};
};

// Min/max plus imputation mean per clinical numeric kind, in ClinicalKind
// order (blood_pressure, heart_rate, spo2, pain_score, braden_score);
// fit over the development split's window means.
struct ClinicalScale {
  std::array<double, kNumClinicalNumerics> min{};
  std::array<double, kNumClinicalNumerics> max{};
  std::array<double, kNumClinicalNumerics> mean{};
};

// Raw per-window clinical aggregates before any scaling: the arithmetic mean
// of each numeric kind present in the window, and the majority cognitive
// state (ties broken toward greater severity).
struct ClinicalAggregate {
  std::array<std::optional<double>, kNumClinicalNumerics> mean{};
  CognitiveState cognitive = CognitiveState::normal;
};

DemographicScale fit_demographic_scale(const std::vector<const PatientRecord*>& dev_patients);

// 11-vector: scaled age/height/weight/los then one-hot sex, race, ethnicity.
std::array<double, kDemographicLen> encode_demographics(const PatientRecord& p,
                                                        const DemographicScale& scale);

// Means and majority vote over the events of one window; event order is
// irrelevant. Events must all lie within the window, caller selects them.
ClinicalAggregate aggregate_window_events(std::span<const ClinicalEvent> events);

ClinicalScale fit_clinical_scale(const std::vector<const ClinicalAggregate*>& dev_aggregates);

// 8-vector: five scaled means (missing kinds imputed with the dev-split
// mean) then the cognitive one-hot.
std::array<double, kClinicalLen> encode_clinical(const ClinicalAggregate& agg,
                                                 const ClinicalScale& scale);

}  // namespace acuity::ehr
