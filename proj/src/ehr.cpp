#include "acuity/ehr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace acuity::ehr {

namespace {

double scale_clamped(double v, double lo, double hi) {
  return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

const char* numeric_name(std::size_t i) {
  static const char* names[kNumClinicalNumerics] = {"blood_pressure", "heart_rate", "spo2",
                                                    "pain_score", "braden_score"};
  return names[i];
}

}  // namespace

DemographicScale fit_demographic_scale(const std::vector<const PatientRecord*>& dev_patients) {
  if (dev_patients.empty()) throw DataError("fit_demographic_scale: empty development split");
  DemographicScale s;
  s.min.fill(std::numeric_limits<double>::infinity());
  s.max.fill(-std::numeric_limits<double>::infinity());
  for (const PatientRecord* p : dev_patients) {
    const double v[4] = {p->age, p->height_cm, p->weight_kg, p->los_days};
    for (int i = 0; i < 4; ++i) {
      s.min[i] = std::min(s.min[i], v[i]);
      s.max[i] = std::max(s.max[i], v[i]);
    }
  }
  static const char* names[4] = {"age", "height_cm", "weight_kg", "los_days"};
  for (int i = 0; i < 4; ++i)
    if (!(s.max[i] > s.min[i]))
      throw DataError(std::string("fit_demographic_scale: degenerate numeric ") + names[i]);
  return s;
}

std::array<double, kDemographicLen> encode_demographics(const PatientRecord& p,
                                                        const DemographicScale& scale) {
  std::array<double, kDemographicLen> out{};
  const double v[4] = {p.age, p.height_cm, p.weight_kg, p.los_days};
  for (int i = 0; i < 4; ++i) out[i] = scale_clamped(v[i], scale.min[i], scale.max[i]);
  out[4 + (p.sex == Sex::female ? 0 : 1)] = 1.0;
  out[6 + static_cast<int>(p.race)] = 1.0;
  out[9 + (p.ethnicity == Ethnicity::hispanic ? 0 : 1)] = 1.0;
  return out;
}

ClinicalAggregate aggregate_window_events(std::span<const ClinicalEvent> events) {
  ClinicalAggregate agg;
  std::array<double, kNumClinicalNumerics> sum{};
  std::array<std::size_t, kNumClinicalNumerics> count{};
  std::array<std::size_t, 3> votes{};  // normal, delirium, coma
  for (const ClinicalEvent& e : events) {
    if (e.kind == ClinicalKind::cognitive_status) {
      ++votes[static_cast<int>(*e.categorical_value)];
    } else {
      const auto i = static_cast<std::size_t>(e.kind);
      sum[i] += *e.numeric_value;
      ++count[i];
    }
  }
  for (std::size_t i = 0; i < kNumClinicalNumerics; ++i)
    if (count[i] > 0) agg.mean[i] = sum[i] / static_cast<double>(count[i]);
  // Majority vote; ties resolve toward greater severity (coma > delirium >
  // normal). No votes at all reads as normal.
  if (votes[0] + votes[1] + votes[2] > 0) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < 3; ++s)
      if (votes[s] >= votes[best]) best = s;
    agg.cognitive = static_cast<CognitiveState>(best);
  }
  return agg;
}

ClinicalScale fit_clinical_scale(const std::vector<const ClinicalAggregate*>& dev_aggregates) {
  if (dev_aggregates.empty()) throw DataError("fit_clinical_scale: empty development split");
  ClinicalScale s;
  s.min.fill(std::numeric_limits<double>::infinity());
  s.max.fill(-std::numeric_limits<double>::infinity());
  std::array<double, kNumClinicalNumerics> sum{};
  std::array<std::size_t, kNumClinicalNumerics> count{};
  for (const ClinicalAggregate* a : dev_aggregates)
    for (std::size_t i = 0; i < kNumClinicalNumerics; ++i)
      if (a->mean[i]) {
        s.min[i] = std::min(s.min[i], *a->mean[i]);
        s.max[i] = std::max(s.max[i], *a->mean[i]);
        sum[i] += *a->mean[i];
        ++count[i];
      }
  for (std::size_t i = 0; i < kNumClinicalNumerics; ++i) {
    if (count[i] == 0)
      throw DataError(std::string("fit_clinical_scale: kind ") + numeric_name(i) +
                      " absent from development split");
    if (!(s.max[i] > s.min[i]))
      throw DataError(std::string("fit_clinical_scale: degenerate kind ") + numeric_name(i));
    s.mean[i] = sum[i] / static_cast<double>(count[i]);
  }
  return s;
}

std::array<double, kClinicalLen> encode_clinical(const ClinicalAggregate& agg,
                                                 const ClinicalScale& scale) {
  std::array<double, kClinicalLen> out{};
  for (std::size_t i = 0; i < kNumClinicalNumerics; ++i) {
    const double raw = agg.mean[i] ? *agg.mean[i] : scale.mean[i];
    out[i] = scale_clamped(raw, scale.min[i], scale.max[i]);
  }
  out[kNumClinicalNumerics + static_cast<int>(agg.cognitive)] = 1.0;
  return out;
}

}  // namespace acuity::ehr
