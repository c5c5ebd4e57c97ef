#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "acuity/common.hpp"

namespace acuity {

enum class Sex { female, male };
enum class Race { white, african_american, other };
enum class Ethnicity { hispanic, non_hispanic };

// Disease flag order matches the patients.csv columns.
inline constexpr std::array<const char*, 11> kDiseaseNames = {
    "cancer",       "cerebro_vascular",      "dementia",
    "paraplegia",   "congestive_heart_failure", "copd",
    "diabetes",     "metastatic_carcinoma",  "liver",
    "peptic_ulcer", "renal"};

struct PatientRecord {
  std::string patient_id;
  double age = 0.0;          // years
  Sex sex = Sex::female;
  Race race = Race::white;
  Ethnicity ethnicity = Ethnicity::non_hispanic;
  double height_cm = 0.0;
  double weight_kg = 0.0;
  double los_days = 0.0;     // length of stay, enrollment snapshot
  std::array<bool, 11> diseases{};

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

struct AccelSample {
  double t = 0.0;  // seconds since enrollment
  double x = 0.0, y = 0.0, z = 0.0;  // gravitational units

  friend bool operator==(const AccelSample&, const AccelSample&) = default;
};

struct AccelTrace {
  std::string patient_id;
  std::vector<AccelSample> samples;  // strictly increasing t, span <= 7 days
  double device_rate_hint = 0.0;     // nominal Hz; actual spacing may jitter

  friend bool operator==(const AccelTrace&, const AccelTrace&) = default;
};

enum class ClinicalKind { blood_pressure, heart_rate, spo2, pain_score, braden_score, cognitive_status };
enum class CognitiveState { normal, delirium, coma };

struct ClinicalEvent {
  std::string patient_id;
  double t = 0.0;
  ClinicalKind kind = ClinicalKind::heart_rate;
  std::optional<double> numeric_value;
  std::optional<CognitiveState> categorical_value;  // only for cognitive_status

  friend bool operator==(const ClinicalEvent&, const ClinicalEvent&) = default;
};

enum class TherapyKind {
  vasopressor,
  mechanical_ventilation,
  crrt,
  transfusion_unit,
  sofa_observation,
  death,
  discharge
};

struct TherapyEvent {
  std::string patient_id;
  double t = 0.0;
  TherapyKind kind = TherapyKind::vasopressor;
  std::optional<int> sofa_value;  // 0..24, only for sofa_observation

  friend bool operator==(const TherapyEvent&, const TherapyEvent&) = default;
};

enum class Acuity { stable, unstable, excluded_dead, excluded_discharged };

struct Cohort {
  std::vector<PatientRecord> patients;
  std::vector<AccelTrace> traces;
  std::vector<ClinicalEvent> clinical;
  std::vector<TherapyEvent> therapy;

  const PatientRecord* find_patient(const std::string& id) const;
  const AccelTrace* find_trace(const std::string& id) const;

  friend bool operator==(const Cohort&, const Cohort&) = default;
};

inline constexpr double kMaxTraceSeconds = 7.0 * 24.0 * 3600.0;

std::string to_string(Sex);
std::string to_string(Race);
std::string to_string(Ethnicity);
std::string to_string(ClinicalKind);
std::string to_string(CognitiveState);
std::string to_string(TherapyKind);
std::string to_string(Acuity);

Sex parse_sex(std::string_view, const std::string& ctx);
Race parse_race(std::string_view, const std::string& ctx);
Ethnicity parse_ethnicity(std::string_view, const std::string& ctx);
ClinicalKind parse_clinical_kind(std::string_view, const std::string& ctx);
CognitiveState parse_cognitive(std::string_view, const std::string& ctx);
TherapyKind parse_therapy_kind(std::string_view, const std::string& ctx);
Acuity parse_acuity(std::string_view, const std::string& ctx);

// Reads patients.csv / accel.csv / clinical.csv / therapy.csv from `dir`.
// Rejects rows that violate type invariants (with file, line and field) and
// events referencing unknown patients.
Cohort load_cohort(const std::filesystem::path& dir);

// Writes the four delimited files; output is byte-deterministic for equal
// cohort content.
void save_cohort(const Cohort& cohort, const std::filesystem::path& dir);

}  // namespace acuity
