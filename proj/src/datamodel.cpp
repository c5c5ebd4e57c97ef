#include "acuity/datamodel.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace acuity {

namespace fs = std::filesystem;

const PatientRecord* Cohort::find_patient(const std::string& id) const {
  for (const auto& p : patients)
    if (p.patient_id == id) return &p;
  return nullptr;
}

const AccelTrace* Cohort::find_trace(const std::string& id) const {
  for (const auto& t : traces)
    if (t.patient_id == id) return &t;
  return nullptr;
}

std::string to_string(Sex v) { return v == Sex::female ? "female" : "male"; }

std::string to_string(Race v) {
  switch (v) {
    case Race::white: return "white";
    case Race::african_american: return "african_american";
    default: return "other";
  }
}

std::string to_string(Ethnicity v) {
  return v == Ethnicity::hispanic ? "hispanic" : "non_hispanic";
}

std::string to_string(ClinicalKind v) {
  switch (v) {
    case ClinicalKind::blood_pressure: return "blood_pressure";
    case ClinicalKind::heart_rate: return "heart_rate";
    case ClinicalKind::spo2: return "spo2";
    case ClinicalKind::pain_score: return "pain_score";
    case ClinicalKind::braden_score: return "braden_score";
    default: return "cognitive_status";
  }
}

std::string to_string(CognitiveState v) {
  switch (v) {
    case CognitiveState::normal: return "normal";
    case CognitiveState::delirium: return "delirium";
    default: return "coma";
  }
}

std::string to_string(TherapyKind v) {
  switch (v) {
    case TherapyKind::vasopressor: return "vasopressor";
    case TherapyKind::mechanical_ventilation: return "mechanical_ventilation";
    case TherapyKind::crrt: return "crrt";
    case TherapyKind::transfusion_unit: return "transfusion_unit";
    case TherapyKind::sofa_observation: return "sofa_observation";
    case TherapyKind::death: return "death";
    default: return "discharge";
  }
}

std::string to_string(Acuity v) {
  switch (v) {
    case Acuity::stable: return "stable";
    case Acuity::unstable: return "unstable";
    case Acuity::excluded_dead: return "excluded_dead";
    default: return "excluded_discharged";
  }
}

namespace {

[[noreturn]] void bad_value(const std::string& ctx, std::string_view got) {
  throw DataError(ctx + ": unknown value '" + std::string(got) + "'");
}

}  // namespace

Sex parse_sex(std::string_view s, const std::string& ctx) {
  if (s == "female") return Sex::female;
  if (s == "male") return Sex::male;
  bad_value(ctx + " [sex]", s);
}

Race parse_race(std::string_view s, const std::string& ctx) {
  if (s == "white") return Race::white;
  if (s == "african_american") return Race::african_american;
  if (s == "other") return Race::other;
  bad_value(ctx + " [race]", s);
}

Ethnicity parse_ethnicity(std::string_view s, const std::string& ctx) {
  if (s == "hispanic") return Ethnicity::hispanic;
  if (s == "non_hispanic") return Ethnicity::non_hispanic;
  bad_value(ctx + " [ethnicity]", s);
}

ClinicalKind parse_clinical_kind(std::string_view s, const std::string& ctx) {
  if (s == "blood_pressure") return ClinicalKind::blood_pressure;
  if (s == "heart_rate") return ClinicalKind::heart_rate;
  if (s == "spo2") return ClinicalKind::spo2;
  if (s == "pain_score") return ClinicalKind::pain_score;
  if (s == "braden_score") return ClinicalKind::braden_score;
  if (s == "cognitive_status") return ClinicalKind::cognitive_status;
  bad_value(ctx + " [kind]", s);
}

CognitiveState parse_cognitive(std::string_view s, const std::string& ctx) {
  if (s == "normal") return CognitiveState::normal;
  if (s == "delirium") return CognitiveState::delirium;
  if (s == "coma") return CognitiveState::coma;
  bad_value(ctx + " [value]", s);
}

TherapyKind parse_therapy_kind(std::string_view s, const std::string& ctx) {
  if (s == "vasopressor") return TherapyKind::vasopressor;
  if (s == "mechanical_ventilation") return TherapyKind::mechanical_ventilation;
  if (s == "crrt") return TherapyKind::crrt;
  if (s == "transfusion_unit") return TherapyKind::transfusion_unit;
  if (s == "sofa_observation") return TherapyKind::sofa_observation;
  if (s == "death") return TherapyKind::death;
  if (s == "discharge") return TherapyKind::discharge;
  bad_value(ctx + " [kind]", s);
}

Acuity parse_acuity(std::string_view s, const std::string& ctx) {
  if (s == "stable") return Acuity::stable;
  if (s == "unstable") return Acuity::unstable;
  if (s == "excluded_dead") return Acuity::excluded_dead;
  if (s == "excluded_discharged") return Acuity::excluded_discharged;
  bad_value(ctx + " [label]", s);
}

namespace {

struct CsvFile {
  std::string name;
  std::vector<std::string> lines;  // data lines, header stripped
};

CsvFile read_csv(const fs::path& dir, const std::string& name, const std::string& header) {
  fs::path p = dir / name;
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("missing file: " + p.string());
  CsvFile f{name, {}};
  std::string line;
  if (!std::getline(in, line)) throw DataError(name + ": empty file");
  if (std::string(trim(line)) != header)
    throw DataError(name + ": line 1: bad header, expected '" + header + "'");
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty()) f.lines.emplace_back(t);
    else f.lines.emplace_back();  // keep numbering aligned; blank rows rejected below
  }
  return f;
}

std::string row_ctx(const std::string& file, std::size_t idx) {
  return file + ": line " + std::to_string(idx + 2);  // +1 header, +1 one-based
}

std::vector<std::string_view> fields(const std::string& file, std::size_t idx,
                                     const std::string& line, std::size_t expected) {
  auto f = split(line, ',');
  if (f.size() != expected)
    throw DataError(row_ctx(file, idx) + ": expected " + std::to_string(expected) +
                    " fields, got " + std::to_string(f.size()));
  for (auto& v : f) v = trim(v);
  return f;
}

std::string patients_header() {
  std::string h = "patient_id,age,sex,race,ethnicity,height_cm,weight_kg,los_days";
  for (const char* d : kDiseaseNames) h += std::string(",") + d;
  return h;
}

}  // namespace

Cohort load_cohort(const fs::path& dir) {
  Cohort c;

  const std::string pheader = patients_header();
  CsvFile pf = read_csv(dir, "patients.csv", pheader);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < pf.lines.size(); ++i) {
    if (pf.lines[i].empty()) continue;
    const std::string ctx = row_ctx(pf.name, i);
    auto f = fields(pf.name, i, pf.lines[i], 8 + kDiseaseNames.size());
    PatientRecord p;
    p.patient_id = std::string(f[0]);
    if (p.patient_id.empty()) throw DataError(ctx + " [patient_id]: empty");
    if (!ids.insert(p.patient_id).second)
      throw DataError(ctx + " [patient_id]: duplicate '" + p.patient_id + "'");
    p.age = parse_double(f[1], ctx + " [age]");
    if (p.age <= 0) throw DataError(ctx + " [age]: must be > 0");
    p.sex = parse_sex(f[2], ctx);
    p.race = parse_race(f[3], ctx);
    p.ethnicity = parse_ethnicity(f[4], ctx);
    p.height_cm = parse_double(f[5], ctx + " [height_cm]");
    if (p.height_cm <= 0) throw DataError(ctx + " [height_cm]: must be > 0");
    p.weight_kg = parse_double(f[6], ctx + " [weight_kg]");
    if (p.weight_kg <= 0) throw DataError(ctx + " [weight_kg]: must be > 0");
    p.los_days = parse_double(f[7], ctx + " [los_days]");
    if (p.los_days < 0) throw DataError(ctx + " [los_days]: must be >= 0");
    for (std::size_t d = 0; d < kDiseaseNames.size(); ++d) {
      auto v = f[8 + d];
      if (v == "0") p.diseases[d] = false;
      else if (v == "1") p.diseases[d] = true;
      else throw DataError(ctx + " [" + kDiseaseNames[d] + "]: expected 0 or 1");
    }
    c.patients.push_back(std::move(p));
  }

  auto require_patient = [&](std::string_view id, const std::string& ctx) {
    if (!ids.count(std::string(id)))
      throw DataError(ctx + " [patient_id]: unknown patient '" + std::string(id) + "'");
  };

  CsvFile af = read_csv(dir, "accel.csv", "patient_id,t_sec,x_g,y_g,z_g");
  std::map<std::string, AccelTrace> traces;
  for (std::size_t i = 0; i < af.lines.size(); ++i) {
    if (af.lines[i].empty()) continue;
    const std::string ctx = row_ctx(af.name, i);
    auto f = fields(af.name, i, af.lines[i], 5);
    require_patient(f[0], ctx);
    AccelSample s;
    s.t = parse_double(f[1], ctx + " [t_sec]");
    s.x = parse_double(f[2], ctx + " [x_g]");
    s.y = parse_double(f[3], ctx + " [y_g]");
    s.z = parse_double(f[4], ctx + " [z_g]");
    AccelTrace& tr = traces[std::string(f[0])];
    if (tr.patient_id.empty()) tr.patient_id = std::string(f[0]);
    if (!tr.samples.empty() && s.t <= tr.samples.back().t)
      throw DataError(ctx + " [t_sec]: timestamps not strictly increasing for patient '" +
                      tr.patient_id + "'");
    tr.samples.push_back(s);
  }
  for (auto& [id, tr] : traces) {
    if (tr.samples.size() > 1) {
      double span = tr.samples.back().t - tr.samples.front().t;
      if (span > kMaxTraceSeconds)
        throw DataError("accel.csv: patient '" + id + "': trace spans " +
                        format_double(span) + " s, exceeds 7 days");
    }
    c.traces.push_back(std::move(tr));
  }

  CsvFile cf = read_csv(dir, "clinical.csv", "patient_id,t_sec,kind,value");
  for (std::size_t i = 0; i < cf.lines.size(); ++i) {
    if (cf.lines[i].empty()) continue;
    const std::string ctx = row_ctx(cf.name, i);
    auto f = fields(cf.name, i, cf.lines[i], 4);
    require_patient(f[0], ctx);
    ClinicalEvent e;
    e.patient_id = std::string(f[0]);
    e.t = parse_double(f[1], ctx + " [t_sec]");
    e.kind = parse_clinical_kind(f[2], ctx);
    if (e.kind == ClinicalKind::cognitive_status)
      e.categorical_value = parse_cognitive(f[3], ctx);
    else
      e.numeric_value = parse_double(f[3], ctx + " [value]");
    c.clinical.push_back(std::move(e));
  }

  CsvFile tf = read_csv(dir, "therapy.csv", "patient_id,t_sec,kind,value");
  for (std::size_t i = 0; i < tf.lines.size(); ++i) {
    if (tf.lines[i].empty()) continue;
    const std::string ctx = row_ctx(tf.name, i);
    auto f = fields(tf.name, i, tf.lines[i], 4);
    require_patient(f[0], ctx);
    TherapyEvent e;
    e.patient_id = std::string(f[0]);
    e.t = parse_double(f[1], ctx + " [t_sec]");
    e.kind = parse_therapy_kind(f[2], ctx);
    if (e.kind == TherapyKind::sofa_observation) {
      long v = parse_long(f[3], ctx + " [value]");
      if (v < 0 || v > 24)
        throw DataError(ctx + " [value]: sofa_value " + std::to_string(v) +
                        " outside [0,24]");
      e.sofa_value = static_cast<int>(v);
    } else if (!f[3].empty()) {
      throw DataError(ctx + " [value]: expected empty value for kind '" +
                      std::string(f[2]) + "'");
    }
    c.therapy.push_back(std::move(e));
  }

  return c;
}

void save_cohort(const Cohort& cohort, const fs::path& dir) {
  fs::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    return out;
  };

  {
    auto out = open("patients.csv");
    out << patients_header() << "\n";
    for (const auto& p : cohort.patients) {
      out << p.patient_id << ',' << format_double(p.age) << ',' << to_string(p.sex) << ','
          << to_string(p.race) << ',' << to_string(p.ethnicity) << ','
          << format_double(p.height_cm) << ',' << format_double(p.weight_kg) << ','
          << format_double(p.los_days);
      for (bool d : p.diseases) out << ',' << (d ? '1' : '0');
      out << "\n";
    }
  }
  {
    auto out = open("accel.csv");
    out << "patient_id,t_sec,x_g,y_g,z_g\n";
    std::string buf;
    for (const auto& tr : cohort.traces) {
      for (const auto& s : tr.samples) {
        buf.clear();
        buf += tr.patient_id;
        buf += ',';
        buf += format_double(s.t);
        buf += ',';
        buf += format_double(s.x);
        buf += ',';
        buf += format_double(s.y);
        buf += ',';
        buf += format_double(s.z);
        buf += '\n';
        out << buf;
      }
    }
  }
  {
    auto out = open("clinical.csv");
    out << "patient_id,t_sec,kind,value\n";
    for (const auto& e : cohort.clinical) {
      out << e.patient_id << ',' << format_double(e.t) << ',' << to_string(e.kind) << ',';
      if (e.categorical_value) out << to_string(*e.categorical_value);
      else out << format_double(*e.numeric_value);
      out << "\n";
    }
  }
  {
    auto out = open("therapy.csv");
    out << "patient_id,t_sec,kind,value\n";
    for (const auto& e : cohort.therapy) {
      out << e.patient_id << ',' << format_double(e.t) << ',' << to_string(e.kind) << ',';
      if (e.sofa_value) out << *e.sofa_value;
      out << "\n";
    }
  }
}

}  // namespace acuity
