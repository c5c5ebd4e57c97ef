#include "acuity/phenotype.hpp"

#include <algorithm>
#include <fstream>

namespace acuity::phenotype {

std::string to_string(Trigger t) {
  switch (t) {
    case Trigger::vasopressor: return "vasopressor";
    case Trigger::ventilation: return "ventilation";
    case Trigger::crrt: return "crrt";
    default: return "massive_transfusion";
  }
}

WindowLabel label_window(std::span<const TherapyEvent> events, double a, double window_hours,
                         double transfusion_lookback_hours) {
  WindowLabel out;
  out.assessment_time = a;
  out.sofa = sofa_at(events, a);

  const double win_lo = a - window_hours * 3600.0;
  const double tf_lo = a - transfusion_lookback_hours * 3600.0;

  // Exclusion dominates therapy triggers: once the patient has died or been
  // discharged there is nothing to phenotype.
  std::optional<std::pair<double, TherapyKind>> exit_event;
  for (const TherapyEvent& e : events) {
    if (e.t > a) break;
    if (e.kind == TherapyKind::death || e.kind == TherapyKind::discharge) {
      if (!exit_event || e.t < exit_event->first ||
          (e.t == exit_event->first && e.kind == TherapyKind::death))
        exit_event = {e.t, e.kind};
    }
  }
  if (exit_event) {
    out.label = exit_event->second == TherapyKind::death ? Acuity::excluded_dead
                                                         : Acuity::excluded_discharged;
    return out;
  }

  int transfusion_units = 0;
  for (const TherapyEvent& e : events) {
    if (e.t > a) break;
    switch (e.kind) {
      case TherapyKind::vasopressor:
        if (e.t >= win_lo && e.t < a) out.triggers.insert(Trigger::vasopressor);
        break;
      case TherapyKind::mechanical_ventilation:
        if (e.t >= win_lo && e.t < a) out.triggers.insert(Trigger::ventilation);
        break;
      case TherapyKind::crrt:
        if (e.t >= win_lo && e.t < a) out.triggers.insert(Trigger::crrt);
        break;
      case TherapyKind::transfusion_unit:
        if (e.t >= tf_lo && e.t <= a) ++transfusion_units;
        break;
      default:
        break;
    }
  }
  if (transfusion_units >= kMassiveTransfusionUnits)
    out.triggers.insert(Trigger::massive_transfusion);

  out.label = out.triggers.empty() ? Acuity::stable : Acuity::unstable;
  return out;
}

std::optional<int> sofa_at(std::span<const TherapyEvent> events, double a,
                           double lookback_hours) {
  const double lo = a - lookback_hours * 3600.0;
  std::optional<int> latest;
  for (const TherapyEvent& e : events) {
    if (e.t > a) break;
    if (e.kind == TherapyKind::sofa_observation && e.t >= lo) latest = e.sofa_value;
  }
  return latest;
}

void write_label_audit(const std::vector<std::pair<std::string, WindowLabel>>& rows,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "patient_id,assessment_time,label,triggers,sofa\n";
  for (const auto& [pid, wl] : rows) {
    out << pid << ',' << format_double(wl.assessment_time) << ',' << acuity::to_string(wl.label)
        << ',';
    bool first = true;
    for (Trigger t : wl.triggers) {
      if (!first) out << '|';
      out << to_string(t);
      first = false;
    }
    out << ',';
    if (wl.sofa) out << *wl.sofa;
    out << "\n";
  }
}

std::vector<std::pair<std::string, WindowLabel>> read_label_audit(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file: " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      std::string(trim(line)) != "patient_id,assessment_time,label,triggers,sofa")
    throw DataError(path.string() + ": bad header");
  std::vector<std::pair<std::string, WindowLabel>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty()) continue;
    const std::string ctx = path.string() + ": line " + std::to_string(lineno);
    auto f = split(t, ',');
    if (f.size() != 5) throw DataError(ctx + ": expected 5 fields");
    WindowLabel wl;
    wl.assessment_time = parse_double(f[1], ctx + " [assessment_time]");
    wl.label = parse_acuity(f[2], ctx);
    if (!f[3].empty()) {
      for (auto tok : split(f[3], '|')) {
        if (tok == "vasopressor") wl.triggers.insert(Trigger::vasopressor);
        else if (tok == "ventilation") wl.triggers.insert(Trigger::ventilation);
        else if (tok == "crrt") wl.triggers.insert(Trigger::crrt);
        else if (tok == "massive_transfusion") wl.triggers.insert(Trigger::massive_transfusion);
        else throw DataError(ctx + " [triggers]: unknown trigger '" + std::string(tok) + "'");
      }
    }
    if (!f[4].empty()) wl.sofa = static_cast<int>(parse_long(f[4], ctx + " [sofa]"));
    rows.emplace_back(std::string(f[0]), std::move(wl));
  }
  return rows;
}

}  // namespace acuity::phenotype
