#include "couple_sed/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace csed::evalkit {

namespace {
// Absorbs decimal round-off so that boundary cases (a shift of exactly the
// collar) stay inclusive.
constexpr double kTol = 1e-9;
}  // namespace

void CollarParams::validate() const {
  if (onset_collar < 0.0 || offset_collar < 0.0 || offset_ratio < 0.0) {
    throw std::invalid_argument("collar parameters must be >= 0");
  }
}

bool eligible(const EventLabel& ref, const EventLabel& est, const CollarParams& collar) {
  const double offset_tol = std::max(collar.offset_collar, collar.offset_ratio * (ref.offset - ref.onset));
  return std::abs(ref.onset - est.onset) <= collar.onset_collar + kTol &&
         std::abs(ref.offset - est.offset) <= offset_tol + kTol;
}

std::vector<std::pair<std::size_t, std::size_t>> match_events(const std::vector<EventLabel>& ref,
                                                              const std::vector<EventLabel>& est,
                                                              const CollarParams& collar, MatchMode mode) {
  const std::size_t R = ref.size(), E = est.size();
  std::vector<std::vector<std::size_t>> adj(R);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t e = 0; e < E; ++e)
      if (eligible(ref[r], est[e], collar)) adj[r].push_back(e);

  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> owner(E, kNone);
  if (mode == MatchMode::Greedy) {
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t e : adj[r]) {
        if (owner[e] == kNone) {
          owner[e] = r;
          break;
        }
      }
    }
  } else {
    // Kuhn's augmenting paths.
    std::vector<char> seen;
    std::function<bool(std::size_t)> augment = [&](std::size_t r) {
      for (std::size_t e : adj[r]) {
        if (seen[e]) continue;
        seen[e] = 1;
        if (owner[e] == kNone || augment(owner[e])) {
          owner[e] = r;
          return true;
        }
      }
      return false;
    };
    for (std::size_t r = 0; r < R; ++r) {
      seen.assign(E, 0);
      augment(r);
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t e = 0; e < E; ++e)
    if (owner[e] != kNone) out.emplace_back(owner[e], e);
  std::sort(out.begin(), out.end());
  return out;
}

double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

ScoreReport eb_f1(const EventMap& ref, const EventMap& est, const CollarParams& collar,
                  const std::vector<std::string>& classes, MatchMode mode) {
  if (classes.empty()) throw std::invalid_argument("eb_f1: class list is empty");
  collar.validate();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index.emplace(classes[i], i);

  using PerClass = std::vector<std::vector<EventLabel>>;
  auto split = [&](const std::vector<EventLabel>& events, const std::string& clip) {
    PerClass out(classes.size());
    for (const auto& e : events) {
      const auto it = index.find(e.class_name);
      if (it == index.end()) throw std::invalid_argument("eb_f1: unknown class '" + e.class_name + "' in " + clip);
      out[it->second].push_back(e);
    }
    return out;
  };

  ScoreReport report;
  report.classes.resize(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) report.classes[c].name = classes[c];

  std::set<std::string> clips;
  for (const auto& [k, v] : ref) clips.insert(k);
  for (const auto& [k, v] : est) clips.insert(k);
  static const std::vector<EventLabel> kEmpty;
  for (const auto& clip : clips) {
    const auto ri = ref.find(clip);
    const auto ei = est.find(clip);
    const PerClass r = split(ri == ref.end() ? kEmpty : ri->second, clip);
    const PerClass e = split(ei == est.end() ? kEmpty : ei->second, clip);
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const std::size_t tp = match_events(r[c], e[c], collar, mode).size();
      ClassScore& s = report.classes[c];
      s.tp += tp;
      s.fp += e[c].size() - tp;
      s.fn += r[c].size() - tp;
    }
  }
  double sum = 0.0;
  std::size_t n_present = 0;
  for (ClassScore& s : report.classes) {
    s.present = s.tp + s.fp + s.fn > 0;
    s.f1 = f1_score(s.tp, s.fp, s.fn);
    if (s.present) {
      sum += s.f1;
      ++n_present;
    }
  }
  report.macro_f1 = n_present == 0 ? 1.0 : sum / static_cast<double>(n_present);
  return report;
}

std::string format_report(const ScoreReport& report) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s %6s %6s %6s %8s\n", "class", "TP", "FP", "FN", "F1");
  out << buf;
  for (const auto& s : report.classes) {
    if (s.present) {
      std::snprintf(buf, sizeof(buf), "%-16s %6zu %6zu %6zu %8.3f\n", s.name.c_str(), s.tp, s.fp, s.fn, s.f1);
    } else {
      std::snprintf(buf, sizeof(buf), "%-16s %6zu %6zu %6zu %8s\n", s.name.c_str(), s.tp, s.fp, s.fn, "-");
    }
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "macro F1 %.3f\n", report.macro_f1);
  out << buf;
  return out.str();
}

std::string report_csv(const ScoreReport& report) {
  std::ostringstream out;
  out << "class,tp,fp,fn,f1\n";
  char buf[64];
  for (const auto& s : report.classes) {
    std::snprintf(buf, sizeof(buf), "%.6f", s.f1);
    out << s.name << ',' << s.tp << ',' << s.fp << ',' << s.fn << ',' << (s.present ? buf : "") << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.6f", report.macro_f1);
  out << "macro,,,," << buf << '\n';
  return out.str();
}

}  // namespace csed::evalkit
