#ifndef LOOPSPACE_IO_HPP
#define LOOPSPACE_IO_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "loopspace/error.hpp"
#include "loopspace/loop.hpp"
#include "loopspace/metric.hpp"
#include "loopspace/occupation.hpp"
#include "loopspace/state_space.hpp"

namespace loopspace::io {

using json = nlohmann::ordered_json;

/// Fixed-point decimal with nine digits after the point.
inline std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", x);
  return buf;
}

namespace detail {

[[noreturn]] inline void fail(const std::string &at, const std::string &what) {
  throw validation_error(at + ": " + what);
}

inline const json &field(const json &obj, const char *key,
                         const std::string &at) {
  if (!obj.is_object())
    fail(at, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end())
    fail(at, std::string("missing field '") + key + "'");
  return *it;
}

inline double number(const json &v, const std::string &at) {
  if (!v.is_number())
    fail(at, "expected a number");
  return v.get<double>();
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos)
      return out;
    start = pos + 1;
  }
}

inline double parse_real(const std::string &text, const std::string &at) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception &) {
    fail(at, "'" + text + "' is not a number");
  }
  if (used != text.size() || !std::isfinite(v))
    fail(at, "'" + text + "' is not a finite number");
  return v;
}

} // namespace detail

inline json read_json_file(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw validation_error(path.string() + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error &e) {
    throw validation_error(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

/// Write `contents` to a sibling temporary and rename it over `path`.
inline void write_file_atomic(const std::filesystem::path &path,
                              const std::string &contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw validation_error(path.string() + ": cannot open for writing");
    out << contents;
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw validation_error(path.string() + ": write failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw validation_error(path.string() + ": rename failed (" + ec.message() +
                           ")");
  }
}

inline SpacePtr parse_space(const json &j, const std::string &at = "space") {
  const json &kind = detail::field(j, "kind", at);
  if (!kind.is_string())
    detail::fail(at + ".kind", "expected a string");
  const auto k = kind.get<std::string>();
  if (k == "euclidean") {
    const json &dim = detail::field(j, "dim", at);
    if (!dim.is_number_integer() || dim.get<long long>() < 1)
      detail::fail(at + ".dim", "expected a positive integer");
    return StateSpace::euclidean(dim.get<std::size_t>());
  }
  if (k != "finite")
    detail::fail(at + ".kind", "expected \"finite\" or \"euclidean\"");

  const json &labels = detail::field(j, "labels", at);
  if (!labels.is_array())
    detail::fail(at + ".labels", "expected an array of strings");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].is_string())
      detail::fail(at + ".labels[" + std::to_string(i) + "]",
                   "expected a string");
    names.push_back(labels[i].get<std::string>());
  }
  if (!j.contains("dist"))
    return StateSpace::discrete(std::move(names));
  const json &dist = j["dist"];
  if (!dist.is_array())
    detail::fail(at + ".dist", "expected a square matrix");
  std::vector<std::vector<double>> d;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const std::string row = at + ".dist[" + std::to_string(i) + "]";
    if (!dist[i].is_array())
      detail::fail(row, "expected an array of numbers");
    d.emplace_back();
    for (std::size_t c = 0; c < dist[i].size(); ++c)
      d.back().push_back(detail::number(dist[i][c],
                                        row + "[" + std::to_string(c) + "]"));
  }
  try {
    return StateSpace::finite(std::move(names), std::move(d));
  } catch (const validation_error &e) {
    detail::fail(at, e.what());
  }
}

inline json space_to_json(const StateSpace &space) {
  json j;
  if (space.is_finite()) {
    j["kind"] = "finite";
    j["labels"] = space.labels();
    j["dist"] = space.distances();
  } else {
    j["kind"] = "euclidean";
    j["dim"] = space.dim();
  }
  return j;
}

inline State parse_state(const StateSpace &space, const json &v,
                         const std::string &at) {
  if (space.is_finite()) {
    if (!v.is_string())
      detail::fail(at, "expected a state label");
    const auto name = v.get<std::string>();
    const auto &labels = space.labels();
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == name)
        return LabelId{i};
    detail::fail(at, "unknown state label '" + name + "'");
  }
  if (!v.is_array() || v.size() != space.dim())
    detail::fail(at, "expected an array of " + std::to_string(space.dim()) +
                         " numbers");
  Point p;
  for (std::size_t k = 0; k < v.size(); ++k)
    p.push_back(detail::number(v[k], at + "[" + std::to_string(k) + "]"));
  return p;
}

inline json state_to_json(const StateSpace &space, const State &s) {
  if (space.is_finite())
    return space.labels()[std::get<LabelId>(s).index];
  return std::get<Point>(s);
}

/// A loop file: the loop and, when present, the basepoint phase.
struct LoopFile {
  Loop loop;
  std::optional<double> phase;

  /// The based representative: at `phase`, or at the middle of segment 0.
  BasedLoop based() const {
    return phase ? BasedLoop(loop, *phase) : based_at_segment(loop, 0);
  }
};

inline LoopFile parse_loop(const json &j) {
  if (!j.is_object())
    detail::fail("loop", "expected an object with 'space' and 'word'");
  const SpacePtr space = parse_space(detail::field(j, "space", "loop"));
  const json &w = detail::field(j, "word", "loop");
  if (!w.is_array() || w.empty())
    detail::fail("word", "expected a nonempty array");
  std::vector<Segment> word;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const std::string at = "word[" + std::to_string(i) + "]";
    const State s = parse_state(*space, detail::field(w[i], "state", at),
                                at + ".state");
    const double hold =
        detail::number(detail::field(w[i], "hold", at), at + ".hold");
    if (!(hold > 0.0) || !std::isfinite(hold))
      detail::fail(at + ".hold", "must be a positive finite real");
    word.push_back({s, hold});
  }
  LoopFile out{Loop(space, std::move(word)), std::nullopt};
  if (j.contains("phase")) {
    const double phase = detail::number(j["phase"], "phase");
    try {
      BasedLoop(out.loop, phase);
    } catch (const domain_error &e) {
      detail::fail("phase", e.what());
    }
    out.phase = phase;
  }
  return out;
}

inline LoopFile read_loop_file(const std::filesystem::path &path) {
  try {
    return parse_loop(read_json_file(path));
  } catch (const validation_error &e) {
    const std::string what = e.what();
    if (what.rfind(path.string() + ":", 0) == 0)
      throw;
    throw validation_error(path.string() + ": " + what);
  }
}

inline json loop_to_json(const Loop &l,
                         std::optional<double> phase = std::nullopt) {
  json j;
  j["space"] = space_to_json(l.space());
  json word = json::array();
  for (const auto &seg : l.word())
    word.push_back({{"state", state_to_json(l.space(), seg.state)},
                    {"hold", seg.hold}});
  j["word"] = std::move(word);
  if (phase)
    j["phase"] = *phase;
  return j;
}

/**
 * Pattern text: comma-separated labels ("x,y,x") over a finite space, or
 * semicolon-separated boxes ("0,0:1,1; 2,0:3,1", min:max per axis) over a
 * Euclidean one.
 */
inline Pattern parse_pattern(const StateSpace &space, std::string_view text) {
  std::vector<PatternEntry> cells;
  if (space.is_finite()) {
    const auto names = detail::split(text, ',');
    for (std::size_t i = 0; i < names.size(); ++i) {
      const std::string at = "pattern[" + std::to_string(i) + "]";
      if (names[i].empty())
        detail::fail(at, "empty label");
      cells.emplace_back(parse_state(space, json(names[i]), at));
    }
  } else {
    const auto boxes = detail::split(text, ';');
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const std::string at = "pattern[" + std::to_string(i) + "]";
      const auto ends = detail::split(boxes[i], ':');
      if (ends.size() != 2)
        detail::fail(at, "expected a box 'min:max'");
      const auto lo = detail::split(ends[0], ',');
      const auto hi = detail::split(ends[1], ',');
      if (lo.size() != space.dim() || hi.size() != space.dim())
        detail::fail(at, "box corners need " + std::to_string(space.dim()) +
                             " coordinates");
      Box b;
      for (std::size_t k = 0; k < lo.size(); ++k) {
        b.min.push_back(detail::parse_real(lo[k], at));
        b.max.push_back(detail::parse_real(hi[k], at));
        if (!(b.min[k] < b.max[k]))
          detail::fail(at, "needs min < max on every axis");
      }
      cells.emplace_back(std::move(b));
    }
  }
  return Pattern(std::move(cells));
}

inline std::string pattern_to_text(const StateSpace &space, const Pattern &p) {
  std::string out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (const auto *s = std::get_if<State>(&p[i])) {
      if (i)
        out += ",";
      out += space.name(*s);
      continue;
    }
    if (i)
      out += "; ";
    const auto &b = std::get<Box>(p[i]);
    for (std::size_t k = 0; k < b.min.size(); ++k) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%s%.9g", k ? "," : "", b.min[k]);
      out += buf;
    }
    out += ":";
    for (std::size_t k = 0; k < b.max.size(); ++k) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%s%.9g", k ? "," : "", b.max[k]);
      out += buf;
    }
  }
  return out;
}

/// A recorded field table and the discrete label space it is written over.
struct RecordedTable {
  SpacePtr space;
  std::vector<std::pair<Pattern, double>> entries;
};

/**
 * Table entries {"pattern": [labels...], "value": v}. Labels are collected in
 * order of first appearance into a space under the discrete metric.
 */
inline RecordedTable parse_table(const json &j) {
  if (!j.is_array())
    detail::fail("table", "expected an array of {pattern, value} entries");
  std::vector<std::string> labels;
  std::vector<std::pair<std::vector<std::size_t>, double>> raw;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = "table[" + std::to_string(i) + "]";
    const json &pat = detail::field(j[i], "pattern", at);
    if (!pat.is_array() || pat.empty())
      detail::fail(at + ".pattern", "expected a nonempty array of labels");
    std::vector<std::size_t> ids;
    for (std::size_t k = 0; k < pat.size(); ++k) {
      if (!pat[k].is_string())
        detail::fail(at + ".pattern[" + std::to_string(k) + "]",
                     "expected a state label");
      const auto name = pat[k].get<std::string>();
      auto it = std::find(labels.begin(), labels.end(), name);
      if (it == labels.end()) {
        labels.push_back(name);
        it = labels.end() - 1;
      }
      ids.push_back(static_cast<std::size_t>(it - labels.begin()));
    }
    const double value =
        detail::number(detail::field(j[i], "value", at), at + ".value");
    raw.emplace_back(std::move(ids), value);
  }
  if (labels.empty())
    detail::fail("table", "no entries");
  RecordedTable out{StateSpace::discrete(std::move(labels)), {}};
  for (auto &[ids, value] : raw) {
    std::vector<PatternEntry> cells;
    for (auto id : ids)
      cells.emplace_back(State{LabelId{id}});
    out.entries.emplace_back(Pattern(std::move(cells)), value);
  }
  return out;
}

inline json witness_to_json(const DistanceResult &r) {
  json j;
  json pts = json::array();
  if (r.witness_lambda)
    for (const auto &[u, v] : r.witness_lambda->breakpoints())
      pts.push_back({u, v});
  j["breakpoints"] = std::move(pts);
  if (r.witness_offset)
    j["offset"] = *r.witness_offset;
  if (r.reference_phase)
    j["reference_phase"] = *r.reference_phase;
  j["value"] = r.value;
  return j;
}

} // namespace loopspace::io

#endif // LOOPSPACE_IO_HPP
