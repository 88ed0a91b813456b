#ifndef LOOPSPACE_OCCUPATION_HPP
#define LOOPSPACE_OCCUPATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "loopspace/error.hpp"
#include "loopspace/loop.hpp"
#include "loopspace/random.hpp"
#include "loopspace/state_space.hpp"

namespace loopspace {

/// Axis-aligned half-open box [min, max) in R^dim.
struct Box {
  std::vector<double> min;
  std::vector<double> max;

  bool contains(const Point &p) const {
    for (std::size_t k = 0; k < min.size(); ++k)
      if (!(p[k] >= min[k] && p[k] < max[k]))
        return false;
    return true;
  }
  bool operator==(const Box &) const = default;
};

/// One position of a pattern: a single state, or a Euclidean box.
using PatternEntry = std::variant<State, Box>;

inline bool matches(const PatternEntry &entry, const State &s) {
  if (const auto *st = std::get_if<State>(&entry))
    return *st == s;
  const auto *p = std::get_if<Point>(&s);
  return p != nullptr && std::get<Box>(entry).contains(*p);
}

/// True when some state could match both entries.
inline bool overlaps(const PatternEntry &a, const PatternEntry &b) {
  const auto *sa = std::get_if<State>(&a);
  const auto *sb = std::get_if<State>(&b);
  if (sa && sb)
    return *sa == *sb;
  if (sa)
    return matches(b, *sa);
  if (sb)
    return matches(a, *sb);
  const auto &ba = std::get<Box>(a);
  const auto &bb = std::get<Box>(b);
  for (std::size_t k = 0; k < ba.min.size(); ++k)
    if (!(ba.min[k] < bb.max[k] && bb.min[k] < ba.max[k]))
      return false;
  return true;
}

/// A finite tuple of states or cells, the argument of an indicator-product
/// occupation functional.
class Pattern {
public:
  explicit Pattern(std::vector<PatternEntry> cells) : cells_(std::move(cells)) {
    if (cells_.empty())
      throw domain_error("pattern: length must be at least 1");
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      const auto *box = std::get_if<Box>(&cells_[i]);
      if (!box)
        continue;
      if (box->min.empty() || box->min.size() != box->max.size())
        throw domain_error("pattern: cell " + std::to_string(i) +
                           " has mismatched box bounds");
      for (std::size_t k = 0; k < box->min.size(); ++k)
        if (!(box->min[k] < box->max[k]))
          throw domain_error("pattern: cell " + std::to_string(i) +
                             " needs min < max on every axis");
    }
  }

  /// Pattern of single states.
  static Pattern of_states(std::span<const State> states) {
    std::vector<PatternEntry> cells(states.begin(), states.end());
    return Pattern(std::move(cells));
  }
  static Pattern of_labels(std::initializer_list<std::size_t> labels) {
    std::vector<PatternEntry> cells;
    for (auto l : labels)
      cells.emplace_back(State{LabelId{l}});
    return Pattern(std::move(cells));
  }

  std::size_t size() const noexcept { return cells_.size(); }
  const PatternEntry &operator[](std::size_t i) const { return cells_[i]; }
  std::span<const PatternEntry> cells() const noexcept { return cells_; }
  bool operator==(const Pattern &) const = default;

private:
  std::vector<PatternEntry> cells_;
};

/// Cyclic left shift: (z1..zn) -> (z_{1+j}..zn, z1..zj).
inline Pattern rotate_pattern(const Pattern &p, std::size_t j) {
  const std::size_t n = p.size();
  if (j >= n)
    throw domain_error("rotate_pattern: j must lie in [0, n)");
  std::vector<PatternEntry> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(p[(i + j) % n]);
  return Pattern(std::move(out));
}

inline void check_compatible(const StateSpace &space, const PatternEntry &e) {
  if (const auto *s = std::get_if<State>(&e)) {
    if (!space.contains(*s))
      throw domain_error("pattern entry is not a state of the loop's space");
    return;
  }
  const auto &box = std::get<Box>(e);
  if (space.is_finite() || box.min.size() != space.dim())
    throw domain_error("pattern box does not match the loop's space");
}

inline void check_compatible(const StateSpace &space, const Pattern &p) {
  for (const auto &e : p.cells())
    check_compatible(space, e);
}

namespace detail {

/// Ordered-simplex integral of prod_k 1{path(s_k) in q_k} over
/// 0 < s_1 < ... < s_n < t for the path that runs through `segments` in order.
/// G(k, i) sums over the ways to place positions k.. into segments i..; a run of
/// m positions inside a segment of hold tau contributes tau^m / m!.
inline double ordered_integral(std::span<const Segment> segments,
                               const Pattern &q, std::size_t rotation) {
  const std::size_t n = q.size();
  const std::size_t p = segments.size();
  auto entry = [&](std::size_t k) -> const PatternEntry & {
    return q[(k + rotation) % n];
  };
  // next[k] holds G(k, i + 1) while row i is computed.
  std::vector<double> next(n + 1, 0.0), cur(n + 1, 0.0);
  next[n] = 1.0;
  std::vector<double> power(n + 1);
  for (std::size_t i = p; i-- > 0;) {
    const double tau = segments[i].hold;
    power[0] = 1.0;
    for (std::size_t m = 1; m <= n; ++m)
      power[m] = power[m - 1] * tau / static_cast<double>(m);
    cur[n] = 1.0;
    for (std::size_t k = n; k-- > 0;) {
      double sum = next[k];
      for (std::size_t m = 1; k + m <= n; ++m) {
        if (!matches(entry(k + m - 1), segments[i].state))
          break;
        sum += power[m] * next[k + m];
      }
      cur[k] = sum;
    }
    std::swap(cur, next);
  }
  return next[0];
}

} // namespace detail

/**
 * Multi-occupation field <l, 1_{q_1} x ... x 1_{q_n}>: the sum over the n
 * cyclic rotations of q of the ordered-simplex integral along the loop.
 *
 * The integral is taken along the word cut at its first jump; the cut is not
 * a valid basepoint but the integrand only differs on a null set, and the sum
 * over rotations does not depend on the basepoint.
 */
inline double multi_occupation(const Loop &l, const Pattern &p) {
  check_compatible(l.space(), p);
  double total = 0.0;
  if (p.size() == 1) {
    // Same summation order as occupation_measure, so n = 1 agrees exactly.
    for (const auto &seg : l.word())
      if (matches(p[0], seg.state))
        total += seg.hold;
    return total;
  }
  for (std::size_t j = 0; j < p.size(); ++j)
    total += detail::ordered_integral(l.word(), p, j);
  return total;
}

/// One-point occupation measure: time spent in each visited state or cell.
struct OccupationMeasure {
  std::vector<std::pair<PatternEntry, double>> entries;
  double total = 0.0;

  /// Time spent at (or in) `key`; zero when unvisited.
  double at(const PatternEntry &key) const {
    for (const auto &[k, v] : entries)
      if (k == key)
        return v;
    return 0.0;
  }
};

/**
 * Occupation times per distinct state (no partition), or per cell of a
 * pairwise-disjoint partition. Unvisited cells are omitted; `total` is the
 * time spent in the covered sets.
 */
inline OccupationMeasure
occupation_measure(const Loop &l,
                   std::optional<std::span<const PatternEntry>> partition = {}) {
  OccupationMeasure m;
  if (!partition) {
    for (const auto &seg : l.word()) {
      auto it = std::find_if(m.entries.begin(), m.entries.end(),
                             [&](const auto &e) {
                               return std::get<State>(e.first) == seg.state;
                             });
      if (it == m.entries.end())
        m.entries.emplace_back(PatternEntry{seg.state}, seg.hold);
      else
        it->second += seg.hold;
    }
  } else {
    const auto cells = *partition;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      check_compatible(l.space(), cells[i]);
      for (std::size_t j = i + 1; j < cells.size(); ++j)
        if (overlaps(cells[i], cells[j]))
          throw domain_error("occupation_measure: cells " + std::to_string(i) +
                             " and " + std::to_string(j) + " overlap");
    }
    for (const auto &cell : cells) {
      double time = 0.0;
      for (const auto &seg : l.word())
        if (matches(cell, seg.state))
          time += seg.hold;
      if (time > 0.0)
        m.entries.emplace_back(cell, time);
    }
  }
  for (const auto &e : m.entries)
    m.total += e.second;
  return m;
}

struct MonteCarloEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

/**
 * Monte Carlo estimate of multi_occupation: n sorted uniform times on [0, t],
 * the rotation-summed indicator product averaged over `samples` draws and
 * scaled by the simplex volume t^n / n!.
 */
inline MonteCarloEstimate monte_carlo_occupation(const Loop &l,
                                                 const Pattern &p,
                                                 std::size_t samples,
                                                 std::uint64_t seed) {
  if (samples == 0)
    throw domain_error("monte_carlo_occupation: samples must be >= 1");
  check_compatible(l.space(), p);
  const std::size_t n = p.size();
  const double t = l.duration();
  double volume = 1.0;
  for (std::size_t k = 1; k <= n; ++k)
    volume *= t / static_cast<double>(k);

  // match[k][i]: pattern position k accepts segment i.
  std::vector<std::vector<char>> match(n, std::vector<char>(l.size()));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < l.size(); ++i)
      match[k][i] = matches(p[k], l[i].state);

  Rng rng = make_rng(seed);
  std::vector<double> times(n);
  std::vector<std::size_t> seg(n);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    for (auto &x : times)
      x = t * uniform01(rng);
    std::sort(times.begin(), times.end());
    for (std::size_t k = 0; k < n; ++k)
      seg[k] = l.segment_at(times[k]);
    double value = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      bool all = true;
      for (std::size_t k = 0; k < n && all; ++k)
        all = match[(k + j) % n][seg[k]] != 0;
      value += all ? 1.0 : 0.0;
    }
    const double delta = value - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (value - mean);
  }
  MonteCarloEstimate out;
  out.estimate = mean * volume;
  if (samples > 1)
    out.standard_error = std::sqrt(m2 / static_cast<double>(samples - 1) /
                            static_cast<double>(samples)) *
                  volume;
  return out;
}

} // namespace loopspace

#endif // LOOPSPACE_OCCUPATION_HPP
