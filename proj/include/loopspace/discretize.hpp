#ifndef LOOPSPACE_DISCRETIZE_HPP
#define LOOPSPACE_DISCRETIZE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "loopspace/error.hpp"
#include "loopspace/loop.hpp"
#include "loopspace/occupation.hpp"
#include "loopspace/random.hpp"
#include "loopspace/state_space.hpp"

namespace loopspace {

namespace detail {

inline double box_diameter(const Box &b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < b.min.size(); ++k)
    sum += (b.max[k] - b.min[k]) * (b.max[k] - b.min[k]);
  return std::sqrt(sum);
}

inline double box_gap(const Box &a, const Box &b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < a.min.size(); ++k) {
    const double g = std::max({0.0, a.min[k] - b.max[k], b.min[k] - a.max[k]});
    sum += g * g;
  }
  return std::sqrt(sum);
}

/// Distance from a point to the closure of a box.
inline double point_box_distance(const Point &p, const Box &b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double g = std::max({0.0, b.min[k] - p[k], p[k] - b.max[k]});
    sum += g * g;
  }
  return std::sqrt(sum);
}

/// True when p lies in the closure of b but not in its interior.
inline bool on_box_boundary(const Point &p, const Box &b) {
  bool touches = false;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] < b.min[k] || p[k] > b.max[k])
      return false;
    if (p[k] == b.min[k] || p[k] == b.max[k])
      touches = true;
  }
  return touches;
}

} // namespace detail

/**
 * Finitely many pairwise separated cells with one representative each.
 *
 * Euclidean cells are half-open boxes; finite-alphabet cells are single
 * labels. Construction checks diameters < epsilon, pairwise set distance
 * >= 2 * margin > 0, and that each representative lies in its cell.
 */
class Partition {
public:
  Partition(SpacePtr space, std::vector<PatternEntry> cells,
            std::vector<State> representatives, double epsilon, double margin)
      : space_(std::move(space)), cells_(std::move(cells)),
        reps_(std::move(representatives)), epsilon_(epsilon), margin_(margin) {
    if (!(epsilon_ > 0.0) || !(margin_ > 0.0))
      throw validation_error("partition: epsilon and margin must be positive");
    if (cells_.size() != reps_.size())
      throw validation_error("partition: one representative per cell");
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      check_compatible(*space_, cells_[i]);
      if (!space_->contains(reps_[i]) || !matches(cells_[i], reps_[i]))
        throw validation_error("partition: representative " +
                               std::to_string(i) + " is not in its cell");
      if (!(diameter(i) < epsilon_))
        throw validation_error("partition: cell " + std::to_string(i) +
                               " has diameter >= epsilon");
      for (std::size_t j = 0; j < i; ++j)
        if (!(distance(i, j) >= 2.0 * margin_))
          throw validation_error("partition: cells " + std::to_string(j) +
                                 " and " + std::to_string(i) +
                                 " are closer than 2 * margin");
    }
  }

  const SpacePtr &space_ptr() const noexcept { return space_; }
  const StateSpace &space() const noexcept { return *space_; }
  std::size_t size() const noexcept { return cells_.size(); }
  std::span<const PatternEntry> cells() const noexcept { return cells_; }
  const PatternEntry &cell(std::size_t i) const { return cells_[i]; }
  std::span<const State> representatives() const noexcept { return reps_; }
  const State &representative(std::size_t i) const { return reps_[i]; }
  double epsilon() const noexcept { return epsilon_; }
  double margin() const noexcept { return margin_; }

  double diameter(std::size_t i) const {
    if (const auto *b = std::get_if<Box>(&cells_[i]))
      return detail::box_diameter(*b);
    return 0.0;
  }

  /// Set distance between cells i and j.
  double distance(std::size_t i, std::size_t j) const {
    const auto *bi = std::get_if<Box>(&cells_[i]);
    const auto *bj = std::get_if<Box>(&cells_[j]);
    if (bi && bj)
      return detail::box_gap(*bi, *bj);
    if (!bi && !bj)
      return space_->distance(std::get<State>(cells_[i]),
                              std::get<State>(cells_[j]));
    throw validation_error("partition: mixed cell kinds");
  }

  /// Index of the cell containing s. Throws when s sits on a cell boundary.
  std::optional<std::size_t> locate(const State &s) const {
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      if (const auto *b = std::get_if<Box>(&cells_[i])) {
        if (detail::on_box_boundary(std::get<Point>(s), *b))
          throw domain_error("state " + space_->name(s) +
                             " lies on the boundary of cell " +
                             std::to_string(i));
      }
      if (matches(cells_[i], s))
        return i;
    }
    return std::nullopt;
  }

  /// The partition keeping only the listed cells.
  Partition restricted(std::span<const std::size_t> keep) const {
    std::vector<PatternEntry> cells;
    std::vector<State> reps;
    for (std::size_t i : keep) {
      cells.push_back(cells_.at(i));
      reps.push_back(reps_.at(i));
    }
    return Partition(space_, std::move(cells), std::move(reps), epsilon_,
                     margin_);
  }

private:
  SpacePtr space_;
  std::vector<PatternEntry> cells_;
  std::vector<State> reps_;
  double epsilon_;
  double margin_;
};

/// Per-bullet outcome of checking a partition against a measure.
struct PartitionCheck {
  bool diameters_below_epsilon = false;
  bool positive_separation = false;
  bool support_off_boundaries = false;
  double leaked_mass = 0.0;
  double leak_bound = 0.0;

  bool ok() const {
    return diameters_below_epsilon && positive_separation &&
           support_off_boundaries && leaked_mass <= leak_bound;
  }
};

/// Check the partition conditions against a finitely supported measure.
inline PartitionCheck check_partition(const Partition &part,
                                      const OccupationMeasure &m) {
  PartitionCheck c;
  c.diameters_below_epsilon = true;
  c.positive_separation = true;
  for (std::size_t i = 0; i < part.size(); ++i) {
    c.diameters_below_epsilon =
        c.diameters_below_epsilon && part.diameter(i) < part.epsilon();
    for (std::size_t j = 0; j < i; ++j)
      c.positive_separation =
          c.positive_separation && part.distance(i, j) >= 2.0 * part.margin();
  }
  c.support_off_boundaries = true;
  for (const auto &[key, mass] : m.entries) {
    const State &s = std::get<State>(key);
    bool inside = false;
    for (std::size_t i = 0; i < part.size(); ++i) {
      if (const auto *b = std::get_if<Box>(&part.cell(i))) {
        if (detail::on_box_boundary(std::get<Point>(s), *b))
          c.support_off_boundaries = false;
      }
      inside = inside || matches(part.cell(i), s);
    }
    if (!inside)
      c.leaked_mass += mass;
  }
  c.leak_bound = 2.0 * part.epsilon() * m.total;
  return c;
}

/// Sum of two state-keyed occupation measures.
inline OccupationMeasure pool(const OccupationMeasure &a,
                              const OccupationMeasure &b) {
  OccupationMeasure out = a;
  for (const auto &[key, mass] : b.entries) {
    auto it = std::find_if(out.entries.begin(), out.entries.end(),
                           [&](const auto &e) { return e.first == key; });
    if (it == out.entries.end())
      out.entries.emplace_back(key, mass);
    else
      it->second += mass;
  }
  out.total = a.total + b.total;
  return out;
}

inline constexpr int kOffsetRetries = 64;

/**
 * Cells for a finitely supported measure.
 *
 * Euclidean: a grid of side h = eps / (2 sqrt(dim)) with boxes shrunk inward
 * by margin delta = h / 4, translated by a seed-drawn offset until every
 * support point is farther than delta from every grid hyperplane. If 64 draws
 * fail, each axis gets its hyperplanes in the middle of the widest gap between
 * support coordinates (mod h) and delta shrinks to a quarter of the smallest
 * such gap. Only cells holding support points are kept; each representative
 * is the heaviest support point of its cell.
 *
 * Finite: every visited label is its own cell.
 */
inline Partition build_partition(const SpacePtr &space,
                                 const OccupationMeasure &m, double eps,
                                 std::uint64_t seed) {
  if (!(eps > 0.0) || !std::isfinite(eps))
    throw domain_error("build_partition: eps must be positive");
  if (m.entries.empty())
    throw domain_error("build_partition: empty measure");
  std::vector<std::pair<State, double>> support;
  for (const auto &[key, mass] : m.entries) {
    const auto *s = std::get_if<State>(&key);
    if (!s || !space->contains(*s))
      throw domain_error("build_partition: measure must be keyed by states");
    support.emplace_back(*s, mass);
  }

  if (space->is_finite()) {
    std::vector<PatternEntry> cells;
    std::vector<State> reps;
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < support.size(); ++i) {
      cells.emplace_back(support[i].first);
      reps.push_back(support[i].first);
      for (std::size_t j = 0; j < i; ++j)
        min_gap = std::min(
            min_gap, space->distance(support[i].first, support[j].first));
    }
    const double margin = std::isfinite(min_gap) ? 0.5 * min_gap : 1.0;
    return Partition(space, std::move(cells), std::move(reps), eps, margin);
  }

  const std::size_t dim = space->dim();
  const double h = eps / (2.0 * std::sqrt(static_cast<double>(dim)));
  auto residue = [h](double x, double o) {
    const double r = std::fmod(x - o, h);
    return r < 0.0 ? r + h : r;
  };
  auto clear_of_planes = [&](const Point &offset, double delta) {
    for (const auto &[s, mass] : support) {
      const auto &p = std::get<Point>(s);
      for (std::size_t k = 0; k < dim; ++k) {
        const double r = residue(p[k], offset[k]);
        if (!(r > delta && h - r > delta))
          return false;
      }
    }
    return true;
  };

  Point offset(dim);
  double delta = h / 4.0;
  bool found = false;
  Rng rng = make_rng(seed);
  for (int attempt = 0; attempt < kOffsetRetries && !found; ++attempt) {
    for (auto &o : offset)
      o = h * uniform01(rng);
    found = clear_of_planes(offset, delta);
  }
  if (!found) {
    double narrowest = h;
    for (std::size_t k = 0; k < dim; ++k) {
      std::vector<double> rs;
      for (const auto &[s, mass] : support)
        rs.push_back(residue(std::get<Point>(s)[k], 0.0));
      std::sort(rs.begin(), rs.end());
      double best_gap = rs.front() + h - rs.back(), plane = rs.back();
      for (std::size_t i = 0; i + 1 < rs.size(); ++i)
        if (rs[i + 1] - rs[i] > best_gap) {
          best_gap = rs[i + 1] - rs[i];
          plane = rs[i];
        }
      offset[k] = std::fmod(plane + 0.5 * best_gap, h);
      narrowest = std::min(narrowest, best_gap);
    }
    delta = std::min(h / 4.0, narrowest / 4.0);
    if (!(delta > 0.0) || !clear_of_planes(offset, delta))
      throw construction_error(
          "build_partition: no grid offset keeps the support off the cell "
          "boundaries");
  }

  struct Cell {
    std::vector<long long> index;
    Box box;
    State rep;
    double rep_mass;
  };
  std::vector<Cell> kept;
  for (const auto &[s, mass] : support) {
    const auto &p = std::get<Point>(s);
    std::vector<long long> index(dim);
    for (std::size_t k = 0; k < dim; ++k)
      index[k] = static_cast<long long>(std::floor((p[k] - offset[k]) / h));
    auto it = std::find_if(kept.begin(), kept.end(),
                           [&](const Cell &c) { return c.index == index; });
    if (it == kept.end()) {
      Box box{Point(dim), Point(dim)};
      for (std::size_t k = 0; k < dim; ++k) {
        const double lo = offset[k] + static_cast<double>(index[k]) * h;
        box.min[k] = lo + delta;
        box.max[k] = lo + h - delta;
      }
      kept.push_back({std::move(index), std::move(box), s, mass});
    } else if (mass > it->rep_mass) {
      it->rep = s;
      it->rep_mass = mass;
    }
  }
  std::vector<PatternEntry> cells;
  std::vector<State> reps;
  for (auto &c : kept) {
    cells.emplace_back(std::move(c.box));
    reps.push_back(std::move(c.rep));
  }
  // Neighbouring boxes are exactly 2 * delta apart; record a margin just
  // below delta so rounding in the box corners cannot break the check.
  Partition part(space, std::move(cells), std::move(reps), eps,
                 delta * (1.0 - 1e-9));
  if (!check_partition(part, m).ok())
    throw construction_error("build_partition: postconditions failed");
  return part;
}

/**
 * Clock A(u) = time spent in the union of the cells up to u, and its
 * right-continuous inverse sigma on [0, t_eps).
 *
 * sigma is stored as runs: on [s_begin, s_begin + length) it equals
 * u_begin + (s - s_begin).
 */
struct TimeChange {
  struct Run {
    double s_begin;
    double u_begin;
    double length;
    std::size_t cell;
  };

  double duration = 0.0;
  double t_eps = 0.0;
  /// Breakpoints (u, A(u)) from (0, 0) to (duration, t_eps).
  std::vector<std::pair<double, double>> a_breakpoints;
  std::vector<Run> runs;

  /// A on [0, duration], extended by A(u + k t) = k t_eps + A(u).
  double A(double u) const {
    const double k = std::floor(u / duration);
    double r = u - k * duration;
    if (r >= duration)
      r = 0.0;
    auto it = std::upper_bound(
        a_breakpoints.begin(), a_breakpoints.end(), r,
        [](double x, const auto &bp) { return x < bp.first; });
    const auto &[u0, a0] = *(it - 1);
    double value = a0;
    if (it != a_breakpoints.end()) {
      const auto &[u1, a1] = *it;
      if (a1 > a0)
        value = a0 + (r - u0);
    }
    return k * t_eps + value;
  }

  double sigma(double s) const {
    if (!(s >= 0.0) || !(s < t_eps))
      throw domain_error("sigma: s must lie in [0, t_eps)");
    auto it = std::upper_bound(
        runs.begin(), runs.end(), s,
        [](double x, const Run &r) { return x < r.s_begin; });
    const Run &run = *(it - 1);
    return run.u_begin + (s - run.s_begin);
  }
};

inline TimeChange trace_time_change(const BasedLoop &l, const Partition &part) {
  if (!same_space(l.loop().space_ptr(), part.space_ptr()))
    throw domain_error("trace_time_change: partition lives in another space");
  TimeChange tc;
  tc.duration = l.duration();
  tc.a_breakpoints.emplace_back(0.0, 0.0);
  double clock = 0.0;
  for (const auto &piece : unroll(l)) {
    const auto cell = part.locate(piece.state);
    const double len = piece.end - piece.begin;
    if (cell) {
      if (!tc.runs.empty() && tc.runs.back().cell == *cell &&
          tc.runs.back().u_begin + tc.runs.back().length == piece.begin)
        tc.runs.back().length += len;
      else
        tc.runs.push_back({clock, piece.begin, len, *cell});
      clock += len;
    }
    tc.a_breakpoints.emplace_back(piece.end, clock);
  }
  tc.t_eps = clock;
  return tc;
}

/// The induced loop together with the clock position of trace time 0:
/// l^eps(s) is the state of `loop` at wrap(origin + s).
struct InducedTrace {
  Loop loop;
  double origin;
  TimeChange time_change;
};

/**
 * l^eps(s) = representative of the cell holding l(sigma(s)), as a loop in the
 * original space whose states are the representatives. Runs with equal
 * representatives merge, circularly as well.
 */
inline InducedTrace induced_trace(const BasedLoop &l, const Partition &part) {
  TimeChange tc = trace_time_change(l, part);
  if (!(tc.t_eps > 0.0))
    throw domain_error("induced loop: the loop never enters a cell (t_eps = 0)");
  std::vector<Segment> word;
  for (const auto &run : tc.runs) {
    const State &rep = part.representative(run.cell);
    if (!word.empty() && word.back().state == rep)
      word.back().hold += run.length;
    else
      word.push_back({rep, run.length});
  }
  double origin = 0.0;
  if (word.size() > 1 && word.front().state == word.back().state) {
    // Trace time 0 sits inside the merged run, `tail` after its start.
    const double tail = word.back().hold;
    word.front().hold += tail;
    word.pop_back();
    origin = tail;
  }
  Loop loop(part.space_ptr(), std::move(word));
  origin = loop.wrap(origin);
  return {std::move(loop), origin, std::move(tc)};
}

inline Loop induced_discrete_loop(const BasedLoop &l, const Partition &part) {
  return induced_trace(l, part).loop;
}

/// sup_s d_S(l^eps(s), l(sigma(s))): the largest distance between a visited
/// in-cell state and its cell representative.
inline double trace_sup_distance(const BasedLoop &l, const Partition &part) {
  double sup = 0.0;
  for (const auto &piece : unroll(l))
    if (const auto cell = part.locate(piece.state))
      sup = std::max(sup, part.space().distance(part.representative(*cell),
                                                piece.state));
  return sup;
}

struct TraceIdentityReport {
  bool holds = true;
  std::size_t tuples_checked = 0;
  double worst_relative = 0.0;
};

inline constexpr std::size_t kTraceTupleCap = 500;

/**
 * Compare multi_occupation(l^eps, (y_i1, ..., y_in)) with
 * multi_occupation(l, (U_i1, ..., U_in)) for cell tuples of length 1..max_n in
 * lexicographic order, up to `cap` tuples, at relative tolerance `tol`.
 */
inline TraceIdentityReport verify_trace_identity(const BasedLoop &l,
                                                 const Partition &part,
                                                 std::size_t max_n,
                                                 std::size_t cap = kTraceTupleCap,
                                                 double tol = 1e-9) {
  const Loop induced = induced_discrete_loop(l, part);
  TraceIdentityReport report;
  const std::size_t k = part.size();
  for (std::size_t n = 1; n <= max_n && report.tuples_checked < cap; ++n) {
    std::vector<std::size_t> idx(n, 0);
    for (;;) {
      std::vector<PatternEntry> reps, cells;
      for (std::size_t i : idx) {
        reps.emplace_back(part.representative(i));
        cells.push_back(part.cell(i));
      }
      const double lhs = multi_occupation(induced, Pattern(std::move(reps)));
      const double rhs = multi_occupation(l.loop(), Pattern(std::move(cells)));
      const double scale = std::max(std::abs(lhs), std::abs(rhs));
      const double rel = scale > 0.0 ? std::abs(lhs - rhs) / scale : 0.0;
      report.worst_relative = std::max(report.worst_relative, rel);
      if (rel > tol)
        report.holds = false;
      if (++report.tuples_checked >= cap)
        break;
      std::size_t pos = n;
      while (pos > 0 && ++idx[pos - 1] == k)
        idx[--pos] = 0;
      if (pos == 0)
        break;
    }
  }
  return report;
}

/// sup_s d_S(l1(s), l2(s + T)) over the based clocks of two loops of equal
/// duration. Both sides are step functions, so the supremum is attained on
/// the open intervals between their merged jump times.
inline double shifted_sup_distance(const BasedLoop &l1, const BasedLoop &l2,
                                   double T) {
  const double t = l1.duration();
  std::vector<double> cuts{0.0, t};
  for (const auto &piece : unroll(l1))
    cuts.push_back(piece.end);
  for (const auto &piece : unroll(l2)) {
    double c = std::fmod(piece.end - T, t);
    if (c < 0.0)
      c += t;
    cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  const double snap = 1e-9 * t;
  double sup = 0.0;
  double prev = cuts.front();
  for (std::size_t k = 1; k < cuts.size(); ++k) {
    if (cuts[k] - prev <= snap)
      continue;
    const double mid = 0.5 * (prev + cuts[k]);
    double shifted = std::fmod(mid + T, l2.duration());
    if (shifted < 0.0)
      shifted += l2.duration();
    sup = std::max(sup, l1.space().distance(evaluate(l1, mid),
                                            evaluate(l2, shifted)));
    prev = cuts[k];
  }
  return sup;
}

struct ConvergenceRow {
  double epsilon = 0.0;
  std::size_t cells = 0;
  bool equal = false;
  /// T2(eps) pulled back to original time, with l2(s + T) = l1(s).
  std::optional<double> offset;
  /// sup_s d_S(l1(s), l2(s + offset)).
  std::optional<double> sup_distance;
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  std::optional<double> limiting_offset;
  std::optional<double> final_sup_distance;
};

/**
 * For each eps: build a partition from the pooled occupation measure, form
 * both induced loops, compare them up to rotation and, when equal, pull the
 * trace offset T2 back to original time as sigma2(T2) - sigma1(0). The
 * limiting offset is the last row's.
 */
inline ConvergenceReport convergence_experiment(const BasedLoop &l1,
                                                const BasedLoop &l2,
                                                std::span<const double> eps,
                                                std::uint64_t seed) {
  if (!same_space(l1.loop().space_ptr(), l2.loop().space_ptr()))
    throw domain_error("convergence_experiment: loops live in different spaces");
  if (eps.empty())
    throw domain_error("convergence_experiment: empty eps ladder");
  for (std::size_t k = 0; k < eps.size(); ++k)
    if (!(eps[k] > 0.0) || (k > 0 && !(eps[k] < eps[k - 1])))
      throw domain_error(
          "convergence_experiment: eps ladder must be positive and decreasing");

  const OccupationMeasure pooled =
      pool(occupation_measure(l1.loop()), occupation_measure(l2.loop()));
  ConvergenceReport report;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    const Partition part = build_partition(l1.loop().space_ptr(), pooled,
                                           eps[k], derive_seed(seed, k));
    const InducedTrace e1 = induced_trace(l1, part);
    const InducedTrace e2 = induced_trace(l2, part);
    ConvergenceRow row;
    row.epsilon = eps[k];
    row.cells = part.size();
    // e1(x) = e2(x + T0) on word clocks, so l2_eps(s + T2) = l1_eps(s).
    const EquivalenceReport eq = equals_up_to_rotation(e2.loop, e1.loop);
    row.equal = eq.equal;
    if (eq.equal) {
      const TimeChange &tc1 = e1.time_change, &tc2 = e2.time_change;
      double t2 = std::fmod(e1.origin + *eq.offset - e2.origin, tc2.t_eps);
      if (t2 < 0.0)
        t2 += tc2.t_eps;
      if (t2 >= tc2.t_eps)
        t2 = 0.0;
      const double t = l1.duration();
      double T = std::fmod(tc2.sigma(t2) - tc1.sigma(0.0), t);
      if (T < 0.0)
        T += t;
      row.offset = T;
      if (std::abs(l1.duration() - l2.duration()) <= 1e-12 * t)
        row.sup_distance = shifted_sup_distance(l1, l2, T);
    }
    report.rows.push_back(row);
  }
  report.limiting_offset = report.rows.back().offset;
  report.final_sup_distance = report.rows.back().sup_distance;
  return report;
}

} // namespace loopspace

#endif // LOOPSPACE_DISCRETIZE_HPP
