#ifndef LOOPSPACE_METRIC_HPP
#define LOOPSPACE_METRIC_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "loopspace/error.hpp"
#include "loopspace/loop.hpp"
#include "loopspace/random.hpp"

namespace loopspace {

/**
 * Increasing piecewise-linear bijection of [0, 1].
 *
 * Stored as breakpoints (u, lambda(u)) from (0,0) to (1,1) together with the
 * slope of every linear piece. Slopes are computed once from the breakpoints
 * and carried unchanged through regathering and inversion, so operations that
 * only rearrange pieces preserve them exactly.
 */
class PLBijection {
public:
  using Breakpoint = std::pair<double, double>;

  explicit PLBijection(std::vector<Breakpoint> points)
      : points_(std::move(points)) {
    validate();
    slopes_.reserve(points_.size() - 1);
    for (std::size_t k = 0; k + 1 < points_.size(); ++k)
      slopes_.push_back((points_[k + 1].second - points_[k].second) /
                        (points_[k + 1].first - points_[k].first));
  }

  static PLBijection identity() { return PLBijection({{0.0, 0.0}, {1.0, 1.0}}); }

  std::span<const Breakpoint> breakpoints() const noexcept { return points_; }
  std::span<const double> slopes() const noexcept { return slopes_; }

  double operator()(double u) const {
    return interpolate(u, [](const Breakpoint &p) { return p.first; },
                       [](const Breakpoint &p) { return p.second; }, false);
  }

  /// lambda^{-1}(v).
  double inverse_at(double v) const {
    return interpolate(v, [](const Breakpoint &p) { return p.second; },
                       [](const Breakpoint &p) { return p.first; }, true);
  }

  PLBijection inverse() const {
    std::vector<Breakpoint> pts;
    pts.reserve(points_.size());
    for (const auto &[u, v] : points_)
      pts.emplace_back(v, u);
    std::vector<double> slopes;
    slopes.reserve(slopes_.size());
    for (double s : slopes_)
      slopes.push_back(1.0 / s);
    return PLBijection(std::move(pts), std::move(slopes));
  }

  /// Rebuild from breakpoints and per-piece slopes (no recomputation).
  static PLBijection with_slopes(std::vector<Breakpoint> points,
                                 std::vector<double> slopes) {
    return PLBijection(std::move(points), std::move(slopes));
  }

private:
  PLBijection(std::vector<Breakpoint> points, std::vector<double> slopes)
      : points_(std::move(points)), slopes_(std::move(slopes)) {
    validate();
    if (slopes_.size() + 1 != points_.size())
      throw domain_error("PLBijection: one slope per linear piece required");
  }

  void validate() const {
    if (points_.size() < 2)
      throw domain_error("PLBijection: needs at least two breakpoints");
    if (points_.front() != Breakpoint{0.0, 0.0} ||
        points_.back() != Breakpoint{1.0, 1.0})
      throw domain_error("PLBijection: endpoints must be (0,0) and (1,1)");
    for (std::size_t k = 0; k + 1 < points_.size(); ++k)
      if (!(points_[k + 1].first > points_[k].first) ||
          !(points_[k + 1].second > points_[k].second))
        throw domain_error("PLBijection: breakpoints must strictly increase "
                           "in both coordinates");
  }

  template <typename Key, typename Value>
  double interpolate(double x, Key key, Value value, bool inverse) const {
    if (x <= 0.0)
      return 0.0;
    if (x >= 1.0)
      return 1.0;
    auto it = std::upper_bound(
        points_.begin(), points_.end(), x,
        [&](double lhs, const Breakpoint &p) { return lhs < key(p); });
    const std::size_t k = static_cast<std::size_t>(it - points_.begin()) - 1;
    if (key(points_[k]) == x)
      return value(points_[k]);
    const double slope = inverse ? 1.0 / slopes_[k] : slopes_[k];
    const double y = value(points_[k]) + slope * (x - key(points_[k]));
    return std::min(y, value(points_[k + 1]));
  }

  std::vector<Breakpoint> points_;
  std::vector<double> slopes_;
};

/// phi(lambda) = sup_{s<t} |log((lambda(t)-lambda(s))/(t-s))|, which for a
/// piecewise-linear lambda is the largest |log slope| over its pieces.
inline double slope_distortion(const PLBijection &lambda) {
  double phi = 0.0;
  for (double s : lambda.slopes())
    phi = std::max(phi, std::abs(std::log(s)));
  return phi;
}

/**
 * Regathering theta_t: cut the graph of lambda at u = t and swap the pieces,
 *   theta_t lambda(s) = lambda(t+s) - lambda(t)          on [0, 1-t],
 *                       1 - lambda(t) + lambda(t+s-1)    on [1-t, 1].
 */
inline PLBijection regather(const PLBijection &lambda, double t) {
  if (!(t >= 0.0) || !(t < 1.0))
    throw domain_error("regather: t must lie in [0, 1)");
  if (t == 0.0)
    return lambda;
  const auto pts = lambda.breakpoints();
  const auto slopes = lambda.slopes();
  const double lt = lambda(t);
  std::vector<PLBijection::Breakpoint> out{{0.0, 0.0}};
  std::vector<double> out_slopes;
  // Piece containing t (or starting at t).
  std::size_t k = 0;
  while (pts[k + 1].first <= t)
    ++k;
  out_slopes.push_back(slopes[k]);
  for (std::size_t i = k + 1; i + 1 < pts.size(); ++i) {
    out.emplace_back(pts[i].first - t, pts[i].second - lt);
    out_slopes.push_back(slopes[i]);
  }
  const bool split = pts[k].first < t;
  out.emplace_back(1.0 - t, 1.0 - lt);
  if (!split) {
    // t sits on a breakpoint; the wrap-around starts with piece 0.
    for (std::size_t i = 0; i < k; ++i) {
      if (i > 0)
        out.emplace_back(1.0 - t + pts[i].first, 1.0 - lt + pts[i].second);
      out_slopes.push_back(slopes[i]);
    }
  } else {
    for (std::size_t i = 0; i <= k; ++i) {
      if (i > 0)
        out.emplace_back(1.0 - t + pts[i].first, 1.0 - lt + pts[i].second);
      out_slopes.push_back(slopes[i]);
    }
  }
  out.emplace_back(1.0, 1.0);
  // Drop breakpoints that rounding pushed out of strict order.
  std::vector<PLBijection::Breakpoint> clean{out.front()};
  std::vector<double> clean_slopes;
  for (std::size_t i = 1; i < out.size(); ++i) {
    const bool last = i + 1 == out.size();
    if (!last && (!(out[i].first > clean.back().first) ||
                  !(out[i].second > clean.back().second) ||
                  !(out[i].first < 1.0) || !(out[i].second < 1.0))) {
      clean_slopes.back() = std::max(clean_slopes.back(), out_slopes[i]);
      continue;
    }
    clean.push_back(out[i]);
    clean_slopes.push_back(out_slopes[i - 1]);
  }
  return PLBijection::with_slopes(std::move(clean), std::move(clean_slopes));
}

/// Random PL bijection with `pieces` linear pieces.
inline PLBijection random_pl_bijection(Rng &rng, std::size_t pieces) {
  std::vector<double> us, vs;
  for (std::size_t k = 1; k < pieces; ++k) {
    us.push_back(uniform01(rng));
    vs.push_back(uniform01(rng));
  }
  std::sort(us.begin(), us.end());
  std::sort(vs.begin(), vs.end());
  std::vector<PLBijection::Breakpoint> pts{{0.0, 0.0}};
  for (std::size_t k = 0; k < us.size(); ++k)
    if (us[k] > pts.back().first && vs[k] > pts.back().second && us[k] < 1.0 &&
        vs[k] < 1.0)
      pts.emplace_back(us[k], vs[k]);
  pts.emplace_back(1.0, 1.0);
  return PLBijection(std::move(pts));
}

/// Solver output. Values are upper bounds certified by the witness.
struct DistanceResult {
  double value = 0.0;
  std::optional<PLBijection> witness_lambda;
  /// loop_distance only: basepoint phase on b's clock of the representative
  /// of b that attains `value` against the fixed representative of a.
  std::optional<double> witness_offset;
  /// loop_distance only: the phase of a's fixed representative.
  std::optional<double> reference_phase;
  bool certified_upper_bound = true;
};

namespace detail {

/// A based path on [0, 1] as cut points 0 = c_0 < ... < c_p = 1 and the state
/// held on each [c_i, c_{i+1}).
struct Track {
  std::vector<double> cuts;
  std::vector<State> states;

  std::size_t size() const { return states.size(); }
  /// Right-continuous piece index at time x in [0, 1); x >= 1 gives the last.
  std::size_t piece_at(double x) const {
    auto it = std::upper_bound(cuts.begin(), cuts.end() - 1, x);
    const auto k = static_cast<std::size_t>(it - cuts.begin());
    return std::min(k, states.size()) - 1;
  }
};

inline Track track_of(const BasedLoop &l) {
  Track tr;
  const double t = l.duration();
  tr.cuts.push_back(0.0);
  for (const auto &piece : unroll(l)) {
    tr.cuts.push_back(piece.end / t);
    tr.states.push_back(piece.state);
  }
  tr.cuts.back() = 1.0;
  return tr;
}

/// The loop read from the start of segment k, scaled to duration 1. The cut
/// is a jump time; only the solver uses this representation.
inline Track track_from_jump(const Loop &l, std::size_t k) {
  Track tr;
  const std::size_t n = l.size();
  const double t = l.duration();
  tr.cuts.push_back(0.0);
  double clock = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto &seg = l[(k + i) % n];
    clock += seg.hold;
    tr.cuts.push_back(clock / t);
    tr.states.push_back(seg.state);
  }
  tr.cuts.back() = 1.0;
  return tr;
}

/// phi(lambda) + sup_u d_S(a(lambda(u)), b(u)). Both paths are right-continuous
/// step functions, so the state term is constant between consecutive jump
/// times of u -> a(lambda(u)) and of b, and the value at a jump equals the
/// value just after it (at u = 1 the left limit); the supremum is therefore a
/// maximum over interval midpoints.
inline double objective(const StateSpace &space, const Track &a, const Track &b,
                        const PLBijection &lambda) {
  std::vector<double> events{0.0, 1.0};
  for (std::size_t j = 1; j + 1 < b.cuts.size(); ++j)
    events.push_back(b.cuts[j]);
  for (std::size_t i = 1; i + 1 < a.cuts.size(); ++i)
    events.push_back(lambda.inverse_at(a.cuts[i]));
  std::sort(events.begin(), events.end());
  double cost = 0.0;
  double prev = events.front();
  for (std::size_t k = 1; k < events.size(); ++k) {
    const double next = events[k];
    if (next - prev <= 1e-13)
      continue;
    const double mid = 0.5 * (prev + next);
    const auto &sa = a.states[a.piece_at(lambda(mid))];
    const auto &sb = b.states[b.piece_at(mid)];
    cost = std::max(cost, space.distance(sa, sb));
    prev = next;
  }
  return slope_distortion(lambda) + cost;
}

struct Interval {
  double lo;
  double hi;
};

/**
 * Monotone-path feasibility on the grid of (b-piece j, a-piece i) cells.
 *
 * A reparametrization lambda is a path (u, lambda(u)) from (0,0) to (1,1); the
 * state term is at most beta iff every open cell the path crosses is
 * admissible (d_S(A_i, B_j) <= beta), and phi(lambda) <= alpha iff every
 * chord has slope in [e^-alpha, e^alpha]. Reachable points on each cell's left
 * and bottom edges are propagated as interval lists; passing exactly through a
 * grid corner moves diagonally and skips the two side cells.
 */
class GridSolver {
public:
  GridSolver(const StateSpace &space, const Track &a, const Track &b)
      : a_(a), b_(b), rows_(a.size()), cols_(b.size()),
        cost_(rows_ * cols_), cells_(rows_ * cols_) {
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j)
        cost_[i * cols_ + j] = space.distance(a.states[i], b.states[j]);
  }

  std::span<const double> costs() const { return cost_; }

  bool feasible(double beta, double alpha) {
    const double lo = std::exp(-alpha), hi = std::exp(alpha);
    for (auto &c : cells_)
      c = Entries{};
    cells_[0].corner = true;
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t j = 0; j < cols_; ++j) {
        Entries &cell = cells_[i * cols_ + j];
        if (cost_[i * cols_ + j] > beta || cell.empty())
          continue;
        const double u0 = b_.cuts[j], u1 = b_.cuts[j + 1];
        const double v0 = a_.cuts[i], v1 = a_.cuts[i + 1];
        const double w = u1 - u0, h = v1 - v0;
        bool corner = false;
        std::vector<Interval> right, top;
        auto add_right = [&](double rlo, double rhi) {
          if (rlo <= v1 && v1 <= rhi)
            corner = true;
          rlo = std::max(rlo, v0);
          rhi = std::min(rhi, v1);
          if (rlo <= rhi)
            right.push_back({rlo, rhi});
        };
        auto add_top = [&](double tlo, double thi) {
          tlo = std::max(tlo, u0);
          thi = std::min(thi, u1);
          if (tlo <= thi)
            top.push_back({tlo, thi});
        };
        if (cell.corner) {
          add_right(v0 + lo * w, v0 + hi * w);
          add_top(u0 + h / hi, u0 + h / lo);
        }
        for (const auto &iv : cell.left) {
          add_right(iv.lo + lo * w, iv.hi + hi * w);
          add_top(u0 + (v1 - iv.hi) / hi, u0 + (v1 - iv.lo) / lo);
        }
        for (const auto &iv : cell.bottom) {
          if (u1 - iv.lo > 0.0)
            add_right(v0 + lo * (u1 - iv.hi), v0 + hi * (u1 - iv.lo));
          add_top(iv.lo + h / hi, iv.hi + h / lo);
        }
        if (i + 1 == rows_ && j + 1 == cols_)
          return corner;
        if (j + 1 < cols_)
          merge_into(cells_[i * cols_ + j + 1].left, right);
        if (i + 1 < rows_)
          merge_into(cells_[(i + 1) * cols_ + j].bottom, top);
        if (corner && i + 1 < rows_ && j + 1 < cols_)
          cells_[(i + 1) * cols_ + j + 1].corner = true;
      }
    }
    return false;
  }

  /// Path through the grid recorded by the last successful feasible() call.
  PLBijection witness(double alpha) const {
    const double lo = std::exp(-alpha), hi = std::exp(alpha);
    constexpr double slack = 1e-12;
    std::vector<PLBijection::Breakpoint> rev{{1.0, 1.0}};
    std::size_t i = rows_ - 1, j = cols_ - 1;
    double pu = 1.0, pv = 1.0;
    for (;;) {
      const Entries &cell = cells_[i * cols_ + j];
      const double u0 = b_.cuts[j], v0 = a_.cuts[i];
      enum class From { corner, left, bottom } from = From::corner;
      double eu = u0, ev = v0;
      double best_gap = std::numeric_limits<double>::infinity();
      auto consider = [&](From f, double cu, double cv, double gap) {
        if (gap < best_gap) {
          best_gap = gap;
          from = f;
          eu = cu;
          ev = cv;
        }
      };
      if (cell.corner) {
        const double du = pu - u0, dv = pv - v0;
        double gap = 0.0;
        if (du <= 0.0 || dv <= 0.0)
          gap = 1.0;
        else if (dv < lo * du)
          gap = lo * du - dv;
        else if (dv > hi * du)
          gap = dv - hi * du;
        consider(From::corner, u0, v0, gap <= slack ? 0.0 : gap);
      }
      if (best_gap > 0.0) {
        const double du = pu - u0;
        if (du > 0.0)
          for (const auto &iv : cell.left) {
            const auto [y, gap] = pick(pv - hi * du, pv - lo * du, iv);
            consider(From::left, u0, y, gap <= slack ? 0.0 : gap);
          }
        const double dv = pv - v0;
        if (dv > 0.0)
          for (const auto &iv : cell.bottom) {
            const auto [x, gap] = pick(pu - dv / lo, pu - dv / hi, iv);
            consider(From::bottom, x, v0, gap <= slack ? 0.0 : gap);
          }
      }
      if (eu > rev.back().first - 0.0 || ev > rev.back().second) {
        eu = std::min(eu, rev.back().first);
        ev = std::min(ev, rev.back().second);
      }
      if (eu < rev.back().first && ev < rev.back().second)
        rev.emplace_back(eu, ev);
      pu = eu;
      pv = ev;
      if (from == From::corner) {
        if (i == 0 || j == 0)
          break;
        --i;
        --j;
      } else if (from == From::left) {
        --j;
      } else {
        --i;
      }
    }
    if (rev.back() != PLBijection::Breakpoint{0.0, 0.0}) {
      if (rev.back().first > 0.0 && rev.back().second > 0.0)
        rev.emplace_back(0.0, 0.0);
      else
        rev.back() = {0.0, 0.0};
    }
    std::reverse(rev.begin(), rev.end());
    return PLBijection(std::move(rev));
  }

private:
  struct Entries {
    std::vector<Interval> left;   // v-intervals on u = u0
    std::vector<Interval> bottom; // u-intervals on v = v0
    bool corner = false;          // the point (u0, v0)
    bool empty() const { return !corner && left.empty() && bottom.empty(); }
  };

  /// Point of [want_lo, want_hi] inside iv (midpoint of the overlap), with
  /// the gap when they do not overlap.
  static std::pair<double, double> pick(double want_lo, double want_hi,
                                        const Interval &iv) {
    const double lo = std::max(want_lo, iv.lo);
    const double hi = std::min(want_hi, iv.hi);
    if (lo <= hi)
      return {0.5 * (lo + hi), 0.0};
    if (iv.hi < want_lo)
      return {iv.hi, want_lo - iv.hi};
    return {iv.lo, iv.lo - want_hi};
  }

  static void merge_into(std::vector<Interval> &dst,
                         const std::vector<Interval> &src) {
    dst.insert(dst.end(), src.begin(), src.end());
    if (dst.size() < 2)
      return;
    std::sort(dst.begin(), dst.end(),
              [](const Interval &x, const Interval &y) { return x.lo < y.lo; });
    std::vector<Interval> out{dst.front()};
    for (std::size_t k = 1; k < dst.size(); ++k) {
      if (dst[k].lo <= out.back().hi)
        out.back().hi = std::max(out.back().hi, dst[k].hi);
      else
        out.push_back(dst[k]);
    }
    dst = std::move(out);
  }

  const Track &a_;
  const Track &b_;
  std::size_t rows_, cols_;
  std::vector<double> cost_;
  std::vector<Entries> cells_;
};

inline constexpr double kAlphaTolerance = 1e-7;
inline constexpr double kAlphaCeiling = 64.0;

/// inf over lambda of phi(lambda) + sup_u d_S(a(lambda(u)), b(u)) for two
/// tracks: sweep the candidate state costs beta in increasing order and, for
/// each, bisect the smallest feasible slope budget alpha.
inline DistanceResult solve_tracks(const StateSpace &space, const Track &a,
                                   const Track &b) {
  GridSolver grid(space, a, b);
  DistanceResult best;
  best.witness_lambda = PLBijection::identity();
  best.value = objective(space, a, b, *best.witness_lambda);
  if (best.value == 0.0)
    return best;

  std::vector<double> betas(grid.costs().begin(), grid.costs().end());
  std::sort(betas.begin(), betas.end());
  betas.erase(std::unique(betas.begin(), betas.end()), betas.end());

  double best_beta = -1.0, best_alpha = 0.0;
  double bound = best.value; // alpha + beta must beat this
  for (double beta : betas) {
    if (beta >= bound)
      break;
    double hi = std::min(bound - beta, kAlphaCeiling);
    if (!grid.feasible(beta, hi))
      continue;
    double lo = 0.0;
    if (grid.feasible(beta, 0.0)) {
      hi = 0.0;
    } else {
      while (hi - lo > kAlphaTolerance) {
        const double mid = 0.5 * (lo + hi);
        if (grid.feasible(beta, mid))
          hi = mid;
        else
          lo = mid;
      }
    }
    if (hi + beta < bound) {
      bound = hi + beta;
      best_beta = beta;
      best_alpha = hi;
    }
  }
  if (best_beta >= 0.0) {
    grid.feasible(best_beta, best_alpha);
    PLBijection lambda = grid.witness(best_alpha);
    const double value = objective(space, a, b, lambda);
    if (value < best.value) {
      best.value = value;
      best.witness_lambda = std::move(lambda);
    }
  }
  return best;
}

inline void require_same_space(const Loop &a, const Loop &b, const char *op) {
  if (!same_space(a.space_ptr(), b.space_ptr()))
    throw domain_error(std::string(op) + ": loops live in different spaces");
}

} // namespace detail

/// Objective of the Skorokhod metric at a given lambda, for normalized loops.
inline double skorokhod_objective(const BasedLoop &a, const BasedLoop &b,
                                  const PLBijection &lambda) {
  return detail::objective(a.space(), detail::track_of(a), detail::track_of(b),
                           lambda);
}

/**
 * Skorokhod distance d(a, b) = inf_lambda phi(lambda) + sup_u d_S(a(lambda(u)),
 * b(u)) between based loops of duration 1. The value is the objective at the
 * returned witness; the slope budget is bisected to 1e-7.
 */
inline DistanceResult skorokhod_d(const BasedLoop &a, const BasedLoop &b) {
  detail::require_same_space(a.loop(), b.loop(), "skorokhod_d");
  if (a.duration() != 1.0 || b.duration() != 1.0)
    throw domain_error("skorokhod_d: both loops must be normalized");
  return detail::solve_tracks(a.space(), detail::track_of(a),
                              detail::track_of(b));
}

/// D(a, b) = | |a| - |b| | + d(a normalized, b normalized).
inline DistanceResult based_distance(const BasedLoop &a, const BasedLoop &b) {
  detail::require_same_space(a.loop(), b.loop(), "based_distance");
  DistanceResult r = skorokhod_d(normalize(a), normalize(b));
  r.value += std::abs(a.duration() - b.duration());
  return r;
}

namespace detail {

/// Jump-pair solve: both loops cut at a jump, as the optimum of the quotient
/// problem can always be translated onto a grid corner.
inline double phase_from_corner(const Loop &a, double a_phase, const Loop &b,
                                std::size_t ia, std::size_t jb) {
  const Track ta = track_from_jump(a, ia);
  const Track tb = track_from_jump(b, jb);
  const DistanceResult r = solve_tracks(a.space(), ta, tb);
  const double x = a.wrap(a_phase - a.segment_start(ia)) / a.duration();
  const double u = r.witness_lambda->inverse_at(x);
  return b.wrap(b.segment_start(jb) + u * b.duration());
}

} // namespace detail

/**
 * Quotient distance D°(a, b) = inf { D(l, l') : l in a°, l' in b° }.
 *
 * The representative of a is fixed at `a`; only b's basepoint varies, which
 * loses nothing since the infimum does not depend on a's representative.
 * Candidate phases of b: segment midpoints, phases aligning each b-jump with
 * each a-jump, proportional placements of a's basepoint in every b-segment,
 * and the phases induced by the jump-pair solves. The best candidate is then
 * refined by golden-section search over `refine_steps` iterations.
 */
inline DistanceResult loop_distance(const BasedLoop &a, const Loop &b,
                                    int refine_steps = 40) {
  const Loop &la = a.loop();
  detail::require_same_space(la, b, "loop_distance");
  const double ta = la.duration(), tb = b.duration();

  std::vector<double> candidates;
  for (std::size_t k = 0; k < b.size(); ++k)
    candidates.push_back(b.segment_start(k) + 0.5 * b[k].hold);
  if (la.size() > 1 && b.size() > 1) {
    for (std::size_t i = 0; i < la.size(); ++i) {
      const double x = la.wrap(la.segment_start(i) - a.phase()) / ta;
      for (std::size_t j = 0; j < b.size(); ++j)
        candidates.push_back(b.wrap(b.segment_start(j) - x * tb));
    }
    const std::size_t home = la.segment_at(a.phase());
    const double theta = (a.phase() - la.segment_start(home)) / la[home].hold;
    for (std::size_t j = 0; j < b.size(); ++j)
      candidates.push_back(b.segment_start(j) + theta * b[j].hold);
    for (std::size_t i = 0; i < la.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j)
        candidates.push_back(detail::phase_from_corner(la, a.phase(), b, i, j));
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  DistanceResult best;
  best.value = std::numeric_limits<double>::infinity();
  auto evaluate_phase = [&](double phase) -> double {
    phase = b.wrap(phase);
    std::optional<DistanceResult> r;
    if (b.is_jump_time(phase)) {
      // Step off the jump; by translation continuity the value moves by
      // O(nudge / hold).
      const double nudge = 1e-9 * tb;
      for (double p : {b.wrap(phase + nudge), b.wrap(phase - nudge)}) {
        if (b.is_jump_time(p))
          continue;
        DistanceResult rp = based_distance(a, BasedLoop(b, p));
        rp.witness_offset = p;
        if (!r || rp.value < r->value)
          r = std::move(rp);
      }
      if (!r)
        return std::numeric_limits<double>::infinity();
    } else {
      r = based_distance(a, BasedLoop(b, phase));
      r->witness_offset = phase;
    }
    if (r->value < best.value)
      best = std::move(*r);
    return best.value == r->value ? best.value : r->value;
  };
  for (double c : candidates)
    evaluate_phase(c);

  if (b.size() > 1 && refine_steps > 0 && best.value > 0.0) {
    const double centre = *best.witness_offset;
    double width = 0.5 * tb;
    for (double c : candidates) {
      const double gap = std::abs(c - centre);
      const double circ = std::min(gap, tb - gap);
      if (circ > 1e-12 * tb)
        width = std::min(width, circ);
    }
    const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = centre - width, hi = centre + width;
    double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
    double f1 = evaluate_phase(x1), f2 = evaluate_phase(x2);
    for (int step = 0; step < refine_steps; ++step) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - ratio * (hi - lo);
        f1 = evaluate_phase(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + ratio * (hi - lo);
        f2 = evaluate_phase(x2);
      }
    }
  }
  best.reference_phase = a.phase();
  best.certified_upper_bound = true;
  return best;
}

/// D° with a's representative based at the midpoint of its first segment.
inline DistanceResult loop_distance(const Loop &a, const Loop &b,
                                    int refine_steps = 40) {
  return loop_distance(based_at_segment(a, 0), b, refine_steps);
}

/// D(Theta_h l, l) for each h; every phase + h must stay a valid basepoint.
inline std::vector<double>
translation_continuity_probe(const BasedLoop &l, std::span<const double> hs) {
  std::vector<double> out;
  out.reserve(hs.size());
  for (double h : hs) {
    auto moved = rotate(l, h);
    if (!moved)
      throw domain_error("translation_continuity_probe: phase + h is a jump");
    out.push_back(based_distance(*moved, l).value);
  }
  return out;
}

} // namespace loopspace

#endif // LOOPSPACE_METRIC_HPP
