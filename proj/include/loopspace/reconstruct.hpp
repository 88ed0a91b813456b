#ifndef LOOPSPACE_RECONSTRUCT_HPP
#define LOOPSPACE_RECONSTRUCT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "loopspace/error.hpp"
#include "loopspace/loop.hpp"
#include "loopspace/occupation.hpp"
#include "loopspace/random.hpp"

namespace loopspace {

namespace detail {

/// Label indices of a label-only pattern.
inline std::vector<std::size_t> label_indices(const Pattern &p) {
  std::vector<std::size_t> out;
  for (const auto &e : p.cells()) {
    const auto *s = std::get_if<State>(&e);
    const auto *id = s ? std::get_if<LabelId>(s) : nullptr;
    if (!id)
      throw domain_error("field oracle: patterns must consist of labels");
    out.push_back(id->index);
  }
  return out;
}

inline Pattern pattern_of(const std::vector<std::size_t> &labels) {
  std::vector<PatternEntry> cells;
  for (auto l : labels)
    cells.emplace_back(State{LabelId{l}});
  return Pattern(std::move(cells));
}

inline std::vector<std::size_t> least_rotation_of(std::vector<std::size_t> w) {
  const std::size_t k = least_rotation(w);
  std::rotate(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(k), w.end());
  return w;
}

/// t^n / (n-1)!: the largest value a length-n field can take on a loop of
/// duration t.
inline double field_scale(double t, std::size_t n) {
  double s = t;
  for (std::size_t k = 1; k < n; ++k)
    s *= t / static_cast<double>(k);
  return s;
}

inline double relative_mismatch(double model, double observed, double floor) {
  return std::abs(model - observed) /
         std::max({std::abs(observed), std::abs(model), floor});
}

} // namespace detail

/**
 * Canonical (least-rotation) label words of length 1..max_len over
 * `alphabet`, shortest first and lexicographic within a length, stopping
 * after `cap` words. The field is rotation-invariant in its pattern, so
 * these are all the distinct values.
 */
inline std::vector<Pattern>
canonical_patterns(std::span<const std::size_t> alphabet, std::size_t max_len,
                   std::size_t cap) {
  std::vector<Pattern> out;
  const std::size_t k = alphabet.size();
  if (k == 0)
    return out;
  for (std::size_t n = 1; n <= max_len && out.size() < cap; ++n) {
    std::vector<std::size_t> idx(n, 0);
    for (;;) {
      std::vector<std::size_t> w(n);
      for (std::size_t i = 0; i < n; ++i)
        w[i] = alphabet[idx[i]];
      if (detail::least_rotation_of(w) == w) {
        out.push_back(detail::pattern_of(w));
        if (out.size() >= cap)
          break;
      }
      std::size_t pos = n;
      while (pos > 0 && ++idx[pos - 1] == k)
        idx[--pos] = 0;
      if (pos == 0)
        break;
    }
  }
  return out;
}

/**
 * Evaluation interface pattern -> field value, backed by a hidden loop or by
 * a recorded table. Tables are looked up modulo pattern rotation and are
 * checked for rotation consistency on construction.
 */
class FieldOracle {
public:
  static FieldOracle from_loop(Loop l) {
    if (!l.space().is_finite())
      throw domain_error("field oracle: loops must live in a finite space");
    FieldOracle o;
    o.space_ = l.space_ptr();
    o.loop_ = std::move(l);
    return o;
  }

  static FieldOracle
  from_table(SpacePtr space,
             const std::vector<std::pair<Pattern, double>> &table,
             double tol = 1e-9) {
    if (!space->is_finite())
      throw validation_error("field oracle: tables need a finite space");
    FieldOracle o;
    o.space_ = std::move(space);
    for (std::size_t i = 0; i < table.size(); ++i) {
      const auto &[p, v] = table[i];
      check_compatible(*o.space_, p);
      if (!std::isfinite(v) || v < 0.0)
        throw validation_error("oracle table: entry " + std::to_string(i) +
                               " has a negative or non-finite value");
      auto key = detail::least_rotation_of(detail::label_indices(p));
      auto [it, inserted] = o.table_.emplace(key, v);
      if (!inserted &&
          std::abs(it->second - v) > tol * std::max(it->second, v))
        throw validation_error(
            "oracle table: entry " + std::to_string(i) +
            " disagrees with a rotation of an earlier pattern");
    }
    return o;
  }

  const SpacePtr &space_ptr() const noexcept { return space_; }
  const StateSpace &space() const noexcept { return *space_; }
  bool recorded() const noexcept { return !loop_.has_value(); }

  bool has(const Pattern &p) const {
    if (loop_)
      return true;
    return table_.count(detail::least_rotation_of(detail::label_indices(p))) >
           0;
  }

  double operator()(const Pattern &p) const {
    ++calls_;
    if (loop_)
      return multi_occupation(*loop_, p);
    auto it =
        table_.find(detail::least_rotation_of(detail::label_indices(p)));
    if (it == table_.end())
      throw domain_error("oracle table has no value for this pattern");
    return it->second;
  }

  std::size_t calls() const noexcept { return calls_; }

private:
  FieldOracle() = default;
  SpacePtr space_;
  std::optional<Loop> loop_;
  std::map<std::vector<std::size_t>, double> table_;
  mutable std::size_t calls_ = 0;
};

struct ReconstructionResult {
  Loop loop;
  double residual = 0.0;
  std::size_t candidates_tried = 0;
};

struct ReconstructOptions {
  std::size_t q_max = 6;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  int restarts = 8;
  /// Fit equations: canonical patterns up to this length, at most fit_cap.
  std::size_t fit_length = 4;
  std::size_t fit_cap = 200;
  /// Validation: canonical patterns up to min(q, validation_length).
  std::size_t validation_length = 6;
  std::size_t validation_cap = 1000;
};

namespace detail {

/// Holds of a candidate word as a function of free parameters. A state seen
/// once gets its full total; the k visits of a repeated state share its total
/// through a softmax over k - 1 free logits, each visit floored at hold_min.
class HoldMap {
public:
  HoldMap(const std::vector<std::size_t> &word,
          const std::map<std::size_t, double> &totals, double hold_min)
      : word_(word), hold_min_(hold_min) {
    for (std::size_t i = 0; i < word.size(); ++i)
      visits_[word[i]].push_back(i);
    for (const auto &[label, where] : visits_) {
      const double total = totals.at(label);
      if (where.size() > 1) {
        free_.push_back(label);
        params_ += where.size() - 1;
      }
      if (!(total > static_cast<double>(where.size()) * hold_min_))
        feasible_ = false;
    }
    totals_ = totals;
  }

  bool feasible() const { return feasible_; }
  std::size_t params() const { return params_; }

  std::vector<double> holds(const Eigen::VectorXd &theta) const {
    std::vector<double> h(word_.size());
    std::size_t offset = 0;
    for (const auto &[label, where] : visits_) {
      const double total = totals_.at(label);
      if (where.size() == 1) {
        h[where[0]] = total;
        continue;
      }
      const std::size_t k = where.size();
      std::vector<double> e(k);
      double mx = 0.0;
      for (std::size_t j = 0; j + 1 < k; ++j)
        mx = std::max(mx, theta[static_cast<Eigen::Index>(offset + j)]);
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double z =
            j + 1 < k ? theta[static_cast<Eigen::Index>(offset + j)] : 0.0;
        e[j] = std::exp(z - mx);
        sum += e[j];
      }
      const double spare = total - static_cast<double>(k) * hold_min_;
      for (std::size_t j = 0; j < k; ++j)
        h[where[j]] = hold_min_ + spare * e[j] / sum;
      offset += k - 1;
    }
    return h;
  }

private:
  std::vector<std::size_t> word_;
  double hold_min_;
  std::map<std::size_t, std::vector<std::size_t>> visits_;
  std::map<std::size_t, double> totals_;
  std::vector<std::size_t> free_;
  std::size_t params_ = 0;
  bool feasible_ = true;
};

inline Loop loop_of(const SpacePtr &space, const std::vector<std::size_t> &word,
                    const std::vector<double> &holds) {
  std::vector<Segment> segs;
  for (std::size_t i = 0; i < word.size(); ++i)
    segs.push_back({State{LabelId{word[i]}}, holds[i]});
  return Loop(space, std::move(segs));
}

struct Equation {
  Pattern pattern;
  double value;
  double floor;
};

/// Weighted residuals (model - observed) / max(observed, floor) for the
/// Eigen Levenberg-Marquardt driver.
struct FitFunctor {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  const SpacePtr *space;
  const std::vector<std::size_t> *word;
  const HoldMap *map;
  const std::vector<Equation> *equations;

  int inputs() const { return static_cast<int>(map->params()); }
  int values() const {
    return std::max(static_cast<int>(equations->size()), inputs());
  }

  int operator()(const Eigen::VectorXd &theta, Eigen::VectorXd &fvec) const {
    const Loop l = loop_of(*space, *word, map->holds(theta));
    fvec.setZero(values());
    for (std::size_t i = 0; i < equations->size(); ++i) {
      const auto &eq = (*equations)[i];
      fvec[static_cast<Eigen::Index>(i)] =
          (multi_occupation(l, eq.pattern) - eq.value) /
          std::max(eq.value, eq.floor);
    }
    return 0;
  }
};

inline double worst_mismatch(const Loop &l, const std::vector<Equation> &eqs) {
  double worst = 0.0;
  for (const auto &eq : eqs)
    worst = std::max(worst, relative_mismatch(multi_occupation(l, eq.pattern),
                                              eq.value, eq.floor));
  return worst;
}

/// Canonical adjacent-distinct circular words of length q over `alphabet`
/// that use every letter, in lexicographic order.
inline std::vector<std::vector<std::size_t>>
candidate_words(const std::vector<std::size_t> &alphabet, std::size_t q) {
  std::vector<std::vector<std::size_t>> out;
  const std::size_t k = alphabet.size();
  if (q < k)
    return out;
  std::vector<std::size_t> idx(q, 0);
  std::function<void(std::size_t)> extend = [&](std::size_t pos) {
    if (pos == q) {
      if (q > 1 && idx[q - 1] == idx[0])
        return;
      std::vector<bool> used(k, false);
      for (auto i : idx)
        used[i] = true;
      if (std::find(used.begin(), used.end(), false) != used.end())
        return;
      std::vector<std::size_t> w(q);
      for (std::size_t i = 0; i < q; ++i)
        w[i] = alphabet[idx[i]];
      if (least_rotation_of(w) == w)
        out.push_back(std::move(w));
      return;
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (pos > 0 && c == idx[pos - 1])
        continue;
      if (pos == 0 && c != 0)
        break; // the least rotation starts with the smallest letter
      idx[pos] = c;
      extend(pos + 1);
    }
  };
  extend(0);
  return out;
}

/// The candidate word with one, or two, of its letters doubled: patterns that
/// pin the circular order (and orientation) of the visits.
inline std::vector<std::vector<std::size_t>>
word_patterns(const std::vector<std::size_t> &w) {
  std::vector<std::vector<std::size_t>> out{w};
  const std::size_t q = w.size();
  for (std::size_t i = 0; i < q; ++i) {
    auto d = w;
    d.insert(d.begin() + static_cast<std::ptrdiff_t>(i), w[i]);
    out.push_back(d);
    for (std::size_t j = i + 1; j < q; ++j) {
      auto dd = d;
      dd.insert(dd.begin() + static_cast<std::ptrdiff_t>(j + 1), w[j]);
      out.push_back(dd);
    }
  }
  return out;
}

} // namespace detail

/**
 * Recover a finite-alphabet loop, up to rotation, from its field.
 *
 * Per-state totals come from the length-1 values. For q = 2..q_max, every
 * canonical adjacent-distinct word over the visited states is fitted by
 * multi-restart Levenberg-Marquardt on the holds of repeated states (holds of
 * states seen once are their totals), against the canonical patterns of
 * length <= fit_length plus the word itself with up to two letters doubled.
 * The first candidate whose worst relative mismatch over the validation set
 * is below tol is returned.
 */
inline ReconstructionResult reconstruct_loop(const FieldOracle &o,
                                             const ReconstructOptions &opt = {}) {
  if (opt.q_max < 1)
    throw domain_error("reconstruct: q_max must be >= 1");
  if (!(opt.tol > 0.0))
    throw domain_error("reconstruct: tol must be positive");
  const SpacePtr &space = o.space_ptr();

  std::map<std::size_t, double> totals;
  double t = 0.0;
  for (std::size_t x = 0; x < space->size(); ++x) {
    const Pattern p = detail::pattern_of({x});
    const double v = o.has(p) ? o(p) : 0.0;
    totals[x] = v;
    t += v;
  }
  if (!(t > 0.0))
    throw not_found_error("reconstruct: the oracle reports no occupation time",
                          std::numeric_limits<double>::infinity());
  std::vector<std::size_t> visited;
  std::map<std::size_t, double> visited_totals;
  for (const auto &[x, v] : totals)
    if (v > opt.tol * t) {
      visited.push_back(x);
      visited_totals[x] = v;
    }

  ReconstructionResult result{Loop(space, {{State{LabelId{visited[0]}}, t}}),
                              0.0, 0};
  if (visited.size() == 1) {
    result.loop = Loop(space, {{State{LabelId{visited[0]}},
                                visited_totals[visited[0]]}});
    return result;
  }

  auto equation = [&](const Pattern &p) -> std::optional<detail::Equation> {
    if (!o.has(p))
      return std::nullopt;
    return detail::Equation{p, o(p), 1e-12 * detail::field_scale(t, p.size())};
  };
  std::vector<detail::Equation> base_fit;
  for (const auto &p :
       canonical_patterns(visited, opt.fit_length, opt.fit_cap))
    if (auto eq = equation(p))
      base_fit.push_back(std::move(*eq));

  const double hold_min = 1e-4 * t;
  double best_residual = std::numeric_limits<double>::infinity();
  std::size_t tried = 0;
  for (std::size_t q = 2; q <= opt.q_max; ++q) {
    std::vector<detail::Equation> validation = base_fit;
    for (const auto &p :
         canonical_patterns(visited, std::min(q, opt.validation_length),
                            opt.validation_cap))
      if (p.size() > opt.fit_length)
        if (auto eq = equation(p))
          validation.push_back(std::move(*eq));

    for (const auto &w : detail::candidate_words(visited, q)) {
      ++tried;
      detail::HoldMap map(w, visited_totals, hold_min);
      if (!map.feasible())
        continue;
      std::vector<detail::Equation> fit = base_fit;
      std::vector<detail::Equation> checks = validation;
      for (const auto &wp : detail::word_patterns(w))
        if (auto eq = equation(detail::pattern_of(wp))) {
          fit.push_back(*eq);
          checks.push_back(std::move(*eq));
        }

      // Whether a value vanishes depends on the word only, not on the holds.
      {
        const Loop probe = detail::loop_of(
            space, w,
            map.holds(Eigen::VectorXd::Zero(
                static_cast<Eigen::Index>(map.params()))));
        bool same_zeros = true;
        for (const auto &eq : checks)
          if ((eq.value == 0.0) != (multi_occupation(probe, eq.pattern) == 0.0)) {
            same_zeros = false;
            break;
          }
        if (!same_zeros)
          continue;
      }

      std::vector<double> holds;
      if (map.params() == 0) {
        holds = map.holds(Eigen::VectorXd());
      } else {
        detail::FitFunctor f{&space, &w, &map, &fit};
        Eigen::NumericalDiff<detail::FitFunctor> nd(f);
        Rng rng = make_rng(derive_seed(opt.seed, tried));
        double best_cost = std::numeric_limits<double>::infinity();
        for (int r = 0; r < opt.restarts; ++r) {
          Eigen::VectorXd theta(static_cast<Eigen::Index>(map.params()));
          for (Eigen::Index i = 0; i < theta.size(); ++i)
            theta[i] = r == 0 ? 0.0 : uniform(rng, -2.0, 2.0);
          Eigen::LevenbergMarquardt<Eigen::NumericalDiff<detail::FitFunctor>>
              lm(nd);
          lm.parameters.xtol = 1e-10;
          lm.parameters.ftol = 1e-10;
          lm.parameters.maxfev = 400;
          lm.minimize(theta);
          Eigen::VectorXd fvec(f.values());
          f(theta, fvec);
          const double cost = fvec.squaredNorm();
          if (cost < best_cost) {
            best_cost = cost;
            holds = map.holds(theta);
          }
          if (detail::worst_mismatch(detail::loop_of(space, w, holds), fit) <
              0.01 * opt.tol)
            break;
        }
      }
      const Loop candidate = detail::loop_of(space, w, holds);
      const double residual = detail::worst_mismatch(candidate, checks);
      best_residual = std::min(best_residual, residual);
      if (residual < opt.tol) {
        result.loop = candidate;
        result.residual = residual;
        result.candidates_tried = tried;
        return result;
      }
    }
  }
  throw not_found_error("reconstruct: no word of length <= " +
                            std::to_string(opt.q_max) +
                            " reproduces the field",
                        best_residual);
}

/// Shortest canonical pattern of length <= n_max, over the states either loop
/// visits, whose field values differ by more than `tol` relatively.
inline std::optional<Pattern> separating_pattern(const Loop &a, const Loop &b,
                                                 std::size_t n_max,
                                                 double tol = 1e-9,
                                                 std::size_t cap = 100000) {
  std::vector<std::size_t> alphabet;
  for (const Loop *l : {&a, &b})
    for (const auto &seg : l->word())
      alphabet.push_back(std::get<LabelId>(seg.state).index);
  std::sort(alphabet.begin(), alphabet.end());
  alphabet.erase(std::unique(alphabet.begin(), alphabet.end()), alphabet.end());
  const double t = std::max(a.duration(), b.duration());
  for (const auto &p : canonical_patterns(alphabet, n_max, cap)) {
    const double va = multi_occupation(a, p), vb = multi_occupation(b, p);
    if (detail::relative_mismatch(va, vb,
                                  1e-12 * detail::field_scale(t, p.size())) >
        tol)
      return p;
  }
  return std::nullopt;
}

struct InjectivityPair {
  std::size_t trial = 0;
  Loop a;
  Loop b;
};

struct InjectivityReport {
  std::size_t trials = 0;
  std::size_t equivalent = 0;
  std::size_t separated = 0;
  std::size_t unseparated = 0;
  /// Equivalent pairs whose tested values disagreed (expected zero).
  std::size_t equivalent_disagreements = 0;
  /// separation_lengths[n] = pairs first separated at pattern length n.
  std::vector<std::size_t> separation_lengths;
  std::vector<InjectivityPair> unseparated_pairs;
  std::vector<InjectivityPair> disagreeing_pairs;

  bool clean() const {
    return unseparated == 0 && equivalent_disagreements == 0;
  }
};

namespace detail {

inline std::size_t random_segment_count(const StateSpace &space,
                                        std::size_t max_segments, Rng &rng) {
  if (space.size() == 1)
    return 1;
  for (;;) {
    const std::size_t q = 1 + uniform_index(rng, max_segments);
    if (space.size() == 2 && q > 1 && q % 2 == 1)
      continue;
    return q;
  }
}

/// Second loop of a campaign pair: independent, the same word with holds
/// exchanged between visits of one state, the reversed word, or a rotation.
inline Loop campaign_partner(const Loop &a, const StateSpace &space,
                             std::size_t max_segments, std::uint64_t seed,
                             Rng &rng) {
  std::vector<Segment> w(a.word().begin(), a.word().end());
  switch (uniform_index(rng, 4)) {
  case 0:
    break;
  case 1: {
    for (std::size_t i = 0; i < w.size(); ++i)
      for (std::size_t j = i + 1; j < w.size(); ++j)
        if (w[i].state == w[j].state && uniform01(rng) < 0.5)
          std::swap(w[i].hold, w[j].hold);
    return Loop(a.space_ptr(), std::move(w));
  }
  case 2:
    std::reverse(w.begin(), w.end());
    return Loop(a.space_ptr(), std::move(w));
  default:
    return shift(a, uniform_index(rng, a.size()));
  }
  return generate_random_loop(a.space_ptr(),
                              random_segment_count(space, max_segments, rng),
                              seed);
}

} // namespace detail

/**
 * Campaign over random loop pairs: equivalent pairs must agree on every tested
 * pattern (length <= n_max), non-equivalent pairs must be separated by one.
 */
inline InjectivityReport verify_injectivity(const SpacePtr &space,
                                            std::size_t trials,
                                            std::size_t max_segments,
                                            std::size_t n_max,
                                            std::uint64_t seed,
                                            std::size_t pattern_cap = 5000) {
  if (!space->is_finite())
    throw domain_error("verify_injectivity: needs a finite space");
  if (trials < 1 || max_segments < 1 || n_max < 1)
    throw domain_error(
        "verify_injectivity: trials, max_segments and n_max must be >= 1");
  InjectivityReport report;
  report.trials = trials;
  report.separation_lengths.assign(n_max + 1, 0);
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng = make_rng(derive_seed(seed, i));
    const Loop a = generate_random_loop(
        space, detail::random_segment_count(*space, max_segments, rng),
        derive_seed(seed, 2 * i + 1'000'000));
    const Loop b = detail::campaign_partner(
        a, *space, max_segments, derive_seed(seed, 2 * i + 1'000'001), rng);
    if (equals_up_to_rotation(a, b).equal) {
      ++report.equivalent;
      if (separating_pattern(a, b, n_max, 1e-9, pattern_cap)) {
        ++report.equivalent_disagreements;
        report.disagreeing_pairs.push_back({i, a, b});
      }
      continue;
    }
    if (auto p = separating_pattern(a, b, n_max, 1e-9, pattern_cap)) {
      ++report.separated;
      ++report.separation_lengths[p->size()];
    } else {
      ++report.unseparated;
      report.unseparated_pairs.push_back({i, a, b});
    }
  }
  return report;
}

} // namespace loopspace

#endif // LOOPSPACE_RECONSTRUCT_HPP
