#ifndef LOOPSPACE_LOOP_HPP
#define LOOPSPACE_LOOP_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "loopspace/error.hpp"
#include "loopspace/random.hpp"
#include "loopspace/state_space.hpp"

namespace loopspace {

/// One maximal constant stretch of a loop: the state and how long it is held.
struct Segment {
  State state;
  double hold = 0.0;
};

/**
 * A loop: a piecewise-constant path up to circular translation, stored as a
 * circular word of segments.
 *
 * Circularly adjacent segments carry distinct states (unless the word has a
 * single segment), so the word is the unique run-length encoding of the path
 * up to a cyclic shift. The word's first segment starts at time 0 on the
 * loop's own clock; that clock is what `BasedLoop::phase` refers to.
 */
class Loop {
public:
  Loop(SpacePtr space, std::vector<Segment> word)
      : space_(std::move(space)), word_(std::move(word)) {
    if (!space_)
      throw validation_error("loop: missing state space");
    if (word_.empty())
      throw validation_error("loop: word must be nonempty");
    starts_.reserve(word_.size());
    double t = 0.0;
    for (std::size_t i = 0; i < word_.size(); ++i) {
      const auto &seg = word_[i];
      const std::string at = "word[" + std::to_string(i) + "]";
      if (!space_->contains(seg.state))
        throw validation_error("loop: " + at +
                               ".state is not a point of the state space");
      if (!(seg.hold > 0.0) || !std::isfinite(seg.hold))
        throw validation_error("loop: " + at +
                               ".hold must be a positive finite real");
      if (word_.size() > 1) {
        const auto &next = word_[(i + 1) % word_.size()];
        if (next.state == seg.state)
          throw validation_error(
              "loop: " + at + " and word[" +
              std::to_string((i + 1) % word_.size()) +
              "] carry the same state; circularly adjacent states must differ");
      }
      starts_.push_back(t);
      t += seg.hold;
    }
    duration_ = t;
  }

  const StateSpace &space() const noexcept { return *space_; }
  const SpacePtr &space_ptr() const noexcept { return space_; }
  std::span<const Segment> word() const noexcept { return word_; }
  const Segment &operator[](std::size_t i) const { return word_[i]; }
  std::size_t size() const noexcept { return word_.size(); }
  double duration() const noexcept { return duration_; }

  /// Start time of segment i on the loop clock.
  double segment_start(std::size_t i) const { return starts_[i]; }

  /// Index of the segment holding at loop-clock time `time` (reduced mod the
  /// duration). Right-continuous: a jump time belongs to the later segment.
  std::size_t segment_at(double time) const {
    time = wrap(time);
    auto it = std::upper_bound(starts_.begin(), starts_.end(), time);
    return static_cast<std::size_t>(it - starts_.begin()) - 1;
  }

  /// Reduce a time into [0, duration).
  double wrap(double time) const {
    double r = std::fmod(time, duration_);
    if (r < 0.0)
      r += duration_;
    if (r >= duration_)
      r = 0.0;
    return r;
  }

  /// True when `time` (mod duration) is within a relative 1e-12 of a jump.
  bool is_jump_time(double time) const {
    if (word_.size() == 1)
      return false;
    const double r = wrap(time);
    const double slack = 1e-12 * duration_;
    auto it = std::lower_bound(starts_.begin(), starts_.end(), r - slack);
    if (it != starts_.end() && std::abs(*it - r) <= slack)
      return true;
    return duration_ - r <= slack;
  }

private:
  SpacePtr space_;
  std::vector<Segment> word_;
  std::vector<double> starts_;
  double duration_ = 0.0;
};

/// A based representative: a loop read from basepoint `phase` on its clock.
class BasedLoop {
public:
  BasedLoop(Loop loop, double phase) : loop_(std::move(loop)), phase_(phase) {
    if (!(phase_ >= 0.0) || !(phase_ < loop_.duration()))
      throw domain_error("based loop: phase must lie in [0, duration)");
    if (loop_.is_jump_time(phase_))
      throw domain_error(
          "based loop: phase is a jump time, not a valid basepoint");
  }

  const Loop &loop() const noexcept { return loop_; }
  double phase() const noexcept { return phase_; }
  double duration() const noexcept { return loop_.duration(); }
  const StateSpace &space() const noexcept { return loop_.space(); }

private:
  Loop loop_;
  double phase_;
};

/// Constant stretch of a based path on [begin, end).
struct Piece {
  State state;
  double begin = 0.0;
  double end = 0.0;
};

/// The based path as consecutive pieces covering [0, duration]; when the
/// basepoint splits a segment, the first and last pieces share a state.
inline std::vector<Piece> unroll(const BasedLoop &l) {
  const Loop &loop = l.loop();
  const std::size_t n = loop.size();
  std::vector<Piece> out;
  if (n == 1) {
    out.push_back({loop[0].state, 0.0, loop.duration()});
    return out;
  }
  const std::size_t first = loop.segment_at(l.phase());
  const double t = loop.duration();
  const double head = loop.segment_start(first) + loop[first].hold - l.phase();
  out.push_back({loop[first].state, 0.0, head});
  double clock = head;
  for (std::size_t k = 1; k < n; ++k) {
    const auto &seg = loop[(first + k) % n];
    out.push_back({seg.state, clock, clock + seg.hold});
    clock += seg.hold;
  }
  out.push_back({loop[first].state, clock, t});
  return out;
}

/// State of the based loop at time u in [0, duration]; right-continuous, and
/// the endpoint u = duration returns the basepoint value.
inline const State &evaluate(const BasedLoop &l, double u) {
  if (!(u >= 0.0) || !(u <= l.duration()))
    throw domain_error("evaluate: time outside [0, duration]");
  if (u == l.duration())
    u = 0.0;
  return l.loop()[l.loop().segment_at(l.phase() + u)].state;
}

/// Circular translation by r; nullopt when the new basepoint is a jump time.
inline std::optional<BasedLoop> rotate(const BasedLoop &l, double r) {
  if (r == 0.0)
    return l;
  const double phase = l.loop().wrap(l.phase() + r);
  if (l.loop().is_jump_time(phase))
    return std::nullopt;
  return BasedLoop(l.loop(), phase);
}

inline Loop scale(const Loop &l, double factor) {
  std::vector<Segment> word(l.word().begin(), l.word().end());
  for (auto &seg : word)
    seg.hold *= factor;
  return Loop(l.space_ptr(), std::move(word));
}

/// Linear time scaling to duration 1.
inline BasedLoop normalize(const BasedLoop &l) {
  const double t = l.duration();
  if (t == 1.0)
    return l;
  std::vector<Segment> word(l.loop().word().begin(), l.loop().word().end());
  for (auto &seg : word)
    seg.hold /= t;
  // Absorb rounding so the duration is exactly 1.
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < word.size(); ++i)
    sum += word[i].hold;
  if (1.0 - sum > 0.0)
    word.back().hold = 1.0 - sum;
  Loop loop(l.loop().space_ptr(), std::move(word));
  return BasedLoop(std::move(loop), l.phase() / t);
}

/// The word read from segment k onwards.
inline Loop shift(const Loop &l, std::size_t k) {
  const std::size_t n = l.size();
  std::vector<Segment> word;
  word.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    word.push_back(l[(k + i) % n]);
  return Loop(l.space_ptr(), std::move(word));
}

namespace detail {

inline double round_significant(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*e", digits - 1, x);
  return std::strtod(buf, nullptr);
}

/// Start index of the least rotation of `keys` (Booth's algorithm).
template <typename Key>
std::size_t least_rotation(const std::vector<Key> &keys) {
  const std::size_t n = keys.size();
  if (n <= 1)
    return 0;
  std::vector<std::ptrdiff_t> fail(2 * n, -1);
  std::size_t k = 0;
  for (std::size_t j = 1; j < 2 * n; ++j) {
    const Key &sj = keys[j % n];
    std::ptrdiff_t i = fail[j - k - 1];
    while (i != -1 && !(sj == keys[(k + i + 1) % n])) {
      if (sj < keys[(k + i + 1) % n])
        k = j - i - 1;
      i = fail[i];
    }
    if (!(sj == keys[(k + i + 1) % n])) {
      // i == -1 here
      if (sj < keys[k % n])
        k = j;
      fail[j - k] = -1;
    } else {
      fail[j - k] = i + 1;
    }
  }
  return k % n;
}

} // namespace detail

/// Index of the segment where the canonical (least) rotation starts.
/// Segments are ordered by (state, hold rounded to 12 significant digits).
inline std::size_t canonical_start(const Loop &l) {
  std::vector<std::pair<State, double>> keys;
  keys.reserve(l.size());
  for (const auto &seg : l.word())
    keys.emplace_back(seg.state, detail::round_significant(seg.hold, 12));
  return detail::least_rotation(keys);
}

inline Loop canonical_form(const Loop &l) { return shift(l, canonical_start(l)); }

/// Result of comparing two loops up to circular translation.
struct EquivalenceReport {
  bool equal = false;
  /// Time shift T in [0, duration of a) with b(s) = a(s + T), both read from
  /// the start of their words. Present iff equal.
  std::optional<double> offset;
};

/**
 * Decide whether two loops coincide up to rotation: same word length, and a
 * cyclic shift matching every state exactly and every hold within `tol`
 * relatively. The smallest matching offset is reported.
 */
inline EquivalenceReport equals_up_to_rotation(const Loop &a, const Loop &b,
                                               double tol = 1e-9) {
  if (!same_space(a.space_ptr(), b.space_ptr()))
    throw domain_error("equals_up_to_rotation: loops live in different spaces");
  if (!(tol > 0.0))
    throw domain_error("equals_up_to_rotation: tol must be positive");
  const std::size_t n = a.size();
  if (b.size() != n)
    return {};
  auto close = [tol](double x, double y) {
    return std::abs(x - y) <= tol * std::max(std::abs(x), std::abs(y));
  };
  if (!close(a.duration(), b.duration()))
    return {};
  for (std::size_t k = 0; k < n; ++k) {
    bool match = true;
    for (std::size_t i = 0; i < n && match; ++i) {
      const auto &sa = a[(k + i) % n];
      const auto &sb = b[i];
      match = sa.state == sb.state && close(sa.hold, sb.hold);
    }
    if (match)
      return {true, a.segment_start(k)};
  }
  return {};
}

/// Range of the uniform hold-time distribution used by the generator.
struct HoldRange {
  double min = 0.2;
  double max = 2.0;
};

/**
 * Random loop with `segments` circularly adjacent-distinct segments.
 * Finite spaces draw labels uniformly; Euclidean spaces draw states from a
 * pool of uniform points in [0,1)^dim so that states are revisited.
 */
inline Loop generate_random_loop(const SpacePtr &space, std::size_t segments,
                                 std::uint64_t seed, HoldRange holds = {}) {
  if (segments == 0)
    throw domain_error("generate: segments must be positive");
  if (!(holds.min > 0.0) || !(holds.max >= holds.min))
    throw domain_error("generate: invalid hold range");
  Rng rng = make_rng(seed);
  std::vector<State> pool;
  if (space->is_finite()) {
    const std::size_t k = space->size();
    if (segments >= 2 && k < 2)
      throw domain_error("generate: a one-point space only admits the "
                         "single-segment loop");
    if (segments >= 3 && k == 2 && segments % 2 == 1)
      throw domain_error("generate: two labels only admit words of even "
                         "length");
    for (std::size_t i = 0; i < k; ++i)
      pool.emplace_back(LabelId{i});
  } else {
    const std::size_t n = std::max<std::size_t>(3, segments / 2 + 1);
    for (std::size_t i = 0; i < n; ++i) {
      Point p(space->dim());
      for (auto &c : p)
        c = uniform01(rng);
      pool.emplace_back(std::move(p));
    }
  }
  std::vector<std::size_t> idx(segments);
  idx[0] = uniform_index(rng, pool.size());
  for (std::size_t i = 1; i < segments; ++i) {
    std::vector<std::size_t> allowed;
    for (std::size_t c = 0; c < pool.size(); ++c) {
      if (c == idx[i - 1])
        continue;
      if (i + 1 == segments && c == idx[0])
        continue;
      allowed.push_back(c);
    }
    idx[i] = allowed[uniform_index(rng, allowed.size())];
  }
  std::vector<Segment> word;
  word.reserve(segments);
  for (std::size_t i = 0; i < segments; ++i)
    word.push_back({pool[idx[i]], uniform(rng, holds.min, holds.max)});
  return Loop(space, std::move(word));
}

/// Valid basepoint at the midpoint of segment `i`.
inline BasedLoop based_at_segment(const Loop &l, std::size_t i) {
  double phase = l.segment_start(i) + 0.5 * l[i].hold;
  return BasedLoop(l, phase);
}

} // namespace loopspace

#endif // LOOPSPACE_LOOP_HPP
