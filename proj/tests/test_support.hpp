#ifndef LOOPSPACE_TEST_SUPPORT_HPP
#define LOOPSPACE_TEST_SUPPORT_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "loopspace/loop.hpp"
#include "loopspace/random.hpp"

namespace loopspace::testing {

inline SpacePtr letters(std::size_t n) {
  static const char *names[] = {"x", "y", "z", "w", "v", "u", "t", "s"};
  std::vector<std::string> labels(names, names + n);
  return StateSpace::discrete(std::move(labels));
}

/// Loop over a finite space from (label, hold) pairs.
inline Loop word(const SpacePtr &space,
                 std::vector<std::pair<std::string, double>> segs) {
  std::vector<Segment> w;
  for (auto &[label, hold] : segs)
    w.push_back({space->label(label), hold});
  return Loop(space, std::move(w));
}

inline State at(const SpacePtr &space, const std::string &label) {
  return space->label(label);
}

/// Finite space of `n` random points in the unit square, Euclidean metric.
inline SpacePtr random_metric_space(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<std::pair<double, double>> pts(n);
  for (auto &p : pts)
    p = {uniform01(rng), uniform01(rng)};
  std::vector<std::string> labels;
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    labels.push_back("s" + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j)
      if (i != j)
        dist[i][j] = std::hypot(pts[i].first - pts[j].first,
                                pts[i].second - pts[j].second);
  }
  // hypot is symmetric in its arguments up to sign, so dist is symmetric.
  return StateSpace::finite(std::move(labels), std::move(dist));
}

/// Random loop with a random admissible segment count.
inline Loop random_loop(const SpacePtr &space, std::size_t max_segments,
                        std::uint64_t seed, HoldRange holds = {}) {
  Rng rng = make_rng(seed ^ 0x5bd1e995ULL);
  for (;;) {
    std::size_t q = 1 + uniform_index(rng, max_segments);
    if (space->is_finite() && space->size() == 1)
      q = 1;
    if (space->is_finite() && space->size() == 2 && q > 1 && q % 2 == 1)
      continue;
    return generate_random_loop(space, q, seed, holds);
  }
}

inline bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-300});
}

} // namespace loopspace::testing

#endif
