#include <gtest/gtest.h>

#include <algorithm>

#include "loopspace/loop.hpp"
#include "test_support.hpp"

using namespace loopspace;
using namespace loopspace::testing;

namespace {

const SpacePtr xy = letters(2);

TEST(StateSpaceTest, RejectsBrokenDistanceMatrices) {
  EXPECT_THROW(StateSpace::finite({"x", "y"}, {{0, 1}, {2, 0}}),
               validation_error);
  EXPECT_THROW(StateSpace::finite({"x", "y"}, {{0, 0}, {0, 0}}),
               validation_error);
  EXPECT_THROW(StateSpace::finite({"x", "y", "z"},
                                  {{0, 1, 5}, {1, 0, 1}, {5, 1, 0}}),
               validation_error);
  EXPECT_THROW(StateSpace::finite({"x", "x"}, {{0, 1}, {1, 0}}),
               validation_error);
  EXPECT_THROW(StateSpace::euclidean(0), validation_error);
  EXPECT_NO_THROW(StateSpace::finite({"x", "y", "z"},
                                     {{0, 1, 2}, {1, 0, 1}, {2, 1, 0}}));
}

TEST(LoopTest, RejectsInvariantViolations) {
  EXPECT_THROW(word(xy, {{"x", 1}, {"x", 2}}), validation_error);
  EXPECT_THROW(word(xy, {{"x", 1}, {"y", 0}}), validation_error);
  EXPECT_THROW(word(xy, {{"x", 1}, {"y", 1}, {"x", 1}}), validation_error);
  EXPECT_THROW(Loop(xy, {}), validation_error);
  EXPECT_NO_THROW(word(xy, {{"x", 1}}));
}

TEST(LoopTest, BasepointMustAvoidJumps) {
  const Loop l = word(xy, {{"x", 1}, {"y", 1}});
  EXPECT_THROW(BasedLoop(l, 1.0), domain_error);
  EXPECT_THROW(BasedLoop(l, 0.0), domain_error);
  EXPECT_THROW(BasedLoop(l, 2.0), domain_error);
  EXPECT_NO_THROW(BasedLoop(l, 0.5));
  EXPECT_NO_THROW(BasedLoop(word(xy, {{"x", 3}}), 0.0));
}

TEST(EvaluateTest, RightContinuousWithBasepointEndpoint) {
  const BasedLoop l(word(xy, {{"x", 1}, {"y", 2}}), 0.5);
  EXPECT_EQ(evaluate(l, 0.0), at(xy, "x"));
  EXPECT_EQ(evaluate(l, 0.5), at(xy, "y"));
  EXPECT_EQ(evaluate(l, 3.0), at(xy, "x"));
  EXPECT_EQ(evaluate(l, 2.4), at(xy, "y"));
  EXPECT_EQ(evaluate(l, 2.5), at(xy, "x"));
  EXPECT_THROW(evaluate(l, 3.0001), domain_error);
  EXPECT_THROW(evaluate(l, -0.1), domain_error);
}

TEST(RotateTest, Examples) {
  const BasedLoop l(word(xy, {{"x", 1}, {"y", 1}}), 0.5);
  auto r = rotate(l, 1.0);
  ASSERT_TRUE(r);
  EXPECT_DOUBLE_EQ(r->phase(), 1.5);
  EXPECT_FALSE(rotate(l, 0.5));
  auto id = rotate(l, 0.0);
  ASSERT_TRUE(id);
  EXPECT_EQ(id->phase(), l.phase());
  auto neg = rotate(l, -1.0);
  ASSERT_TRUE(neg);
  EXPECT_DOUBLE_EQ(neg->phase(), 1.5);
}

TEST(NormalizeTest, Examples) {
  auto a = normalize(BasedLoop(word(xy, {{"x", 2}}), 0.5));
  EXPECT_EQ(a.loop()[0].hold, 1.0);
  EXPECT_EQ(a.phase(), 0.25);
  auto b = normalize(BasedLoop(word(xy, {{"x", 1}, {"y", 3}}), 0.5));
  EXPECT_EQ(b.loop()[0].hold, 0.25);
  EXPECT_EQ(b.loop()[1].hold, 0.75);
  EXPECT_EQ(b.phase(), 0.125);
  EXPECT_EQ(b.duration(), 1.0);
  auto c = normalize(b);
  EXPECT_EQ(c.phase(), b.phase());
  EXPECT_EQ(c.loop()[1].hold, b.loop()[1].hold);
}

TEST(NormalizeTest, DurationIsExactlyOne) {
  const SpacePtr s = letters(4);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Loop l = random_loop(s, 6, seed);
    const auto n = normalize(based_at_segment(l, 0));
    EXPECT_EQ(n.duration(), 1.0) << seed;
  }
}

TEST(EquivalenceTest, Examples) {
  auto r = equals_up_to_rotation(word(xy, {{"x", 1}, {"y", 2}}),
                                 word(xy, {{"y", 2}, {"x", 1}}));
  EXPECT_TRUE(r.equal);
  ASSERT_TRUE(r.offset);
  EXPECT_EQ(*r.offset, 1.0);
  EXPECT_FALSE(equals_up_to_rotation(word(xy, {{"x", 1}, {"y", 2}}),
                                     word(xy, {{"x", 1}, {"y", 2.1}}))
                   .equal);
  auto c = equals_up_to_rotation(word(xy, {{"x", 2}}), word(xy, {{"x", 3}}));
  EXPECT_FALSE(c.equal);
  EXPECT_FALSE(c.offset);
  EXPECT_THROW(equals_up_to_rotation(word(xy, {{"x", 2}}),
                                     word(letters(3), {{"x", 2}})),
               domain_error);
}

TEST(EquivalenceTest, OffsetCarriesTheWords) {
  const SpacePtr s = letters(4);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Loop a = random_loop(s, 6, seed);
    const std::size_t k = seed % a.size();
    const Loop b = shift(a, k);
    auto r = equals_up_to_rotation(a, b);
    ASSERT_TRUE(r.equal);
    // b(s) = a(s + T) on a grid of s.
    for (int i = 0; i < 50; ++i) {
      const double t = a.duration() * (i + 0.37) / 50.0;
      EXPECT_EQ(b[b.segment_at(t)].state, a[a.segment_at(t + *r.offset)].state);
    }
  }
}

TEST(CanonicalTest, LeastRotationMatchesBruteForce) {
  Rng rng = make_rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> keys(1 + uniform_index(rng, 9));
    for (auto &k : keys)
      k = static_cast<int>(uniform_index(rng, 3));
    const std::size_t n = keys.size();
    std::vector<int> best = keys;
    for (std::size_t s = 1; s < n; ++s) {
      std::vector<int> rot(n);
      for (std::size_t i = 0; i < n; ++i)
        rot[i] = keys[(s + i) % n];
      best = std::min(best, rot);
    }
    const std::size_t k = detail::least_rotation(keys);
    std::vector<int> got(n);
    for (std::size_t i = 0; i < n; ++i)
      got[i] = keys[(k + i) % n];
    EXPECT_EQ(got, best);
  }
}

TEST(CanonicalTest, IdempotentAndRotationInvariant) {
  const SpacePtr s = letters(3);
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const Loop l = random_loop(s, 7, seed);
    const Loop c = canonical_form(l);
    EXPECT_EQ(canonical_start(c), 0u);
    for (std::size_t k = 0; k < l.size(); ++k) {
      const Loop ck = canonical_form(shift(l, k));
      for (std::size_t i = 0; i < l.size(); ++i) {
        EXPECT_EQ(ck[i].state, c[i].state);
        EXPECT_EQ(ck[i].hold, c[i].hold);
      }
    }
  }
}

TEST(EquivalenceTest, IsAnEquivalenceRelation) {
  // Small alphabet and few hold values so that equivalent pairs occur often.
  const SpacePtr s = letters(2);
  std::vector<Loop> corpus;
  Rng rng = make_rng(11);
  for (int i = 0; i < 60; ++i) {
    const std::size_t q = 2 * (1 + uniform_index(rng, 2));
    std::vector<Segment> w;
    for (std::size_t k = 0; k < q; ++k)
      w.push_back({LabelId{k % 2}, 1.0 + static_cast<double>(uniform_index(rng, 2))});
    corpus.push_back(shift(Loop(s, w), uniform_index(rng, q)));
  }
  int triples = 0, equivalent_pairs = 0;
  for (int t = 0; t < 1500; ++t) {
    const Loop &a = corpus[uniform_index(rng, corpus.size())];
    const Loop &b = corpus[uniform_index(rng, corpus.size())];
    const Loop &c = corpus[uniform_index(rng, corpus.size())];
    const bool ab = equals_up_to_rotation(a, b).equal;
    const bool ba = equals_up_to_rotation(b, a).equal;
    const bool bc = equals_up_to_rotation(b, c).equal;
    const bool ac = equals_up_to_rotation(a, c).equal;
    EXPECT_TRUE(equals_up_to_rotation(a, a).equal);
    EXPECT_EQ(ab, ba);
    if (ab && bc)
      EXPECT_TRUE(ac);
    equivalent_pairs += ab;
    ++triples;
  }
  EXPECT_EQ(triples, 1500);
  EXPECT_GT(equivalent_pairs, 50);
}

TEST(RotateTest, RoundTripAndShiftIdentity) {
  const SpacePtr s = letters(3);
  Rng rng = make_rng(5);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Loop loop = random_loop(s, 6, seed);
    const BasedLoop l = based_at_segment(loop, 0);
    const double r = uniform(rng, -3.0, 3.0) * loop.duration();
    auto rl = rotate(l, r);
    if (!rl)
      continue;
    auto back = rotate(*rl, loop.duration() - r);
    if (back) {
      EXPECT_NEAR(back->phase(), l.phase(), 1e-12 * loop.duration());
    }
    for (int i = 0; i < 40; ++i) {
      const double u = uniform01(rng) * loop.duration();
      const double v = loop.wrap(u + r);
      if (loop.is_jump_time(l.phase() + v) || loop.is_jump_time(rl->phase() + u))
        continue;
      EXPECT_EQ(evaluate(*rl, u), evaluate(l, v));
    }
  }
}

TEST(NormalizeTest, PreservesEquivalenceVerdicts) {
  const SpacePtr s = letters(3);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Loop a = random_loop(s, 5, seed);
    const Loop b = seed % 2 ? shift(a, seed % a.size())
                            : scale(random_loop(s, 5, seed + 1000),
                                    a.duration() /
                                        random_loop(s, 5, seed + 1000).duration());
    const bool before = equals_up_to_rotation(a, b).equal;
    const bool after = equals_up_to_rotation(normalize(based_at_segment(a, 0)).loop(),
                                             normalize(based_at_segment(b, 0)).loop())
                           .equal;
    EXPECT_EQ(before, after);
  }
}

TEST(GenerateTest, Examples) {
  const SpacePtr x = letters(1);
  const Loop c = generate_random_loop(x, 1, 7);
  EXPECT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].state, at(x, "x"));
  EXPECT_THROW(generate_random_loop(x, 2, 7), domain_error);
  EXPECT_THROW(generate_random_loop(xy, 3, 7), domain_error);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Loop l = generate_random_loop(xy, 4, seed);
    ASSERT_EQ(l.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i)
      EXPECT_NE(l[i].state, l[(i + 1) % 4].state);
  }
  const Loop a = generate_random_loop(letters(4), 6, 99);
  const Loop b = generate_random_loop(letters(4), 6, 99);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].state, b[i].state);
    EXPECT_EQ(a[i].hold, b[i].hold);
  }
}

TEST(GenerateTest, EuclideanWordsAreAdjacentDistinct) {
  const SpacePtr e = StateSpace::euclidean(2);
  for (std::uint64_t seed = 0; seed < 50; ++seed)
    for (std::size_t q = 1; q <= 7; ++q)
      EXPECT_NO_THROW(generate_random_loop(e, q, seed));
}

TEST(UnrollTest, PiecesCoverTheBasedPath) {
  const BasedLoop l(word(xy, {{"x", 1}, {"y", 2}}), 0.5);
  const auto pieces = unroll(l);
  ASSERT_EQ(pieces.size(), 3u);
  EXPECT_EQ(pieces[0].end, 0.5);
  EXPECT_EQ(pieces[1].end, 2.5);
  EXPECT_EQ(pieces[2].end, 3.0);
  EXPECT_EQ(pieces[2].state, at(xy, "x"));
}

} // namespace
