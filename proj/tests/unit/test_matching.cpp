#include <doctest.h>

#include <algorithm>
#include <set>

#include "pairx/error.hpp"
#include "pairx/matching.hpp"
#include "toy.hpp"

using namespace pairx;

namespace {

KeypointDescriptorSet from_values(const std::vector<float>& values) {
  // 1-D descriptors laid out on a 1 x n grid.
  return decompose(Tensor({1, 1, static_cast<int>(values.size())}, values));
}

KeypointDescriptorSet random_set(Rng& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  return decompose(toy::random_tensor({c, h, w}, rng, lo, hi));
}

}  // namespace

TEST_CASE("decompose: grid shape and ordering") {
  const auto s = decompose(Tensor({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}));
  CHECK(s.size() == 4);
  CHECK(s.length == 2);
  CHECK(s.keypoints[1] == Keypoint{1, 0});
  CHECK(s.keypoints[2] == Keypoint{0, 1});
  CHECK(s.descriptor(1)[0] == 2.0f);
  CHECK(s.descriptor(1)[1] == 6.0f);

  const auto one = decompose(Tensor({5, 1, 1}));
  CHECK(one.size() == 1);
  CHECK(one.keypoints[0] == Keypoint{0, 0});
}

TEST_CASE("decompose: descriptor at (column 2, row 3) is activation[:, 3, 2]") {
  Rng rng(31);
  const Tensor act = toy::random_tensor({8, 5, 7}, rng);
  const auto s = decompose(act);
  REQUIRE(s.size() == 35);
  const std::size_t k = 3 * 7 + 2;
  CHECK(s.keypoints[k] == Keypoint{2, 3});
  for (int c = 0; c < 8; ++c) CHECK(s.descriptor(k)[static_cast<std::size_t>(c)] == act.at(c, 3, 2));
}

TEST_CASE("mutual_match: identical sets give the identity matching") {
  Rng rng(32);
  const auto s = random_set(rng, 4, 3, 5);
  const auto m = mutual_match(s, s);
  REQUIRE(m.size() == s.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    CHECK(m.matches[k].kp_a == s.keypoints[k]);
    CHECK(m.matches[k].kp_b == s.keypoints[k]);
    CHECK(m.matches[k].descriptor_distance == 0.0);
  }
}

TEST_CASE("mutual_match: 1-D hand example") {
  const auto a = from_values({0.0f, 1.0f});
  const auto b = from_values({0.1f, 0.9f, 5.0f});
  const auto m = mutual_match(a, b);
  REQUIRE(m.size() == 2);
  CHECK(m.matches[0].kp_a == Keypoint{0, 0});
  CHECK(m.matches[0].kp_b == Keypoint{0, 0});
  CHECK(m.matches[1].kp_a == Keypoint{1, 0});
  CHECK(m.matches[1].kp_b == Keypoint{1, 0});
  CHECK(m.matches[0].descriptor_distance == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("mutual_match: ties resolve to the lower index") {
  const auto a = from_values({1.0f});
  const auto b = from_values({0.0f, 2.0f});
  const auto m = mutual_match(a, b);
  REQUIRE(m.size() == 1);
  CHECK(m.matches[0].kp_b == Keypoint{0, 0});
}

TEST_CASE("mutual_match equals the brute-force oracle, is one-to-one and symmetric") {
  Rng rng(33);
  for (int trial = 0; trial < 40; ++trial) {
    const int c = 1 + static_cast<int>(uniform_index(rng, 32));
    const int h = 1 + static_cast<int>(uniform_index(rng, 6)), w = 1 + static_cast<int>(uniform_index(rng, 6));
    const int h2 = 1 + static_cast<int>(uniform_index(rng, 6)), w2 = 1 + static_cast<int>(uniform_index(rng, 6));
    // Quantized values make exact ties common.
    Tensor ta = toy::random_tensor({c, h, w}, rng), tb = toy::random_tensor({c, h2, w2}, rng);
    if (trial % 2 == 0) {
      for (auto& v : ta.mutable_data()) v = std::round(v * 2.0f);
      for (auto& v : tb.mutable_data()) v = std::round(v * 2.0f);
    }
    const auto A = decompose(ta), B = decompose(tb);
    const auto got = mutual_match(A, B);
    const auto want = toy::brute_force_mutual(A, B);
    REQUIRE(got.size() == want.size());
    std::set<Keypoint> seen_a, seen_b;
    for (std::size_t k = 0; k < want.size(); ++k) {
      CHECK(got.matches[k].kp_a == A.keypoints[want[k].a]);
      CHECK(got.matches[k].kp_b == B.keypoints[want[k].b]);
      CHECK(got.matches[k].descriptor_distance == doctest::Approx(want[k].distance));
      CHECK(got.matches[k].descriptor_distance >= 0.0);
      CHECK(seen_a.insert(got.matches[k].kp_a).second);
      CHECK(seen_b.insert(got.matches[k].kp_b).second);
    }
    if (trial % 2 == 1) {
      // Without ties, mutual nearest neighbours do not depend on direction.
      const auto rev = mutual_match(B, A);
      std::set<std::pair<Keypoint, Keypoint>> f, r;
      for (const auto& m : got.matches) f.insert({m.kp_a, m.kp_b});
      for (const auto& m : rev.matches) r.insert({m.kp_b, m.kp_a});
      CHECK(f == r);
    }
  }
}

TEST_CASE("mutual_match rejects mismatched descriptor lengths") {
  Rng rng(34);
  CHECK_THROWS_AS(mutual_match(random_set(rng, 2, 2, 2), random_set(rng, 3, 2, 2)), Error);
}

TEST_CASE("score_matches: product of channel sums") {
  RelevanceMap ra{0, Tensor({2, 1, 2}, {1.5f, 0, 0.5f, 0})};  // cell (0,0) sums to 2
  RelevanceMap rb{0, Tensor({1, 1, 2}, {0, 3})};             // cell (1,0) is 3
  MatchSet ms;
  ms.matches.push_back({{0, 0}, {1, 0}, 0.0, 0.0});
  ms.matches.push_back({{1, 0}, {1, 0}, 0.0, 0.0});
  const auto s = score_matches(ms, ra, rb);
  CHECK(s.matches[0].relevance == 6.0);
  CHECK(s.matches[1].relevance == 0.0);
}

TEST_CASE("score_matches: loop oracle and scaling invariance of the top-n order") {
  Rng rng(35);
  for (int trial = 0; trial < 20; ++trial) {
    const auto A = random_set(rng, 6, 5, 5), B = random_set(rng, 6, 5, 5);
    const auto ms = mutual_match(A, B);
    const RelevanceMap ra{0, toy::random_tensor({3, 5, 5}, rng)};
    const RelevanceMap rb{0, toy::random_tensor({3, 5, 5}, rng)};
    const auto s = score_matches(ms, ra, rb);
    for (const auto& m : s.matches) {
      double sa = 0, sb = 0;
      for (int c = 0; c < 3; ++c) {
        sa += ra.values.at(c, m.kp_a.j, m.kp_a.i);
        sb += rb.values.at(c, m.kp_b.j, m.kp_b.i);
      }
      CHECK(m.relevance == doctest::Approx(sa * sb).epsilon(1e-6));
    }
    RelevanceMap ra2 = ra;
    for (auto& v : ra2.values.mutable_data()) v *= 4.0f;  // exact power-of-two scaling
    const auto s2 = score_matches(ms, ra2, rb);
    const auto t1 = top_n(s, 5), t2 = top_n(s2, 5);
    REQUIRE(t1.size() == t2.size());
    for (std::size_t k = 0; k < t1.size(); ++k) {
      CHECK(t1.matches[k].kp_a == t2.matches[k].kp_a);
      CHECK(t2.matches[k].relevance == doctest::Approx(4.0 * t1.matches[k].relevance));
    }
  }
}

TEST_CASE("top_n ordering") {
  Rng rng(36);
  MatchSet ms;
  for (int k = 0; k < 50; ++k)
    ms.matches.push_back({{k % 10, k / 10}, {k % 10, k / 10}, uniform(rng, 0, 1), uniform(rng, -1, 1)});
  const auto t = top_n(ms, 20);
  REQUIRE(t.size() == 20);
  for (std::size_t k = 1; k < t.size(); ++k) CHECK(t.matches[k - 1].relevance >= t.matches[k].relevance);

  const auto all = top_n(ms, 100);
  CHECK(all.size() == 50);
}

TEST_CASE("top_n: tie-break oracle") {
  // Equal relevance everywhere; distances repeat so the row-major rule matters.
  MatchSet ms;
  const std::vector<Keypoint> kps{{3, 0}, {0, 1}, {1, 0}, {2, 2}, {0, 0}, {1, 1}};
  const std::vector<double> dist{0.5, 0.2, 0.5, 0.2, 0.9, 0.5};
  for (std::size_t k = 0; k < kps.size(); ++k) ms.matches.push_back({kps[k], kps[k], dist[k], 1.0});
  const auto t = top_n(ms, 6);
  const std::vector<Keypoint> want{{0, 1}, {2, 2}, {1, 0}, {3, 0}, {1, 1}, {0, 0}};
  for (std::size_t k = 0; k < want.size(); ++k) CHECK(t.matches[k].kp_a == want[k]);
  CHECK_THROWS_AS(top_n(ms, 0), Error);
}
