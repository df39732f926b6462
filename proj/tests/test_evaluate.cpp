#include <catch2/catch_amalgamated.hpp>

#include "ascnet/evaluate.hpp"
#include "ascnet/losses.hpp"
#include "ascnet/rng.hpp"

using namespace ascnet;

namespace {

Mask mask_of(std::initializer_list<int> on, int h, int w) {
  Mask m(h, w);
  for (int i : on) m.pixels[i] = 1;
  return m;
}

double brute_force_dice(const Mask& p, const Mask& g) {
  long long inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < p.pixels.size(); ++i) {
    if (p.pixels[i] && g.pixels[i]) ++inter;
    if (p.pixels[i]) ++np;
    if (g.pixels[i]) ++ng;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * inter / double(np + ng);
}

}  // namespace

TEST_CASE("dice_score closed forms") {
  auto a = mask_of({0, 1, 5}, 3, 3);
  CHECK(dice_score(a, a) == 1.0);
  auto b = mask_of({2, 3}, 3, 3);
  CHECK(dice_score(a, b) == 0.0);
  auto p = mask_of({0, 1}, 3, 3);
  auto g = mask_of({1, 2}, 3, 3);
  CHECK(dice_score(p, g) == Catch::Approx(0.5).margin(1e-15));
  CHECK(dice_score(Mask(3, 3), Mask(3, 3)) == 1.0);  // both empty
  CHECK(dice_score(p, g) == dice_score(g, p));
  CHECK_THROWS_AS(dice_score(p, Mask(2, 2)), std::invalid_argument);
}

TEST_CASE("dice_score matches the pixel-count oracle on random pairs") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    Mask p(16, 16), g(16, 16);
    for (auto& v : p.pixels) v = rng.uniform() < 0.3;
    for (auto& v : g.pixels) v = rng.uniform() < 0.3;
    CHECK(std::abs(dice_score(p, g) - brute_force_dice(p, g)) <= 1e-12);
  }
}

TEST_CASE("soft disjoincy agrees with hard dice on binary masks") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Mask p(32, 32), g(32, 32);
    for (auto& v : p.pixels) v = rng.uniform() < 0.4;
    for (auto& v : g.pixels) v = rng.uniform() < 0.4;
    if (p.count() < 100 || g.count() < 100) continue;
    Tensor<double> pf(1, 1, 32, 32), gf(1, 1, 32, 32);
    for (std::size_t i = 0; i < p.pixels.size(); ++i) {
      pf.v[i] = p.pixels[i];
      gf.v[i] = g.pixels[i];
    }
    CHECK(std::abs(loss_disjoint_batch(pf, gf) - dice_score(p, g)) <= 1e-6);
  }
}

TEST_CASE("evaluate_dataset") {
  auto a = mask_of({0, 1, 2, 3, 4}, 4, 4);
  SECTION("single perfect slice") {
    auto rep = evaluate_dataset({a}, {a}, {"s0"}, Grouping::per_slice);
    CHECK(rep.mean_dice == 1.0);
    CHECK(rep.per_item.size() == 1);
  }
  SECTION("per-slice mean is arithmetic") {
    // dice 0.2 and 0.8 constructed directly
    auto p1 = mask_of({0, 1, 2, 3}, 4, 4);        // |P|=4
    auto g1 = mask_of({3, 8, 9, 10, 11, 12}, 4, 4);  // |G|=6, overlap 1 -> 0.2
    auto p2 = mask_of({0, 1, 2, 3}, 4, 4);
    auto g2 = mask_of({0, 1, 2, 8}, 4, 4);  // overlap 3 -> 6/8 = 0.75
    auto rep = evaluate_dataset({p1, p2}, {g1, g2}, {"a", "b"},
                                Grouping::per_slice);
    CHECK(rep.per_item[0].second == Catch::Approx(0.2));
    CHECK(rep.per_item[1].second == Catch::Approx(0.75));
    CHECK(rep.mean_dice == Catch::Approx((0.2 + 0.75) / 2));
  }
  SECTION("empty gt with empty pred contributes 1") {
    auto rep = evaluate_dataset({Mask(4, 4)}, {Mask(4, 4)}, {"s"},
                                Grouping::per_slice);
    CHECK(rep.mean_dice == 1.0);
  }
  SECTION("mean is permutation invariant") {
    Rng rng(5);
    std::vector<Mask> preds, gts;
    std::vector<std::string> ids;
    for (int i = 0; i < 8; ++i) {
      Mask p(8, 8), g(8, 8);
      for (auto& v : p.pixels) v = rng.uniform() < 0.4;
      for (auto& v : g.pixels) v = rng.uniform() < 0.4;
      preds.push_back(p);
      gts.push_back(g);
      ids.push_back("s" + std::to_string(i));
    }
    auto rep = evaluate_dataset(preds, gts, ids, Grouping::per_slice);
    std::reverse(preds.begin(), preds.end());
    std::reverse(gts.begin(), gts.end());
    std::reverse(ids.begin(), ids.end());
    auto rev = evaluate_dataset(preds, gts, ids, Grouping::per_slice);
    CHECK(rep.mean_dice == Catch::Approx(rev.mean_dice).margin(1e-15));
  }
  SECTION("per-subject grouping pools the pixel counts") {
    // Subject s: slice 1 perfect on 4 pixels, slice 2 disjoint (4 vs 4).
    auto p1 = mask_of({0, 1, 2, 3}, 4, 4);
    auto p2 = mask_of({0, 1, 2, 3}, 4, 4);
    auto g2 = mask_of({8, 9, 10, 11}, 4, 4);
    auto rep = evaluate_dataset({p1, p2}, {p1, g2}, {"s", "s"},
                                Grouping::per_subject);
    REQUIRE(rep.per_item.size() == 1);
    // pooled: inter 4, |P| 8, |G| 8 -> 0.5
    CHECK(rep.per_item[0].second == Catch::Approx(0.5));
  }
  SECTION("misaligned collections error") {
    CHECK_THROWS_AS(evaluate_dataset({a}, {a, a}, {"x"}, Grouping::per_slice),
                    std::invalid_argument);
  }
}
