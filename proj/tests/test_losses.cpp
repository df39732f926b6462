#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <span>

#include "ascnet/losses.hpp"
#include "ascnet/rng.hpp"

using namespace ascnet;

namespace {

template <class T>
Tensor<T> tensor_from(std::initializer_list<T> values, int h, int w) {
  Tensor<T> t(1, 1, h, w);
  std::copy(values.begin(), values.end(), t.v.begin());
  return t;
}

// Central-difference gradient of a scalar function of one vector entry.
template <class F>
double central_diff(F&& f, std::vector<double>& x, std::size_t i,
                    double step = 1e-5) {
  const double orig = x[i];
  x[i] = orig + step;
  const double up = f();
  x[i] = orig - step;
  const double down = f();
  x[i] = orig;
  return (up - down) / (2.0 * step);
}

}  // namespace

TEST_CASE("loss_fence closed forms") {
  std::vector<double> ones(4, 1.0);
  CHECK(loss_fence(std::span<const double>(ones)) == 0.0);
  std::vector<double> rejected(3, -1.0);
  CHECK(loss_fence(std::span<const double>(rejected)) == 2.0);
  std::vector<double> mixed{0.5, -0.5};
  CHECK(loss_fence(std::span<const double>(mixed)) ==
        Catch::Approx(1.0).margin(1e-15));
  CHECK_THROWS_AS(loss_fence(std::span<const double>()), std::invalid_argument);

  SECTION("permutation invariant") {
    std::vector<double> a{0.2, -0.7, 0.9, 0.1};
    std::vector<double> b{0.9, 0.1, 0.2, -0.7};
    CHECK(loss_fence(std::span<const double>(a)) ==
          loss_fence(std::span<const double>(b)));
  }
}

TEST_CASE("loss_disjoint closed forms account for the documented smoothing") {
  const double eps = kDiceSmooth;
  SECTION("identical all-ones images give exactly 1") {
    auto a = tensor_from<double>({1, 1, 1, 1}, 2, 2);
    CHECK(loss_disjoint_batch(a, a) == 1.0);
  }
  SECTION("disjoint supports fall to the smoothing floor") {
    auto f = tensor_from<double>({1, 1, 0, 0}, 2, 2);
    auto w = tensor_from<double>({0, 0, 1, 1}, 2, 2);
    const double expected = eps / (4.0 + eps);
    CHECK(loss_disjoint_batch(f, w) == Catch::Approx(expected).margin(1e-12));
    CHECK(loss_disjoint_batch(f, w) < 1e-6);  // effectively zero
  }
  SECTION("all-1 vs all-0.5 on 4 pixels") {
    auto f = tensor_from<double>({1, 1, 1, 1}, 2, 2);
    auto w = tensor_from<double>({0.5, 0.5, 0.5, 0.5}, 2, 2);
    const double expected = (2.0 * 2.0 + eps) / (4.0 + 2.0 + eps);
    CHECK(loss_disjoint_batch(f, w) == Catch::Approx(expected).margin(1e-12));
    CHECK(std::abs(loss_disjoint_batch(f, w) - 2.0 / 3.0) < 1e-6);
  }
  SECTION("symmetry is exact") {
    Rng rng(7);
    Tensor<double> a(1, 1, 4, 4), b(1, 1, 4, 4);
    for (auto& v : a.v) v = rng.uniform();
    for (auto& v : b.v) v = rng.uniform();
    CHECK(loss_disjoint_batch(a, b) == loss_disjoint_batch(b, a));
  }
  SECTION("binary self-overlap is 1 for any support size") {
    for (int k = 1; k <= 16; ++k) {
      Tensor<double> a(1, 1, 4, 4);
      for (int i = 0; i < k; ++i) a.v[i] = 1.0;
      CHECK(loss_disjoint_batch(a, a) == Catch::Approx(1.0).margin(1e-7));
    }
  }
  SECTION("shape mismatch") {
    Tensor<double> a(1, 1, 2, 2), b(1, 1, 2, 3);
    CHECK_THROWS_AS(loss_disjoint_batch(a, b), std::invalid_argument);
  }
}

TEST_CASE("loss_reconstruction closed forms") {
  auto a = tensor_from<double>({0.2, 0.4, 0.6, 0.8}, 2, 2);
  CHECK(loss_reconstruction(a, a) == 0.0);

  auto shifted = a;
  for (auto& v : shifted.v) v += 0.1;
  CHECK(loss_reconstruction(a, shifted) == Catch::Approx(0.01).margin(1e-12));

  auto one_off = a;
  one_off.v[2] += 1.0;
  CHECK(loss_reconstruction(a, one_off) == Catch::Approx(0.25).margin(1e-12));

  Tensor<double> wrong(1, 1, 2, 3);
  CHECK_THROWS_AS(loss_reconstruction(a, wrong), std::invalid_argument);
}

TEST_CASE("loss_discriminator closed forms") {
  std::vector<double> fakes{-1, -1}, reals{1, 1, 1};
  CHECK(loss_discriminator(std::span<const double>(fakes),
                           std::span<const double>(reals)) == 0.0);
  std::vector<double> zeros_f{0, 0}, zeros_r{0, 0, 0};
  CHECK(loss_discriminator(std::span<const double>(zeros_f),
                           std::span<const double>(zeros_r)) == 1.0);
  std::vector<double> fooled_f{1, 1}, fooled_r{-1, -1};
  CHECK(loss_discriminator(std::span<const double>(fooled_f),
                           std::span<const double>(fooled_r)) == 2.0);
  CHECK_THROWS_AS(loss_discriminator(std::span<const double>(),
                                     std::span<const double>()),
                  std::invalid_argument);
}

TEST_CASE("loss_main_total is the weighted sum") {
  CHECK(loss_main_total(0.0, 0.0, 0.0, std::array<double, 3>{1, 1, 1}) == 0.0);
  CHECK(loss_main_total(1.0, 1.0, 1.0, std::array<double, 3>{1, 1, 1}) == 3.0);
  CHECK(loss_main_total(2.0, 0.5, 0.01, std::array<double, 3>{1, 1, 1}) ==
        Catch::Approx(2.51).margin(1e-15));
  CHECK_THROWS_AS(loss_main_total(1.0, 1.0, 1.0,
                                  std::array<double, 3>{-1, 1, 1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(loss_main_total(1.0, 1.0, 1.0,
                                  std::array<double, 3>{0, 0, 0}),
                  std::invalid_argument);
}

TEST_CASE("analytic gradients match central differences on random 4x4 input") {
  Rng rng(2024);
  const double step = 1e-5;
  const double tol = 1e-4;
  auto rel_err = [](double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
  };

  SECTION("loss_fence") {
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> scores(16);
      for (auto& s : scores) s = rng.uniform(-0.9, 0.9);
      std::vector<double> grad(scores.size());
      loss_fence_grad(std::span<const double>(scores), std::span<double>(grad));
      for (std::size_t i = 0; i < scores.size(); ++i) {
        double fd = central_diff(
            [&] { return loss_fence(std::span<const double>(scores)); },
            scores, i, step);
        CHECK(rel_err(grad[i], fd) < tol);
      }
    }
  }
  SECTION("loss_disjoint, both arguments") {
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> f(16), w(16);
      for (auto& v : f) v = rng.uniform(0.05, 0.95);
      for (auto& v : w) v = rng.uniform(0.05, 0.95);
      std::vector<double> gf(16), gw(16);
      loss_disjoint_grad(std::span<const double>(f), std::span<const double>(w),
                         std::span<double>(gf), std::span<double>(gw));
      auto value = [&] {
        return loss_disjoint(std::span<const double>(f),
                             std::span<const double>(w));
      };
      for (std::size_t i = 0; i < f.size(); ++i) {
        CHECK(rel_err(gf[i], central_diff(value, f, i, step)) < tol);
        CHECK(rel_err(gw[i], central_diff(value, w, i, step)) < tol);
      }
    }
  }
  SECTION("loss_reconstruction, both arguments") {
    Tensor<double> a(1, 1, 4, 4), b(1, 1, 4, 4);
    for (auto& v : a.v) v = rng.uniform();
    for (auto& v : b.v) v = rng.uniform();
    Tensor<double> ga, gb;
    loss_reconstruction_grad(a, b, ga, gb);
    for (std::size_t i = 0; i < a.v.size(); ++i) {
      auto value = [&] { return loss_reconstruction(a, b); };
      CHECK(rel_err(ga.v[i], central_diff(value, a.v, i, step)) < tol);
      CHECK(rel_err(gb.v[i], central_diff(value, b.v, i, step)) < tol);
    }
  }
  SECTION("loss_discriminator, both score lists") {
    std::vector<double> fakes(7), reals(9);
    for (auto& v : fakes) v = rng.uniform(-0.9, 0.9);
    for (auto& v : reals) v = rng.uniform(-0.9, 0.9);
    std::vector<double> gfk(fakes.size()), grl(reals.size());
    loss_discriminator_grad(std::span<const double>(fakes),
                            std::span<const double>(reals),
                            std::span<double>(gfk), std::span<double>(grl));
    auto value = [&] {
      return loss_discriminator(std::span<const double>(fakes),
                                std::span<const double>(reals));
    };
    for (std::size_t i = 0; i < fakes.size(); ++i)
      CHECK(rel_err(gfk[i], central_diff(value, fakes, i, step)) < tol);
    for (std::size_t i = 0; i < reals.size(); ++i)
      CHECK(rel_err(grl[i], central_diff(value, reals, i, step)) < tol);
  }
}

TEST_CASE("losses stay finite and non-negative on their domains") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> scores(8);
    for (auto& s : scores) s = rng.uniform(-1.0, 1.0);
    const double lf = loss_fence(std::span<const double>(scores));
    CHECK(lf >= 0.0);
    CHECK(lf <= 2.0);
    Tensor<double> f(1, 1, 4, 4), w(1, 1, 4, 4);
    for (auto& v : f.v) v = rng.uniform();
    for (auto& v : w.v) v = rng.uniform();
    const double lw = loss_disjoint_batch(f, w);
    CHECK(lw >= 0.0);
    CHECK(lw <= 1.0);
    const double lr = loss_reconstruction(f, w);
    CHECK(lr >= 0.0);
    CHECK(std::isfinite(lr));
  }
}
