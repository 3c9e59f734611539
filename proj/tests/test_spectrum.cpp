#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "cavlab/spectrum.hpp"

using namespace cavlab;

namespace {
constexpr double kPi = std::numbers::pi;

std::vector<std::pair<int, int>> as_pairs(const DegenerateClass& cls) {
  std::vector<std::pair<int, int>> out;
  for (const auto& m : cls.modes) out.push_back({m.n, m.m});
  return out;
}
}  // namespace

TEST_CASE("shape construction derives a from the rational aspect") {
  const CavityShape s13(1, 3, 1.0);
  CHECK(s13.a == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
  CHECK(s13.b == 1.0);
  const CavityShape s14(1, 4, 1.0);
  CHECK(s14.a == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(CavityShape(2, 4, 1.0), ConfigError);   // not in lowest terms
  CHECK_THROWS_AS(CavityShape(0, 1, 1.0), ConfigError);
  CHECK_THROWS_AS(CavityShape(1, 1, -1.0), ConfigError);
}

TEST_CASE("mode eigenvalues") {
  const CavityShape s13(1, 3, 1.0);
  CHECK(mode_eigenvalue(s13, {2, 6}) ==
        doctest::Approx(kPi * kPi * 112.0 / 3.0).epsilon(1e-14));

  const CavityShape square(1, 1, 1.0);
  CHECK(mode_eigenvalue(square, {1, 1}) == doctest::Approx(2.0 * kPi * kPi).epsilon(1e-14));

  const CavityShape s14(1, 4, 1.0);
  const double e1 = mode_eigenvalue(s14, {12, 17});
  const double e2 = mode_eigenvalue(s14, {20, 15});
  CHECK(e1 == doctest::Approx(kPi * kPi * 325.0).epsilon(1e-14));
  CHECK(e1 == doctest::Approx(e2).epsilon(1e-15));
}

TEST_CASE("reference classes enumerate exactly") {
  const CavityShape s13(1, 3, 1.0);

  const auto c112 = enumerate_class(s13, 112);
  CHECK(as_pairs(c112) == std::vector<std::pair<int, int>>{{2, 6}, {8, 4}, {10, 2}});
  CHECK(c112.label.kind == CaseKind::Case1);
  CHECK(c112.label.sigma == -1);
  CHECK(c112.label.sigma_prime == -1);

  const auto c28 = enumerate_class(s13, 28);
  CHECK(as_pairs(c28) == std::vector<std::pair<int, int>>{{1, 3}, {4, 2}, {5, 1}});
  CHECK(c28.label.kind == CaseKind::Case2);
  CHECK(c28.label.sigma == +1);

  const CavityShape s14(1, 4, 1.0);
  const auto c1300 = enumerate_class(s14, 1300);
  CHECK(as_pairs(c1300) == std::vector<std::pair<int, int>>{
                               {2, 18}, {12, 17}, {20, 15}, {30, 10}, {34, 6}, {36, 1}});
  CHECK(c1300.label.kind == CaseKind::Case3);
  CHECK(c1300.label.sigma == -1);

  // a 3-member sub-multiplet is a proper subset with the same label
  const auto sub = subset_class(c1300, {{2, 18}, {12, 17}, {20, 15}});
  CHECK(sub.size() == 3);
  CHECK(sub.label.kind == CaseKind::Case3);
  CHECK_THROWS_AS(subset_class(c1300, {{3, 18}}), ConfigError);
}

TEST_CASE("enumerate_class error paths") {
  const CavityShape s13(1, 3, 1.0);
  CHECK_THROWS_AS(enumerate_class(s13, 113), NoSolutions);
  CHECK_THROWS_AS(classify_modes({ModeIndex{1, 1}}), ClassTooSmall);
}

TEST_CASE("enumerate_all_classes") {
  const CavityShape s13(1, 3, 1.0);
  const auto classes = enumerate_all_classes(s13, 28, 3);
  REQUIRE(!classes.empty());
  CHECK(std::any_of(classes.begin(), classes.end(),
                    [](const DegenerateClass& c) { return c.N == 28; }));

  const CavityShape square(1, 1, 1.0);
  CHECK(enumerate_all_classes(square, 2, 2).empty());

  const auto sq50 = enumerate_all_classes(square, 50, 2);
  auto it = std::find_if(sq50.begin(), sq50.end(),
                         [](const DegenerateClass& c) { return c.N == 50; });
  REQUIRE(it != sq50.end());
  CHECK(as_pairs(*it) == std::vector<std::pair<int, int>>{{1, 7}, {5, 5}, {7, 1}});

  // ascending N and maximality against a brute-force recount
  long long last = 0;
  for (const auto& c : sq50) {
    CHECK(c.N > last);
    last = c.N;
    int count = 0;
    for (int n = 1; n * n <= c.N; ++n) {
      for (int m = 1; n * n + m * m <= c.N; ++m) {
        if (n * n + m * m == c.N) ++count;
      }
    }
    CHECK(count == c.size());
  }
}

TEST_CASE("classification is order-invariant") {
  const CavityShape s14(1, 4, 1.0);
  auto cls = enumerate_class(s14, 1300);
  std::mt19937 gen(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto modes = cls.modes;
    std::shuffle(modes.begin(), modes.end(), gen);
    CHECK(classify_modes(modes).kind == cls.label.kind);
  }
}

TEST_CASE("class invariants: equal eigenvalues, distinct n and m") {
  for (const auto& [p, q] : std::vector<std::pair<int, int>>{{1, 1}, {1, 3}, {1, 4}, {3, 5}}) {
    const CavityShape shape(p, q, 1.0);
    for (const auto& cls : enumerate_all_classes(shape, 2000, 2)) {
      std::set<int> ns, ms;
      for (const auto& m : cls.modes) {
        ns.insert(m.n);
        ms.insert(m.m);
        CHECK(mode_eigenvalue(shape, m) ==
              doctest::Approx(cls.eigenvalue).epsilon(1e-13));
      }
      CHECK(static_cast<int>(ns.size()) == cls.size());
      CHECK(static_cast<int>(ms.size()) == cls.size());
    }
  }
}

TEST_CASE("parity assignment agrees with sampled reflections") {
  const CavityShape shape(1, 3, 1.0);
  std::mt19937 gen(42);
  std::uniform_real_distribution<double> du(0.05, 0.95);
  for (const ModeIndex mode : {ModeIndex{2, 6}, ModeIndex{5, 1}, ModeIndex{4, 2}}) {
    for (int trial = 0; trial < 50; ++trial) {
      const double u = du(gen) * shape.a;
      const double v = du(gen) * shape.b;
      const auto basis = [&](double uu, double vv) {
        return std::sin(mode.n * kPi * uu / shape.a) * std::sin(mode.m * kPi * vv / shape.b);
      };
      const double f = basis(u, v);
      if (std::abs(f) < 1e-3) continue;
      CHECK(basis(shape.a - u, v) / f == doctest::Approx(mode.sigma1()).epsilon(1e-12));
      CHECK(basis(u, shape.b - v) / f == doctest::Approx(mode.sigma2()).epsilon(1e-12));
    }
  }
}

TEST_CASE("case-5 absence and parity table") {
  const auto r13 = verify_case5_absence(CavityShape(1, 3, 1.0), 5000);
  CHECK(r13.counts[4] == 0);
  CHECK(r13.counts[2] == 0);  // (o,o) branch admits only Case1/Case2
  CHECK(r13.counts[3] == 0);
  CHECK(r13.counts[1] > 0);
  CHECK(r13.parity_table_ok);

  const auto r14 = verify_case5_absence(CavityShape(1, 4, 1.0), 5000);
  CHECK(r14.counts[4] == 0);
  CHECK(r14.counts[1] == 0);  // (o,e) branch: non-Case1 classes are Case3
  CHECK(r14.counts[3] == 0);
  CHECK(r14.counts[2] > 0);
  CHECK(r14.parity_table_ok);

  const auto r11 = verify_case5_absence(CavityShape(1, 1, 1.0), 200);
  CHECK(r11.counts[4] == 0);
  CHECK(r11.parity_table_ok);

  const auto r41 = verify_case5_absence(CavityShape(4, 1, 1.0), 2000);
  CHECK(r41.counts[4] == 0);
  CHECK(r41.counts[1] == 0);  // (e,o) branch: non-Case1 classes are Case4
  CHECK(r41.counts[2] == 0);
}
