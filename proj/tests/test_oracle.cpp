#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "cavlab/oracle.hpp"
#include "cavlab/perturb.hpp"
#include "cavlab/spectrum.hpp"

using namespace cavlab;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("quadrature agrees with the closed-form matrix elements") {
  std::mt19937 gen(31);
  std::uniform_int_distribution<int> dn(1, 14);
  for (const auto& [p, q] : std::vector<std::pair<int, int>>{{1, 3}, {1, 4}, {1, 1}}) {
    const CavityShape shape(p, q, 1.0);
    for (int t = 0; t < 100; ++t) {
      const ModeIndex i{dn(gen), dn(gen)};
      const ModeIndex j{dn(gen), dn(gen)};
      CHECK(std::abs(quadrature_matrix_element(shape, SubspaceOperator::uY, i, j) -
                     uy_matrix_element(shape, i, j)) < 1e-10);
      CHECK(std::abs(quadrature_matrix_element(shape, SubspaceOperator::vY, i, j) -
                     vy_matrix_element(shape, i, j)) < 1e-10);
    }
  }
}

TEST_CASE("subspace operator identities by quadrature") {
  const CavityShape s13(1, 3, 1.0);
  for (const long long N : {112LL, 28LL}) {
    const auto cls = enumerate_class(s13, N);
    for (int i = 0; i < cls.size(); ++i) {
      for (int j = 0; j < cls.size(); ++j) {
        const double lam_j = x_eigenvalue(s13, cls.modes[j]);
        const double vx =
            quadrature_matrix_element(s13, SubspaceOperator::vX, cls.modes[i], cls.modes[j]);
        const double ux =
            quadrature_matrix_element(s13, SubspaceOperator::uX, cls.modes[i], cls.modes[j]);
        const double expect_vx = (i == j) ? s13.b / 2.0 * lam_j : 0.0;
        const double expect_ux = (i == j) ? s13.a / 2.0 * lam_j : 0.0;
        CHECK(std::abs(vx - expect_vx) < 1e-10);
        CHECK(std::abs(ux - expect_ux) < 1e-10);
      }
    }
  }

  SUBCASE("uY diagonal vanishes") {
    CHECK(std::abs(quadrature_matrix_element(s13, SubspaceOperator::uY, {3, 2}, {3, 2})) < 1e-12);
  }

  SUBCASE("Case1 class has U = V = 0") {
    const auto cls = enumerate_class(s13, 112);
    for (int i = 0; i < cls.size(); ++i) {
      for (int j = 0; j < cls.size(); ++j) {
        CHECK(std::abs(quadrature_matrix_element(s13, SubspaceOperator::uY, cls.modes[i],
                                                 cls.modes[j])) < 1e-10);
        CHECK(std::abs(quadrature_matrix_element(s13, SubspaceOperator::vY, cls.modes[i],
                                                 cls.modes[j])) < 1e-10);
      }
    }
  }

  SUBCASE("Case2 class: uY = (a/2) Y and vY = (b/2) Y") {
    const auto cls = enumerate_class(s13, 28);
    for (int i = 0; i < cls.size(); ++i) {
      for (int j = 0; j < cls.size(); ++j) {
        const double y =
            quadrature_matrix_element(s13, SubspaceOperator::Y, cls.modes[i], cls.modes[j]);
        CHECK(std::abs(quadrature_matrix_element(s13, SubspaceOperator::uY, cls.modes[i],
                                                 cls.modes[j]) -
                       s13.a / 2.0 * y) < 1e-10);
        CHECK(std::abs(quadrature_matrix_element(s13, SubspaceOperator::vY, cls.modes[i],
                                                 cls.modes[j]) -
                       s13.b / 2.0 * y) < 1e-10);
      }
    }
  }
}

TEST_CASE("weak-form quadrature confirms the operator-route H1") {
  const CavityShape s13(1, 3, 1.0);
  const DeformationParams p{0.0123, -0.0077};
  for (const long long N : {28LL, 112LL}) {
    const auto cls = enumerate_class(s13, N);
    const auto pm = build_perturbation_matrix(s13, cls);
    Eigen::MatrixXd H = build_h1(pm, p);
    H.diagonal().array() += uniform_shift_rate(pm, p);
    const Eigen::MatrixXd W = h1_weak_matrix(s13, cls, p);
    CHECK((H - W).cwiseAbs().maxCoeff() < 1e-10);
  }
  const CavityShape s14(1, 4, 1.0);
  const auto cls = enumerate_class(s14, 164);
  const auto pm = build_perturbation_matrix(s14, cls);
  Eigen::MatrixXd H = build_h1(pm, p);
  H.diagonal().array() += uniform_shift_rate(pm, p);
  CHECK((H - h1_weak_matrix(s14, cls, p)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("metric assembly") {
  const CavityShape sq(1, 1, 1.0);

  SUBCASE("undeformed: identity Jacobian, unit weight") {
    const auto m = assemble_metric(sq, {0.0, 0.0}, 20, 20);
    CHECK((m.sqrt_g.array() - 1.0).abs().maxCoeff() == 0.0);
    CHECK((m.J11.array() - 1.0).abs().maxCoeff() == 0.0);
    CHECK(m.J12.cwiseAbs().maxCoeff() == 0.0);
    CHECK((m.ginv11.array() - 1.0).abs().maxCoeff() == 0.0);
    CHECK(m.ginv12.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("closed-form value at the moved corner") {
    const auto m = assemble_metric(sq, {0.1, 0.0}, 20, 20);
    CHECK(m.sqrt_g(20, 20) == doctest::Approx(1.1).epsilon(1e-15));
    // det J = (1+alpha v)(1+beta u) - alpha beta u v at every node
    const auto m2 = assemble_metric(sq, {0.07, -0.04}, 20, 20);
    for (int j = 0; j <= 20; ++j) {
      for (int i = 0; i <= 20; ++i) {
        const double u = i / 20.0, v = j / 20.0;
        CHECK(m2.sqrt_g(i, j) ==
              doctest::Approx((1 + 0.07 * v) * (1 - 0.04 * u) + 0.07 * 0.04 * u * v)
                  .epsilon(1e-14));
      }
    }
  }

  SUBCASE("vanishing determinant on an edge is rejected") {
    CHECK_THROWS_AS(assemble_metric(sq, {-1.0, 0.0}, 20, 20), MappingNotInvertible);
  }
}

TEST_CASE("discrete operator is symmetric to machine precision") {
  const CavityShape s13(1, 3, 1.0);
  const auto metric = assemble_metric(s13, {0.03, -0.02}, 24, 20);
  const auto prob = discretize(metric);
  const Eigen::SparseMatrix<double> diff = prob.A - Eigen::SparseMatrix<double>(prob.A.transpose());
  CHECK(diff.coeffs().cwiseAbs().maxCoeff() == 0.0);
  CHECK(prob.B.minCoeff() > 0.0);
}

TEST_CASE("undeformed rectangle reproduces the separable discrete spectrum") {
  // For alpha = beta = 0 the scheme is (Ku x Mv + Mu x Kv) psi = lambda h^2 psi,
  // with exact discrete eigenvalues; the solver must hit them to solver tolerance.
  const CavityShape sq(1, 1, 1.0);
  const int n = 32;
  const auto metric = assemble_metric(sq, {0.0, 0.0}, n, n);
  const auto sol = solve_helmholtz(metric, 5);
  const auto discrete_1d = [&](int k) {
    const double th = k * kPi / n;
    const double stiff = (2.0 - 2.0 * std::cos(th)) * n * n;  // /h^2
    const double mass = (2.0 + std::cos(th)) / 3.0;
    return std::make_pair(stiff, mass);
  };
  std::vector<double> expect;
  for (int kn = 1; kn <= 3; ++kn) {
    for (int km = 1; km <= 3; ++km) {
      const auto [su, mu] = discrete_1d(kn);
      const auto [sv, mv] = discrete_1d(km);
      expect.push_back(su * mv + mu * sv);
    }
  }
  std::sort(expect.begin(), expect.end());
  for (int k = 0; k < 5; ++k) {
    CHECK(sol.eigenvalues[k] == doctest::Approx(expect[k]).epsilon(1e-9));
  }
}

TEST_CASE("eigenvectors are B-orthonormal and boundary values are zero") {
  const CavityShape sq(1, 1, 1.0);
  const auto metric = assemble_metric(sq, {0.05, 0.02}, 40, 40);
  const auto sol = solve_helmholtz(metric, 4);
  for (int k = 0; k < 4; ++k) {
    for (int l = 0; l <= k; ++l) {
      const double dot = sol.vectors.col(k).dot(sol.weight.cwiseProduct(sol.vectors.col(l)));
      CHECK(dot == doctest::Approx(k == l ? 1.0 : 0.0).epsilon(1e-8));
    }
  }
  const auto f = sol.grid_field(0, sq, {0.05, 0.02});
  CHECK(f.values.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.values.col(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.values.row(40).cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.plain_norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("repeated solves are bitwise identical") {
  const CavityShape s13(1, 3, 1.0);
  const auto metric = assemble_metric(s13, {0.02, -0.01}, 40, 32);
  const auto a = solve_helmholtz(metric, 3);
  const auto b = solve_helmholtz(metric, 3);
  for (int k = 0; k < 3; ++k) CHECK(a.eigenvalues[k] == b.eigenvalues[k]);
  CHECK((a.vectors - b.vectors).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("under-resolved requests are rejected") {
  const CavityShape sq(1, 1, 1.0);
  const auto metric = assemble_metric(sq, {0.0, 0.0}, 16, 16);
  CHECK_THROWS_AS(solve_helmholtz(metric, 100), DomainError);
  CHECK_THROWS_AS(solve_helmholtz(metric, 0), ConfigError);
}

TEST_CASE("convergence: eigenvalue error shrinks ~4x per refinement") {
  const CavityShape sq(1, 1, 1.0);
  const double exact = 2.0 * kPi * kPi;
  const auto e = [&](int n) {
    const auto sol = solve_helmholtz(assemble_metric(sq, {0.0, 0.0}, n, n), 1);
    return std::abs(sol.eigenvalues[0] - exact);
  };
  const double e50 = e(50), e100 = e(100);
  CHECK(e50 / e100 > 3.5);
  CHECK(e50 / e100 < 4.5);
  CHECK(e100 / exact < 5e-4);
}

TEST_CASE("degenerate triplet shows up as a cluster at the class eigenvalue") {
  const CavityShape s13(1, 3, 1.0);
  const auto cls = enumerate_class(s13, 112);
  const auto [nu, nv] = grid_intervals(s13, {120});
  const auto metric = assemble_metric(s13, {0.0, 0.0}, nu, nv);
  const auto sol = solve_near(metric, cls.eigenvalue * (1 - 3e-3), 6);
  int in_window = 0;
  for (const double ev : sol.eigenvalues) {
    if (std::abs(ev - cls.eigenvalue) < 1.8) ++in_window;
  }
  CHECK(in_window == 3);
}

TEST_CASE("splitting slopes match first-order theory") {
  const CavityShape s13(1, 3, 1.0);
  const std::vector<double> eps{4e-3, 2e-3, 1e-3};

  SUBCASE("Case1 N=112, alpha direction") {
    const auto cls = enumerate_class(s13, 112);
    const auto rep = splitting_slopes(s13, cls, {1.0, 0.0}, eps, {120});
    CHECK(rep.max_rel_mismatch < 0.02);
    // slopes are -b pi^2 n^2/a^2 per member: all negative (the domain grows)
    for (const auto& lvl : rep.oracle) CHECK(lvl.slope < 0.0);
    CHECK(rep.mean_oracle == doctest::Approx(rep.mean_predicted).epsilon(6e-3));
  }

  SUBCASE("zero direction is rejected") {
    const auto cls = enumerate_class(s13, 112);
    CHECK_THROWS_AS(splitting_slopes(s13, cls, {0.0, 0.0}, eps, {120}), ConfigError);
  }

  SUBCASE("absurd deformation scale fails as a domain error") {
    const auto cls = enumerate_class(s13, 112);
    CHECK_THROWS_AS(splitting_slopes(s13, cls, {1.0, 0.0}, {0.5}, {120}), DomainError);
  }
}

TEST_CASE("full-order mirror check: measured scaling of the partner deviation") {
  // The reflected-partner field deviation is first order in the deformation
  // (only the in-subspace block of H1 is mirror-related); the eigenvalue
  // asymmetry equals the uniform first-order rate 2 a b E0 beta' up to O(eps^2).
  const CavityShape s14(1, 4, 1.0);
  const auto cls = enumerate_class(s14, 164);
  REQUIRE(cls.label.kind == CaseKind::Case3);
  const double hat = 1.0 / std::sqrt(2.0);
  const auto rep = oracle_mirror_check(s14, cls, hat, hat, {4e-3, 2e-3}, {120});
  REQUIRE(rep.points.size() == 2);
  REQUIRE(rep.ratios.size() == 1);
  CHECK(rep.ratios[0] > 0.42);
  CHECK(rep.ratios[0] < 0.58);
  for (const auto& pt : rep.points) {
    const double predicted_asym = 2.0 * s14.a * s14.b * cls.eigenvalue * (pt.epsilon * hat);
    CHECK(pt.eigenvalue_asymmetry == doctest::Approx(predicted_asym).epsilon(0.03));
  }

  // axis-swapped Case4 twin reflects through P1 with identical scaling
  const CavityShape s41(4, 1, 2.0);
  const auto cls4 = enumerate_class(s41, 164);
  REQUIRE(cls4.label.kind == CaseKind::Case4);
  const auto rep4 = oracle_mirror_check(s41, cls4, hat, hat, {4e-3, 2e-3}, {100});
  REQUIRE(rep4.ratios.size() == 1);
  CHECK(rep4.ratios[0] > 0.42);
  CHECK(rep4.ratios[0] < 0.58);
  CHECK(rep4.points[0].deviation == doctest::Approx(rep.points[0].deviation).epsilon(0.05));
}
