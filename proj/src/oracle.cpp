#include "cavlab/oracle.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "cavlab/parallel.hpp"

namespace cavlab {

namespace {

constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Composite 16-point Gauss-Legendre quadrature
// ---------------------------------------------------------------------------

struct GaussRule {
  std::vector<double> x;  // positive abscissae on (-1, 1)
  std::vector<double> w;
};

// Newton iteration on P_n; n even so nodes come in symmetric pairs.
GaussRule make_gauss_rule(int n) {
  GaussRule rule;
  for (int k = 0; k < n / 2; ++k) {
    double x = std::cos(kPi * (k + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double p0 = 1.0, p1 = x;
    for (int j = 2; j <= n; ++j) {
      const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (x * p1 - p0) / (x * x - 1.0);
    rule.x.push_back(x);
    rule.w.push_back(2.0 / ((1.0 - x * x) * dp * dp));
  }
  return rule;
}

double quad1d(const std::function<double(double)>& f, double L, int panels) {
  static const GaussRule rule = make_gauss_rule(16);
  double acc = 0.0;
  const double w = L / panels;
  for (int p = 0; p < panels; ++p) {
    const double c = (p + 0.5) * w;
    for (size_t g = 0; g < rule.x.size(); ++g) {
      const double dx = 0.5 * w * rule.x[g];
      acc += 0.5 * w * rule.w[g] * (f(c + dx) + f(c - dx));
    }
  }
  return acc;
}

int panels_for(int n1, int n2) { return std::max(8, n1 + n2 + 4); }

// normalized sine basis on [0, L]
double sfn(int n, double L, double x) { return std::sqrt(2.0 / L) * std::sin(n * kPi * x / L); }
double dsfn(int n, double L, double x) {
  return std::sqrt(2.0 / L) * (n * kPi / L) * std::cos(n * kPi * x / L);
}
double ddsfn(int n, double L, double x) {
  const double k = n * kPi / L;
  return -k * k * sfn(n, L, x);
}

// 1D integrals over the basis, all by quadrature
double qI0(int n1, int n2, double L) {
  return quad1d([&](double x) { return sfn(n1, L, x) * sfn(n2, L, x); }, L, panels_for(n1, n2));
}
double qIx(int n1, int n2, double L) {
  return quad1d([&](double x) { return x * sfn(n1, L, x) * sfn(n2, L, x); }, L,
                panels_for(n1, n2));
}
double qID(int n1, int n2, double L) {
  return quad1d([&](double x) { return sfn(n1, L, x) * dsfn(n2, L, x); }, L, panels_for(n1, n2));
}
double qIxD(int n1, int n2, double L) {
  return quad1d([&](double x) { return x * sfn(n1, L, x) * dsfn(n2, L, x); }, L,
                panels_for(n1, n2));
}
double qI2(int n1, int n2, double L) {
  return quad1d([&](double x) { return sfn(n1, L, x) * ddsfn(n2, L, x); }, L,
                panels_for(n1, n2));
}
double qIx2(int n1, int n2, double L) {
  return quad1d([&](double x) { return x * sfn(n1, L, x) * ddsfn(n2, L, x); }, L,
                panels_for(n1, n2));
}
double qIdd(int n1, int n2, double L) {
  return quad1d([&](double x) { return dsfn(n1, L, x) * dsfn(n2, L, x); }, L,
                panels_for(n1, n2));
}
double qIxdd(int n1, int n2, double L) {
  return quad1d([&](double x) { return x * dsfn(n1, L, x) * dsfn(n2, L, x); }, L,
                panels_for(n1, n2));
}

}  // namespace

double quadrature_matrix_element(const CavityShape& shape, SubspaceOperator op,
                                 const ModeIndex& i, const ModeIndex& j) {
  const double a = shape.a, b = shape.b;
  switch (op) {
    case SubspaceOperator::X:  // dvv - duu
      return qI0(i.n, j.n, a) * qI2(i.m, j.m, b) - qI2(i.n, j.n, a) * qI0(i.m, j.m, b);
    case SubspaceOperator::Y:  // 2 du dv
      return 2.0 * qID(i.n, j.n, a) * qID(i.m, j.m, b);
    case SubspaceOperator::uY:
      return 2.0 * qIxD(i.n, j.n, a) * qID(i.m, j.m, b);
    case SubspaceOperator::vY:
      return 2.0 * qID(i.n, j.n, a) * qIxD(i.m, j.m, b);
    case SubspaceOperator::uX:
      return qIx(i.n, j.n, a) * qI2(i.m, j.m, b) - qIx2(i.n, j.n, a) * qI0(i.m, j.m, b);
    case SubspaceOperator::vX:
      return qI0(i.n, j.n, a) * qIx2(i.m, j.m, b) - qI2(i.n, j.n, a) * qIx(i.m, j.m, b);
  }
  throw ConfigError("quadrature_matrix_element: unknown operator");
}

Eigen::MatrixXd h1_weak_matrix(const CavityShape& shape, const DegenerateClass& cls,
                               const DeformationParams& params) {
  const int d = cls.size();
  const double a = shape.a, b = shape.b;
  const double al = params.alpha, be = params.beta;
  const double E0 = cls.eigenvalue;
  Eigen::MatrixXd M(d, d);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      const int ni = cls.modes[r].n, mi = cls.modes[r].m;
      const int nj = cls.modes[c].n, mj = cls.modes[c].m;
      // (-alpha v + beta u) phi_u phi_u
      double A1 = -al * qIdd(ni, nj, a) * qIx(mi, mj, b) + be * qIxdd(ni, nj, a) * qI0(mi, mj, b);
      // (alpha v - beta u) phi_v phi_v
      A1 += al * qI0(ni, nj, a) * qIxdd(mi, mj, b) - be * qIx(ni, nj, a) * qIdd(mi, mj, b);
      // -(alpha u + beta v)(phi_u phi_v + phi_v phi_u)
      A1 -= al * (qIxD(nj, ni, a) * qID(mi, mj, b) + qIxD(ni, nj, a) * qID(mj, mi, b));
      A1 -= be * (qID(nj, ni, a) * qIxD(mi, mj, b) + qID(ni, nj, a) * qIxD(mj, mi, b));
      const double B1 = al * qI0(ni, nj, a) * qIx(mi, mj, b) + be * qIx(ni, nj, a) * qI0(mi, mj, b);
      M(r, c) = A1 - E0 * B1;
    }
  }
  return M;
}

// ---------------------------------------------------------------------------
// Metric and discretization
// ---------------------------------------------------------------------------

MetricField assemble_metric(const CavityShape& shape, const DeformationParams& params, int nu,
                            int nv) {
  if (nu < 16 || nv < 16) throw ConfigError("assemble_metric: need at least 17 nodes per side");
  MetricField mf;
  mf.shape = shape;
  mf.params = params;
  mf.nu = nu;
  mf.nv = nv;
  const auto sz = [&](Eigen::MatrixXd& m) { m.resize(nu + 1, nv + 1); };
  sz(mf.sqrt_g);
  sz(mf.J11);
  sz(mf.J12);
  sz(mf.J21);
  sz(mf.J22);
  sz(mf.ginv11);
  sz(mf.ginv12);
  sz(mf.ginv22);

  const double al = params.alpha, be = params.beta;
  for (int j = 0; j <= nv; ++j) {
    const double v = shape.b * j / nv;
    for (int i = 0; i <= nu; ++i) {
      const double u = shape.a * i / nu;
      const double j11 = 1.0 + al * v, j12 = al * u;
      const double j21 = be * v, j22 = 1.0 + be * u;
      const double det = j11 * j22 - j12 * j21;  // = 1 + alpha v + beta u
      if (det <= 0.0) {
        throw MappingNotInvertible("assemble_metric: det J <= 0 at u=" + std::to_string(u) +
                                   " v=" + std::to_string(v));
      }
      mf.J11(i, j) = j11;
      mf.J12(i, j) = j12;
      mf.J21(i, j) = j21;
      mf.J22(i, j) = j22;
      mf.sqrt_g(i, j) = det;
      const double inv_det2 = 1.0 / (det * det);
      mf.ginv11(i, j) = (j22 * j22 + j12 * j12) * inv_det2;
      mf.ginv12(i, j) = -(j21 * j22 + j11 * j12) * inv_det2;
      mf.ginv22(i, j) = (j21 * j21 + j11 * j11) * inv_det2;
    }
  }
  return mf;
}

namespace {

// sqrt_g * g^inv at an arbitrary point, from the closed-form map
void metric_coeff(const DeformationParams& p, double u, double v, double& c11, double& c12,
                  double& c22) {
  const double j11 = 1.0 + p.alpha * v, j12 = p.alpha * u;
  const double j21 = p.beta * v, j22 = 1.0 + p.beta * u;
  const double det = j11 * j22 - j12 * j21;
  c11 = (j22 * j22 + j12 * j12) / det;
  c12 = -(j21 * j22 + j11 * j12) / det;
  c22 = (j21 * j21 + j11 * j11) / det;
}

}  // namespace

DiscreteProblem discretize(const MetricField& metric) {
  const int nu = metric.nu, nv = metric.nv;
  const int ni = nu - 1, nj = nv - 1;  // interior counts
  const int N = ni * nj;
  const double hu = metric.hu(), hv = metric.hv();
  const auto id = [&](int i, int j) { return (i - 1) + (j - 1) * ni; };

  DiscreteProblem prob;
  prob.nu = nu;
  prob.nv = nv;
  prob.B.resize(N);
  for (int j = 1; j < nv; ++j) {
    for (int i = 1; i < nu; ++i) prob.B[id(i, j)] = metric.sqrt_g(i, j) * hu * hv;
  }

  // Cell-based conservative assembly: bilinear gradients, 2x2 Gauss points.
  const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(N) * 9);

  double K[4][4];
  for (int cj = 0; cj < nv; ++cj) {
    for (int ci = 0; ci < nu; ++ci) {
      for (auto& row : K) row[0] = row[1] = row[2] = row[3] = 0.0;
      for (int gy = 0; gy < 2; ++gy) {
        for (int gx = 0; gx < 2; ++gx) {
          const double xi = gp[gx], eta = gp[gy];
          const double u = (ci + xi) * hu, v = (cj + eta) * hv;
          double c11, c12, c22;
          metric_coeff(metric.params, u, v, c11, c12, c22);
          const double w = 0.25 * hu * hv;
          // gradients of the four bilinear shape functions [00,10,01,11]
          const double gu[4] = {-(1 - eta) / hu, (1 - eta) / hu, -eta / hu, eta / hu};
          const double gv[4] = {-(1 - xi) / hv, -xi / hv, (1 - xi) / hv, xi / hv};
          for (int r = 0; r < 4; ++r) {
            for (int c = r; c < 4; ++c) {
              K[r][c] += w * (gu[r] * (c11 * gu[c] + c12 * gv[c]) +
                              gv[r] * (c12 * gu[c] + c22 * gv[c]));
            }
          }
        }
      }
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < r; ++c) K[r][c] = K[c][r];
      }

      const int node_i[4] = {ci, ci + 1, ci, ci + 1};
      const int node_j[4] = {cj, cj, cj + 1, cj + 1};
      for (int r = 0; r < 4; ++r) {
        const int ri = node_i[r], rj = node_j[r];
        if (ri == 0 || ri == nu || rj == 0 || rj == nv) continue;
        for (int c = 0; c < 4; ++c) {
          const int qi = node_i[c], qj = node_j[c];
          if (qi == 0 || qi == nu || qj == 0 || qj == nv) continue;
          trips.emplace_back(id(ri, rj), id(qi, qj), K[r][c]);
        }
      }
    }
  }

  prob.A.resize(N, N);
  prob.A.setFromTriplets(trips.begin(), trips.end());
  prob.A.makeCompressed();
  return prob;
}

// ---------------------------------------------------------------------------
// Shift-invert subspace iteration for A psi = lambda B psi, B diagonal
// ---------------------------------------------------------------------------

namespace {

struct EigsOut {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  int iterations = 0;
};

double bdot(const Eigen::VectorXd& Bdiag, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return x.dot(Bdiag.cwiseProduct(y));
}

void b_orthonormalize(const Eigen::VectorXd& Bdiag, Eigen::MatrixXd& V, std::mt19937& gen) {
  std::normal_distribution<double> dist;
  for (int c = 0; c < V.cols(); ++c) {
    for (int attempt = 0; attempt < 4; ++attempt) {
      for (int pass = 0; pass < 2; ++pass) {
        for (int k = 0; k < c; ++k) {
          const double proj = bdot(Bdiag, V.col(k), V.col(c));
          V.col(c) -= proj * V.col(k);
        }
      }
      const double nrm = std::sqrt(bdot(Bdiag, V.col(c), V.col(c)));
      if (nrm > 1e-12) {
        V.col(c) /= nrm;
        break;
      }
      // column collapsed onto the previous ones; replace deterministically
      for (int r = 0; r < V.rows(); ++r) V(r, c) = dist(gen);
    }
  }
}

EigsOut eigs_shift_invert(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& Bdiag,
                          int nev, double sigma, int max_iter = 400, double tol = 1e-9) {
  const int N = static_cast<int>(A.rows());
  if (nev < 1) throw ConfigError("eigensolver: nev must be >= 1");
  if (nev > N) throw ConfigError("eigensolver: nev exceeds problem size");
  const int m = std::min(N, nev + std::max(8, nev / 2));

  // Factor K = A - sigma B, nudging sigma off an exact eigenvalue if needed.
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  const bool spd = (sigma == 0.0);
  double shift = sigma;
  bool factored = false;
  for (int attempt = 0; attempt < 4 && !factored; ++attempt) {
    Eigen::SparseMatrix<double> K = A;
    if (shift != 0.0) {
      for (int i = 0; i < N; ++i) K.coeffRef(i, i) -= shift * Bdiag[i];
    }
    if (spd) {
      ldlt.compute(K);
      factored = (ldlt.info() == Eigen::Success);
    } else {
      lu.compute(K);
      factored = (lu.info() == Eigen::Success);
    }
    if (!factored) shift += std::max(1e-8, 2e-4 * std::abs(shift));
  }
  if (!factored) throw SolverFailure("eigensolver: factorization of A - sigma B failed");
  const auto solve = [&](const Eigen::MatrixXd& rhs) {
    return spd ? Eigen::MatrixXd(ldlt.solve(rhs)) : Eigen::MatrixXd(lu.solve(rhs));
  };

  std::mt19937 gen(0xC0FFEEu);
  std::normal_distribution<double> dist;
  Eigen::MatrixXd V(N, m);
  for (int c = 0; c < m; ++c) {
    for (int r = 0; r < N; ++r) V(r, c) = dist(gen);
  }
  b_orthonormalize(Bdiag, V, gen);

  Eigen::VectorXd theta;
  std::vector<int> order(m);
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::MatrixXd W = solve(Bdiag.asDiagonal() * V);
    b_orthonormalize(Bdiag, W, gen);
    const Eigen::MatrixXd AW = A * W;
    Eigen::MatrixXd T = W.transpose() * AW;
    T = 0.5 * (T + T.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    if (es.info() != Eigen::Success) throw SolverFailure("eigensolver: Rayleigh-Ritz failed");
    theta = es.eigenvalues();
    V = W * es.eigenvectors();
    const Eigen::MatrixXd AV = AW * es.eigenvectors();

    for (int k = 0; k < m; ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](int x, int y) {
      return std::abs(theta[x] - sigma) < std::abs(theta[y] - sigma);
    });

    bool done = true;
    for (int k = 0; k < nev && done; ++k) {
      const int c = order[k];
      const double res =
          (AV.col(c) - theta[c] * Bdiag.cwiseProduct(V.col(c))).norm() /
          std::max(1.0, std::abs(theta[c]));
      done = (res < tol);
    }
    if (done) {
      std::vector<int> keep(order.begin(), order.begin() + nev);
      std::sort(keep.begin(), keep.end(),
                [&](int x, int y) { return theta[x] < theta[y]; });
      EigsOut out;
      out.values.resize(nev);
      out.vectors.resize(N, nev);
      for (int k = 0; k < nev; ++k) {
        out.values[k] = theta[keep[k]];
        out.vectors.col(k) = V.col(keep[k]);
        const double nrm = std::sqrt(bdot(Bdiag, out.vectors.col(k), out.vectors.col(k)));
        out.vectors.col(k) /= nrm;
      }
      out.iterations = it;
      return out;
    }
  }
  throw SolverFailure("eigensolver: no convergence within iteration budget");
}

}  // namespace

GridField DiscreteEigensolution::grid_field(int k, const CavityShape& shape,
                                            const DeformationParams& params) const {
  if (k < 0 || k >= static_cast<int>(eigenvalues.size())) {
    throw ConfigError("grid_field: level index out of range");
  }
  GridField f;
  f.shape = shape;
  f.params = params;
  f.nu = nu;
  f.nv = nv;
  f.values = Eigen::MatrixXd::Zero(nu + 1, nv + 1);
  const int ni = nu - 1;
  for (int j = 1; j < nv; ++j) {
    for (int i = 1; i < nu; ++i) f.values(i, j) = vectors((i - 1) + (j - 1) * ni, k);
  }
  f.norm = f.plain_norm();
  if (f.norm > 0.0) f.values /= f.norm;
  return f;
}

namespace {

DiscreteEigensolution run_eigs(const MetricField& metric, double sigma, int nev) {
  const DiscreteProblem prob = discretize(metric);
  const auto out = eigs_shift_invert(prob.A, prob.B, nev, sigma);
  DiscreteEigensolution sol;
  sol.eigenvalues.assign(out.values.data(), out.values.data() + out.values.size());
  sol.vectors = out.vectors;
  sol.nu = metric.nu;
  sol.nv = metric.nv;
  sol.weight = prob.B;
  sol.iterations = out.iterations;
  return sol;
}

}  // namespace

DiscreteEigensolution solve_helmholtz(const MetricField& metric, int k) {
  if (k < 1) throw ConfigError("solve_helmholtz: k must be >= 1");
  const int interior = (metric.nu - 1) * (metric.nv - 1);
  if (k > interior / 8) {
    throw DomainError("solve_helmholtz: requested modes under-resolved on this grid");
  }
  return run_eigs(metric, 0.0, k);
}

DiscreteEigensolution solve_near(const MetricField& metric, double sigma, int nev) {
  if (nev < 1) throw ConfigError("solve_near: nev must be >= 1");
  return run_eigs(metric, sigma, nev);
}

std::pair<int, int> grid_intervals(const CavityShape& shape, const GridSpec& spec) {
  const int base = spec.base_intervals;
  if (base < 16) throw ConfigError("grid: base interval count too small");
  int nu, nv;
  if (shape.a >= shape.b) {
    nv = base;
    nu = std::max(base, static_cast<int>(std::lround(base * shape.a / shape.b)));
  } else {
    nu = base;
    nv = std::max(base, static_cast<int>(std::lround(base * shape.b / shape.a)));
  }
  return {nu, nv};
}

// ---------------------------------------------------------------------------
// Cluster bookkeeping shared by slopes and the mirror experiment
// ---------------------------------------------------------------------------

namespace {

// Interior-node samples of the class members, B-normalized.
std::vector<Eigen::VectorXd> member_fields(const CavityShape& shape, const DegenerateClass& cls,
                                           const Eigen::VectorXd& Bdiag, int nu, int nv) {
  std::vector<Eigen::VectorXd> out;
  const int ni = nu - 1;
  for (const auto& mode : cls.modes) {
    const Eigen::MatrixXd vals = sample_basis_mode(shape, mode, nu, nv);
    Eigen::VectorXd vec(ni * (nv - 1));
    for (int j = 1; j < nv; ++j) {
      for (int i = 1; i < nu; ++i) vec[(i - 1) + (j - 1) * ni] = vals(i, j);
    }
    vec /= std::sqrt(bdot(Bdiag, vec, vec));
    out.push_back(std::move(vec));
  }
  return out;
}

struct Cluster {
  std::vector<int> levels;  // indices into the eigensolution, one per member slot
  Eigen::MatrixXd coords;   // coords(l, i) = <psi_level_l, B phi_i>
};

/// Pick the d eigenpairs spanning the class subspace by projection weight.
Cluster select_cluster(const DiscreteEigensolution& sol,
                       const std::vector<Eigen::VectorXd>& members) {
  const int d = static_cast<int>(members.size());
  const int nev = static_cast<int>(sol.eigenvalues.size());
  Eigen::MatrixXd ov(nev, d);
  for (int l = 0; l < nev; ++l) {
    for (int i = 0; i < d; ++i) {
      ov(l, i) = bdot(sol.weight, sol.vectors.col(l), members[i]);
    }
  }
  std::vector<std::pair<double, int>> weights;
  for (int l = 0; l < nev; ++l) weights.push_back({ov.row(l).squaredNorm(), l});
  std::sort(weights.begin(), weights.end(), std::greater<>());

  if (nev < d) throw ClusterAmbiguous("cluster: fewer eigenpairs than class members");
  for (int k = 0; k < d; ++k) {
    if (weights[k].first < 0.8) {
      throw ClusterAmbiguous("cluster: class member weight " +
                             std::to_string(weights[k].first) + " too low; refine grid");
    }
  }
  if (nev > d && weights[d].first > 0.3) {
    throw ClusterAmbiguous("cluster: extra level carries weight " +
                           std::to_string(weights[d].first) + "; cluster not isolated");
  }

  Cluster cl;
  for (int k = 0; k < d; ++k) cl.levels.push_back(weights[k].second);
  std::sort(cl.levels.begin(), cl.levels.end());
  cl.coords.resize(d, d);
  for (int k = 0; k < d; ++k) cl.coords.row(k) = ov.row(cl.levels[k]);
  return cl;
}

/// Greedy unique assignment of cluster levels to target coordinate vectors,
/// by descending |overlap|. targets columns = d unit vectors in member space.
std::vector<int> match_levels(const Cluster& cl, const Eigen::MatrixXd& targets,
                              double floor) {
  const int d = static_cast<int>(cl.levels.size());
  Eigen::MatrixXd ov = cl.coords * targets;  // ov(l, k) = <psi_l, w_k>
  std::vector<int> match(d, -1);
  std::vector<bool> used(d, false);
  for (int pick = 0; pick < d; ++pick) {
    int bl = -1, bk = -1;
    double best = -1.0;
    for (int l = 0; l < d; ++l) {
      for (int k = 0; k < d; ++k) {
        if (match[k] >= 0 || used[l]) continue;
        if (std::abs(ov(l, k)) > best) {
          best = std::abs(ov(l, k));
          bl = l;
          bk = k;
        }
      }
    }
    if (best < floor) {
      throw ClusterAmbiguous("cluster: level-to-theory match overlap " + std::to_string(best) +
                             " below floor");
    }
    match[bk] = bl;
    used[bl] = true;
  }
  return match;
}

double default_sigma(const DegenerateClass& cls) { return cls.eigenvalue * (1.0 - 3e-3); }

}  // namespace

SlopeReport splitting_slopes(const CavityShape& shape, const DegenerateClass& cls,
                             const DeformationParams& direction,
                             const std::vector<double>& epsilons, const GridSpec& grid) {
  const double dn = std::hypot(direction.alpha, direction.beta);
  if (dn <= 0.0) throw ConfigError("splitting_slopes: zero direction");
  const DeformationParams dir{direction.alpha / dn, direction.beta / dn};
  if (epsilons.empty()) throw ConfigError("splitting_slopes: empty epsilon ladder");
  for (size_t i = 0; i + 1 < epsilons.size(); ++i) {
    if (!(epsilons[i] > epsilons[i + 1]) || !(epsilons[i + 1] > 0.0)) {
      throw ConfigError("splitting_slopes: epsilons must be positive and descending");
    }
  }

  const int d = cls.size();
  if (d < 2) throw ClassTooSmall("splitting_slopes: class has fewer than 2 members");
  const auto pm = build_perturbation_matrix(shape, cls);
  const auto levels_dir = split_levels(pm, dir);  // shifts per unit epsilon

  const auto [nu, nv] = grid_intervals(shape, grid);
  const double sigma = default_sigma(cls);
  const int nev = d + 4;

  // Unperturbed cluster: reference eigenvalues in the member basis.
  const auto metric0 = assemble_metric(shape, {0.0, 0.0}, nu, nv);
  const auto sol0 = solve_near(metric0, sigma, nev);
  const auto members0 = member_fields(shape, cls, sol0.weight, nu, nv);
  const auto cl0 = select_cluster(sol0, members0);
  Eigen::VectorXd lam0(d);
  for (int k = 0; k < d; ++k) lam0[k] = sol0.eigenvalues[cl0.levels[k]];
  // H0 restricted to the member basis: coords^T diag(lam0) coords
  const Eigen::MatrixXd H0sub = cl0.coords.transpose() * lam0.asDiagonal() * cl0.coords;

  // Theory levels as member-space targets.
  Eigen::MatrixXd targets(d, d);
  for (int k = 0; k < d; ++k) targets.col(k) = levels_dir[k].vector;

  const int ne = static_cast<int>(epsilons.size());
  Eigen::MatrixXd shifts(ne, d);
  parallel_for(ne, [&](int e) {
    const DeformationParams p{epsilons[e] * dir.alpha, epsilons[e] * dir.beta};
    const auto metric = assemble_metric(shape, p, nu, nv);
    const auto sol = solve_near(metric, sigma, nev);
    const auto members = member_fields(shape, cls, sol.weight, nu, nv);
    const auto cl = select_cluster(sol, members);
    const auto match = match_levels(cl, targets, 0.6);
    for (int k = 0; k < d; ++k) {
      const double ref = levels_dir[k].vector.dot(H0sub * levels_dir[k].vector);
      shifts(e, k) = sol.eigenvalues[cl.levels[match[k]]] - ref;
    }
  });

  // Fit shift = s*eps + c*eps^2 (least squares over the ladder); the error
  // estimate drops the coarsest point.
  const auto fit_slope = [&](const Eigen::VectorXd& s, int skip_coarsest) {
    const int n0 = skip_coarsest;
    const int n = ne - n0;
    if (n == 1) return s[n0] / epsilons[n0];
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int e = 0; e < n; ++e) {
      X(e, 0) = epsilons[e + n0];
      X(e, 1) = epsilons[e + n0] * epsilons[e + n0];
      y[e] = s[e + n0];
    }
    const Eigen::Vector2d coef = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    return coef[0];
  };

  SlopeReport report;
  report.oracle.resize(d);
  for (int k = 0; k < d; ++k) {
    const Eigen::VectorXd sk = shifts.col(k);
    const double s_all = fit_slope(sk, 0);
    const double s_fine = (ne >= 3) ? fit_slope(sk, 1) : s_all;
    report.oracle[k].slope = s_all;
    report.oracle[k].error = std::abs(s_all - s_fine);
    report.oracle[k].reference = levels_dir[k].vector.dot(H0sub * levels_dir[k].vector);
    report.predicted.push_back(levels_dir[k].shift);
  }
  const auto [pmin, pmax] =
      std::minmax_element(report.predicted.begin(), report.predicted.end());
  report.spread = *pmax - *pmin;
  for (int k = 0; k < d; ++k) {
    report.max_rel_mismatch =
        std::max(report.max_rel_mismatch,
                 std::abs(report.oracle[k].slope - report.predicted[k]) / report.spread);
    report.mean_oracle += report.oracle[k].slope / d;
    report.mean_predicted += report.predicted[k] / d;
  }
  return report;
}

MirrorCheckReport oracle_mirror_check(const CavityShape& shape, const DegenerateClass& cls,
                                      double alpha_prime_hat, double beta_prime_hat,
                                      const std::vector<double>& epsilons,
                                      const GridSpec& grid) {
  const CaseKind kind = cls.label.kind;
  if (kind != CaseKind::Case2 && kind != CaseKind::Case3 && kind != CaseKind::Case4) {
    throw NoSymmetry("oracle_mirror_check: class must be Case2/3/4");
  }
  const int d = cls.size();
  const auto [nu, nv] = grid_intervals(shape, grid);
  const double sigma = default_sigma(cls);
  const int nev = d + 4;

  RotatedParams probe{alpha_prime_hat, beta_prime_hat, kind};
  const MirrorOp op_pred = predict_partner(cls, probe).second;
  const MirrorOp op = (op_pred == MirrorOp::P1P2) ? MirrorOp::P1 : op_pred;

  MirrorCheckReport report;
  report.points.resize(epsilons.size());
  parallel_for(static_cast<int>(epsilons.size()), [&](int idx) {
    const double eps = epsilons[idx];
    const RotatedParams rot{eps * alpha_prime_hat, eps * beta_prime_hat, kind};
    const auto [rot_partner, op2] = predict_partner(cls, rot);
    (void)op2;
    const DeformationParams p = rotated_to_raw(shape, rot);
    const DeformationParams pp = rotated_to_raw(shape, rot_partner);

    const auto metric_p = assemble_metric(shape, p, nu, nv);
    const auto metric_pp = assemble_metric(shape, pp, nu, nv);
    const auto sol_p = solve_near(metric_p, sigma, nev);
    const auto sol_pp = solve_near(metric_pp, sigma, nev);
    const auto members_p = member_fields(shape, cls, sol_p.weight, nu, nv);
    const auto members_pp = member_fields(shape, cls, sol_pp.weight, nu, nv);
    const auto cl_p = select_cluster(sol_p, members_p);
    const auto cl_pp = select_cluster(sol_pp, members_pp);

    MirrorCheckPoint point;
    point.epsilon = eps;
    std::vector<bool> used(d, false);
    for (int k = 0; k < d; ++k) {
      const GridField f_p = sol_p.grid_field(cl_p.levels[k], shape, p);
      const GridField f_p_ref = apply_mirror(f_p, op);
      // match against the partner cluster by reflected overlap
      int best = -1;
      double best_ov = -1.0;
      for (int l = 0; l < d; ++l) {
        if (used[l]) continue;
        const GridField f_pp = sol_pp.grid_field(cl_pp.levels[l], shape, pp);
        const double ov = std::abs((f_p_ref.values.array() * f_pp.values.array()).sum());
        if (ov > best_ov) {
          best_ov = ov;
          best = l;
        }
      }
      used[best] = true;
      const GridField f_pp = sol_pp.grid_field(cl_pp.levels[best], shape, pp);
      const auto score = symmetry_score(f_p_ref, f_pp);
      point.deviation = std::max(point.deviation, score.deviation);
      point.eigenvalue_asymmetry =
          std::max(point.eigenvalue_asymmetry,
                   std::abs(sol_p.eigenvalues[cl_p.levels[k]] -
                            sol_pp.eigenvalues[cl_pp.levels[best]]));
    }
    report.points[idx] = point;
  });

  for (size_t i = 0; i + 1 < report.points.size(); ++i) {
    const auto& coarse = report.points[i];
    const auto& fine = report.points[i + 1];
    if (std::abs(coarse.epsilon - 2.0 * fine.epsilon) < 1e-12 && coarse.deviation > 0.0) {
      report.ratios.push_back(fine.deviation / coarse.deviation);
    }
  }
  return report;
}

}  // namespace cavlab
