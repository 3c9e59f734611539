#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <utility>
#include <vector>

#include "cavlab/field.hpp"
#include "cavlab/perturb.hpp"
#include "cavlab/spectrum.hpp"

namespace cavlab {

// ---------------------------------------------------------------------------
// Quadrature cross-checks (independent of the closed forms in perturb)
// ---------------------------------------------------------------------------

/// Differential operators on the reference rectangle. X is normalized so
/// that X|n,m> = x_eigenvalue * |n,m> (i.e. dvv - duu); Y = 2 du dv.
enum class SubspaceOperator { X, Y, uY, vY, uX, vX };

/// High-order composite Gauss quadrature of <i| Op |j>; absolute error well
/// below 1e-10 for the mode numbers used here.
double quadrature_matrix_element(const CavityShape& shape, SubspaceOperator op,
                                 const ModeIndex& i, const ModeIndex& j);

/// First-order perturbation matrix over the class computed from the weak
/// form of the curvilinear Laplacian: A1 - E0*B1 with
///   A1_ij = int grad(phi_i)^T d(sqrt_g g^inv) grad(phi_j),
///   B1_ij = int (alpha v + beta u) phi_i phi_j,
/// everything by quadrature. Independent derivation route for build_h1 +
/// uniform_shift_rate.
Eigen::MatrixXd h1_weak_matrix(const CavityShape& shape, const DegenerateClass& cls,
                               const DeformationParams& params);

// ---------------------------------------------------------------------------
// Exact curvilinear metric and the discrete Helmholtz problem
// ---------------------------------------------------------------------------

/// Nodal metric data of the map x = u(1+alpha v), y = v(1+beta u) on a
/// uniform (nu x nv)-interval lattice over [0,a] x [0,b].
/// sqrt_g = det J = (1+alpha v)(1+beta u) - alpha beta u v = 1 + alpha v + beta u.
struct MetricField {
  CavityShape shape{1, 1, 1.0};
  DeformationParams params;
  int nu = 0;
  int nv = 0;
  Eigen::MatrixXd sqrt_g;                      // (nu+1) x (nv+1)
  Eigen::MatrixXd J11, J12, J21, J22;          // nodal Jacobian
  Eigen::MatrixXd ginv11, ginv12, ginv22;      // nodal inverse metric

  double hu() const { return shape.a / nu; }
  double hv() const { return shape.b / nv; }
};

/// Throws MappingNotInvertible if det J <= 0 anywhere (det is linear in
/// (u,v), so nodal positivity is equivalent to positivity on the rectangle).
MetricField assemble_metric(const CavityShape& shape, const DeformationParams& params,
                            int nu, int nv);

/// Symmetric generalized discrete problem A psi = lambda B psi: A is the
/// conservative cell-based second-order discretization of
/// -d_mu(sqrt_g g^{mu nu} d_nu .) with Dirichlet boundary, B = diag(sqrt_g h^2).
struct DiscreteProblem {
  Eigen::SparseMatrix<double> A;  // interior x interior, symmetric
  Eigen::VectorXd B;              // diagonal weight sqrt_g * hu * hv
  int nu = 0;
  int nv = 0;
};

DiscreteProblem discretize(const MetricField& metric);

struct DiscreteEigensolution {
  std::vector<double> eigenvalues;  // ascending
  Eigen::MatrixXd vectors;          // interior values, B-orthonormal columns
  int nu = 0;
  int nv = 0;
  Eigen::VectorXd weight;           // per-interior-node sqrt_g * hu * hv
  int iterations = 0;

  /// Embed eigenvector k into a boundary-inclusive GridField (plain-normalized).
  GridField grid_field(int k, const CavityShape& shape, const DeformationParams& params) const;
};

/// Lowest k eigenpairs (shift-invert subspace iteration at sigma = 0).
DiscreteEigensolution solve_helmholtz(const MetricField& metric, int k);

/// nev eigenpairs nearest sigma (returned ascending).
DiscreteEigensolution solve_near(const MetricField& metric, double sigma, int nev);

/// Grid sizing: the shorter side gets `base` intervals, the other side is
/// scaled to keep the spacing (nearly) isotropic.
struct GridSpec {
  int base_intervals = 200;
};

std::pair<int, int> grid_intervals(const CavityShape& shape, const GridSpec& spec);

// ---------------------------------------------------------------------------
// First-order splitting slopes measured at full order
// ---------------------------------------------------------------------------

struct SlopeLevel {
  double slope = 0.0;        // d(shift)/d(eps), Richardson-extrapolated
  double error = 0.0;        // spread between the two Richardson estimates
  double reference = 0.0;    // discrete unperturbed eigenvalue of this level
};

struct SlopeReport {
  std::vector<SlopeLevel> oracle;       // per split level (ascending shift)
  std::vector<double> predicted;        // split_levels shifts per unit eps
  double spread = 0.0;                  // max - min of predicted slopes
  double max_rel_mismatch = 0.0;        // max_k |oracle-predicted| / spread
  double mean_oracle = 0.0;
  double mean_predicted = 0.0;
};

/// Measure per-level eigenvalue slopes of the class cluster along a unit
/// direction in (alpha, beta), over a descending epsilon ladder, matching
/// perturbed levels to first-order eigenvectors by subspace overlap.
SlopeReport splitting_slopes(const CavityShape& shape, const DegenerateClass& cls,
                             const DeformationParams& direction,
                             const std::vector<double>& epsilons, const GridSpec& grid = {});

// ---------------------------------------------------------------------------
// Full-order mirror experiment
// ---------------------------------------------------------------------------

struct MirrorCheckPoint {
  double epsilon = 0.0;
  double deviation = 0.0;             // max over levels, after reflection
  double eigenvalue_asymmetry = 0.0;  // max |lambda(p) - lambda(p')| over levels
};

struct MirrorCheckReport {
  std::vector<MirrorCheckPoint> points;  // per epsilon, descending
  std::vector<double> ratios;            // deviation(eps)/deviation(2 eps) per halving
};

/// Solve the full Helmholtz problem at rotated parameters eps*(a'_hat, b'_hat)
/// and at the predicted partner, reflect node-to-node, and record the field
/// deviation per epsilon. Class must be Case2/3/4.
MirrorCheckReport oracle_mirror_check(const CavityShape& shape, const DegenerateClass& cls,
                                      double alpha_prime_hat, double beta_prime_hat,
                                      const std::vector<double>& epsilons,
                                      const GridSpec& grid = {});

}  // namespace cavlab
