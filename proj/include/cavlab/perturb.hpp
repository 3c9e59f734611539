#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "cavlab/spectrum.hpp"

namespace cavlab {

/// Corner displacement is (dx, dy) = a*b*(alpha, beta).
struct DeformationParams {
  double alpha = 0.0;
  double beta = 0.0;
};

enum class MirrorOp { P1, P2, P1P2 };
std::string to_string(MirrorOp op);

/// Symmetry-adapted coordinates in deformation space. The raw map depends on
/// the class case:
///   Case2: alpha = b a' + a b',  beta = -a a' + b b'
///   Case3: alpha = a b',         beta =  a' + b b'
///   Case4: alpha = a' + a b',    beta =  b b'
/// Case4 is Case3 with the two axes' roles exchanged.
struct RotatedParams {
  double alpha_prime = 0.0;
  double beta_prime = 0.0;
  CaseKind case_kind = CaseKind::Case2;
};

DeformationParams rotated_to_raw(const CavityShape& shape, const RotatedParams& rot);

/// X-eigenvalue of a basis mode, lambda = pi^2 (n^2/a^2 - m^2/b^2).
/// Throughout this library X denotes the operator normalized so that
/// X|n,m> = lambda |n,m> (as a differential operator, dvv - duu).
double x_eigenvalue(const CavityShape& shape, const ModeIndex& mode);

/// <i| u Y |j> with Y = 2 du dv, closed form. Vanishes for m_i + m_j even.
double uy_matrix_element(const CavityShape& shape, const ModeIndex& i, const ModeIndex& j);

/// <i| v Y |j>, closed form. Vanishes for n_i + n_j even.
double vy_matrix_element(const CavityShape& shape, const ModeIndex& i, const ModeIndex& j);

// Closed-form 1D integrals over the normalized sine basis on [0, L],
// s_n(x) = sqrt(2/L) sin(n pi x / L). Exposed for cross-checks.
double sine_overlap_x(int n1, int n2, double L);        // <s_n1| x |s_n2>
double sine_overlap_ddx(int n1, int n2, double L);      // <s_n1| d/dx |s_n2>
double sine_overlap_x_ddx(int n1, int n2, double L);    // <s_n1| x d/dx |s_n2>

/// First-order perturbation data of a degenerate class. H1 = alpha*F + beta*G
/// acts in the span of the class members (index order = class order).
///
/// F and G are the traceless splitting generators
///     F = -(b/2) Lambda + U,   G = +(a/2) Lambda + V,
/// with Lambda = diag(x_eigenvalue) and U, V the uY / vY matrices. The full
/// first-order shift additionally contains the class-uniform rate
/// -E0 (alpha b + beta a)/2 from the area change of the domain; it commutes
/// with everything and is exposed separately (uniform_shift_rate).
struct PerturbationMatrix {
  CavityShape shape;
  DegenerateClass cls;
  Eigen::VectorXd lambda;  // X-eigenvalues per member
  Eigen::MatrixXd U;       // <i|uY|j>
  Eigen::MatrixXd V;       // <i|vY|j>
  Eigen::MatrixXd F;       // -(b/2) Lambda + U
  Eigen::MatrixXd G;       // +(a/2) Lambda + V
  double E0 = 0.0;         // unperturbed class eigenvalue

  int size() const { return static_cast<int>(lambda.size()); }
};

PerturbationMatrix build_perturbation_matrix(const CavityShape& shape,
                                             const DegenerateClass& cls);

/// Diagonal +-1 representations of the two mirrors on the class.
struct ParityRep {
  Eigen::VectorXd D1;
  Eigen::VectorXd D2;
};

ParityRep parity_rep(const DegenerateClass& cls);

/// alpha*F + beta*G, symmetrized; throws AsymmetryTooLarge if the assembled
/// matrix is not symmetric to 1e-8 relative (a matrix-element bug).
Eigen::MatrixXd build_h1(const PerturbationMatrix& pm, const DeformationParams& params);
Eigen::MatrixXd build_h1(const CavityShape& shape, const DegenerateClass& cls,
                         const DeformationParams& params);

/// -E0 (alpha b + beta a) / 2: first-order shift common to every member.
double uniform_shift_rate(const PerturbationMatrix& pm, const DeformationParams& params);

struct SplitLevel {
  double shift = 0.0;       // first-order eigenvalue shift (uniform part included)
  Eigen::VectorXd vector;   // coefficients over class members, unit norm
};

/// Eigen-decomposition of the first-order perturbation, shifts ascending.
/// Eigenvectors are orthonormal with the deterministic sign convention
/// (largest-magnitude component positive, ties to the lowest index).
/// Throws DegenerateSplitting if two shifts coincide within
/// 1e-9 * (spectral range).
std::vector<SplitLevel> split_levels(const PerturbationMatrix& pm,
                                     const DeformationParams& params);
std::vector<SplitLevel> split_levels(const CavityShape& shape, const DegenerateClass& cls,
                                     const DeformationParams& params);

/// Mirror partner of a rotated-parameter point: (a', -b') with the relating
/// operator (P1P2 means either P1 or P2 works, the Case2 situation).
/// Throws NoSymmetry for Case1 classes.
std::pair<RotatedParams, MirrorOp> predict_partner(const DegenerateClass& cls,
                                                   const RotatedParams& rot);

struct PartnerReport {
  RotatedParams point;
  RotatedParams partner;
  MirrorOp op = MirrorOp::P2;
  std::vector<int> level_signs;           // s_k in v'_k = s_k D v_k
  std::vector<MirrorOp> matched_by;       // which mirror matched (Case2: both recorded as P1P2)
  double max_deviation = 0.0;             // max_k || v'_k - s_k D v_k ||
  double conjugation_residual = 0.0;      // || D H1(p) D - H1(p') ||_max
};

/// Verify |psi_p'> = +- P |psi_p> level by level at first order.
PartnerReport check_partner(const CavityShape& shape, const DegenerateClass& cls,
                            const RotatedParams& rot);

/// Closed discretized path in (alpha, beta) space; points.front() is repeated
/// logically at the end (do not duplicate it in `points`).
struct LoopSpec {
  std::vector<DeformationParams> points;
  std::string description;

  int segments() const { return static_cast<int>(points.size()); }

  static LoopSpec ellipse(DeformationParams center, double r_alpha, double r_beta,
                          int segments);
};

struct HolonomyResult {
  std::vector<int> signs;  // one +-1 per level, ascending-shift order at points[0]
  int segments_used = 0;   // after any automatic refinement
};

/// Berry-sign holonomy of each split level around the loop, traced by
/// maximal-overlap continuation. Segments are midpoint-refined (doubling,
/// up to 2^14) until consecutive overlaps exceed `overlap_floor`.
HolonomyResult holonomy(const PerturbationMatrix& pm, const LoopSpec& loop,
                        double overlap_floor = 0.9);
HolonomyResult holonomy(const CavityShape& shape, const DegenerateClass& cls,
                        const LoopSpec& loop, double overlap_floor = 0.9);

/// Core tracer over precomputed eigenvector frames (one orthogonal matrix per
/// loop point, columns = levels). Exposed so gauge invariance can be tested
/// by flipping column signs.
std::vector<int> holonomy_from_frames(const std::vector<Eigen::MatrixXd>& frames,
                                      double overlap_floor);

}  // namespace cavlab
