#pragma once

#include <Eigen/Dense>
#include <string>

#include "cavlab/perturb.hpp"
#include "cavlab/spectrum.hpp"

namespace cavlab {

/// Wavefunction sampled on the uniform (u,v) reference lattice, boundary
/// nodes included (and zero there). values(i, j) is the sample at
/// u = i*a/nu, v = j*b/nv. Fields are normalized to 1 in the plain discrete
/// L2 norm (h-weighted), which mirror permutations preserve exactly; the
/// sqrt(g)-weighted norm is available as a method.
struct GridField {
  CavityShape shape{1, 1, 1.0};
  DeformationParams params;
  int nu = 0;  // interval counts
  int nv = 0;
  Eigen::MatrixXd values;  // (nu+1) x (nv+1)
  double norm = 0.0;       // plain discrete L2 norm before normalization

  double hu() const { return shape.a / nu; }
  double hv() const { return shape.b / nv; }
  double u_at(int i) const { return shape.a * i / nu; }
  double v_at(int j) const { return shape.b * j / nv; }
  // physical image of a node under x = u(1+alpha v), y = v(1+beta u)
  double x_at(int i, int j) const { return u_at(i) * (1.0 + params.alpha * v_at(j)); }
  double y_at(int i, int j) const { return v_at(j) * (1.0 + params.beta * u_at(i)); }

  double plain_norm() const;
  double weighted_norm() const;  // with sqrt(g) = 1 + alpha v + beta u weight
};

/// Sample one basis mode (unnormalized discrete values of the continuum
/// basis function) on an (nu x nv)-interval lattice.
Eigen::MatrixXd sample_basis_mode(const CavityShape& shape, const ModeIndex& mode, int nu,
                                  int nv);

/// psi = sum_i c_i basis_i on the lattice, normalized. Grid node counts must
/// be >= 17 per side; the coefficient vector must be normalized (unit norm
/// within 1e-8).
GridField synthesize_mode(const CavityShape& shape, const DegenerateClass& cls,
                          const Eigen::VectorXd& coefficients, const DeformationParams& params,
                          int nu, int nv);

/// Re-index values by the requested reflection of the reference rectangle.
/// P1: u -> a-u, P2: v -> b-v. Node-exact on the uniform lattice.
GridField apply_mirror(const GridField& field, MirrorOp op);

struct SymmetryScore {
  int sign = +1;         // sign of <A, B>
  double deviation = 0;  // min over s in {+-1} of ||A - s B|| / ||A||
};

SymmetryScore symmetry_score(const GridField& a, const GridField& b);

enum class FieldFormat { CSV, PGM };

struct ExportOptions {
  bool signed_pgm = true;  // zero -> mid-gray 128; false: 8-bit |psi|
  long long class_N = 0;
  int level_index = -1;
};

/// CSV: header u,v,x,y,psi, one node per row, v-major. PGM: binary P5,
/// maxval 255, width = nu+1, height = nv+1, v increasing downward, plus a
/// <path>.meta.txt sidecar with shape, params, class and normalization.
void export_field(const GridField& field, FieldFormat format, const std::string& path,
                  const ExportOptions& opts = {});

}  // namespace cavlab
