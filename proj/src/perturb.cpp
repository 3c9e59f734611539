#include "cavlab/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cavlab {

namespace {

constexpr double kPi = std::numbers::pi;

int sign_of(double x) { return x >= 0.0 ? +1 : -1; }

/// Flip signs so the largest-magnitude component is positive; ties broken by
/// the lowest index (the first index attaining the maximum).
void fix_vector_sign(Eigen::Ref<Eigen::VectorXd> v) {
  int idx = 0;
  double best = -1.0;
  for (int i = 0; i < v.size(); ++i) {
    const double m = std::abs(v[i]);
    if (m > best) {
      best = m;
      idx = i;
    }
  }
  if (v[idx] < 0.0) v = -v;
}

}  // namespace

std::string to_string(MirrorOp op) {
  switch (op) {
    case MirrorOp::P1: return "P1";
    case MirrorOp::P2: return "P2";
    case MirrorOp::P1P2: return "P1|P2";
  }
  return "?";
}

DeformationParams rotated_to_raw(const CavityShape& shape, const RotatedParams& rot) {
  const double a = shape.a, b = shape.b;
  const double ap = rot.alpha_prime, bp = rot.beta_prime;
  switch (rot.case_kind) {
    case CaseKind::Case2:
      return {b * ap + a * bp, -a * ap + b * bp};
    case CaseKind::Case3:
      return {a * bp, ap + b * bp};
    case CaseKind::Case4:
      return {ap + a * bp, b * bp};
    default:
      throw NoSymmetry("rotated_to_raw: no symmetry-adapted coordinates for " +
                       to_string(rot.case_kind));
  }
}

double x_eigenvalue(const CavityShape& shape, const ModeIndex& mode) {
  const double nn = static_cast<double>(mode.n);
  const double mm = static_cast<double>(mode.m);
  return kPi * kPi * (nn * nn / (shape.a * shape.a) - mm * mm / (shape.b * shape.b));
}

double sine_overlap_x(int n1, int n2, double L) {
  if (n1 == n2) return L / 2.0;
  if ((n1 + n2) % 2 == 0) return 0.0;
  const double d = static_cast<double>(n1) * n1 - static_cast<double>(n2) * n2;
  return -8.0 * L * n1 * n2 / (kPi * kPi * d * d);
}

double sine_overlap_ddx(int n1, int n2, double L) {
  if ((n1 + n2) % 2 == 0) return 0.0;
  const double d = static_cast<double>(n1) * n1 - static_cast<double>(n2) * n2;
  return 4.0 * n1 * n2 / (L * d);
}

double sine_overlap_x_ddx(int n1, int n2, double L) {
  (void)L;  // dimensionless
  if (n1 == n2) return -0.5;
  const double d = static_cast<double>(n1) * n1 - static_cast<double>(n2) * n2;
  const double val = 2.0 * n1 * n2 / d;
  return ((n1 + n2) % 2 == 0) ? -val : val;
}

double uy_matrix_element(const CavityShape& shape, const ModeIndex& i, const ModeIndex& j) {
  return 2.0 * sine_overlap_x_ddx(i.n, j.n, shape.a) * sine_overlap_ddx(i.m, j.m, shape.b);
}

double vy_matrix_element(const CavityShape& shape, const ModeIndex& i, const ModeIndex& j) {
  return 2.0 * sine_overlap_ddx(i.n, j.n, shape.a) * sine_overlap_x_ddx(i.m, j.m, shape.b);
}

PerturbationMatrix build_perturbation_matrix(const CavityShape& shape,
                                             const DegenerateClass& cls) {
  const int d = cls.size();
  if (d < 1) throw ClassTooSmall("perturbation matrix: empty class");

  PerturbationMatrix pm{shape, cls, Eigen::VectorXd(d), Eigen::MatrixXd(d, d),
                        Eigen::MatrixXd(d, d), Eigen::MatrixXd(), Eigen::MatrixXd(),
                        cls.eigenvalue};
  for (int i = 0; i < d; ++i) pm.lambda[i] = x_eigenvalue(shape, cls.modes[i]);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      pm.U(i, j) = uy_matrix_element(shape, cls.modes[i], cls.modes[j]);
      pm.V(i, j) = vy_matrix_element(shape, cls.modes[i], cls.modes[j]);
    }
  }
  pm.F = Eigen::MatrixXd(pm.U);
  pm.F.diagonal() -= (shape.b / 2.0) * pm.lambda;
  pm.G = Eigen::MatrixXd(pm.V);
  pm.G.diagonal() += (shape.a / 2.0) * pm.lambda;
  return pm;
}

ParityRep parity_rep(const DegenerateClass& cls) {
  const int d = cls.size();
  ParityRep rep{Eigen::VectorXd(d), Eigen::VectorXd(d)};
  for (int i = 0; i < d; ++i) {
    rep.D1[i] = cls.modes[i].sigma1();
    rep.D2[i] = cls.modes[i].sigma2();
  }
  return rep;
}

Eigen::MatrixXd build_h1(const PerturbationMatrix& pm, const DeformationParams& params) {
  Eigen::MatrixXd M = params.alpha * pm.F + params.beta * pm.G;
  const double scale = M.cwiseAbs().maxCoeff();
  if (scale > 0.0) {
    const double asym = (M - M.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-8 * scale) {
      throw AsymmetryTooLarge("build_h1: relative asymmetry " + std::to_string(asym / scale));
    }
  }
  return 0.5 * (M + M.transpose());
}

Eigen::MatrixXd build_h1(const CavityShape& shape, const DegenerateClass& cls,
                         const DeformationParams& params) {
  return build_h1(build_perturbation_matrix(shape, cls), params);
}

double uniform_shift_rate(const PerturbationMatrix& pm, const DeformationParams& params) {
  return -pm.E0 * (params.alpha * pm.shape.b + params.beta * pm.shape.a) / 2.0;
}

std::vector<SplitLevel> split_levels(const PerturbationMatrix& pm,
                                     const DeformationParams& params) {
  const Eigen::MatrixXd H = build_h1(pm, params);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  if (es.info() != Eigen::Success) throw SolverFailure("split_levels: eigensolver failed");

  const Eigen::VectorXd& ev = es.eigenvalues();
  const int d = pm.size();
  if (d > 1) {
    const double range = ev[d - 1] - ev[0];
    const double tol = 1e-9 * range;
    if (range <= 0.0) {
      throw DegenerateSplitting("split_levels: perturbation does not lift the degeneracy");
    }
    for (int k = 0; k + 1 < d; ++k) {
      if (ev[k + 1] - ev[k] <= tol) {
        throw DegenerateSplitting("split_levels: shifts " + std::to_string(k) + "," +
                                  std::to_string(k + 1) + " are degenerate");
      }
    }
  }

  const double uniform = uniform_shift_rate(pm, params);
  std::vector<SplitLevel> out(d);
  for (int k = 0; k < d; ++k) {
    out[k].shift = ev[k] + uniform;
    out[k].vector = es.eigenvectors().col(k);
    fix_vector_sign(out[k].vector);
  }
  return out;
}

std::vector<SplitLevel> split_levels(const CavityShape& shape, const DegenerateClass& cls,
                                     const DeformationParams& params) {
  return split_levels(build_perturbation_matrix(shape, cls), params);
}

std::pair<RotatedParams, MirrorOp> predict_partner(const DegenerateClass& cls,
                                                   const RotatedParams& rot) {
  const CaseKind kind = cls.label.kind;
  if (kind == CaseKind::Case1) {
    throw NoSymmetry("predict_partner: Case1 perturbations are one-dimensional");
  }
  if (kind == CaseKind::Case5) {
    throw NoSymmetry("predict_partner: Case5 cannot be realized");
  }
  RotatedParams partner{rot.alpha_prime, -rot.beta_prime, kind};
  MirrorOp op = MirrorOp::P2;
  if (kind == CaseKind::Case2) op = MirrorOp::P1P2;
  if (kind == CaseKind::Case4) op = MirrorOp::P1;
  return {partner, op};
}

PartnerReport check_partner(const CavityShape& shape, const DegenerateClass& cls,
                            const RotatedParams& rot) {
  if (rot.case_kind != cls.label.kind) {
    throw ConfigError("check_partner: rotated parameters carry " + to_string(rot.case_kind) +
                      " but the class is " + to_string(cls.label.kind));
  }
  auto [partner, op] = predict_partner(cls, rot);

  const auto pm = build_perturbation_matrix(shape, cls);
  const auto rep = parity_rep(cls);
  const Eigen::VectorXd& D = (op == MirrorOp::P1) ? rep.D1 : rep.D2;

  const DeformationParams p = rotated_to_raw(shape, rot);
  const DeformationParams pp = rotated_to_raw(shape, partner);
  const auto levels_p = split_levels(pm, p);
  const auto levels_pp = split_levels(pm, pp);

  PartnerReport report;
  report.point = rot;
  report.partner = partner;
  report.op = op;

  const int d = pm.size();
  for (int k = 0; k < d; ++k) {
    const Eigen::VectorXd w = D.cwiseProduct(levels_p[k].vector);
    const int s = sign_of(levels_pp[k].vector.dot(w));
    const double dev = (levels_pp[k].vector - static_cast<double>(s) * w).norm();
    report.level_signs.push_back(s);
    report.matched_by.push_back(op);
    report.max_deviation = std::max(report.max_deviation, dev);
  }

  const Eigen::MatrixXd Hp = build_h1(pm, p);
  const Eigen::MatrixXd Hpp = build_h1(pm, pp);
  const Eigen::MatrixXd conj = D.asDiagonal() * Hp * D.asDiagonal();
  report.conjugation_residual = (conj - Hpp).cwiseAbs().maxCoeff();
  return report;
}

LoopSpec LoopSpec::ellipse(DeformationParams center, double r_alpha, double r_beta,
                           int segments) {
  if (segments < 3) throw ConfigError("loop: need at least 3 segments");
  LoopSpec loop;
  loop.description = "ellipse";
  loop.points.reserve(segments);
  for (int k = 0; k < segments; ++k) {
    const double t = 2.0 * kPi * k / segments;
    loop.points.push_back(
        {center.alpha + r_alpha * std::cos(t), center.beta + r_beta * std::sin(t)});
  }
  return loop;
}

std::vector<int> holonomy_from_frames(const std::vector<Eigen::MatrixXd>& frames,
                                      double overlap_floor) {
  const int K = static_cast<int>(frames.size());
  if (K < 3) throw ConfigError("holonomy: need at least 3 loop points");
  const int d = static_cast<int>(frames.front().cols());

  std::vector<int> signs(d, +1);
  for (int l0 = 0; l0 < d; ++l0) {
    int cur = l0;
    int acc = +1;
    for (int k = 0; k < K; ++k) {
      const Eigen::MatrixXd& next = frames[(k + 1) % K];
      const Eigen::VectorXd overlaps = next.transpose() * frames[k].col(cur);
      int best = 0;
      overlaps.cwiseAbs().maxCoeff(&best);
      const double ov = overlaps[best];
      if (std::abs(ov) < overlap_floor) {
        throw OverlapTooSmall("holonomy: overlap " + std::to_string(std::abs(ov)) +
                              " below floor at segment " + std::to_string(k));
      }
      acc *= sign_of(ov);
      cur = best;
    }
    if (cur != l0) {
      throw OverlapTooSmall("holonomy: level tracing did not close; refine the loop");
    }
    signs[l0] = acc;
  }
  return signs;
}

namespace {

LoopSpec refine_midpoints(const LoopSpec& loop) {
  LoopSpec fine;
  fine.description = loop.description;
  const int K = loop.segments();
  fine.points.reserve(2 * K);
  for (int k = 0; k < K; ++k) {
    const auto& p0 = loop.points[k];
    const auto& p1 = loop.points[(k + 1) % K];
    fine.points.push_back(p0);
    fine.points.push_back({0.5 * (p0.alpha + p1.alpha), 0.5 * (p0.beta + p1.beta)});
  }
  return fine;
}

}  // namespace

HolonomyResult holonomy(const PerturbationMatrix& pm, const LoopSpec& loop,
                        double overlap_floor) {
  if (loop.segments() < 3) throw ConfigError("holonomy: loop too coarse (K < 3)");
  constexpr int kMaxSegments = 1 << 14;

  LoopSpec current = loop;
  while (true) {
    const int K = current.segments();
    std::vector<Eigen::MatrixXd> frames;
    frames.reserve(K);
    for (const auto& pt : current.points) {
      const auto levels = split_levels(pm, pt);
      Eigen::MatrixXd frame(pm.size(), pm.size());
      for (int k = 0; k < pm.size(); ++k) frame.col(k) = levels[k].vector;
      frames.push_back(std::move(frame));
    }
    try {
      return {holonomy_from_frames(frames, overlap_floor), K};
    } catch (const OverlapTooSmall&) {
      if (2 * K > kMaxSegments) throw;
      current = refine_midpoints(current);
    }
  }
}

HolonomyResult holonomy(const CavityShape& shape, const DegenerateClass& cls,
                        const LoopSpec& loop, double overlap_floor) {
  return holonomy(build_perturbation_matrix(shape, cls), loop, overlap_floor);
}

}  // namespace cavlab
