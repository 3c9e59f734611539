#include "cavlab/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace cavlab {

namespace {
constexpr double kPi = std::numbers::pi;
}

double GridField::plain_norm() const {
  return std::sqrt(values.squaredNorm() * hu() * hv());
}

double GridField::weighted_norm() const {
  double acc = 0.0;
  for (int j = 0; j <= nv; ++j) {
    for (int i = 0; i <= nu; ++i) {
      const double sg = 1.0 + params.alpha * v_at(j) + params.beta * u_at(i);
      acc += sg * values(i, j) * values(i, j);
    }
  }
  return std::sqrt(acc * hu() * hv());
}

Eigen::MatrixXd sample_basis_mode(const CavityShape& shape, const ModeIndex& mode, int nu,
                                  int nv) {
  Eigen::MatrixXd vals(nu + 1, nv + 1);
  const double norm = 2.0 / std::sqrt(shape.a * shape.b);
  Eigen::VectorXd su(nu + 1), sv(nv + 1);
  for (int i = 0; i <= nu; ++i) su[i] = std::sin(mode.n * kPi * i / nu);
  for (int j = 0; j <= nv; ++j) sv[j] = std::sin(mode.m * kPi * j / nv);
  su[0] = su[nu] = 0.0;  // exact Dirichlet values
  sv[0] = sv[nv] = 0.0;
  for (int j = 0; j <= nv; ++j) {
    for (int i = 0; i <= nu; ++i) vals(i, j) = norm * su[i] * sv[j];
  }
  return vals;
}

GridField synthesize_mode(const CavityShape& shape, const DegenerateClass& cls,
                          const Eigen::VectorXd& coefficients, const DeformationParams& params,
                          int nu, int nv) {
  if (nu + 1 < 17 || nv + 1 < 17) throw ConfigError("synthesize_mode: grid sizes must be >= 17");
  if (coefficients.size() != cls.size()) {
    throw ConfigError("synthesize_mode: coefficient count does not match class size");
  }
  const double cn = coefficients.norm();
  if (cn < 1e-12) throw ConfigError("synthesize_mode: zero coefficient vector");
  if (std::abs(cn - 1.0) > 1e-8) {
    throw ConfigError("synthesize_mode: coefficients must be normalized");
  }

  GridField field;
  field.shape = shape;
  field.params = params;
  field.nu = nu;
  field.nv = nv;
  field.values = Eigen::MatrixXd::Zero(nu + 1, nv + 1);
  for (int k = 0; k < cls.size(); ++k) {
    if (coefficients[k] != 0.0) {
      field.values += coefficients[k] * sample_basis_mode(shape, cls.modes[k], nu, nv);
    }
  }
  field.norm = field.plain_norm();
  if (field.norm > 0.0) field.values /= field.norm;
  return field;
}

GridField apply_mirror(const GridField& field, MirrorOp op) {
  if (field.nu < 1 || field.nv < 1) {
    throw GridNotReflectionSymmetric("apply_mirror: degenerate grid");
  }
  GridField out = field;
  const bool flip_u = (op == MirrorOp::P1 || op == MirrorOp::P1P2);
  const bool flip_v = (op == MirrorOp::P2 || op == MirrorOp::P1P2);
  for (int j = 0; j <= field.nv; ++j) {
    for (int i = 0; i <= field.nu; ++i) {
      const int si = flip_u ? field.nu - i : i;
      const int sj = flip_v ? field.nv - j : j;
      out.values(i, j) = field.values(si, sj);
    }
  }
  return out;
}

SymmetryScore symmetry_score(const GridField& a, const GridField& b) {
  if (a.nu != b.nu || a.nv != b.nv) {
    throw ConfigError("symmetry_score: fields live on different grids");
  }
  const double dot = (a.values.array() * b.values.array()).sum();
  const int s = dot >= 0.0 ? +1 : -1;
  const double na = a.values.norm();
  const double dev = (a.values - static_cast<double>(s) * b.values).norm() / na;
  return {s, dev};
}

namespace {

void write_meta(const GridField& field, const std::string& path, const ExportOptions& opts,
                const char* format) {
  std::ofstream meta(path + ".meta.txt");
  if (!meta) throw DomainError("export_field: cannot write " + path + ".meta.txt");
  char buf[256];
  meta << "format " << format << "\n";
  std::snprintf(buf, sizeof buf, "shape p=%lld q=%lld a=%.17g b=%.17g\n", field.shape.p,
                field.shape.q, field.shape.a, field.shape.b);
  meta << buf;
  std::snprintf(buf, sizeof buf, "params alpha=%.17g beta=%.17g\n", field.params.alpha,
                field.params.beta);
  meta << buf;
  meta << "grid nu=" << field.nu << " nv=" << field.nv << "\n";
  if (opts.class_N > 0) meta << "class_N " << opts.class_N << "\n";
  if (opts.level_index >= 0) meta << "level " << opts.level_index << "\n";
  std::snprintf(buf, sizeof buf, "normalization plain_l2=1 pre_norm=%.17g\n", field.norm);
  meta << buf;
}

}  // namespace

void export_field(const GridField& field, FieldFormat format, const std::string& path,
                  const ExportOptions& opts) {
  if (format == FieldFormat::CSV) {
    std::ofstream out(path);
    if (!out) throw DomainError("export_field: cannot write " + path);
    out << "u,v,x,y,psi\n";
    char buf[256];
    for (int j = 0; j <= field.nv; ++j) {
      for (int i = 0; i <= field.nu; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", field.u_at(i),
                      field.v_at(j), field.x_at(i, j), field.y_at(i, j), field.values(i, j));
        out << buf;
      }
    }
    if (!out) throw DomainError("export_field: write failed for " + path);
    write_meta(field, path, opts, "csv");
    return;
  }

  // PGM, binary P5, row-major with v increasing downward
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("export_field: cannot write " + path);
  const int w = field.nu + 1;
  const int h = field.nv + 1;
  out << "P5\n" << w << " " << h << "\n255\n";
  const double maxabs = field.values.cwiseAbs().maxCoeff();
  std::string row(static_cast<size_t>(w), '\0');
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      int px;
      if (opts.signed_pgm) {
        const double t = maxabs > 0.0 ? field.values(i, j) / maxabs : 0.0;
        px = 128 + static_cast<int>(std::lround(127.0 * t));
      } else {
        const double t = maxabs > 0.0 ? std::abs(field.values(i, j)) / maxabs : 0.0;
        px = static_cast<int>(std::lround(255.0 * t));
      }
      row[static_cast<size_t>(i)] = static_cast<char>(std::clamp(px, 0, 255));
    }
    out.write(row.data(), w);
  }
  if (!out) throw DomainError("export_field: write failed for " + path);
  write_meta(field, path, opts, "pgm");
}

}  // namespace cavlab
