#include "cavlab/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "cavlab/field.hpp"
#include "cavlab/oracle.hpp"
#include "cavlab/perturb.hpp"
#include "cavlab/spectrum.hpp"

namespace cavlab {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct Tolerances {
  double operator_identity = 1e-10;
  double weak_form = 1e-8;
  double partner_deviation = 1e-9;
  double conjugation = 1e-12;
  double slope_rel = 0.02;
  double mirror_ratio_low = 1.0 / 6.0;
  double mirror_ratio_high = 3.0 / 8.0;
};

struct VerifyConfig {
  std::vector<std::string> suites{"operators", "case5", "partner"};
  std::vector<long long> operator_Ns;
  long long case5_N_max = 5000;
  int case5_pq_sum_max = 0;  // 0: config shape only; >0: sweep coprime p+q <= value
  std::vector<long long> partner_Ns;
  int partner_samples = 20;
  double partner_magnitude = 0.05;
  std::vector<long long> slope_Ns;
  long long mirror_N = 0;
  double mirror_dir_alpha = 1.0;
  double mirror_dir_beta = 1.0;
  std::vector<double> mirror_epsilons{4e-3, 2e-3};
};

struct LoopConfig {
  double center_alpha = 0.0;
  double center_beta = 0.0;
  double radius_alpha = 0.01;
  double radius_beta = 0.01;
  int segments = 256;
  std::vector<int> export_points;
};

struct ExportConfig {
  std::string format = "csv";
  bool signed_pgm = true;
  int level = -1;
  std::optional<std::pair<int, int>> member;
};

struct RunConfig {
  long long p = 1, q = 1;
  double b_scale = 1.0;
  std::optional<long long> N;
  long long N_max = 200;
  int min_size = 2;
  std::vector<std::pair<int, int>> modes;  // optional explicit subset
  std::optional<DeformationParams> deformation;
  std::optional<std::pair<double, double>> rotated;
  LoopConfig loop;
  int grid_base = 200;
  std::vector<double> epsilons{4e-3, 2e-3, 1e-3};
  std::optional<DeformationParams> direction;
  int k = 6;
  double overlap_floor = 0.9;
  Tolerances tol;
  VerifyConfig verify;
  ExportConfig exp;
  std::string out_dir = "out";
};

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: " + ctx + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ConfigError("config: unknown key \"" + key + "\" in " + ctx);
    }
  }
}

template <typename T>
void read_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("config: bad value for \"") + key + "\"");
    }
  }
}

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  // "command" appears in manifests, which must load back as configs
  check_keys(j, "top level",
             {"command", "shape", "N", "N_max", "min_size", "modes", "deformation", "rotated",
              "loop", "grid", "epsilons", "direction", "k", "overlap_floor", "tolerances",
              "verify", "export", "out_dir"});

  if (j.contains("shape")) {
    const auto& s = j.at("shape");
    check_keys(s, "shape", {"p", "q", "b"});
    read_to(s, "p", cfg.p);
    read_to(s, "q", cfg.q);
    read_to(s, "b", cfg.b_scale);
  }
  if (j.contains("N")) cfg.N = j.at("N").get<long long>();
  read_to(j, "N_max", cfg.N_max);
  read_to(j, "min_size", cfg.min_size);
  if (j.contains("modes")) {
    for (const auto& m : j.at("modes")) {
      if (!m.is_array() || m.size() != 2) throw ConfigError("config: modes entries are [n, m]");
      cfg.modes.push_back({m[0].get<int>(), m[1].get<int>()});
    }
  }
  if (j.contains("deformation")) {
    const auto& d = j.at("deformation");
    check_keys(d, "deformation", {"alpha", "beta"});
    DeformationParams p;
    read_to(d, "alpha", p.alpha);
    read_to(d, "beta", p.beta);
    cfg.deformation = p;
  }
  if (j.contains("rotated")) {
    const auto& r = j.at("rotated");
    check_keys(r, "rotated", {"alpha_prime", "beta_prime"});
    std::pair<double, double> rp{0.0, 0.0};
    read_to(r, "alpha_prime", rp.first);
    read_to(r, "beta_prime", rp.second);
    cfg.rotated = rp;
  }
  if (j.contains("loop")) {
    const auto& l = j.at("loop");
    check_keys(l, "loop",
               {"center_alpha", "center_beta", "radius_alpha", "radius_beta", "segments",
                "export_points"});
    read_to(l, "center_alpha", cfg.loop.center_alpha);
    read_to(l, "center_beta", cfg.loop.center_beta);
    read_to(l, "radius_alpha", cfg.loop.radius_alpha);
    read_to(l, "radius_beta", cfg.loop.radius_beta);
    read_to(l, "segments", cfg.loop.segments);
    read_to(l, "export_points", cfg.loop.export_points);
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    check_keys(g, "grid", {"base_intervals"});
    read_to(g, "base_intervals", cfg.grid_base);
  }
  read_to(j, "epsilons", cfg.epsilons);
  if (j.contains("direction")) {
    const auto& d = j.at("direction");
    check_keys(d, "direction", {"alpha", "beta"});
    DeformationParams p;
    read_to(d, "alpha", p.alpha);
    read_to(d, "beta", p.beta);
    cfg.direction = p;
  }
  read_to(j, "k", cfg.k);
  read_to(j, "overlap_floor", cfg.overlap_floor);
  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    check_keys(t, "tolerances",
               {"operator_identity", "weak_form", "partner_deviation", "conjugation",
                "slope_rel", "mirror_ratio_low", "mirror_ratio_high"});
    read_to(t, "operator_identity", cfg.tol.operator_identity);
    read_to(t, "weak_form", cfg.tol.weak_form);
    read_to(t, "partner_deviation", cfg.tol.partner_deviation);
    read_to(t, "conjugation", cfg.tol.conjugation);
    read_to(t, "slope_rel", cfg.tol.slope_rel);
    read_to(t, "mirror_ratio_low", cfg.tol.mirror_ratio_low);
    read_to(t, "mirror_ratio_high", cfg.tol.mirror_ratio_high);
  }
  if (j.contains("verify")) {
    const auto& v = j.at("verify");
    check_keys(v, "verify",
               {"suites", "operator_Ns", "case5_N_max", "case5_pq_sum_max", "partner_Ns",
                "partner_samples", "partner_magnitude", "slope_Ns", "mirror_N",
                "mirror_direction", "mirror_epsilons"});
    read_to(v, "suites", cfg.verify.suites);
    read_to(v, "operator_Ns", cfg.verify.operator_Ns);
    read_to(v, "case5_N_max", cfg.verify.case5_N_max);
    read_to(v, "case5_pq_sum_max", cfg.verify.case5_pq_sum_max);
    read_to(v, "partner_Ns", cfg.verify.partner_Ns);
    read_to(v, "partner_samples", cfg.verify.partner_samples);
    read_to(v, "partner_magnitude", cfg.verify.partner_magnitude);
    read_to(v, "slope_Ns", cfg.verify.slope_Ns);
    read_to(v, "mirror_N", cfg.verify.mirror_N);
    if (v.contains("mirror_direction")) {
      const auto& md = v.at("mirror_direction");
      if (!md.is_array() || md.size() != 2) {
        throw ConfigError("config: verify.mirror_direction is [alpha'_hat, beta'_hat]");
      }
      cfg.verify.mirror_dir_alpha = md[0].get<double>();
      cfg.verify.mirror_dir_beta = md[1].get<double>();
    }
    read_to(v, "mirror_epsilons", cfg.verify.mirror_epsilons);
  }
  if (j.contains("export")) {
    const auto& e = j.at("export");
    check_keys(e, "export", {"format", "signed", "level", "member"});
    read_to(e, "format", cfg.exp.format);
    if (e.contains("signed")) cfg.exp.signed_pgm = e.at("signed").get<bool>();
    read_to(e, "level", cfg.exp.level);
    if (e.contains("member")) {
      const auto& m = e.at("member");
      if (!m.is_array() || m.size() != 2) throw ConfigError("config: export.member is [n, m]");
      cfg.exp.member = {m[0].get<int>(), m[1].get<int>()};
    }
  }
  read_to(j, "out_dir", cfg.out_dir);
  return cfg;
}

json resolved_json(const RunConfig& cfg, const std::string& command) {
  json j;
  j["command"] = command;
  j["shape"] = {{"p", cfg.p}, {"q", cfg.q}, {"b", cfg.b_scale}};
  if (cfg.N) j["N"] = *cfg.N;
  j["N_max"] = cfg.N_max;
  j["min_size"] = cfg.min_size;
  if (!cfg.modes.empty()) {
    json modes = json::array();
    for (const auto& [n, m] : cfg.modes) modes.push_back({n, m});
    j["modes"] = modes;
  }
  if (cfg.deformation) {
    j["deformation"] = {{"alpha", cfg.deformation->alpha}, {"beta", cfg.deformation->beta}};
  }
  if (cfg.rotated) {
    j["rotated"] = {{"alpha_prime", cfg.rotated->first}, {"beta_prime", cfg.rotated->second}};
  }
  j["loop"] = {{"center_alpha", cfg.loop.center_alpha},
               {"center_beta", cfg.loop.center_beta},
               {"radius_alpha", cfg.loop.radius_alpha},
               {"radius_beta", cfg.loop.radius_beta},
               {"segments", cfg.loop.segments},
               {"export_points", cfg.loop.export_points}};
  j["grid"] = {{"base_intervals", cfg.grid_base}};
  j["epsilons"] = cfg.epsilons;
  if (cfg.direction) {
    j["direction"] = {{"alpha", cfg.direction->alpha}, {"beta", cfg.direction->beta}};
  }
  j["k"] = cfg.k;
  j["overlap_floor"] = cfg.overlap_floor;
  j["tolerances"] = {{"operator_identity", cfg.tol.operator_identity},
                     {"weak_form", cfg.tol.weak_form},
                     {"partner_deviation", cfg.tol.partner_deviation},
                     {"conjugation", cfg.tol.conjugation},
                     {"slope_rel", cfg.tol.slope_rel},
                     {"mirror_ratio_low", cfg.tol.mirror_ratio_low},
                     {"mirror_ratio_high", cfg.tol.mirror_ratio_high}};
  j["verify"] = {{"suites", cfg.verify.suites},
                 {"operator_Ns", cfg.verify.operator_Ns},
                 {"case5_N_max", cfg.verify.case5_N_max},
                 {"case5_pq_sum_max", cfg.verify.case5_pq_sum_max},
                 {"partner_Ns", cfg.verify.partner_Ns},
                 {"partner_samples", cfg.verify.partner_samples},
                 {"partner_magnitude", cfg.verify.partner_magnitude},
                 {"slope_Ns", cfg.verify.slope_Ns},
                 {"mirror_N", cfg.verify.mirror_N},
                 {"mirror_direction", {cfg.verify.mirror_dir_alpha, cfg.verify.mirror_dir_beta}},
                 {"mirror_epsilons", cfg.verify.mirror_epsilons}};
  j["export"] = {{"format", cfg.exp.format}, {"signed", cfg.exp.signed_pgm},
                 {"level", cfg.exp.level}};
  if (cfg.exp.member) j["export"]["member"] = {cfg.exp.member->first, cfg.exp.member->second};
  j["out_dir"] = cfg.out_dir;
  return j;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void write_manifest(const RunConfig& cfg, const std::string& command) {
  fs::create_directories(cfg.out_dir);
  write_json(fs::path(cfg.out_dir) / "manifest.json", resolved_json(cfg, command));
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

CavityShape shape_of(const RunConfig& cfg) { return CavityShape(cfg.p, cfg.q, cfg.b_scale); }

DegenerateClass class_of(const RunConfig& cfg, const CavityShape& shape) {
  if (!cfg.N) throw ConfigError("this command needs \"N\" (the class invariant n^2 p + m^2 q)");
  DegenerateClass cls = enumerate_class(shape, *cfg.N);
  if (!cfg.modes.empty()) {
    std::vector<ModeIndex> wanted;
    for (const auto& [n, m] : cfg.modes) wanted.push_back(ModeIndex{n, m});
    cls = subset_class(cls, wanted);
  }
  return cls;
}

DeformationParams params_of(const RunConfig& cfg, const DegenerateClass& cls,
                            const CavityShape& shape) {
  if (cfg.deformation && cfg.rotated) {
    throw ConfigError("give either \"deformation\" or \"rotated\", not both");
  }
  if (cfg.deformation) return *cfg.deformation;
  if (cfg.rotated) {
    return rotated_to_raw(shape,
                          {cfg.rotated->first, cfg.rotated->second, cls.label.kind});
  }
  throw ConfigError("this command needs \"deformation\" or \"rotated\" parameters");
}

json class_json(const DegenerateClass& cls) {
  json modes = json::array();
  for (const auto& m : cls.modes) modes.push_back({m.n, m.m});
  return json{{"N", cls.N},
              {"size", cls.size()},
              {"eigenvalue", cls.eigenvalue},
              {"case", to_string(cls.label)},
              {"modes", modes}};
}

struct Assertion {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string comparator = "<";
};

json assertions_json(const std::vector<Assertion>& asserts) {
  json arr = json::array();
  int failed = 0;
  for (const auto& a : asserts) {
    arr.push_back({{"name", a.name},
                   {"pass", a.pass},
                   {"value", a.value},
                   {"threshold", a.threshold},
                   {"comparator", a.comparator}});
    if (!a.pass) ++failed;
  }
  return json{{"assertions", arr},
              {"total", asserts.size()},
              {"failed", failed}};
}

void print_assertions(const std::vector<Assertion>& asserts) {
  for (const auto& a : asserts) {
    std::printf("[%s] %-58s value %.6g %s %.6g\n", a.pass ? "PASS" : "FAIL", a.name.c_str(),
                a.value, a.comparator.c_str(), a.threshold);
  }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_enumerate(const RunConfig& cfg) {
  const auto shape = shape_of(cfg);
  write_manifest(cfg, "enumerate");

  std::vector<DegenerateClass> classes;
  if (cfg.N) {
    classes.push_back(enumerate_class(shape, *cfg.N));
  } else {
    classes = enumerate_all_classes(shape, cfg.N_max, cfg.min_size);
  }

  std::printf("# p/q = %lld/%lld  a = %.12g  b = %.12g\n", cfg.p, cfg.q, shape.a, shape.b);
  std::printf("%-8s %-5s %-12s %-14s %s\n", "N", "size", "case", "eigenvalue", "modes (n,m)");
  json out = json::array();
  for (const auto& cls : classes) {
    std::string modes;
    for (const auto& m : cls.modes) {
      modes += "(" + std::to_string(m.n) + "," + std::to_string(m.m) + ") ";
    }
    std::printf("%-8lld %-5d %-12s %-14.6f %s\n", cls.N, cls.size(),
                to_string(cls.label).c_str(), cls.eigenvalue, modes.c_str());
    out.push_back(class_json(cls));
  }
  write_json(fs::path(cfg.out_dir) / "classes.json", json{{"classes", out}});
  return 0;
}

int cmd_split(const RunConfig& cfg) {
  const auto shape = shape_of(cfg);
  const auto cls = class_of(cfg, shape);
  const auto params = params_of(cfg, cls, shape);
  write_manifest(cfg, "split");

  const auto pm = build_perturbation_matrix(shape, cls);
  const auto levels = split_levels(pm, params);

  std::printf("# class N=%lld (%s), alpha=%.6g beta=%.6g, uniform rate %.6g\n", cls.N,
              to_string(cls.label).c_str(), params.alpha, params.beta,
              uniform_shift_rate(pm, params));
  json jlevels = json::array();
  for (size_t k = 0; k < levels.size(); ++k) {
    std::printf("level %zu: shift %+.9e   vector [", k, levels[k].shift);
    json vec = json::array();
    for (int i = 0; i < levels[k].vector.size(); ++i) {
      std::printf(" %+.6f", levels[k].vector[i]);
      vec.push_back(levels[k].vector[i]);
    }
    std::printf(" ]\n");
    jlevels.push_back({{"shift", levels[k].shift}, {"vector", vec}});
  }
  write_json(fs::path(cfg.out_dir) / "split.json",
             json{{"class", class_json(cls)},
                  {"alpha", params.alpha},
                  {"beta", params.beta},
                  {"levels", jlevels}});
  return 0;
}

int cmd_partner(const RunConfig& cfg) {
  const auto shape = shape_of(cfg);
  const auto cls = class_of(cfg, shape);
  if (!cfg.rotated) throw ConfigError("partner needs \"rotated\" parameters");
  write_manifest(cfg, "partner");

  const auto rep =
      check_partner(shape, cls, {cfg.rotated->first, cfg.rotated->second, cls.label.kind});
  std::printf("partner of (%.6g, %.6g): (%.6g, %.6g) via %s\n", rep.point.alpha_prime,
              rep.point.beta_prime, rep.partner.alpha_prime, rep.partner.beta_prime,
              to_string(rep.op).c_str());
  std::printf("max deviation %.3e, conjugation residual %.3e\n", rep.max_deviation,
              rep.conjugation_residual);
  json signs = json::array();
  for (int s : rep.level_signs) signs.push_back(s);
  write_json(fs::path(cfg.out_dir) / "partner.json",
             json{{"class", class_json(cls)},
                  {"operator", to_string(rep.op)},
                  {"alpha_prime", rep.point.alpha_prime},
                  {"beta_prime", rep.point.beta_prime},
                  {"level_signs", signs},
                  {"max_deviation", rep.max_deviation},
                  {"conjugation_residual", rep.conjugation_residual}});
  return 0;
}

int cmd_loop(const RunConfig& cfg) {
  const auto shape = shape_of(cfg);
  const auto cls = class_of(cfg, shape);
  if (cfg.loop.segments < 3) throw ConfigError("loop too coarse: need segments >= 3");
  write_manifest(cfg, "loop");

  const auto pm = build_perturbation_matrix(shape, cls);
  const auto loop = LoopSpec::ellipse({cfg.loop.center_alpha, cfg.loop.center_beta},
                                      cfg.loop.radius_alpha, cfg.loop.radius_beta,
                                      cfg.loop.segments);
  for (const auto& pt : loop.points) {
    if (std::abs(pt.alpha) * shape.b >= 1.0 || std::abs(pt.beta) * shape.a >= 1.0) {
      throw ConfigError("loop leaves the invertibility region |alpha| b < 1, |beta| a < 1");
    }
  }
  const auto result = holonomy(pm, loop, cfg.overlap_floor);

  std::printf("holonomy signs (%d segments used):", result.segments_used);
  for (int s : result.signs) std::printf(" %+d", s);
  std::printf("\n");

  // per-point eigen-data
  std::ofstream csv(fs::path(cfg.out_dir) / "loop_points.csv");
  csv << "index,alpha,beta";
  for (int k = 0; k < cls.size(); ++k) csv << ",shift_" << k;
  csv << "\n";
  char buf[64];
  for (int i = 0; i < loop.segments(); ++i) {
    const auto levels = split_levels(pm, loop.points[i]);
    csv << i;
    std::snprintf(buf, sizeof buf, ",%.12g,%.12g", loop.points[i].alpha, loop.points[i].beta);
    csv << buf;
    for (const auto& lvl : levels) {
      std::snprintf(buf, sizeof buf, ",%.12g", lvl.shift);
      csv << buf;
    }
    csv << "\n";
  }
  csv.close();

  for (const int idx : cfg.loop.export_points) {
    if (idx < 0 || idx >= loop.segments()) throw ConfigError("loop export point out of range");
    const auto levels = split_levels(pm, loop.points[idx]);
    const auto [nu, nv] = grid_intervals(shape, {std::min(cfg.grid_base, 64)});
    for (int k = 0; k < cls.size(); ++k) {
      const auto f = synthesize_mode(shape, cls, levels[k].vector, loop.points[idx], nu, nv);
      const auto name = "loop_p" + std::to_string(idx) + "_level" + std::to_string(k);
      const bool csv_fmt = (cfg.exp.format == "csv");
      export_field(f, csv_fmt ? FieldFormat::CSV : FieldFormat::PGM,
                   (fs::path(cfg.out_dir) / (name + (csv_fmt ? ".csv" : ".pgm"))).string(),
                   {.signed_pgm = cfg.exp.signed_pgm, .class_N = cls.N, .level_index = k});
    }
  }

  json signs = json::array();
  for (int s : result.signs) signs.push_back(s);
  write_json(fs::path(cfg.out_dir) / "loop.json",
             json{{"class", class_json(cls)},
                  {"segments_requested", cfg.loop.segments},
                  {"segments_used", result.segments_used},
                  {"signs", signs}});
  return 0;
}

int cmd_oracle(const RunConfig& cfg) {
  const auto shape = shape_of(cfg);
  write_manifest(cfg, "oracle");
  const auto [nu, nv] = grid_intervals(shape, {cfg.grid_base});
  json out;
  out["grid"] = {{"nu", nu}, {"nv", nv}};

  if (cfg.N && cfg.direction) {
    const auto cls = class_of(cfg, shape);
    const auto rep = splitting_slopes(shape, cls, *cfg.direction, cfg.epsilons,
                                      {cfg.grid_base});
    std::printf("slopes for N=%lld along (%.4g, %.4g):\n", cls.N, cfg.direction->alpha,
                cfg.direction->beta);
    json jl = json::array();
    for (size_t k = 0; k < rep.oracle.size(); ++k) {
      std::printf("  level %zu: oracle %.6g +- %.2g, predicted %.6g\n", k, rep.oracle[k].slope,
                  rep.oracle[k].error, rep.predicted[k]);
      jl.push_back({{"oracle", rep.oracle[k].slope},
                    {"error", rep.oracle[k].error},
                    {"predicted", rep.predicted[k]}});
    }
    std::printf("  max relative mismatch %.4g (spread %.6g)\n", rep.max_rel_mismatch,
                rep.spread);
    out["slopes"] = {{"class", class_json(cls)},
                     {"levels", jl},
                     {"max_rel_mismatch", rep.max_rel_mismatch},
                     {"spread", rep.spread}};
  } else {
    const DeformationParams params = cfg.deformation.value_or(DeformationParams{0.0, 0.0});
    const auto metric = assemble_metric(shape, params, nu, nv);
    DiscreteEigensolution sol;
    if (cfg.N) {
      const auto cls = class_of(cfg, shape);
      sol = solve_near(metric, cls.eigenvalue * (1.0 - 3e-3), std::max(cfg.k, cls.size() + 4));
      out["class"] = class_json(cls);
    } else {
      sol = solve_helmholtz(metric, cfg.k);
    }
    std::printf("eigenvalues (%d x %d grid, alpha=%.4g beta=%.4g):\n", nu, nv, params.alpha,
                params.beta);
    json ev = json::array();
    for (const double e : sol.eigenvalues) {
      std::printf("  %.10g\n", e);
      ev.push_back(e);
    }
    out["alpha"] = params.alpha;
    out["beta"] = params.beta;
    out["eigenvalues"] = ev;
  }
  write_json(fs::path(cfg.out_dir) / "oracle.json", out);
  return 0;
}

int cmd_export(const RunConfig& cfg) {
  const auto shape = shape_of(cfg);
  const auto cls = class_of(cfg, shape);
  write_manifest(cfg, "export");
  const auto [nu, nv] = grid_intervals(shape, {cfg.grid_base});

  Eigen::VectorXd coeff;
  std::string name;
  DeformationParams params{0.0, 0.0};
  if (cfg.exp.member) {
    const ModeIndex wanted{cfg.exp.member->first, cfg.exp.member->second};
    coeff = Eigen::VectorXd::Zero(cls.size());
    bool found = false;
    for (int i = 0; i < cls.size(); ++i) {
      if (cls.modes[i] == wanted) {
        coeff[i] = 1.0;
        found = true;
      }
    }
    if (!found) throw ConfigError("export.member is not in the class");
    name = "mode_n" + std::to_string(wanted.n) + "_m" + std::to_string(wanted.m);
    if (cfg.deformation || cfg.rotated) params = params_of(cfg, cls, shape);
  } else {
    if (cfg.exp.level < 0) throw ConfigError("export needs \"level\" or \"member\"");
    params = params_of(cfg, cls, shape);
    const auto levels = split_levels(shape, cls, params);
    if (cfg.exp.level >= static_cast<int>(levels.size())) {
      throw ConfigError("export.level out of range");
    }
    coeff = levels[cfg.exp.level].vector;
    name = "field_N" + std::to_string(cls.N) + "_level" + std::to_string(cfg.exp.level);
  }

  const auto field = synthesize_mode(shape, cls, coeff, params, nu, nv);
  const bool csv_fmt = (cfg.exp.format == "csv");
  if (!csv_fmt && cfg.exp.format != "pgm") throw ConfigError("export.format is csv or pgm");
  const auto path =
      (fs::path(cfg.out_dir) / (name + (csv_fmt ? ".csv" : ".pgm"))).string();
  export_field(field, csv_fmt ? FieldFormat::CSV : FieldFormat::PGM, path,
               {.signed_pgm = cfg.exp.signed_pgm, .class_N = cls.N,
                .level_index = cfg.exp.level});
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// verify suites
// ---------------------------------------------------------------------------

void suite_operators(const RunConfig& cfg, const CavityShape& shape,
                     std::vector<Assertion>& out) {
  std::vector<long long> Ns = cfg.verify.operator_Ns;
  if (Ns.empty() && cfg.N) Ns = {*cfg.N};
  if (Ns.empty()) throw ConfigError("operators suite needs verify.operator_Ns or N");

  for (const long long N : Ns) {
    const auto cls = enumerate_class(shape, N);
    const auto pm = build_perturbation_matrix(shape, cls);
    const int d = cls.size();
    const std::string tag = "operators/N" + std::to_string(N) + "/";

    double worst_vx = 0, worst_ux = 0, worst_closed = 0;
    Eigen::MatrixXd Uq(d, d), Vq(d, d), Yq(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        const auto &mi = cls.modes[i], &mj = cls.modes[j];
        const double vx = quadrature_matrix_element(shape, SubspaceOperator::vX, mi, mj);
        const double ux = quadrature_matrix_element(shape, SubspaceOperator::uX, mi, mj);
        const double lam = x_eigenvalue(shape, mj);
        worst_vx = std::max(worst_vx,
                            std::abs(vx - (i == j ? shape.b / 2.0 * lam : 0.0)));
        worst_ux = std::max(worst_ux,
                            std::abs(ux - (i == j ? shape.a / 2.0 * lam : 0.0)));
        Uq(i, j) = quadrature_matrix_element(shape, SubspaceOperator::uY, mi, mj);
        Vq(i, j) = quadrature_matrix_element(shape, SubspaceOperator::vY, mi, mj);
        Yq(i, j) = quadrature_matrix_element(shape, SubspaceOperator::Y, mi, mj);
        worst_closed = std::max({worst_closed, std::abs(Uq(i, j) - pm.U(i, j)),
                                 std::abs(Vq(i, j) - pm.V(i, j))});
      }
    }
    const double tol = cfg.tol.operator_identity;
    out.push_back({tag + "vX_equals_bLambda_half", worst_vx < tol, worst_vx, tol});
    out.push_back({tag + "uX_equals_aLambda_half", worst_ux < tol, worst_ux, tol});
    out.push_back({tag + "closed_form_vs_quadrature", worst_closed < tol, worst_closed, tol});
    if (cls.label.kind == CaseKind::Case1) {
      const double worst = std::max(Uq.cwiseAbs().maxCoeff(), Vq.cwiseAbs().maxCoeff());
      out.push_back({tag + "case1_U_V_vanish", worst < tol, worst, tol});
    }
    if (cls.label.kind == CaseKind::Case2) {
      const double wu = (Uq - shape.a / 2.0 * Yq).cwiseAbs().maxCoeff();
      const double wv = (Vq - shape.b / 2.0 * Yq).cwiseAbs().maxCoeff();
      out.push_back({tag + "case2_uY_is_aY_half", wu < tol, wu, tol});
      out.push_back({tag + "case2_vY_is_bY_half", wv < tol, wv, tol});
    }

    const DeformationParams probe{0.0123, -0.0077};
    Eigen::MatrixXd H = build_h1(pm, probe);
    H.diagonal().array() += uniform_shift_rate(pm, probe);
    const double wf = (H - h1_weak_matrix(shape, cls, probe)).cwiseAbs().maxCoeff();
    out.push_back({tag + "weak_form_consistency", wf < cfg.tol.weak_form, wf, cfg.tol.weak_form});
  }
}

void suite_case5(const RunConfig& cfg, const CavityShape& shape, std::vector<Assertion>& out) {
  std::vector<std::pair<long long, long long>> shapes;
  if (cfg.verify.case5_pq_sum_max > 0) {
    for (long long p = 1; p < cfg.verify.case5_pq_sum_max; ++p) {
      for (long long q = 1; p + q <= cfg.verify.case5_pq_sum_max; ++q) {
        if (std::gcd(p, q) == 1) shapes.push_back({p, q});
      }
    }
  } else {
    shapes.push_back({shape.p, shape.q});
  }

  long long case5_count = 0, total = 0;
  bool table_ok = true;
  for (const auto& [p, q] : shapes) {
    const auto report = verify_case5_absence(CavityShape(p, q, 1.0), cfg.verify.case5_N_max);
    case5_count += report.counts[4];
    total += report.total_classes;
    table_ok &= report.parity_table_ok;
  }
  out.push_back({"case5/none_found", case5_count == 0, static_cast<double>(case5_count), 0.5});
  out.push_back({"case5/parity_table_matches", table_ok, table_ok ? 0.0 : 1.0, 0.5});
  out.push_back({"case5/classes_checked", total > 0, static_cast<double>(total), 0.5,
                 ">"});
}

void suite_partner(const RunConfig& cfg, const CavityShape& shape,
                   std::vector<Assertion>& out) {
  std::vector<long long> Ns = cfg.verify.partner_Ns;
  if (Ns.empty() && cfg.N) Ns = {*cfg.N};
  if (Ns.empty()) throw ConfigError("partner suite needs verify.partner_Ns or N");

  std::mt19937 gen(0x5EED5u);
  std::uniform_real_distribution<double> dr(-cfg.verify.partner_magnitude,
                                            cfg.verify.partner_magnitude);
  for (const long long N : Ns) {
    const auto cls = enumerate_class(shape, N);
    if (cls.label.kind == CaseKind::Case1 || cls.label.kind == CaseKind::Case5) {
      throw ConfigError("partner suite needs a Case2/3/4 class, got " +
                        to_string(cls.label.kind));
    }
    double worst_dev = 0, worst_conj = 0;
    int used = 0;
    while (used < cfg.verify.partner_samples) {
      const RotatedParams rot{dr(gen), dr(gen), cls.label.kind};
      try {
        const auto rep = check_partner(shape, cls, rot);
        worst_dev = std::max(worst_dev, rep.max_deviation);
        worst_conj = std::max(worst_conj, rep.conjugation_residual);
        ++used;
      } catch (const DegenerateSplitting&) {
        // a draw can land on a symmetric point; take another
      }
    }
    const std::string tag = "partner/N" + std::to_string(N) + "/";
    out.push_back({tag + "max_deviation", worst_dev < cfg.tol.partner_deviation, worst_dev,
                   cfg.tol.partner_deviation});
    out.push_back({tag + "conjugation_identity", worst_conj < cfg.tol.conjugation, worst_conj,
                   cfg.tol.conjugation});
  }
}

void suite_slopes(const RunConfig& cfg, const CavityShape& shape,
                  std::vector<Assertion>& out) {
  std::vector<long long> Ns = cfg.verify.slope_Ns;
  if (Ns.empty() && cfg.N) Ns = {*cfg.N};
  if (Ns.empty()) throw ConfigError("slopes suite needs verify.slope_Ns or N");

  for (const long long N : Ns) {
    const auto cls = enumerate_class(shape, N);
    DeformationParams dir{1.0, 0.0};
    if (cfg.direction) {
      dir = *cfg.direction;
    } else if (cls.label.kind != CaseKind::Case1) {
      dir = rotated_to_raw(shape, {0.0, 1.0, cls.label.kind});  // beta' axis
    }
    const auto rep = splitting_slopes(shape, cls, dir, cfg.epsilons, {cfg.grid_base});
    out.push_back({"slopes/N" + std::to_string(N) + "/max_rel_mismatch",
                   rep.max_rel_mismatch < cfg.tol.slope_rel, rep.max_rel_mismatch,
                   cfg.tol.slope_rel});
  }

  // baseline solver checks on the unit square
  const CavityShape sq(1, 1, 1.0);
  const double exact = 2.0 * std::numbers::pi * std::numbers::pi;
  const auto coarse =
      solve_helmholtz(assemble_metric(sq, {0.0, 0.0}, cfg.grid_base / 2, cfg.grid_base / 2), 1);
  const auto fine =
      solve_helmholtz(assemble_metric(sq, {0.0, 0.0}, cfg.grid_base, cfg.grid_base), 1);
  const double rel = std::abs(fine.eigenvalues[0] - exact) / exact;
  out.push_back({"slopes/unit_square_ground_rel_err", rel < 1e-3, rel, 1e-3});
  const double ratio =
      std::abs(coarse.eigenvalues[0] - exact) / std::abs(fine.eigenvalues[0] - exact);
  out.push_back({"slopes/refinement_ratio_low", ratio > 3.0, ratio, 3.0, ">"});
  out.push_back({"slopes/refinement_ratio_high", ratio < 5.0, ratio, 5.0});
}

void suite_mirror(const RunConfig& cfg, const CavityShape& shape,
                  std::vector<Assertion>& out) {
  if (cfg.verify.mirror_N <= 0) throw ConfigError("mirror suite needs verify.mirror_N");
  const auto cls = enumerate_class(shape, cfg.verify.mirror_N);
  const double norm =
      std::hypot(cfg.verify.mirror_dir_alpha, cfg.verify.mirror_dir_beta);
  const auto rep = oracle_mirror_check(shape, cls, cfg.verify.mirror_dir_alpha / norm,
                                       cfg.verify.mirror_dir_beta / norm,
                                       cfg.verify.mirror_epsilons, {cfg.grid_base});
  const std::string tag = "mirror/N" + std::to_string(cfg.verify.mirror_N) + "/";
  for (size_t i = 0; i < rep.points.size(); ++i) {
    char name[96];
    std::snprintf(name, sizeof name, "%sdeviation_eps_%g", tag.c_str(),
                  rep.points[i].epsilon);
    out.push_back({name, true, rep.points[i].deviation, 1.0});
  }
  for (size_t i = 0; i < rep.ratios.size(); ++i) {
    char name[96];
    std::snprintf(name, sizeof name, "%sratio_%zu_low", tag.c_str(), i);
    out.push_back({name, rep.ratios[i] > cfg.tol.mirror_ratio_low, rep.ratios[i],
                   cfg.tol.mirror_ratio_low, ">"});
    std::snprintf(name, sizeof name, "%sratio_%zu_high", tag.c_str(), i);
    out.push_back({name, rep.ratios[i] < cfg.tol.mirror_ratio_high, rep.ratios[i],
                   cfg.tol.mirror_ratio_high});
  }
}

int cmd_verify(const RunConfig& cfg) {
  const auto shape = shape_of(cfg);
  write_manifest(cfg, "verify");

  std::vector<Assertion> asserts;
  for (const auto& suite : cfg.verify.suites) {
    if (suite == "operators") {
      suite_operators(cfg, shape, asserts);
    } else if (suite == "case5") {
      suite_case5(cfg, shape, asserts);
    } else if (suite == "partner") {
      suite_partner(cfg, shape, asserts);
    } else if (suite == "slopes") {
      suite_slopes(cfg, shape, asserts);
    } else if (suite == "mirror") {
      suite_mirror(cfg, shape, asserts);
    } else {
      throw ConfigError("unknown verify suite \"" + suite + "\"");
    }
  }

  print_assertions(asserts);
  const json report = assertions_json(asserts);
  write_json(fs::path(cfg.out_dir) / "verify.json", report);
  const int failed = report.at("failed").get<int>();
  std::printf("%zu assertions, %d failed\n", asserts.size(), failed);
  return failed == 0 ? 0 : 4;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // translate the byte offset into line/column diagnostics
    size_t line = 1, col = 1;
    for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("config parse error at " + path + ":" + std::to_string(line) + ":" +
                      std::to_string(col) + ": " + e.what());
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"deformed-rectangle resonator laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  long long N_override = 0, Nmax_override = 0;
  double ap_override = 0, bp_override = 0, alpha_override = 0, beta_override = 0;
  int grid_override = 0, k_override = 0;
  bool has_N = false, has_Nmax = false, has_ap = false, has_bp = false;
  bool has_alpha = false, has_beta = false;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--N", N_override, "class invariant N")->each([&](const std::string&) {
      has_N = true;
    });
    sub->add_option("--N-max", Nmax_override, "enumeration bound")
        ->each([&](const std::string&) { has_Nmax = true; });
    sub->add_option("--alpha-prime", ap_override, "rotated alpha'")
        ->each([&](const std::string&) { has_ap = true; });
    sub->add_option("--beta-prime", bp_override, "rotated beta'")
        ->each([&](const std::string&) { has_bp = true; });
    sub->add_option("--alpha", alpha_override, "deformation alpha")
        ->each([&](const std::string&) { has_alpha = true; });
    sub->add_option("--beta", beta_override, "deformation beta")
        ->each([&](const std::string&) { has_beta = true; });
    sub->add_option("--grid", grid_override, "base grid intervals");
    sub->add_option("--k", k_override, "eigenpair count for oracle solves");
  };

  for (const char* name : {"enumerate", "verify", "split", "partner", "loop", "oracle",
                           "export"}) {
    add_common(app.add_subcommand(name));
  }

  std::vector<const char*> argv{"cavlab"};
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    json raw = json::object();
    if (!config_path.empty()) raw = load_config_file(config_path);
    RunConfig cfg = parse_config(raw);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (has_N) cfg.N = N_override;
    if (has_Nmax) cfg.N_max = Nmax_override;
    if (grid_override > 0) cfg.grid_base = grid_override;
    if (k_override > 0) cfg.k = k_override;
    if (has_ap || has_bp) {
      auto rp = cfg.rotated.value_or(std::pair<double, double>{0.0, 0.0});
      if (has_ap) rp.first = ap_override;
      if (has_bp) rp.second = bp_override;
      cfg.rotated = rp;
    }
    if (has_alpha || has_beta) {
      auto dp = cfg.deformation.value_or(DeformationParams{0.0, 0.0});
      if (has_alpha) dp.alpha = alpha_override;
      if (has_beta) dp.beta = beta_override;
      cfg.deformation = dp;
    }

    if (app.got_subcommand("enumerate")) return cmd_enumerate(cfg);
    if (app.got_subcommand("verify")) return cmd_verify(cfg);
    if (app.got_subcommand("split")) return cmd_split(cfg);
    if (app.got_subcommand("partner")) return cmd_partner(cfg);
    if (app.got_subcommand("loop")) return cmd_loop(cfg);
    if (app.got_subcommand("oracle")) return cmd_oracle(cfg);
    if (app.got_subcommand("export")) return cmd_export(cfg);
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "domain error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
}

}  // namespace cavlab
