#include "cavlab/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

namespace cavlab {

namespace {

constexpr double kPi = std::numbers::pi;

long long isqrt_ll(long long x) {
  if (x < 0) return -1;
  auto r = static_cast<long long>(std::sqrt(static_cast<double>(x)));
  while (r * r > x) --r;
  while ((r + 1) * (r + 1) <= x) ++r;
  return r;
}

}  // namespace

CavityShape::CavityShape(long long p_, long long q_, double b_scale)
    : b(b_scale), p(p_), q(q_) {
  if (p < 1 || q < 1) throw ConfigError("shape: p and q must be >= 1");
  if (std::gcd(p, q) != 1) throw ConfigError("shape: p/q must be in lowest terms");
  if (!(b > 0.0)) throw ConfigError("shape: b must be positive");
  a = b * std::sqrt(static_cast<double>(q) / static_cast<double>(p));
}

std::string to_string(CaseKind kind) {
  switch (kind) {
    case CaseKind::Case1: return "Case1";
    case CaseKind::Case2: return "Case2";
    case CaseKind::Case3: return "Case3";
    case CaseKind::Case4: return "Case4";
    case CaseKind::Case5: return "Case5";
  }
  return "?";
}

std::string to_string(const CaseLabel& label) {
  auto sgn = [](int s) { return s > 0 ? "+" : "-"; };
  switch (label.kind) {
    case CaseKind::Case1:
      return "Case1(" + std::string(sgn(label.sigma)) + "," + sgn(label.sigma_prime) + ")";
    case CaseKind::Case5:
      return "Case5";
    default:
      return to_string(label.kind) + "(" + sgn(label.sigma) + ")";
  }
}

double mode_eigenvalue(const CavityShape& shape, const ModeIndex& mode) {
  if (mode.n < 1 || mode.m < 1) throw ConfigError("mode: n, m must be >= 1");
  const double nn = static_cast<double>(mode.n);
  const double mm = static_cast<double>(mode.m);
  return kPi * kPi * (nn * nn / (shape.a * shape.a) + mm * mm / (shape.b * shape.b));
}

CaseLabel classify_modes(const std::vector<ModeIndex>& modes) {
  if (modes.size() < 2) throw ClassTooSmall("classify: need at least 2 modes");

  bool s1_const = true, s2_const = true, prod_const = true;
  const int s1 = modes.front().sigma1();
  const int s2 = modes.front().sigma2();
  for (const auto& m : modes) {
    s1_const &= (m.sigma1() == s1);
    s2_const &= (m.sigma2() == s2);
    prod_const &= (m.sigma1() * m.sigma2() == s1 * s2);
  }

  CaseLabel label;
  if (s1_const && s2_const) {
    label.kind = CaseKind::Case1;
    label.sigma = s1;
    label.sigma_prime = s2;
  } else if (prod_const) {
    label.kind = CaseKind::Case2;
    label.sigma = s1 * s2;
  } else if (s1_const) {
    label.kind = CaseKind::Case3;
    label.sigma = s1;
  } else if (s2_const) {
    label.kind = CaseKind::Case4;
    label.sigma = s2;
  } else {
    label.kind = CaseKind::Case5;
  }
  return label;
}

CaseLabel classify_class(const DegenerateClass& cls) { return classify_modes(cls.modes); }

DegenerateClass enumerate_class(const CavityShape& shape, long long N) {
  DegenerateClass cls;
  cls.N = N;

  // n runs over 1..floor(sqrt((N-q)/p)); m is solved exactly in integers.
  for (long long n = 1; n * n * shape.p + shape.q <= N; ++n) {
    const long long rem = N - n * n * shape.p;
    if (rem % shape.q != 0) continue;
    const long long m2 = rem / shape.q;
    const long long m = isqrt_ll(m2);
    if (m >= 1 && m * m == m2) {
      cls.modes.push_back(ModeIndex{static_cast<int>(n), static_cast<int>(m)});
    }
  }
  if (cls.modes.empty()) {
    throw NoSolutions("enumerate_class: no (n,m) with n^2 p + m^2 q = " + std::to_string(N));
  }

  cls.eigenvalue = kPi * kPi * static_cast<double>(N) /
                   (static_cast<double>(shape.p) * shape.a * shape.a);
  if (cls.modes.size() >= 2) {
    cls.label = classify_modes(cls.modes);
  } else {
    cls.label = CaseLabel{CaseKind::Case1, cls.modes[0].sigma1(), cls.modes[0].sigma2()};
  }
  return cls;
}

DegenerateClass subset_class(const DegenerateClass& cls, const std::vector<ModeIndex>& wanted) {
  DegenerateClass sub;
  sub.N = cls.N;
  sub.eigenvalue = cls.eigenvalue;
  for (const auto& w : wanted) {
    auto it = std::find(cls.modes.begin(), cls.modes.end(), w);
    if (it == cls.modes.end()) {
      throw ConfigError("subset_class: (" + std::to_string(w.n) + "," + std::to_string(w.m) +
                        ") is not a member of the N=" + std::to_string(cls.N) + " class");
    }
    sub.modes.push_back(w);
  }
  std::sort(sub.modes.begin(), sub.modes.end(),
            [](const ModeIndex& x, const ModeIndex& y) { return x.n < y.n; });
  if (sub.modes.size() >= 2) {
    sub.label = classify_modes(sub.modes);
  } else if (!sub.modes.empty()) {
    sub.label = CaseLabel{CaseKind::Case1, sub.modes[0].sigma1(), sub.modes[0].sigma2()};
  }
  return sub;
}

std::vector<DegenerateClass> enumerate_all_classes(const CavityShape& shape, long long N_max,
                                                   int min_size) {
  if (min_size < 1) min_size = 1;
  std::map<long long, std::vector<ModeIndex>> by_N;
  for (long long n = 1; n * n * shape.p + shape.q <= N_max; ++n) {
    for (long long m = 1; n * n * shape.p + m * m * shape.q <= N_max; ++m) {
      const long long N = n * n * shape.p + m * m * shape.q;
      by_N[N].push_back(ModeIndex{static_cast<int>(n), static_cast<int>(m)});
    }
  }

  std::vector<DegenerateClass> out;
  for (auto& [N, modes] : by_N) {
    if (static_cast<int>(modes.size()) < min_size) continue;
    DegenerateClass cls;
    cls.N = N;
    cls.modes = std::move(modes);  // ascending n already (outer loop order)
    cls.eigenvalue = kPi * kPi * static_cast<double>(N) /
                     (static_cast<double>(shape.p) * shape.a * shape.a);
    if (cls.modes.size() >= 2) {
      cls.label = classify_modes(cls.modes);
    } else {
      cls.label = CaseLabel{CaseKind::Case1, cls.modes[0].sigma1(), cls.modes[0].sigma2()};
    }
    out.push_back(std::move(cls));
  }
  return out;
}

ParityBranch parity_branch(const CavityShape& shape) {
  const bool p_odd = (shape.p % 2 != 0);
  const bool q_odd = (shape.q % 2 != 0);
  if (p_odd && q_odd) return ParityBranch::OddOdd;
  if (p_odd) return ParityBranch::OddEven;
  return ParityBranch::EvenOdd;  // (even, even) excluded by gcd = 1
}

std::string to_string(ParityBranch branch) {
  switch (branch) {
    case ParityBranch::OddOdd: return "(o,o)";
    case ParityBranch::OddEven: return "(o,e)";
    case ParityBranch::EvenOdd: return "(e,o)";
  }
  return "?";
}

bool parity_pair_allowed(ParityBranch branch, bool n_even, int sigma1, int sigma2) {
  switch (branch) {
    case ParityBranch::OddOdd:
      // N = n^2 p + m^2 q == n + m (mod 2)
      return n_even ? (sigma1 == sigma2) : (sigma1 != sigma2);
    case ParityBranch::OddEven:
      // N == n (mod 2): N even forces n even, i.e. sigma1 = -1
      return n_even ? (sigma1 == -1) : (sigma1 == +1);
    case ParityBranch::EvenOdd:
      // N == m (mod 2)
      return n_even ? (sigma2 == -1) : (sigma2 == +1);
  }
  return false;
}

Case5Report verify_case5_absence(const CavityShape& shape, long long N_max) {
  Case5Report report;
  report.N_max = N_max;
  const ParityBranch branch = parity_branch(shape);

  const auto classes = enumerate_all_classes(shape, N_max, 2);
  for (const auto& cls : classes) {
    Case5ClassEntry entry;
    entry.N = cls.N;
    entry.label = cls.label;
    entry.branch = branch;
    entry.N_even = (cls.N % 2 == 0);
    entry.parity_table_ok = true;
    for (const auto& m : cls.modes) {
      entry.parity_table_ok &=
          parity_pair_allowed(branch, entry.N_even, m.sigma1(), m.sigma2());
    }
    report.parity_table_ok &= entry.parity_table_ok;
    ++report.counts[static_cast<int>(cls.label.kind) - 1];
    ++report.total_classes;
    report.entries.push_back(entry);

    if (cls.label.kind == CaseKind::Case5) {
      throw Case5Found("Case5 class found at N = " + std::to_string(cls.N) +
                       " for p/q = " + std::to_string(shape.p) + "/" + std::to_string(shape.q));
    }
  }
  return report;
}

}  // namespace cavlab
