#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cavlab/errors.hpp"

namespace cavlab {

/// Rectangular cavity with an exactly rational squared aspect ratio,
/// b^2/a^2 = p/q in lowest terms. The constructor takes (p, q) and the
/// b side length; a is derived. Rationality is never inferred from floats.
struct CavityShape {
  double a = 0.0;  // horizontal side
  double b = 0.0;  // vertical side
  long long p = 1;
  long long q = 1;

  CavityShape(long long p_, long long q_, double b_scale = 1.0);
};

/// One basis mode sin(n pi u / a) sin(m pi v / b) of the rectangle.
/// Parities under the mirror planes P1: u -> a-u and P2: v -> b-v are
/// sigma1 = (-1)^(n+1), sigma2 = (-1)^(m+1).
struct ModeIndex {
  int n = 1;
  int m = 1;

  int sigma1() const { return (n % 2 != 0) ? +1 : -1; }
  int sigma2() const { return (m % 2 != 0) ? +1 : -1; }

  bool operator==(const ModeIndex&) const = default;
};

enum class CaseKind { Case1 = 1, Case2, Case3, Case4, Case5 };

/// Parity case of a degenerate class. `sigma` is the constant quantity of
/// the case (sigma1 for Case1/Case3, sigma2 for Case4, the common product
/// sigma1*sigma2 for Case2); `sigma_prime` is the constant sigma2 of Case1.
struct CaseLabel {
  CaseKind kind = CaseKind::Case5;
  int sigma = 0;
  int sigma_prime = 0;
};

std::string to_string(CaseKind kind);
std::string to_string(const CaseLabel& label);

/// Maximal set of modes sharing one eigenvalue: all positive-integer
/// solutions of n^2 p + m^2 q = N, sorted by ascending n.
struct DegenerateClass {
  long long N = 0;
  std::vector<ModeIndex> modes;
  double eigenvalue = 0.0;  // pi^2 N / (p a^2)
  CaseLabel label;

  int size() const { return static_cast<int>(modes.size()); }
};

/// pi^2 (n^2/a^2 + m^2/b^2)
double mode_eigenvalue(const CavityShape& shape, const ModeIndex& mode);

/// All solutions of n^2 p + m^2 q = N, with parities and case label filled
/// in. Throws NoSolutions if there are none. Classes of size 1 get the
/// degenerate-trivial label of their single parity pair (Case1).
DegenerateClass enumerate_class(const CavityShape& shape, long long N);

/// Restrict a class to an explicit mode list (for reproducing published
/// sub-multiplets); every requested mode must be a member.
DegenerateClass subset_class(const DegenerateClass& cls,
                             const std::vector<ModeIndex>& wanted);

/// All maximal classes with N <= N_max and at least min_size members,
/// ascending in N.
std::vector<DegenerateClass> enumerate_all_classes(const CavityShape& shape,
                                                   long long N_max,
                                                   int min_size = 2);

/// Case assignment from the parity vectors alone. Throws ClassTooSmall for
/// fewer than 2 modes.
CaseLabel classify_modes(const std::vector<ModeIndex>& modes);
CaseLabel classify_class(const DegenerateClass& cls);

/// Parity branch of (p,q): (odd,odd), (odd,even) or (even,odd).
enum class ParityBranch { OddOdd, OddEven, EvenOdd };

ParityBranch parity_branch(const CavityShape& shape);
std::string to_string(ParityBranch branch);

/// Allowed (sigma1, sigma2) pairs for a given branch and N parity. For
/// p, q both odd: N even -> {(+,+),(-,-)}, N odd -> {(+,-),(-,+)};
/// p odd, q even: sigma1 = -1 for N even, +1 for N odd, sigma2 free;
/// p even, q odd: sigma2 = -1 for N even, +1 for N odd, sigma1 free.
bool parity_pair_allowed(ParityBranch branch, bool n_even, int sigma1, int sigma2);

struct Case5ClassEntry {
  long long N = 0;
  CaseLabel label;
  ParityBranch branch = ParityBranch::OddOdd;
  bool N_even = false;
  bool parity_table_ok = false;
};

struct Case5Report {
  long long N_max = 0;
  long long counts[5] = {0, 0, 0, 0, 0};  // per CaseKind, classes of size >= 2
  long long total_classes = 0;
  bool parity_table_ok = true;
  std::vector<Case5ClassEntry> entries;
};

/// Exhaustively classify every class (size >= 2) up to N_max; verify no
/// class is Case5 and that each member's parity pair matches the branch
/// table. Throws Case5Found if the impossibility proof is falsified.
Case5Report verify_case5_absence(const CavityShape& shape, long long N_max);

}  // namespace cavlab
