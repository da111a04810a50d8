#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lrsng {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline bool all_pass(const std::vector<CheckResult>& checks) {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

// Expected costs of both players. Standard errors are zero for exact
// evaluations; trajectories is zero when no sampling was involved.
struct CostReport {
  double jl = 0.0;
  double jr = 0.0;
  double jl_se = 0.0;
  double jr_se = 0.0;
  std::uint64_t trajectories = 0;
  std::uint64_t seed = 0;
};

}  // namespace lrsng
