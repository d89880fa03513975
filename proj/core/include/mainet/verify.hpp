#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mainet::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // worst error observed, or the failure reason
};

/// Self-check suite: brute-force oracle comparisons for the numeric kernels,
/// finite-difference gradient checks, reparameterization equivalence, the
/// evidential-reasoning algebra, split/metric arithmetic and determinism.
/// Sized to finish in well under a minute on one core.
std::vector<CheckResult> run_all(std::uint64_t seed = 7);

}  // namespace mainet::verify
