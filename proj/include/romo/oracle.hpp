#pragma once

#include "romo/dataset.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace romo {

// The three-dimensional Hartmann function with its standard constants.
// Total on all of R^3; the interesting region is the unit cube.
double hartmann3(const Design& x);

// Uniform sample of n_total points on (0,1)^3 scored by hartmann3, with the
// trim highest- and trim lowest-scoring points removed (rank cut, ties broken
// by sample index).
OfflineDataset generate_hartmann_dataset(int n_total, int trim, std::uint64_t seed);

// Ground-truth scorer: either the built-in Hartmann function or an external
// command speaking the line protocol (CSV designs on stdin, one score per
// output line).
struct OracleHandle {
  enum class Kind { Hartmann3, External };
  Kind kind = Kind::Hartmann3;
  std::string command;

  static OracleHandle hartmann() { return {Kind::Hartmann3, ""}; }
  static OracleHandle external(std::string cmd) { return {Kind::External, std::move(cmd)}; }
};

std::vector<double> evaluate_batch(const OracleHandle& oracle,
                                   const std::vector<Design>& designs);

}  // namespace romo
