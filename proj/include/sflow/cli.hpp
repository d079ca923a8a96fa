#pragma once

// Batch front end. Config files are `key = value` lines with `#` comments.
//
//   problem = identity | shifted_laplacian | cubic | polynomial | tabulated
//   n, c, cubic, A, S, x
//   mesh.N, interval.a, interval.b
//   scan.grid, scan.bracket, scan.max_depth, scan.eigencurves, scan.route
//   tol.rank, tol.zero_band, tol.angle, tol.projection, tol.selfadjoint
//   verify.steps, verify.delta0, gap.pairs, gap.dump
//   output.dir, seed
//
// Matrices are written row by row: `1, 0; 0, 4`. Coefficient and sample
// lists separate matrices with `|`.

#include "sflow/bifurcation.hpp"
#include "sflow/core.hpp"
#include "sflow/hilbert_fem.hpp"
#include "sflow/ode_verify.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sflow {

struct RunConfig {
  std::string problem = "cubic";
  int n = 1;
  double c = 50.0;
  double cubic = 0.0;
  std::vector<Matrix> A;
  std::vector<Matrix> S;
  std::vector<double> x;
  int mesh_elements = 200;
  Interval interval{0.2, 0.5};
  int grid = 32;
  double bracket = 1e-6;
  int max_depth = 60;
  int eigencurves = 6;
  ProjectionRoute route = ProjectionRoute::complement;
  ToleranceProfile tol;
  int verify_steps = 8;
  double verify_delta0 = 2e-5;
  int gap_pairs = 50;
  bool gap_dump = false;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
};

/// Throws invalid_argument naming the offending key.
RunConfig parse_config(const std::string& text);

ProblemData make_problem(const RunConfig& config);

/// Exit codes: 0 success, 1 usage/config, 2 degenerate endpoint, 3 numerical
/// failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sflow
