#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace wht {

struct IoBenchReport;

/// Calibration constants of the runtime model T = T_cpu + T_io.
struct PerfParams {
  double t_cpu_ref_seconds = 2.5;   // in-memory WHT time at n_ref
  int n_ref = 26;
  double t_cp_seconds = 506.0;      // time to copy a dataset of 2^unit_log2_dim elements
  double unit_log2_dim = 32.0;      // 32 GB of 8-byte elements
  double io_overhead = 1.0;         // observed / theoretical per-pass time
  double flash_factor = 1.0;        // copy-time multiplier for flash media

  /// Throws BadArguments unless every field is strictly positive.
  void validate() const;
};

/// Per-pass overhead seen on the reference disk: 577 s real against 506 s copy.
inline constexpr double kReferenceIoOverhead = 577.0 / 506.0;

struct PerfEstimate {
  int q = 0;
  double t_cpu_seconds = 0;
  double t_io_seconds = 0;
  double total_seconds = 0;
};

/// Copy time of one full pass over a 2^n-element dataset.
double copy_seconds(const PerfParams& params, int log2_dim);

/// Predicted runtime of an out-of-core WHT with 2^B elements in memory.
/// T_cpu scales linearly with 2^n; T_io = (n - B + 1) passes of copy time.
PerfEstimate estimate(const PerfParams& params, int log2_dim, int mem_log2);

struct DistributedEstimate {
  double fold_cpu_seconds = 0;     // streaming the 2^n_source source once
  PerfEstimate reduced;            // external WHT of the folded 2^n_reduced dataset
  double per_machine_seconds = 0;
  double expected_coverage = 0;
};

/// Fleet of P machines, each folding a 2^n_source signal to 2^n_reduced.
DistributedEstimate estimate_distributed(const PerfParams& params, int n_source, int n_reduced,
                                         int mem_log2, int machines);

/// Expected fraction of Walsh coefficients seen by P random subspaces of
/// relative size 2^-(n_source - n_reduced).
double expected_coverage(int n_source, int n_reduced, int machines);

/// Builds parameters from a measured copy sweep and a CPU timing (n, seconds).
/// Uses the successful row with the largest block size.
PerfParams calibrate(const IoBenchReport& report, std::pair<int, double> measured_cpu,
                     const PerfParams& base = {});

/// Rows (n, estimate) for n in [n_lo, n_hi] at fixed B.
std::vector<std::pair<int, PerfEstimate>> estimate_table(const PerfParams& params, int n_lo,
                                                         int n_hi, int mem_log2);

}  // namespace wht
