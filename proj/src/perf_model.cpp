#include "wht/perf_model.hpp"

#include <cmath>
#include <string>

#include "wht/error.hpp"
#include "wht/iobench.hpp"

namespace wht {

void PerfParams::validate() const {
  if (!(t_cpu_ref_seconds > 0) || !(t_cp_seconds > 0) || !(unit_log2_dim > 0) || n_ref <= 0 ||
      !(io_overhead > 0) || !(flash_factor > 0)) {
    throw Error(Errc::BadArguments, "performance parameters must be strictly positive");
  }
}

double copy_seconds(const PerfParams& params, int log2_dim) {
  return params.t_cp_seconds * std::exp2(log2_dim - params.unit_log2_dim) * params.io_overhead *
         params.flash_factor;
}

PerfEstimate estimate(const PerfParams& params, int log2_dim, int mem_log2) {
  params.validate();
  if (mem_log2 < 1 || log2_dim < mem_log2) {
    throw Error(Errc::BadArguments, "need n >= B >= 1, got n = " + std::to_string(log2_dim) +
                                        ", B = " + std::to_string(mem_log2));
  }
  PerfEstimate e;
  e.q = log2_dim - mem_log2 + 1;
  e.t_cpu_seconds = params.t_cpu_ref_seconds * std::exp2(log2_dim - params.n_ref);
  e.t_io_seconds = e.q * copy_seconds(params, log2_dim);
  e.total_seconds = e.t_cpu_seconds + e.t_io_seconds;
  return e;
}

double expected_coverage(int n_source, int n_reduced, int machines) {
  const double fraction = std::exp2(-(n_source - n_reduced));
  return 1.0 - std::pow(1.0 - fraction, machines);
}

DistributedEstimate estimate_distributed(const PerfParams& params, int n_source, int n_reduced,
                                         int mem_log2, int machines) {
  if (machines < 1) throw Error(Errc::BadArguments, "need at least one machine");
  if (n_source < n_reduced || n_reduced < mem_log2) {
    throw Error(Errc::BadArguments, "need n_source >= n_reduced >= B");
  }
  DistributedEstimate d;
  d.fold_cpu_seconds = params.t_cpu_ref_seconds * std::exp2(n_source - params.n_ref);
  d.reduced = estimate(params, n_reduced, mem_log2);
  d.per_machine_seconds = d.fold_cpu_seconds + d.reduced.total_seconds;
  d.expected_coverage = expected_coverage(n_source, n_reduced, machines);
  return d;
}

PerfParams calibrate(const IoBenchReport& report, std::pair<int, double> measured_cpu,
                     const PerfParams& base) {
  const IoBenchRow* best = nullptr;
  for (const auto& row : report.rows) {
    if (!row.ok() || !(row.copy_seconds > 0)) continue;
    if (!best || row.block_bytes > best->block_bytes) best = &row;
  }
  if (!best) throw Error(Errc::EmptyReport, "no successful copy measurement to calibrate from");
  if (report.file_bytes < 8) throw Error(Errc::EmptyReport, "report has no file size");
  const auto [cpu_n, cpu_seconds] = measured_cpu;
  if (!(cpu_seconds > 0) || cpu_n < 1) {
    throw Error(Errc::BadArguments, "CPU measurement must be positive");
  }

  PerfParams p = base;
  p.t_cp_seconds = best->copy_seconds;
  p.unit_log2_dim = std::log2(static_cast<double>(report.file_bytes) / 8.0);
  p.t_cpu_ref_seconds = cpu_seconds * std::exp2(p.n_ref - cpu_n);
  p.validate();
  return p;
}

std::vector<std::pair<int, PerfEstimate>> estimate_table(const PerfParams& params, int n_lo,
                                                         int n_hi, int mem_log2) {
  std::vector<std::pair<int, PerfEstimate>> rows;
  for (int n = n_lo; n <= n_hi; ++n) rows.emplace_back(n, estimate(params, n, mem_log2));
  return rows;
}

}  // namespace wht
