#include "wht/parallel.hpp"

#include <algorithm>
#include <bit>
#include <string>
#include <vector>

namespace wht {

ParallelPlan plan_parallel(int log2_dim, int log2_workers) {
  if (log2_workers < 1 || log2_workers > log2_dim - 1) {
    throw Error(Errc::InvalidWorkerCount, "need 1 <= p <= n-1, got p = " +
                                              std::to_string(log2_workers) +
                                              ", n = " + std::to_string(log2_dim));
  }
  const int n = log2_dim;
  const int p = log2_workers;
  const std::uint64_t m = std::uint64_t{1} << p;

  ParallelPlan plan{n, p, {}};
  plan.phases.reserve(p + 1);

  PhaseSpec chunks;
  chunks.kind = PhaseSpec::Kind::ChunkTransform;
  chunks.chunk_size = dim_of(n - p);
  plan.phases.push_back(std::move(chunks));

  const std::uint64_t per_worker = dim_of(n - 1 - p);
  for (int k = n - p; k < n; ++k) {
    PhaseSpec stage;
    stage.kind = PhaseSpec::Kind::Stage;
    stage.stage = k;
    stage.workloads.reserve(m);
    for (std::uint64_t w = 0; w < m; ++w) {
      stage.workloads.push_back({workload_start(w, per_worker, k), dim_of(k), per_worker});
    }
    plan.phases.push_back(std::move(stage));
  }
  return plan;
}

ParallelPlan plan_parallel_for_workers(int log2_dim, std::uint64_t workers) {
  if (workers == 0 || !std::has_single_bit(workers)) {
    throw Error(Errc::InvalidWorkerCount,
                "worker count " + std::to_string(workers) + " is not a power of two");
  }
  return plan_parallel(log2_dim, std::countr_zero(workers));
}

PlanCheck check_plan(const ParallelPlan& plan) {
  PlanCheck result;
  const std::uint64_t size = dim_of(plan.log2_dim);
  const std::uint64_t m = plan.workers();
  std::vector<std::uint32_t> owner(size);

  auto fail = [&result](bool& flag, std::string what) {
    flag = false;
    if (result.detail.empty()) result.detail = std::move(what);
  };

  for (std::size_t ph = 0; ph < plan.phases.size(); ++ph) {
    const PhaseSpec& phase = plan.phases[ph];
    std::fill(owner.begin(), owner.end(), 0u);

    auto mark = [&](std::uint64_t idx, std::uint32_t subtask) {
      if (idx >= size) {
        fail(result.complete, "phase " + std::to_string(ph) + " touches out-of-range index");
        return;
      }
      if (owner[idx] != 0) {
        fail(result.disjoint, "phase " + std::to_string(ph) + ": index " + std::to_string(idx) +
                                  " touched by subtasks " + std::to_string(owner[idx] - 1) +
                                  " and " + std::to_string(subtask - 1));
      }
      owner[idx] = subtask;
    };

    if (phase.kind == PhaseSpec::Kind::ChunkTransform) {
      for (std::uint64_t w = 0; w < m; ++w) {
        for (std::uint64_t i = 0; i < phase.chunk_size; ++i) {
          mark(w * phase.chunk_size + i, static_cast<std::uint32_t>(w + 1));
        }
        const int chunk_log2 = std::countr_zero(phase.chunk_size);
        result.butterflies += phase.chunk_size / 2 * static_cast<std::uint64_t>(chunk_log2);
      }
    } else {
      if (phase.workloads.size() != m) {
        fail(result.complete, "phase " + std::to_string(ph) + " has wrong subtask count");
      }
      for (std::size_t w = 0; w < phase.workloads.size(); ++w) {
        const Workload& wl = phase.workloads[w];
        const std::uint64_t low = wl.stride - 1;
        if (wl.count > wl.stride || (wl.start & wl.stride) != 0 ||
            (wl.start & low) + wl.count > wl.stride) {
          fail(result.runs_contiguous,
               "phase " + std::to_string(ph) + " workload " + std::to_string(w) +
                   " crosses a stride boundary");
        }
        for (std::uint64_t i = 0; i < wl.count; ++i) {
          mark(wl.start + i, static_cast<std::uint32_t>(w + 1));
          mark(wl.start + i + wl.stride, static_cast<std::uint32_t>(w + 1));
        }
        result.butterflies += wl.count;
      }
    }
    for (std::uint64_t i = 0; i < size; ++i) {
      if (owner[i] == 0) {
        fail(result.complete,
             "phase " + std::to_string(ph) + " never touches index " + std::to_string(i));
        break;
      }
    }
  }
  return result;
}

}  // namespace wht
