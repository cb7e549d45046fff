#pragma once

#include <atomic>
#include <barrier>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "wht/core.hpp"
#include "wht/signal.hpp"

namespace wht {

/// A contiguous run of butterflies at one stride: pairs (pt, pt + stride)
/// for pt in [start, start + count).
struct Workload {
  std::uint64_t start = 0;
  std::uint64_t stride = 1;
  std::uint64_t count = 0;

  bool operator==(const Workload&) const = default;
};

/// Phase 0 runs a full WHT on each contiguous chunk; later phases run
/// one workload per worker at a single stage.
struct PhaseSpec {
  enum class Kind { ChunkTransform, Stage };
  Kind kind = Kind::ChunkTransform;
  int stage = -1;                    // k for Stage phases
  std::uint64_t chunk_size = 0;      // 2^(n-p) for ChunkTransform phases
  std::vector<Workload> workloads;   // Stage phases only, one per worker
};

struct ParallelPlan {
  int log2_dim = 0;
  int log2_workers = 0;
  std::vector<PhaseSpec> phases;

  std::uint64_t workers() const noexcept { return std::uint64_t{1} << log2_workers; }
};

/// Schedule for m = 2^p workers: m chunk transforms of size 2^(n-p), then
/// one phase per stage k = n-p .. n-1 with m equal workloads each.
/// Throws InvalidWorkerCount unless 1 <= p <= n-1.
ParallelPlan plan_parallel(int log2_dim, int log2_workers);

/// Same as plan_parallel for a worker count m, which must be a power of two.
ParallelPlan plan_parallel_for_workers(int log2_dim, std::uint64_t workers);

/// First index of the w-th contiguous run of `per_worker` stage-k butterflies.
constexpr std::uint64_t workload_start(std::uint64_t w, std::uint64_t per_worker, int k) noexcept {
  const std::uint64_t t = w * per_worker;
  const std::uint64_t low = (std::uint64_t{1} << k) - 1;
  return ((t >> k) << (k + 1)) | (t & low);
}

struct PlanCheck {
  bool disjoint = true;        // no index touched by two subtasks of one phase
  bool complete = true;        // each phase touches every index exactly once
  bool runs_contiguous = true; // no workload crosses a bit-k boundary
  std::uint64_t butterflies = 0;
  std::string detail;

  bool ok() const noexcept { return disjoint && complete && runs_contiguous; }
};

/// Static verification of a plan by marking touched indices per phase.
/// Needs 2^n bytes of scratch.
PlanCheck check_plan(const ParallelPlan& plan);

struct ParallelStats {
  std::uint64_t barriers = 0;
  std::uint64_t butterflies = 0;
};

/// Test hook invoked by each worker before its subtask: (phase, worker).
using WorkerHook = std::function<void(std::size_t, std::size_t)>;

namespace detail {

template <Scalar T>
std::uint64_t run_subtask(std::span<T> buf, const PhaseSpec& phase, std::size_t worker) {
  if (phase.kind == PhaseSpec::Kind::ChunkTransform) {
    return fwht_inplace_unchecked(buf.subspan(worker * phase.chunk_size, phase.chunk_size));
  }
  const Workload& w = phase.workloads[worker];
  butterfly_run(buf, w.start, w.stride, w.count);
  return w.count;
}

}  // namespace detail

/// Runs the plan on `buf` with one thread per worker and a full barrier
/// after every phase. If any worker throws, the remaining phases are
/// skipped and the first exception is rethrown; `buf` is then unspecified.
template <Scalar T>
ParallelStats run_parallel_inplace(std::span<T> buf, const ParallelPlan& plan,
                                   const WorkerHook& hook = {}) {
  if (buf.size() != dim_of(plan.log2_dim)) {
    throw Error(Errc::DimMismatch, "plan is for 2^" + std::to_string(plan.log2_dim) +
                                       " elements, buffer has " + std::to_string(buf.size()));
  }
  check_overflow<T>(buf, plan.log2_dim);

  const std::size_t m = plan.workers();
  ParallelStats stats;
  std::atomic<std::uint64_t> butterflies{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto on_phase_done = [&stats]() noexcept { ++stats.barriers; };
  std::barrier sync(static_cast<std::ptrdiff_t>(m), on_phase_done);

  auto worker_main = [&](std::size_t worker) {
    for (std::size_t ph = 0; ph < plan.phases.size(); ++ph) {
      if (!failed.load(std::memory_order_acquire)) {
        try {
          if (hook) hook(ph, worker);
          butterflies += detail::run_subtask(buf, plan.phases[ph], worker);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true, std::memory_order_release);
        }
      }
      sync.arrive_and_wait();
    }
  };

  {
    std::vector<std::jthread> threads;
    threads.reserve(m);
    for (std::size_t w = 0; w < m; ++w) threads.emplace_back(worker_main, w);
  }

  if (first_error) std::rethrow_exception(first_error);
  stats.butterflies = butterflies.load();
  return stats;
}

/// Value-semantics wrapper: transforms a copy and returns it, so a failed
/// run never exposes partial results.
template <Scalar T>
Signal<T> run_parallel(Signal<T> sig, const ParallelPlan& plan, ParallelStats* stats = nullptr,
                       const WorkerHook& hook = {}) {
  if (sig.log2_dim() != plan.log2_dim) {
    throw Error(Errc::DimMismatch, "signal and plan dimensions differ");
  }
  check_overflow<T>(sig.values(), sig.log2_dim(), sig.registered_bound());
  auto s = run_parallel_inplace(sig.values(), plan, hook);
  if (stats) *stats = s;
  sig.set_domain(flipped(sig.domain()));
  return sig;
}

/// In-place WHT on `threads` workers (power of two); falls back to the
/// serial transform when threads == 1 or the signal is too small to split.
template <Scalar T>
std::uint64_t fwht_threaded(std::span<T> buf, std::uint64_t threads) {
  const int n = log2_exact(buf.size());
  if (threads == 0 || !std::has_single_bit(threads)) {
    throw Error(Errc::InvalidWorkerCount, "thread count must be a power of two");
  }
  const int p = std::countr_zero(threads);
  if (p == 0 || p > n - 1) return fwht_inplace(buf);
  return run_parallel_inplace(buf, plan_parallel(n, p)).butterflies;
}

}  // namespace wht
