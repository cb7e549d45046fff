#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wht/dataset.hpp"

namespace wht {

enum class ExternalMode { EntryWise, Blocked };

std::string to_string(ExternalMode mode);
ExternalMode parse_external_mode(const std::string& text);

/// Default transfer size for blocked mode (128 MiB), clamped to 2^(B-1) elements.
inline constexpr std::uint64_t kDefaultIoBlockBytes = std::uint64_t{128} << 20;

/// One disk pass. Pass 0 transforms each 2^B superblock in memory; pass t >= 1
/// runs stage k = B + t - 1 across the whole file.
struct PassSpec {
  int index = 0;
  int stage = -1;                   // -1 for the in-memory pass
  std::uint64_t units = 0;          // restart granularity
  std::uint64_t unit_elems = 0;     // elements held in memory per unit
};

struct PassPlan {
  int log2_dim = 0;
  int mem_log2 = 0;                 // B: at most 2^B elements in memory
  ExternalMode mode = ExternalMode::Blocked;
  std::uint64_t io_block_elems = 0; // S, blocked mode transfer size
  std::vector<PassSpec> passes;

  /// Number of disk passes: n - B + 1, or 1 when the dataset fits in memory.
  int q() const noexcept { return static_cast<int>(passes.size()); }
};

/// Builds the pass schedule. io_block_bytes must be a power-of-two multiple
/// of 8 and, in blocked mode, at most 8 * 2^(B-1) (BadBlockSize otherwise).
PassPlan plan_external(int log2_dim, int mem_log2, ExternalMode mode,
                       std::uint64_t io_block_bytes = kDefaultIoBlockBytes);

/// Largest S (in bytes) that is valid for B, capped at the 128 MiB default.
std::uint64_t default_io_block_bytes(int mem_log2);

/// Dataset traffic of a full run: q passes, each reading and writing 8 * 2^n bytes.
std::uint64_t pass_io_volume(const PassPlan& plan);

struct ExternalOptions {
  bool resume = false;
  /// Journal each unit before applying it, making mid-pass kills restartable.
  bool journal = true;
  /// fdatasync the journal before applying each unit (power-loss safety).
  bool sync_journal = false;
  /// Worker threads for the in-memory pass; power of two.
  std::uint64_t threads = 1;
};

struct ExternalReport {
  int passes_planned = 0;
  int first_pass_run = 0;           // > 0 when resumed
  int passes_run = 0;
  bool replayed_journal = false;
  std::vector<IoStats> per_pass;    // data-file traffic of each pass run
};

/// Runs the plan in place on a Time-domain dataset. On success the dataset
/// holds its WHT, its sidecar says Walsh, and no progress marker remains.
/// On failure the sidecar keeps a pass_progress marker; rerun with
/// resume = true to finish from the interrupted pass.
ExternalReport run_external(DatasetFile& ds, const PassPlan& plan, const ExternalOptions& opts = {});

/// Pointer-walk executor: per stage, paired single-element reads and writes.
ExternalReport run_external_entrywise(DatasetFile& ds, int mem_log2,
                                      const ExternalOptions& opts = {});

/// Block-pairing executor: per stage, S-element blocks at distance 2^k.
ExternalReport run_external_blocked(DatasetFile& ds, int mem_log2, std::uint64_t io_block_elems,
                                    const ExternalOptions& opts = {});

}  // namespace wht
