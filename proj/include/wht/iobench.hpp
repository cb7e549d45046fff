#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace wht {

inline constexpr std::uint64_t kMiB = std::uint64_t{1} << 20;
/// Largest single read/write issued by the benchmark.
inline constexpr std::uint64_t kMaxSingleTransfer = std::uint64_t{1} << 30;

/// 2, 8, 32, 128, 512 MiB and the 1 GiB upper probe.
std::vector<std::uint64_t> default_block_sizes();

/// Parses "4096", "2M", "128MB", "1G" (binary multiples) into bytes.
std::uint64_t parse_byte_size(const std::string& text);
std::string format_byte_size(std::uint64_t bytes);

/// Drops repeated sizes, keeping first occurrences in order.
std::vector<std::uint64_t> normalize_block_sizes(const std::vector<std::uint64_t>& sizes);

/// Throughput in MiB/s.
inline double mib_per_second(std::uint64_t bytes, double seconds) {
  return static_cast<double>(bytes) / static_cast<double>(kMiB) / seconds;
}

struct IoBenchRow {
  std::uint64_t block_bytes = 0;     // requested block size
  std::uint64_t transfer_bytes = 0;  // size actually issued per call (capped)
  std::uint64_t transfers = 0;       // read calls needed to copy the file
  double copy_seconds = 0;
  double read_seconds = 0;           // time inside read calls
  double write_seconds = 0;          // time inside write calls and the final flush
  double mbps = 0;                   // file_bytes / copy_seconds
  double read_mbps = 0;
  double write_mbps = 0;
  bool capped = false;
  bool verified = false;             // copy matched the source byte for byte
  bool direct_io = false;            // direct I/O actually in effect
  std::string warning;
  std::string error;                 // non-empty when this size failed

  bool ok() const { return error.empty(); }
};

struct IoBenchReport {
  std::uint64_t file_bytes = 0;
  bool direct_io = false;
  std::vector<IoBenchRow> rows;
  std::string annotation;

  /// Header `block_bytes,seconds,mbps`; failed rows are omitted.
  std::string to_csv() const;
  std::string to_table() const;
  /// True when mbps * seconds matches file_bytes within 0.1% for every good row.
  bool arithmetic_consistent() const;
};

/// Creates a fresh source file in `dir`, copies it block by block to a new
/// file, flushes, verifies, deletes both and reports timings.
IoBenchRow measure_copy(const std::filesystem::path& dir, std::uint64_t file_bytes,
                        std::uint64_t block_bytes, bool direct_io);

/// measure_copy per (deduplicated) block size. Failures are recorded per row.
IoBenchReport sweep(const std::filesystem::path& dir, std::uint64_t file_bytes,
                    const std::vector<std::uint64_t>& block_sizes, bool direct_io = false);

/// Describes whether copy time falls and levels off as blocks grow.
std::string trend_annotation(const std::vector<IoBenchRow>& rows);

}  // namespace wht
