#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wht/error.hpp"
#include "wht/signal.hpp"

namespace wht {

/// Range of elements [start, start + count) inside a dataset.
struct BlockSpec {
  std::uint64_t start = 0;
  std::uint64_t count = 0;
};

/// Byte and operation counters for the data file of one handle.
struct IoStats {
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t read_ops = 0;
  std::uint64_t write_ops = 0;

  IoStats operator-(const IoStats& o) const {
    return {bytes_read - o.bytes_read, bytes_written - o.bytes_written, read_ops - o.read_ops,
            write_ops - o.write_ops};
  }
};

enum class IoTarget { Data, Journal, Sidecar };
enum class IoOp { Read, Write, Sync };

struct IoEvent {
  IoTarget target = IoTarget::Data;
  IoOp op = IoOp::Read;
  std::uint64_t byte_offset = 0;
  std::uint64_t bytes = 0;
};

/// Called before every I/O operation issued through a dataset handle
/// (data file, journal, sidecar). Throwing from it aborts the operation
/// before any byte moves; tests use this to inject faults.
using IoHook = std::function<void(const IoEvent&)>;

/// Progress of an interrupted out-of-core transform, persisted in the sidecar.
struct PassProgress {
  int next_pass = 0;             // first pass not yet known to be complete
  int mem_log2 = 0;              // B of the run that wrote the marker
  std::string mode;              // "entrywise" or "blocked"
  std::uint64_t io_block_elems = 0;
  bool journaled = true;
  bool pass_started = false;     // unjournaled runs: writes of next_pass began
};

struct DatasetMeta {
  int log2_dim = 0;
  ElementKind kind = ElementKind::Int64;
  Domain domain = Domain::Time;
  int format_version = 1;
  std::optional<std::uint64_t> magnitude_bound;
  std::optional<PassProgress> progress;
};

struct OpenOptions {
  bool direct_io = false;
  bool read_only = false;
};

/// Alignment for direct I/O buffers; WHT_IO_ALIGN overrides the 4096 default.
std::size_t direct_io_alignment();

std::filesystem::path sidecar_path(const std::filesystem::path& data_path);
std::filesystem::path journal_path(const std::filesystem::path& data_path);

/// On-disk array of 2^n little-endian 8-byte elements with a JSON sidecar
/// `<path>.meta.json`. Move-only; closes its descriptors on destruction.
class DatasetFile {
 public:
  /// Allocates a zero-filled file of 8 * 2^n bytes and writes the sidecar.
  static DatasetFile create(const std::filesystem::path& path, int log2_dim, ElementKind kind,
                            Domain domain = Domain::Time, OpenOptions opts = {});

  /// Opens a dataset and checks the file size against the sidecar.
  static DatasetFile open_validated(const std::filesystem::path& path, OpenOptions opts = {});

  /// Writes a sidecar for a raw file whose size is 8 * 2^n, inferring n.
  static DatasetFile adopt_raw(const std::filesystem::path& path, ElementKind kind,
                               Domain domain = Domain::Time, OpenOptions opts = {});

  DatasetFile(DatasetFile&&) noexcept;
  DatasetFile& operator=(DatasetFile&&) noexcept;
  DatasetFile(const DatasetFile&) = delete;
  DatasetFile& operator=(const DatasetFile&) = delete;
  ~DatasetFile();

  const std::filesystem::path& path() const noexcept { return path_; }
  const DatasetMeta& meta() const noexcept { return meta_; }
  int log2_dim() const noexcept { return meta_.log2_dim; }
  std::uint64_t size() const noexcept { return dim_of(meta_.log2_dim); }
  ElementKind kind() const noexcept { return meta_.kind; }
  Domain domain() const noexcept { return meta_.domain; }
  bool direct_io_active() const noexcept { return direct_fd_ >= 0; }
  /// Set when direct I/O was requested but the filesystem refused it.
  const std::string& direct_io_warning() const noexcept { return direct_warning_; }

  template <Scalar T>
  std::vector<T> read_block(BlockSpec spec) {
    std::vector<T> out(spec.count);
    read_into<T>(spec.start, out);
    return out;
  }

  template <Scalar T>
  void read_into(std::uint64_t start, std::span<T> out) {
    require_kind(element_kind_of<T>());
    read_raw(start, std::as_writable_bytes(out));
    from_little_endian(std::as_writable_bytes(out));
  }

  template <Scalar T>
  void write_block(BlockSpec spec, std::span<const T> data) {
    if (data.size() != spec.count) {
      throw Error(Errc::BadArguments, "write_block: data length " + std::to_string(data.size()) +
                                          " != count " + std::to_string(spec.count));
    }
    write_from<T>(spec.start, data);
  }

  template <Scalar T>
  void write_from(std::uint64_t start, std::span<const T> data) {
    require_kind(element_kind_of<T>());
    if constexpr (std::endian::native == std::endian::little) {
      write_raw(start, std::as_bytes(data));
    } else {
      std::vector<T> tmp(data.begin(), data.end());
      from_little_endian(std::as_writable_bytes(std::span<T>(tmp)));
      write_raw(start, std::as_bytes(std::span<const T>(tmp)));
    }
  }

  template <Scalar T>
  T read_element(std::uint64_t index) {
    T v;
    read_into<T>(index, std::span<T>(&v, 1));
    return v;
  }

  template <Scalar T>
  void write_element(std::uint64_t index, T value) {
    write_from<T>(index, std::span<const T>(&value, 1));
  }

  /// Whole dataset as an in-memory signal.
  template <Scalar T>
  Signal<T> load() {
    Signal<T> sig(read_block<T>({0, size()}), domain());
    return sig;
  }

  /// Element-level raw access in file byte order; counts toward stats().
  void read_raw(std::uint64_t start_index, std::span<std::byte> out);
  void write_raw(std::uint64_t start_index, std::span<const std::byte> in);

  void sync();

  /// Rewrites the sidecar atomically (temp file + rename).
  void update_meta(const DatasetMeta& meta);

  const IoStats& stats() const noexcept { return stats_; }
  void reset_stats() noexcept { stats_ = {}; }

  void set_io_hook(IoHook hook) { hook_ = std::move(hook); }
  const IoHook& io_hook() const noexcept { return hook_; }
  void notify(const IoEvent& ev) const {
    if (hook_) hook_(ev);
  }

  static void from_little_endian(std::span<std::byte> bytes) noexcept;

 private:
  DatasetFile(std::filesystem::path path, DatasetMeta meta, OpenOptions opts);
  void open_descriptors();
  void close_descriptors() noexcept;
  void require_kind(ElementKind k) const;
  void check_bounds(std::uint64_t start, std::uint64_t count) const;

  std::filesystem::path path_;
  DatasetMeta meta_;
  OpenOptions opts_;
  int fd_ = -1;
  int direct_fd_ = -1;
  std::string direct_warning_;
  IoStats stats_;
  IoHook hook_;
};

/// Sidecar (de)serialization, exposed for tools and tests.
std::string meta_to_json(const DatasetMeta& meta);
DatasetMeta meta_from_json(const std::string& text);
DatasetMeta read_meta(const std::filesystem::path& data_path);

/// Writes a signal to a new dataset (with its registered bound, if any).
template <Scalar T>
DatasetFile save_signal(const std::filesystem::path& path, const Signal<T>& sig) {
  auto ds = DatasetFile::create(path, sig.log2_dim(), element_kind_of<T>(), sig.domain());
  ds.template write_from<T>(0, sig.values());
  if constexpr (std::is_same_v<T, std::int64_t>) {
    auto meta = ds.meta();
    meta.magnitude_bound = max_magnitude(sig.values());
    ds.update_meta(meta);
  }
  return ds;
}

}  // namespace wht
