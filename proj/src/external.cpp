#include "wht/external.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cerrno>
#include <cstring>
#include <optional>

#include "wht/core.hpp"
#include "wht/parallel.hpp"

namespace wht {
namespace fs = std::filesystem;

std::string to_string(ExternalMode mode) {
  return mode == ExternalMode::EntryWise ? "entrywise" : "blocked";
}

ExternalMode parse_external_mode(const std::string& text) {
  if (text == "entrywise") return ExternalMode::EntryWise;
  if (text == "blocked") return ExternalMode::Blocked;
  throw Error(Errc::BadArguments, "unknown external mode '" + text + "'");
}

std::uint64_t default_io_block_bytes(int mem_log2) {
  if (mem_log2 < 1) return 8;
  return std::min<std::uint64_t>(kDefaultIoBlockBytes, 8 * dim_of(mem_log2 - 1));
}

PassPlan plan_external(int log2_dim, int mem_log2, ExternalMode mode,
                       std::uint64_t io_block_bytes) {
  if (log2_dim < 0 || log2_dim > 60) {
    throw Error(Errc::BadArguments, "log2 dimension out of range: " + std::to_string(log2_dim));
  }
  if (mem_log2 < 1 || mem_log2 > 40) {
    throw Error(Errc::BadArguments, "memory exponent B must be in [1, 40], got " +
                                        std::to_string(mem_log2));
  }
  if (io_block_bytes < 8 || io_block_bytes % 8 != 0 || !std::has_single_bit(io_block_bytes)) {
    throw Error(Errc::BadBlockSize, "I/O block of " + std::to_string(io_block_bytes) +
                                        " bytes is not a power-of-two multiple of 8");
  }
  const std::uint64_t block_elems = io_block_bytes / 8;
  if (mode == ExternalMode::Blocked && block_elems > dim_of(mem_log2 - 1)) {
    throw Error(Errc::BadBlockSize, "I/O block of " + std::to_string(block_elems) +
                                        " elements exceeds 2^(B-1) = " +
                                        std::to_string(dim_of(mem_log2 - 1)));
  }

  PassPlan plan;
  plan.log2_dim = log2_dim;
  plan.mem_log2 = mem_log2;
  plan.mode = mode;
  plan.io_block_elems = block_elems;

  const int resident = std::min(log2_dim, mem_log2);
  const std::uint64_t units = dim_of(log2_dim - resident);
  plan.passes.push_back({0, -1, units, dim_of(resident)});
  for (int k = mem_log2; k < log2_dim; ++k) {
    plan.passes.push_back({k - mem_log2 + 1, k, units, dim_of(resident)});
  }
  return plan;
}

std::uint64_t pass_io_volume(const PassPlan& plan) {
  return static_cast<std::uint64_t>(plan.q()) * 2 * 8 * dim_of(plan.log2_dim);
}

namespace {

std::uint64_t fnv1a(std::span<const std::byte> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Write-ahead record of the last computed unit. The payload is written
/// first and the header second, so a header for unit u implies every unit
/// before u is applied and u's payload was complete when the header landed.
/// Replaying a unit is idempotent.
class Journal {
 public:
  static constexpr std::array<char, 8> kMagic{'W', 'H', 'T', 'J', 'R', 'N', 'L', '1'};
  static constexpr std::uint64_t kPayloadOffset = 64;

  struct Header {
    std::array<char, 8> magic{};
    std::int32_t pass = 0;
    std::uint32_t reserved = 0;
    std::uint64_t unit = 0;
    std::uint64_t payload_bytes = 0;
    std::uint64_t payload_hash = 0;
    std::uint64_t header_hash = 0;

    std::uint64_t self_hash() const {
      Header copy = *this;
      copy.header_hash = 0;
      return fnv1a(std::as_bytes(std::span(&copy, 1)));
    }
  };

  struct Recovered {
    int pass = 0;
    std::uint64_t unit = 0;
    std::optional<std::vector<std::byte>> payload;  // empty when overwritten
  };

  Journal(const DatasetFile& ds, bool sync) : ds_(ds), path_(journal_path(ds.path())), sync_(sync) {}
  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;
  ~Journal() {
    if (fd_ >= 0) ::close(fd_);
  }

  std::optional<Recovered> recover() {
    if (!fs::exists(path_)) return std::nullopt;
    open();
    Header h;
    ds_.notify({IoTarget::Journal, IoOp::Read, 0, sizeof(Header)});
    if (::pread(fd_, &h, sizeof h, 0) != static_cast<ssize_t>(sizeof h)) return std::nullopt;
    if (h.magic != kMagic || h.header_hash != h.self_hash()) return std::nullopt;

    Recovered r{h.pass, h.unit, std::nullopt};
    std::vector<std::byte> payload(h.payload_bytes);
    ds_.notify({IoTarget::Journal, IoOp::Read, kPayloadOffset, h.payload_bytes});
    const ssize_t got = ::pread(fd_, payload.data(), payload.size(), kPayloadOffset);
    if (got == static_cast<ssize_t>(payload.size()) && fnv1a(payload) == h.payload_hash) {
      r.payload = std::move(payload);
    }
    return r;
  }

  void record(int pass, std::uint64_t unit, std::span<const std::byte> payload) {
    open();
    ds_.notify({IoTarget::Journal, IoOp::Write, kPayloadOffset, payload.size()});
    write_all(payload.data(), payload.size(), kPayloadOffset);
    if (sync_) sync();

    Header h;
    h.magic = kMagic;
    h.pass = pass;
    h.unit = unit;
    h.payload_bytes = payload.size();
    h.payload_hash = fnv1a(payload);
    h.header_hash = h.self_hash();
    ds_.notify({IoTarget::Journal, IoOp::Write, 0, sizeof h});
    write_all(reinterpret_cast<const std::byte*>(&h), sizeof h, 0);
    if (sync_) sync();
  }

  void remove() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  void open() {
    if (fd_ >= 0) return;
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) {
      throw Error(Errc::IoFailure, path_.string() + ": open journal: " + std::strerror(errno));
    }
  }

  void write_all(const std::byte* src, std::size_t len, std::uint64_t off) {
    while (len > 0) {
      const ssize_t put = ::pwrite(fd_, src, len, static_cast<off_t>(off));
      if (put < 0) {
        if (errno == EINTR) continue;
        throw Error(errno == ENOSPC ? Errc::DiskFull : Errc::IoFailure,
                    path_.string() + ": journal write at byte " + std::to_string(off) + ": " +
                        std::strerror(errno));
      }
      src += put;
      off += static_cast<std::uint64_t>(put);
      len -= static_cast<std::size_t>(put);
    }
  }

  void sync() {
    ds_.notify({IoTarget::Journal, IoOp::Sync, 0, 0});
    if (::fdatasync(fd_) != 0) {
      throw Error(Errc::IoFailure, path_.string() + ": journal sync: " + std::strerror(errno));
    }
  }

  const DatasetFile& ds_;
  fs::path path_;
  bool sync_;
  int fd_ = -1;
};

template <Scalar T>
class Executor {
 public:
  Executor(DatasetFile& ds, const PassPlan& plan, const ExternalOptions& opts)
      : ds_(ds), plan_(plan), opts_(opts), journal_(ds, opts.sync_journal) {}

  ExternalReport run() {
    ExternalReport report;
    report.passes_planned = plan_.q();

    DatasetMeta meta = ds_.meta();
    int start_pass = 0;
    std::uint64_t start_unit = 0;

    if (meta.progress) {
      if (!opts_.resume) {
        throw Error(Errc::BadMetadata, ds_.path().string() +
                                           " holds an interrupted transform; resume it first");
      }
      const PassProgress& prog = *meta.progress;
      if (prog.mem_log2 != plan_.mem_log2) {
        throw Error(Errc::BadArguments, "resume needs B = " + std::to_string(prog.mem_log2) +
                                            ", got " + std::to_string(plan_.mem_log2));
      }
      if (!prog.journaled && prog.pass_started) {
        throw Error(Errc::IoFailure, "pass " + std::to_string(prog.next_pass) +
                                         " was interrupted without a journal; cannot resume");
      }
      start_pass = prog.next_pass;
      if (auto rec = journal_.recover(); rec && rec->pass == start_pass) {
        start_unit = rec->unit + 1;
        if (rec->payload) {
          replay(plan_.passes.at(static_cast<std::size_t>(start_pass)), rec->unit, *rec->payload);
          report.replayed_journal = true;
        }
      }
    } else {
      if (meta.domain != Domain::Time) {
        throw Error(Errc::BadMetadata, ds_.path().string() + " is not in the time domain");
      }
      if constexpr (std::is_same_v<T, std::int64_t>) {
        if (!meta.magnitude_bound) meta.magnitude_bound = scan_bound();
        require_magnitude_bound(*meta.magnitude_bound, plan_.log2_dim);
      }
      journal_.remove();  // a stale journal must never be replayed into a fresh run
      PassProgress prog;
      prog.next_pass = 0;
      prog.mem_log2 = plan_.mem_log2;
      prog.mode = to_string(plan_.mode);
      prog.io_block_elems = plan_.io_block_elems;
      prog.journaled = opts_.journal;
      meta.progress = prog;
      ds_.update_meta(meta);
    }
    report.first_pass_run = start_pass;

    buffer_.resize(plan_.passes.front().unit_elems);
    for (int p = start_pass; p < plan_.q(); ++p) {
      const PassSpec& pass = plan_.passes[static_cast<std::size_t>(p)];
      if (!opts_.journal) set_progress(p, true);
      const IoStats before = ds_.stats();
      for (std::uint64_t u = (p == start_pass ? start_unit : 0); u < pass.units; ++u) {
        if (pass.stage < 0) {
          in_memory_unit(pass, u);
        } else if (plan_.mode == ExternalMode::EntryWise) {
          entrywise_unit(pass, u);
        } else {
          blocked_unit(pass, u);
        }
      }
      ds_.sync();
      report.per_pass.push_back(ds_.stats() - before);
      ++report.passes_run;
      set_progress(p + 1, false);
    }

    meta = ds_.meta();
    meta.progress.reset();
    meta.domain = Domain::Walsh;
    if (meta.magnitude_bound) *meta.magnitude_bound <<= plan_.log2_dim;
    ds_.update_meta(meta);
    journal_.remove();
    return report;
  }

 private:
  std::uint64_t scan_bound() {
    std::uint64_t bound = 0;
    const std::uint64_t chunk = plan_.passes.front().unit_elems;
    std::vector<std::int64_t> tmp(chunk);
    for (std::uint64_t start = 0; start < ds_.size(); start += chunk) {
      ds_.read_into<std::int64_t>(start, tmp);
      bound = std::max(bound, max_magnitude(tmp));
    }
    return bound;
  }

  void set_progress(int next_pass, bool started) {
    DatasetMeta meta = ds_.meta();
    PassProgress prog = meta.progress.value_or(PassProgress{});
    prog.next_pass = next_pass;
    prog.pass_started = started;
    meta.progress = prog;
    ds_.update_meta(meta);
  }

  std::uint64_t stage_start(const PassSpec& pass, std::uint64_t unit) const {
    return workload_start(unit, pass.unit_elems / 2, pass.stage);
  }

  void commit(const PassSpec& pass, std::uint64_t unit) {
    if (opts_.journal) journal_.record(pass.index, unit, std::as_bytes(std::span(buffer_)));
  }

  void replay(const PassSpec& pass, std::uint64_t unit, std::span<const std::byte> payload) {
    if (payload.size() != pass.unit_elems * sizeof(T)) {
      throw Error(Errc::BadMetadata, "journal payload size does not match the plan");
    }
    buffer_.resize(pass.unit_elems);
    std::memcpy(buffer_.data(), payload.data(), payload.size());
    write_unit_contiguous(pass, unit);
  }

  void write_unit_contiguous(const PassSpec& pass, std::uint64_t unit) {
    const std::span<const T> all(buffer_);
    if (pass.stage < 0) {
      ds_.write_from<T>(unit * pass.unit_elems, all);
      return;
    }
    const std::uint64_t half = pass.unit_elems / 2;
    const std::uint64_t lo = stage_start(pass, unit);
    ds_.write_from<T>(lo, all.first(half));
    ds_.write_from<T>(lo + dim_of(pass.stage), all.last(half));
  }

  void in_memory_unit(const PassSpec& pass, std::uint64_t unit) {
    const std::span<T> buf(buffer_);
    ds_.read_into<T>(unit * pass.unit_elems, buf);
    fwht_threaded(buf, opts_.threads);
    commit(pass, unit);
    ds_.write_from<T>(unit * pass.unit_elems, std::span<const T>(buf));
  }

  // Paired single-element I/O following the stage's pointer walk.
  void entrywise_unit(const PassSpec& pass, std::uint64_t unit) {
    const std::uint64_t half = pass.unit_elems / 2;
    const std::uint64_t j = dim_of(pass.stage);
    const std::uint64_t pt0 = stage_start(pass, unit);
    if (!opts_.journal) {
      for (std::uint64_t i = 0; i < half; ++i) {
        const T a = ds_.read_element<T>(pt0 + i);
        const T b = ds_.read_element<T>(pt0 + i + j);
        ds_.write_element<T>(pt0 + i, a + b);
        ds_.write_element<T>(pt0 + i + j, a - b);
      }
      return;
    }
    for (std::uint64_t i = 0; i < half; ++i) {
      const T a = ds_.read_element<T>(pt0 + i);
      const T b = ds_.read_element<T>(pt0 + i + j);
      buffer_[i] = a + b;
      buffer_[half + i] = a - b;
    }
    commit(pass, unit);
    for (std::uint64_t i = 0; i < half; ++i) {
      ds_.write_element<T>(pt0 + i, buffer_[i]);
      ds_.write_element<T>(pt0 + i + j, buffer_[half + i]);
    }
  }

  // Two S-element blocks at distance 2^k per I/O step.
  void blocked_unit(const PassSpec& pass, std::uint64_t unit) {
    const std::uint64_t half = pass.unit_elems / 2;
    const std::uint64_t j = dim_of(pass.stage);
    const std::uint64_t s = std::min(plan_.io_block_elems, half);
    const std::uint64_t pt0 = stage_start(pass, unit);
    const std::span<T> lo(buffer_.data(), half);
    const std::span<T> hi(buffer_.data() + half, half);

    if (!opts_.journal) {
      for (std::uint64_t off = 0; off < half; off += s) {
        ds_.read_into<T>(pt0 + off, lo.subspan(off, s));
        ds_.read_into<T>(pt0 + off + j, hi.subspan(off, s));
        butterfly_blocks(lo.subspan(off, s), hi.subspan(off, s));
        ds_.write_from<T>(pt0 + off, std::span<const T>(lo.subspan(off, s)));
        ds_.write_from<T>(pt0 + off + j, std::span<const T>(hi.subspan(off, s)));
      }
      return;
    }
    for (std::uint64_t off = 0; off < half; off += s) {
      ds_.read_into<T>(pt0 + off, lo.subspan(off, s));
      ds_.read_into<T>(pt0 + off + j, hi.subspan(off, s));
      butterfly_blocks(lo.subspan(off, s), hi.subspan(off, s));
    }
    commit(pass, unit);
    for (std::uint64_t off = 0; off < half; off += s) {
      ds_.write_from<T>(pt0 + off, std::span<const T>(lo.subspan(off, s)));
      ds_.write_from<T>(pt0 + off + j, std::span<const T>(hi.subspan(off, s)));
    }
  }

  static void butterfly_blocks(std::span<T> lo, std::span<T> hi) {
    for (std::size_t i = 0; i < lo.size(); ++i) {
      const T a = lo[i];
      const T b = hi[i];
      lo[i] = a + b;
      hi[i] = a - b;
    }
  }

  DatasetFile& ds_;
  const PassPlan& plan_;
  ExternalOptions opts_;
  Journal journal_;
  std::vector<T> buffer_;
};

}  // namespace

ExternalReport run_external(DatasetFile& ds, const PassPlan& plan, const ExternalOptions& opts) {
  if (ds.log2_dim() != plan.log2_dim) {
    throw Error(Errc::DimMismatch, "plan is for n = " + std::to_string(plan.log2_dim) +
                                       ", dataset has n = " + std::to_string(ds.log2_dim()));
  }
  if (opts.threads == 0 || !std::has_single_bit(opts.threads)) {
    throw Error(Errc::InvalidWorkerCount, "thread count must be a power of two");
  }
  if (ds.kind() == ElementKind::Int64) return Executor<std::int64_t>(ds, plan, opts).run();
  return Executor<double>(ds, plan, opts).run();
}

ExternalReport run_external_entrywise(DatasetFile& ds, int mem_log2, const ExternalOptions& opts) {
  const auto plan = plan_external(ds.log2_dim(), mem_log2, ExternalMode::EntryWise,
                                  default_io_block_bytes(mem_log2));
  return run_external(ds, plan, opts);
}

ExternalReport run_external_blocked(DatasetFile& ds, int mem_log2, std::uint64_t io_block_elems,
                                    const ExternalOptions& opts) {
  const auto plan = plan_external(ds.log2_dim(), mem_log2, ExternalMode::Blocked,
                                  io_block_elems * 8);
  return run_external(ds, plan, opts);
}

}  // namespace wht
