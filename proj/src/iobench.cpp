#include "wht/iobench.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <iomanip>
#include <memory>
#include <random>
#include <sstream>
#include <unordered_set>

#include "wht/dataset.hpp"
#include "wht/error.hpp"

namespace wht {
namespace fs = std::filesystem;

std::vector<std::uint64_t> default_block_sizes() {
  return {2 * kMiB, 8 * kMiB, 32 * kMiB, 128 * kMiB, 512 * kMiB, 1024 * kMiB};
}

std::uint64_t parse_byte_size(const std::string& text) {
  std::size_t pos = 0;
  while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
  if (pos == 0) throw Error(Errc::BadArguments, "bad size '" + text + "'");
  const std::uint64_t value = std::stoull(text.substr(0, pos));
  std::string suffix = text.substr(pos);
  for (auto& c : suffix) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  int shift = 0;
  if (suffix.empty() || suffix == "B") {
    shift = 0;
  } else if (suffix == "K" || suffix == "KB" || suffix == "KIB") {
    shift = 10;
  } else if (suffix == "M" || suffix == "MB" || suffix == "MIB") {
    shift = 20;
  } else if (suffix == "G" || suffix == "GB" || suffix == "GIB") {
    shift = 30;
  } else {
    throw Error(Errc::BadArguments, "bad size suffix in '" + text + "'");
  }
  if (value == 0 || value > (std::uint64_t{1} << (62 - shift))) {
    throw Error(Errc::BadArguments, "size out of range: '" + text + "'");
  }
  return value << shift;
}

std::string format_byte_size(std::uint64_t bytes) {
  if (bytes >= (1ull << 30) && bytes % (1ull << 30) == 0) return std::to_string(bytes >> 30) + "G";
  if (bytes >= (1ull << 20) && bytes % (1ull << 20) == 0) return std::to_string(bytes >> 20) + "M";
  if (bytes >= (1ull << 10) && bytes % (1ull << 10) == 0) return std::to_string(bytes >> 10) + "K";
  return std::to_string(bytes);
}

std::vector<std::uint64_t> normalize_block_sizes(const std::vector<std::uint64_t>& sizes) {
  std::vector<std::uint64_t> out;
  std::unordered_set<std::uint64_t> seen;
  for (auto s : sizes) {
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Fd {
  int fd = -1;
  explicit Fd(int f) : fd(f) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() {
    if (fd >= 0) ::close(fd);
  }
};

struct Scratch {
  fs::path path;
  ~Scratch() {
    std::error_code ec;
    fs::remove(path, ec);
  }
};

struct AlignedFree {
  void operator()(std::byte* p) const noexcept { std::free(p); }
};

[[noreturn]] void fail(const fs::path& p, const char* what) {
  const int err = errno;
  throw Error(err == ENOSPC ? Errc::DiskFull : Errc::IoFailure,
              p.string() + ": " + what + ": " + std::strerror(err));
}

std::uint64_t fnv1a_file(const fs::path& p, std::byte* buf, std::size_t buf_bytes) {
  Fd f(::open(p.c_str(), O_RDONLY | O_CLOEXEC));
  if (f.fd < 0) fail(p, "open for verify");
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (;;) {
    const ssize_t got = ::read(f.fd, buf, buf_bytes);
    if (got < 0) {
      if (errno == EINTR) continue;
      fail(p, "read for verify");
    }
    if (got == 0) break;
    for (ssize_t i = 0; i < got; ++i) {
      h ^= static_cast<std::uint64_t>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

void write_source(const fs::path& p, std::uint64_t bytes, std::uint64_t seed, std::byte* buf,
                  std::size_t buf_bytes) {
  Fd f(::open(p.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644));
  if (f.fd < 0) fail(p, "create source");
  std::mt19937_64 rng(seed);
  std::uint64_t left = bytes;
  while (left > 0) {
    const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(left, buf_bytes));
    for (std::size_t i = 0; i + 8 <= n; i += 8) {
      const std::uint64_t v = rng();
      std::memcpy(buf + i, &v, 8);
    }
    for (std::size_t i = n / 8 * 8; i < n; ++i) buf[i] = static_cast<std::byte>(rng());
    std::size_t done = 0;
    while (done < n) {
      const ssize_t put = ::write(f.fd, buf + done, n - done);
      if (put < 0) {
        if (errno == EINTR) continue;
        fail(p, "write source");
      }
      done += static_cast<std::size_t>(put);
    }
    left -= n;
  }
  if (::fdatasync(f.fd) != 0) fail(p, "sync source");
#ifdef POSIX_FADV_DONTNEED
  ::posix_fadvise(f.fd, 0, 0, POSIX_FADV_DONTNEED);
#endif
}

int open_maybe_direct(const fs::path& p, int flags, bool direct, bool& direct_ok) {
  direct_ok = false;
#ifdef O_DIRECT
  if (direct) {
    const int fd = ::open(p.c_str(), flags | O_DIRECT | O_CLOEXEC, 0644);
    if (fd >= 0) {
      direct_ok = true;
      return fd;
    }
    if (errno != EINVAL) return -1;
  }
#endif
  return ::open(p.c_str(), flags | O_CLOEXEC, 0644);
}

void drop_direct(int fd) {
#ifdef O_DIRECT
  const int fl = ::fcntl(fd, F_GETFL);
  if (fl >= 0) ::fcntl(fd, F_SETFL, fl & ~O_DIRECT);
#endif
}

}  // namespace

IoBenchRow measure_copy(const fs::path& dir, std::uint64_t file_bytes, std::uint64_t block_bytes,
                        bool direct_io) {
  if (file_bytes == 0 || block_bytes == 0) {
    throw Error(Errc::BadArguments, "file and block sizes must be positive");
  }
  {
    std::error_code ec;
    const auto info = fs::space(dir, ec);
    if (ec) throw Error(Errc::IoFailure, dir.string() + ": " + ec.message());
    if (info.available < 2 * file_bytes) {
      throw Error(Errc::DiskFull, "need " + std::to_string(2 * file_bytes) + " bytes of scratch in " +
                                      dir.string());
    }
  }

  IoBenchRow row;
  row.block_bytes = block_bytes;
  row.transfer_bytes = std::min(block_bytes, kMaxSingleTransfer);
  row.capped = row.transfer_bytes != block_bytes;
  row.transfers = (file_bytes + row.transfer_bytes - 1) / row.transfer_bytes;

  const std::size_t align = direct_io_alignment();
  const std::uint64_t want = std::min(row.transfer_bytes, file_bytes);
  const std::size_t buf_bytes = static_cast<std::size_t>((want + align - 1) / align * align);
  std::unique_ptr<std::byte[], AlignedFree> buf(
      static_cast<std::byte*>(std::aligned_alloc(align, buf_bytes)));
  if (!buf) throw std::bad_alloc();

  // A distinct name and seed per block size keeps earlier runs out of the cache.
  static std::uint64_t counter = 0;
  const auto tag = std::to_string(::getpid()) + "_" + std::to_string(++counter);
  Scratch src{dir / ("iobench_src_" + tag + ".bin")};
  Scratch dst{dir / ("iobench_dst_" + tag + ".bin")};
  write_source(src.path, file_bytes, 0x9e3779b97f4a7c15ull ^ counter, buf.get(), buf_bytes);

  bool src_direct = false;
  bool dst_direct = false;
  Fd in(open_maybe_direct(src.path, O_RDONLY, direct_io, src_direct));
  if (in.fd < 0) fail(src.path, "open source");
  Fd out(open_maybe_direct(dst.path, O_WRONLY | O_CREAT | O_TRUNC, direct_io, dst_direct));
  if (out.fd < 0) fail(dst.path, "open destination");
  row.direct_io = src_direct && dst_direct;
  if (direct_io && !row.direct_io) {
    row.warning = "DirectIoUnsupported: filesystem rejected O_DIRECT; buffered I/O used";
  }

  const auto t0 = Clock::now();
  std::uint64_t copied = 0;
  std::uint64_t read_calls = 0;
  while (copied < file_bytes) {
    const std::uint64_t chunk = std::min<std::uint64_t>(row.transfer_bytes, file_bytes - copied);
    const bool tail_unaligned = chunk % align != 0;
    const std::size_t request =
        static_cast<std::size_t>(src_direct ? (chunk + align - 1) / align * align : chunk);

    auto tr = Clock::now();
    std::size_t got = 0;
    while (got < chunk) {
      const ssize_t r = ::pread(in.fd, buf.get() + got, request - got,
                                static_cast<off_t>(copied + got));
      if (r < 0) {
        if (errno == EINTR) continue;
        fail(src.path, "read");
      }
      if (r == 0) break;
      got += static_cast<std::size_t>(r);
    }
    row.read_seconds += seconds_since(tr);
    ++read_calls;
    if (got < chunk) {
      throw Error(Errc::IoFailure, src.path.string() + ": short read at byte " +
                                       std::to_string(copied));
    }

    auto tw = Clock::now();
    if (dst_direct && tail_unaligned) drop_direct(out.fd);
    std::size_t put_total = 0;
    while (put_total < chunk) {
      const ssize_t w = ::pwrite(out.fd, buf.get() + put_total, chunk - put_total,
                                 static_cast<off_t>(copied + put_total));
      if (w < 0) {
        if (errno == EINTR) continue;
        fail(dst.path, "write");
      }
      put_total += static_cast<std::size_t>(w);
    }
    row.write_seconds += seconds_since(tw);
    copied += chunk;
  }
  auto ts = Clock::now();
  if (::fdatasync(out.fd) != 0) fail(dst.path, "fdatasync");
  row.write_seconds += seconds_since(ts);
  row.copy_seconds = seconds_since(t0);
  row.transfers = read_calls;

  row.copy_seconds = std::max(row.copy_seconds, 1e-9);
  row.mbps = mib_per_second(file_bytes, row.copy_seconds);
  row.read_mbps = mib_per_second(file_bytes, std::max(row.read_seconds, 1e-9));
  row.write_mbps = mib_per_second(file_bytes, std::max(row.write_seconds, 1e-9));

  row.verified = fnv1a_file(src.path, buf.get(), buf_bytes) ==
                 fnv1a_file(dst.path, buf.get(), buf_bytes);
  if (!row.verified) row.error = "copy differs from source";
  return row;
}

std::string trend_annotation(const std::vector<IoBenchRow>& rows) {
  std::vector<const IoBenchRow*> good;
  for (const auto& r : rows) {
    if (r.ok()) good.push_back(&r);
  }
  std::sort(good.begin(), good.end(),
            [](const IoBenchRow* a, const IoBenchRow* b) { return a->block_bytes < b->block_bytes; });
  if (good.size() < 2) return "too few successful rows to judge the block-size trend";
  bool decreasing = true;
  for (std::size_t i = 1; i < good.size(); ++i) {
    if (good[i]->copy_seconds > good[i - 1]->copy_seconds * 1.05) decreasing = false;
  }
  const double last = good.back()->copy_seconds;
  const double prev = good[good.size() - 2]->copy_seconds;
  const bool converged = std::abs(last - prev) <= 0.10 * prev;
  std::string s = "copy time ";
  s += decreasing ? "decreases" : "does not decrease monotonically";
  s += " with block size and ";
  s += converged ? "levels off at the largest sizes" : "has not levelled off";
  return s;
}

IoBenchReport sweep(const fs::path& dir, std::uint64_t file_bytes,
                    const std::vector<std::uint64_t>& block_sizes, bool direct_io) {
  if (block_sizes.empty()) throw Error(Errc::BadArguments, "empty block size list");
  if (file_bytes == 0) throw Error(Errc::BadArguments, "file size must be positive");
  IoBenchReport report;
  report.file_bytes = file_bytes;
  report.direct_io = direct_io;
  for (auto block : normalize_block_sizes(block_sizes)) {
    try {
      report.rows.push_back(measure_copy(dir, file_bytes, block, direct_io));
    } catch (const std::exception& e) {
      IoBenchRow failed;
      failed.block_bytes = block;
      failed.error = e.what();
      report.rows.push_back(std::move(failed));
    }
  }
  report.annotation = trend_annotation(report.rows);
  return report;
}

std::string IoBenchReport::to_csv() const {
  std::ostringstream os;
  os << "block_bytes,seconds,mbps\n";
  os << std::setprecision(9);
  for (const auto& r : rows) {
    if (!r.ok()) continue;
    os << r.block_bytes << ',' << r.copy_seconds << ',' << r.mbps << '\n';
  }
  return os.str();
}

std::string IoBenchReport::to_table() const {
  std::ostringstream os;
  os << "file " << format_byte_size(file_bytes) << (direct_io ? ", direct I/O requested" : "")
     << "\n";
  os << std::left << std::setw(8) << "block" << std::right << std::setw(10) << "transfers"
     << std::setw(12) << "copy s" << std::setw(12) << "MiB/s" << std::setw(12) << "read MiB/s"
     << std::setw(12) << "write MiB/s" << "  note\n";
  os << std::fixed;
  for (const auto& r : rows) {
    os << std::left << std::setw(8) << format_byte_size(r.block_bytes) << std::right;
    if (!r.ok()) {
      os << "  FAILED: " << r.error << "\n";
      continue;
    }
    os << std::setw(10) << r.transfers << std::setw(12) << std::setprecision(3) << r.copy_seconds
       << std::setw(12) << std::setprecision(1) << r.mbps << std::setw(12) << r.read_mbps
       << std::setw(12) << r.write_mbps << "  ";
    if (r.capped) os << "transfers capped at " << format_byte_size(r.transfer_bytes) << "; ";
    if (!r.warning.empty()) os << r.warning;
    os << "\n";
  }
  os << annotation << "\n";
  return os.str();
}

bool IoBenchReport::arithmetic_consistent() const {
  for (const auto& r : rows) {
    if (!r.ok()) continue;
    const double bytes = r.mbps * r.copy_seconds * static_cast<double>(kMiB);
    if (std::abs(bytes - static_cast<double>(file_bytes)) > 1e-3 * static_cast<double>(file_bytes)) {
      return false;
    }
  }
  return true;
}

}  // namespace wht
