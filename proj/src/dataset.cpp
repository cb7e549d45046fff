#include "wht/dataset.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

namespace wht {
namespace fs = std::filesystem;

namespace {

// Single transfers above 1 GiB are split; larger reads were observed to fail.
constexpr std::size_t kMaxTransfer = std::size_t{1} << 30;

std::string errno_text(int err) { return std::strerror(err); }

[[noreturn]] void throw_io(const fs::path& path, std::uint64_t byte_offset, const char* what,
                           int err) {
  if (err == ENOSPC || err == EDQUOT) {
    throw Error(Errc::DiskFull, path.string() + ": " + what + " at byte " +
                                    std::to_string(byte_offset) + ": " + errno_text(err));
  }
  throw Error(Errc::IoFailure, path.string() + ": " + what + " at byte " +
                                   std::to_string(byte_offset) + ": " + errno_text(err));
}

void pread_full(int fd, const fs::path& path, std::byte* dst, std::size_t len, std::uint64_t off) {
  while (len > 0) {
    const std::size_t chunk = std::min(len, kMaxTransfer);
    const ssize_t got = ::pread(fd, dst, chunk, static_cast<off_t>(off));
    if (got < 0) {
      if (errno == EINTR) continue;
      throw_io(path, off, "read", errno);
    }
    if (got == 0) throw Error(Errc::IoFailure, path.string() + ": unexpected end of file at byte " +
                                                   std::to_string(off));
    dst += got;
    off += static_cast<std::uint64_t>(got);
    len -= static_cast<std::size_t>(got);
  }
}

void pwrite_full(int fd, const fs::path& path, const std::byte* src, std::size_t len,
                 std::uint64_t off) {
  while (len > 0) {
    const std::size_t chunk = std::min(len, kMaxTransfer);
    const ssize_t put = ::pwrite(fd, src, chunk, static_cast<off_t>(off));
    if (put < 0) {
      if (errno == EINTR) continue;
      throw_io(path, off, "write", errno);
    }
    src += put;
    off += static_cast<std::uint64_t>(put);
    len -= static_cast<std::size_t>(put);
  }
}

struct AlignedFree {
  void operator()(std::byte* p) const noexcept { std::free(p); }
};
using AlignedBuffer = std::unique_ptr<std::byte[], AlignedFree>;

AlignedBuffer aligned_buffer(std::size_t align, std::size_t bytes) {
  void* p = std::aligned_alloc(align, bytes);
  if (!p) throw std::bad_alloc();
  return AlignedBuffer(static_cast<std::byte*>(p));
}

bool is_aligned(std::uint64_t v, std::size_t align) { return v % align == 0; }

}  // namespace

std::size_t direct_io_alignment() {
  if (const char* env = std::getenv("WHT_IO_ALIGN")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v >= 512 && std::has_single_bit(v)) {
      return static_cast<std::size_t>(v);
    }
  }
  return 4096;
}

fs::path sidecar_path(const fs::path& data_path) {
  return fs::path(data_path.string() + ".meta.json");
}

fs::path journal_path(const fs::path& data_path) {
  return fs::path(data_path.string() + ".journal");
}

std::string meta_to_json(const DatasetMeta& meta) {
  nlohmann::ordered_json j;
  j["format_version"] = meta.format_version;
  j["log2_dim"] = meta.log2_dim;
  j["element_kind"] = to_string(meta.kind);
  j["domain"] = to_string(meta.domain);
  if (meta.magnitude_bound) j["magnitude_bound"] = *meta.magnitude_bound;
  if (meta.progress) {
    const auto& p = *meta.progress;
    j["pass_progress"] = {{"next_pass", p.next_pass},
                          {"mem_log2", p.mem_log2},
                          {"mode", p.mode},
                          {"io_block_elems", p.io_block_elems},
                          {"journaled", p.journaled},
                          {"pass_started", p.pass_started}};
  }
  return j.dump(2) + "\n";
}

DatasetMeta meta_from_json(const std::string& text) {
  DatasetMeta meta;
  try {
    const auto j = nlohmann::json::parse(text);
    meta.format_version = j.at("format_version").get<int>();
    if (meta.format_version != 1) {
      throw Error(Errc::BadMetadata,
                  "unsupported format_version " + std::to_string(meta.format_version));
    }
    meta.log2_dim = j.at("log2_dim").get<int>();
    if (meta.log2_dim < 0 || meta.log2_dim > 60) {
      throw Error(Errc::BadMetadata, "log2_dim out of range");
    }
    const auto kind = j.at("element_kind").get<std::string>();
    if (kind == "int64") {
      meta.kind = ElementKind::Int64;
    } else if (kind == "float64") {
      meta.kind = ElementKind::Float64;
    } else {
      throw Error(Errc::BadMetadata, "unknown element_kind '" + kind + "'");
    }
    const auto domain = j.at("domain").get<std::string>();
    if (domain == "time") {
      meta.domain = Domain::Time;
    } else if (domain == "walsh") {
      meta.domain = Domain::Walsh;
    } else {
      throw Error(Errc::BadMetadata, "unknown domain '" + domain + "'");
    }
    if (j.contains("magnitude_bound")) {
      meta.magnitude_bound = j.at("magnitude_bound").get<std::uint64_t>();
    }
    if (j.contains("pass_progress")) {
      const auto& p = j.at("pass_progress");
      PassProgress prog;
      prog.next_pass = p.at("next_pass").get<int>();
      prog.mem_log2 = p.at("mem_log2").get<int>();
      prog.mode = p.at("mode").get<std::string>();
      prog.io_block_elems = p.at("io_block_elems").get<std::uint64_t>();
      prog.journaled = p.at("journaled").get<bool>();
      prog.pass_started = p.at("pass_started").get<bool>();
      meta.progress = prog;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadMetadata, std::string("malformed sidecar: ") + e.what());
  }
  return meta;
}

DatasetMeta read_meta(const fs::path& data_path) {
  const auto side = sidecar_path(data_path);
  std::ifstream in(side);
  if (!in) throw Error(Errc::BadMetadata, "missing sidecar " + side.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return meta_from_json(ss.str());
}

namespace {

void write_sidecar(const fs::path& data_path, const DatasetMeta& meta) {
  const auto side = sidecar_path(data_path);
  const auto tmp = fs::path(side.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot write " + tmp.string());
    out << meta_to_json(meta);
    out.flush();
    if (!out) throw Error(Errc::IoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, side, ec);
  if (ec) throw Error(Errc::IoFailure, "rename " + tmp.string() + ": " + ec.message());
}

}  // namespace

DatasetFile::DatasetFile(fs::path path, DatasetMeta meta, OpenOptions opts)
    : path_(std::move(path)), meta_(std::move(meta)), opts_(opts) {}

DatasetFile::DatasetFile(DatasetFile&& o) noexcept
    : path_(std::move(o.path_)),
      meta_(std::move(o.meta_)),
      opts_(o.opts_),
      fd_(std::exchange(o.fd_, -1)),
      direct_fd_(std::exchange(o.direct_fd_, -1)),
      direct_warning_(std::move(o.direct_warning_)),
      stats_(o.stats_),
      hook_(std::move(o.hook_)) {}

DatasetFile& DatasetFile::operator=(DatasetFile&& o) noexcept {
  if (this != &o) {
    close_descriptors();
    path_ = std::move(o.path_);
    meta_ = std::move(o.meta_);
    opts_ = o.opts_;
    fd_ = std::exchange(o.fd_, -1);
    direct_fd_ = std::exchange(o.direct_fd_, -1);
    direct_warning_ = std::move(o.direct_warning_);
    stats_ = o.stats_;
    hook_ = std::move(o.hook_);
  }
  return *this;
}

DatasetFile::~DatasetFile() { close_descriptors(); }

void DatasetFile::close_descriptors() noexcept {
  if (fd_ >= 0) ::close(fd_);
  if (direct_fd_ >= 0) ::close(direct_fd_);
  fd_ = direct_fd_ = -1;
}

void DatasetFile::open_descriptors() {
  const int mode = opts_.read_only ? O_RDONLY : O_RDWR;
  fd_ = ::open(path_.c_str(), mode | O_CLOEXEC);
  if (fd_ < 0) throw_io(path_, 0, "open", errno);
  if (opts_.direct_io) {
#ifdef O_DIRECT
    direct_fd_ = ::open(path_.c_str(), mode | O_CLOEXEC | O_DIRECT);
    if (direct_fd_ < 0) {
      direct_warning_ = "direct I/O unsupported on this filesystem (" + errno_text(errno) +
                        "); using buffered I/O";
    }
#else
    direct_warning_ = "direct I/O unsupported on this platform; using buffered I/O";
#endif
  }
}

DatasetFile DatasetFile::create(const fs::path& path, int log2_dim, ElementKind kind,
                                Domain domain, OpenOptions opts) {
  if (log2_dim < 0 || log2_dim > 60) {
    throw Error(Errc::BadArguments, "log2 dimension out of range: " + std::to_string(log2_dim));
  }
  if (fs::exists(path) || fs::exists(sidecar_path(path))) {
    throw Error(Errc::PathExists, path.string());
  }
  const std::uint64_t bytes = 8 * dim_of(log2_dim);
  {
    std::error_code ec;
    const auto parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
    const auto info = fs::space(parent, ec);
    if (!ec && info.available < bytes) {
      throw Error(Errc::DiskFull, "need " + std::to_string(bytes) + " bytes, " +
                                      std::to_string(info.available) + " available");
    }
  }
  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
  if (fd < 0) {
    if (errno == EEXIST) throw Error(Errc::PathExists, path.string());
    throw_io(path, 0, "create", errno);
  }
  int rc = ::posix_fallocate(fd, 0, static_cast<off_t>(bytes));
  if (rc == EOPNOTSUPP || rc == EINVAL) rc = ::ftruncate(fd, static_cast<off_t>(bytes)) ? errno : 0;
  ::close(fd);
  if (rc != 0) {
    std::error_code ec;
    fs::remove(path, ec);
    throw_io(path, 0, "allocate", rc);
  }

  DatasetMeta meta;
  meta.log2_dim = log2_dim;
  meta.kind = kind;
  meta.domain = domain;
  write_sidecar(path, meta);

  DatasetFile ds(path, meta, opts);
  ds.open_descriptors();
  return ds;
}

DatasetFile DatasetFile::open_validated(const fs::path& path, OpenOptions opts) {
  DatasetMeta meta = read_meta(path);
  std::error_code ec;
  const auto actual = fs::file_size(path, ec);
  if (ec) throw Error(Errc::IoFailure, path.string() + ": " + ec.message());
  const std::uint64_t expected = 8 * dim_of(meta.log2_dim);
  if (actual != expected) {
    throw Error(Errc::SizeMismatch, path.string() + " has " + std::to_string(actual) +
                                        " bytes, sidecar implies " + std::to_string(expected));
  }
  DatasetFile ds(path, std::move(meta), opts);
  ds.open_descriptors();
  return ds;
}

DatasetFile DatasetFile::adopt_raw(const fs::path& path, ElementKind kind, Domain domain,
                                   OpenOptions opts) {
  if (fs::exists(sidecar_path(path))) throw Error(Errc::PathExists, sidecar_path(path).string());
  std::error_code ec;
  const auto bytes = fs::file_size(path, ec);
  if (ec) throw Error(Errc::IoFailure, path.string() + ": " + ec.message());
  if (bytes % 8 != 0 || !std::has_single_bit(bytes / 8)) {
    throw Error(Errc::SizeMismatch,
                path.string() + ": " + std::to_string(bytes) + " bytes is not 8 * 2^n");
  }
  DatasetMeta meta;
  meta.log2_dim = std::countr_zero(bytes / 8);
  meta.kind = kind;
  meta.domain = domain;
  write_sidecar(path, meta);
  DatasetFile ds(path, meta, opts);
  ds.open_descriptors();
  return ds;
}

void DatasetFile::require_kind(ElementKind k) const {
  if (k != meta_.kind) {
    throw Error(Errc::BadArguments, path_.string() + " holds " + to_string(meta_.kind) +
                                        " elements, requested " + to_string(k));
  }
}

void DatasetFile::check_bounds(std::uint64_t start, std::uint64_t count) const {
  if (count == 0 || start >= size() || count > size() - start) {
    throw Error(Errc::OutOfBounds, "block [" + std::to_string(start) + ", +" +
                                       std::to_string(count) + ") outside 2^" +
                                       std::to_string(meta_.log2_dim) + " elements");
  }
}

void DatasetFile::read_raw(std::uint64_t start_index, std::span<std::byte> out) {
  if (out.size() % 8 != 0) throw Error(Errc::BadArguments, "read size not a multiple of 8");
  check_bounds(start_index, out.size() / 8);
  const std::uint64_t off = start_index * 8;
  notify({IoTarget::Data, IoOp::Read, off, out.size()});

  const std::size_t align = direct_io_alignment();
  if (direct_fd_ >= 0) {
    const std::uint64_t lo = off / align * align;
    const std::uint64_t hi = (off + out.size() + align - 1) / align * align;
    const std::uint64_t file_bytes = 8 * size();
    if (lo == off && hi == off + out.size() &&
        is_aligned(reinterpret_cast<std::uintptr_t>(out.data()), align)) {
      pread_full(direct_fd_, path_, out.data(), out.size(), off);
    } else if (hi <= file_bytes) {
      auto bounce = aligned_buffer(align, hi - lo);
      pread_full(direct_fd_, path_, bounce.get(), hi - lo, lo);
      std::memcpy(out.data(), bounce.get() + (off - lo), out.size());
    } else {
      pread_full(fd_, path_, out.data(), out.size(), off);
    }
  } else {
    pread_full(fd_, path_, out.data(), out.size(), off);
  }
  stats_.bytes_read += out.size();
  ++stats_.read_ops;
}

void DatasetFile::write_raw(std::uint64_t start_index, std::span<const std::byte> in) {
  if (opts_.read_only) throw Error(Errc::IoFailure, path_.string() + " opened read-only");
  if (in.size() % 8 != 0) throw Error(Errc::BadArguments, "write size not a multiple of 8");
  check_bounds(start_index, in.size() / 8);
  const std::uint64_t off = start_index * 8;
  notify({IoTarget::Data, IoOp::Write, off, in.size()});

  const std::size_t align = direct_io_alignment();
  if (direct_fd_ >= 0 && is_aligned(off, align) && is_aligned(in.size(), align)) {
    if (is_aligned(reinterpret_cast<std::uintptr_t>(in.data()), align)) {
      pwrite_full(direct_fd_, path_, in.data(), in.size(), off);
    } else {
      auto bounce = aligned_buffer(align, in.size());
      std::memcpy(bounce.get(), in.data(), in.size());
      pwrite_full(direct_fd_, path_, bounce.get(), in.size(), off);
    }
  } else {
    // Unaligned pieces go through the page cache; the kernel keeps both
    // descriptors coherent.
    pwrite_full(fd_, path_, in.data(), in.size(), off);
  }
  stats_.bytes_written += in.size();
  ++stats_.write_ops;
}

void DatasetFile::sync() {
  notify({IoTarget::Data, IoOp::Sync, 0, 0});
  if (fd_ >= 0 && ::fdatasync(fd_) != 0) throw_io(path_, 0, "fdatasync", errno);
}

void DatasetFile::update_meta(const DatasetMeta& meta) {
  notify({IoTarget::Sidecar, IoOp::Write, 0, 0});
  if (meta.log2_dim != meta_.log2_dim) {
    throw Error(Errc::BadMetadata, "sidecar update may not change log2_dim");
  }
  write_sidecar(path_, meta);
  meta_ = meta;
}

void DatasetFile::from_little_endian(std::span<std::byte> bytes) noexcept {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i + 8 <= bytes.size(); i += 8) {
      std::reverse(bytes.begin() + i, bytes.begin() + i + 8);
    }
  }
}

}  // namespace wht
