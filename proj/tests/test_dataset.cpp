#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "support.hpp"
#include "wht/dataset.hpp"

using namespace wht;
namespace fs = std::filesystem;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::IoFailure;
}

}  // namespace

TEST_CASE("create allocates a zeroed file and a sidecar") {
  testutil::TempDir dir;
  const auto path = dir / "a.bin";
  auto ds = DatasetFile::create(path, 10, ElementKind::Int64);
  CHECK(fs::file_size(path) == 8 * 1024);
  CHECK(fs::exists(sidecar_path(path)));
  CHECK(ds.size() == 1024);
  const auto all = ds.read_block<std::int64_t>({0, 1024});
  CHECK(std::all_of(all.begin(), all.end(), [](auto v) { return v == 0; }));

  const auto meta = read_meta(path);
  CHECK(meta.log2_dim == 10);
  CHECK(meta.kind == ElementKind::Int64);
  CHECK(meta.domain == Domain::Time);
  CHECK(meta.format_version == 1);
}

TEST_CASE("create refuses to overwrite") {
  testutil::TempDir dir;
  const auto path = dir / "a.bin";
  { auto ds = DatasetFile::create(path, 3, ElementKind::Int64); }
  CHECK(code_of([&] { DatasetFile::create(path, 3, ElementKind::Int64); }) == Errc::PathExists);
}

TEST_CASE("block round trip and element access") {
  testutil::TempDir dir;
  auto ds = DatasetFile::create(dir / "r.bin", 8, ElementKind::Float64);
  std::vector<double> v{1.5, -2.25, 3.0, 1e300};
  ds.write_block<double>({100, 4}, v);
  CHECK(ds.read_block<double>({100, 4}) == v);
  CHECK(ds.read_element<double>(101) == -2.25);
  ds.write_element<double>(255, 7.0);
  CHECK(ds.read_element<double>(255) == 7.0);
  CHECK(ds.stats().bytes_written == 40);
  CHECK(ds.stats().write_ops == 2);
}

TEST_CASE("bytes are little endian on disk") {
  testutil::TempDir dir;
  const auto path = dir / "le.bin";
  {
    auto ds = DatasetFile::create(path, 1, ElementKind::Int64);
    ds.write_element<std::int64_t>(0, 0x0102030405060708);
    ds.write_element<std::int64_t>(1, -1);
  }
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes(16);
  in.read(reinterpret_cast<char*>(bytes.data()), 16);
  CHECK(bytes[0] == 0x08);
  CHECK(bytes[7] == 0x01);
  CHECK(bytes[8] == 0xff);
}

TEST_CASE("out of range access is rejected") {
  testutil::TempDir dir;
  auto ds = DatasetFile::create(dir / "o.bin", 4, ElementKind::Int64);
  CHECK(code_of([&] { ds.read_block<std::int64_t>({10, 7}); }) == Errc::OutOfBounds);
  CHECK(code_of([&] { ds.read_block<std::int64_t>({16, 1}); }) == Errc::OutOfBounds);
  CHECK(code_of([&] { ds.read_block<std::int64_t>({0, 0}); }) == Errc::OutOfBounds);
  CHECK(code_of([&] { ds.read_block<double>({0, 1}); }) == Errc::BadArguments);
}

TEST_CASE("open validates size and sidecar") {
  testutil::TempDir dir;
  const auto path = dir / "v.bin";
  { auto ds = DatasetFile::create(path, 5, ElementKind::Int64); }
  CHECK_NOTHROW(DatasetFile::open_validated(path));

  fs::resize_file(path, 8 * 33);
  CHECK(code_of([&] { DatasetFile::open_validated(path); }) == Errc::SizeMismatch);
  fs::resize_file(path, 8 * 32);

  { std::ofstream(sidecar_path(path)) << "{ not json"; }
  CHECK(code_of([&] { DatasetFile::open_validated(path); }) == Errc::BadMetadata);
  fs::remove(sidecar_path(path));
  CHECK(code_of([&] { DatasetFile::open_validated(path); }) == Errc::BadMetadata);
}

TEST_CASE("raw files are adopted only with a power of two size") {
  testutil::TempDir dir;
  const auto path = dir / "raw.bin";
  {
    std::ofstream out(path, std::ios::binary);
    std::vector<char> zeros(8 * 64, 0);
    out.write(zeros.data(), static_cast<std::streamsize>(zeros.size()));
  }
  auto ds = DatasetFile::adopt_raw(path, ElementKind::Float64);
  CHECK(ds.log2_dim() == 6);
  CHECK(read_meta(path).kind == ElementKind::Float64);

  const auto odd = dir / "odd.bin";
  { std::ofstream(odd, std::ios::binary) << std::string(8 * 3, '\0'); }
  CHECK(code_of([&] { DatasetFile::adopt_raw(odd, ElementKind::Int64); }) == Errc::SizeMismatch);
}

TEST_CASE("sidecar json round trip") {
  DatasetMeta m;
  m.log2_dim = 20;
  m.kind = ElementKind::Float64;
  m.domain = Domain::Walsh;
  m.magnitude_bound = 12345;
  PassProgress p;
  p.next_pass = 2;
  p.mem_log2 = 12;
  p.mode = "blocked";
  p.io_block_elems = 64;
  p.journaled = false;
  p.pass_started = true;
  m.progress = p;
  const auto back = meta_from_json(meta_to_json(m));
  CHECK(back.log2_dim == 20);
  CHECK(back.kind == ElementKind::Float64);
  CHECK(back.domain == Domain::Walsh);
  CHECK(back.magnitude_bound == std::optional<std::uint64_t>(12345));
  REQUIRE(back.progress);
  CHECK(back.progress->next_pass == 2);
  CHECK(back.progress->mode == "blocked");
  CHECK(back.progress->pass_started);
  CHECK_FALSE(back.progress->journaled);

  CHECK_THROWS_AS(meta_from_json(R"({"log2_dim": 4, "element_kind": "int8", "domain": "time"})"),
                  Error);
}

TEST_CASE("update_meta is atomic and keeps the dimension") {
  testutil::TempDir dir;
  const auto path = dir / "m.bin";
  auto ds = DatasetFile::create(path, 4, ElementKind::Int64);
  auto m = ds.meta();
  m.domain = Domain::Walsh;
  ds.update_meta(m);
  CHECK(read_meta(path).domain == Domain::Walsh);
  m.log2_dim = 5;
  CHECK(code_of([&] { ds.update_meta(m); }) == Errc::BadMetadata);
  for (const auto& e : fs::directory_iterator(dir.path())) {
    CHECK(e.path().extension() != ".tmp");
  }
}

TEST_CASE("read-only handles refuse writes") {
  testutil::TempDir dir;
  const auto path = dir / "ro.bin";
  { auto ds = DatasetFile::create(path, 2, ElementKind::Int64); }
  auto ds = DatasetFile::open_validated(path, {.read_only = true});
  CHECK_THROWS_AS(ds.write_element<std::int64_t>(0, 1), Error);
}

TEST_CASE("io hook sees operations and can abort them") {
  testutil::TempDir dir;
  auto ds = DatasetFile::create(dir / "h.bin", 4, ElementKind::Int64);
  std::vector<IoEvent> seen;
  ds.set_io_hook([&](const IoEvent& e) { seen.push_back(e); });
  ds.write_element<std::int64_t>(3, 9);
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].op == IoOp::Write);
  CHECK(seen[0].byte_offset == 24);

  ds.set_io_hook([](const IoEvent& e) {
    if (e.op == IoOp::Write) throw Error(Errc::IoFailure, "injected");
  });
  CHECK_THROWS_AS(ds.write_element<std::int64_t>(3, 10), Error);
  ds.set_io_hook({});
  CHECK(ds.read_element<std::int64_t>(3) == 9);
}

TEST_CASE("direct I/O round trip or a recorded fallback") {
  testutil::TempDir dir;
  const auto path = dir / "d.bin";
  { auto ds = DatasetFile::create(path, 12, ElementKind::Int64); }
  auto ds = DatasetFile::open_validated(path, {.direct_io = true});
  if (!ds.direct_io_active()) CHECK_FALSE(ds.direct_io_warning().empty());
  std::mt19937_64 rng(1);
  auto v = testutil::random_ints(12, 1000, rng);
  ds.write_from<std::int64_t>(0, v);
  ds.write_element<std::int64_t>(7, 77);  // unaligned
  v[7] = 77;
  CHECK(ds.read_block<std::int64_t>({0, v.size()}) == v);
  CHECK(ds.read_block<std::int64_t>({5, 3}) == std::vector<std::int64_t>{v[5], v[6], 77});
}

TEST_CASE("save_signal records the magnitude bound") {
  testutil::TempDir dir;
  const auto path = dir / "s.bin";
  auto ds = save_signal(dir / "s.bin", IntSignal({3, -9, 4, 0}));
  CHECK(read_meta(path).magnitude_bound == std::optional<std::uint64_t>(9));
  CHECK(ds.load<std::int64_t>().vector() == std::vector<std::int64_t>{3, -9, 4, 0});
}
