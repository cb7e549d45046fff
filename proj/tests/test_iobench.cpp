#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "support.hpp"
#include "wht/error.hpp"
#include "wht/iobench.hpp"

using namespace wht;
namespace fs = std::filesystem;

TEST_CASE("byte sizes") {
  CHECK(parse_byte_size("4096") == 4096);
  CHECK(parse_byte_size("2M") == 2 * kMiB);
  CHECK(parse_byte_size("128MB") == 128 * kMiB);
  CHECK(parse_byte_size("1G") == 1024 * kMiB);
  CHECK(parse_byte_size("16k") == 16384);
  CHECK_THROWS_AS(parse_byte_size("M"), Error);
  CHECK_THROWS_AS(parse_byte_size("2X"), Error);
  CHECK_THROWS_AS(parse_byte_size("0"), Error);
  CHECK(format_byte_size(2 * kMiB) == "2M");
  CHECK(format_byte_size(1024 * kMiB) == "1G");
  CHECK(format_byte_size(1000) == "1000");
}

TEST_CASE("default sizes and deduplication") {
  const auto d = default_block_sizes();
  CHECK(d.front() == 2 * kMiB);
  CHECK(d.back() == kMaxSingleTransfer);
  CHECK(normalize_block_sizes({8, 2, 8, 4, 2}) == std::vector<std::uint64_t>{8, 2, 4});
}

TEST_CASE("copy of a small file") {
  testutil::TempDir dir;
  const std::uint64_t file = 4 * kMiB;
  const auto row = measure_copy(dir.path(), file, 256 * 1024, false);
  CHECK(row.ok());
  CHECK(row.verified);
  CHECK(row.transfers == 16);
  CHECK(row.transfer_bytes == 256 * 1024);
  CHECK_FALSE(row.capped);
  CHECK(row.copy_seconds > 0);
  CHECK(row.mbps * row.copy_seconds == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(fs::is_empty(dir.path()));
}

TEST_CASE("block larger than the file takes one transfer") {
  testutil::TempDir dir;
  const auto row = measure_copy(dir.path(), kMiB, 8 * kMiB, false);
  CHECK(row.ok());
  CHECK(row.transfers == 1);
}

TEST_CASE("uneven final transfer") {
  testutil::TempDir dir;
  const auto row = measure_copy(dir.path(), kMiB + 4096, 64 * 1024, false);
  CHECK(row.verified);
  CHECK(row.transfers == 17);
}

TEST_CASE("direct I/O works or records why not") {
  testutil::TempDir dir;
  const auto row = measure_copy(dir.path(), kMiB, 128 * 1024, true);
  CHECK(row.ok());
  CHECK(row.verified);
  if (!row.direct_io) CHECK(row.warning.find("DirectIoUnsupported") != std::string::npos);
}

TEST_CASE("sweep report") {
  testutil::TempDir dir;
  const auto rep = sweep(dir.path(), 2 * kMiB, {64 * 1024, 256 * 1024, 64 * 1024, kMiB});
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.arithmetic_consistent());
  CHECK_FALSE(rep.annotation.empty());

  std::istringstream csv(rep.to_csv());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "block_bytes,seconds,mbps");
  int rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream fields(line);
    std::string a, b, c;
    std::getline(fields, a, ',');
    std::getline(fields, b, ',');
    std::getline(fields, c, ',');
    const double bytes = std::stod(b) * std::stod(c) * static_cast<double>(kMiB);
    CHECK(bytes == doctest::Approx(2.0 * kMiB).epsilon(1e-3));
    ++rows;
  }
  CHECK(rows == 3);
  CHECK(rep.to_table().find("256K") != std::string::npos);
  CHECK_THROWS_AS(sweep(dir.path(), kMiB, {}), Error);
}

TEST_CASE("failures are recorded per row") {
  const auto rep = sweep("/nonexistent/dir/for/wht", kMiB, {kMiB});
  REQUIRE(rep.rows.size() == 1);
  CHECK_FALSE(rep.rows[0].ok());
  CHECK(rep.to_csv() == "block_bytes,seconds,mbps\n");
}

TEST_CASE("trend annotation") {
  std::vector<IoBenchRow> rows(3);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].block_bytes = (i + 1) * kMiB;
  rows[0].copy_seconds = 4;
  rows[1].copy_seconds = 2;
  rows[2].copy_seconds = 1.98;
  const auto s = trend_annotation(rows);
  CHECK(s.find("decreases") != std::string::npos);
  CHECK(s.find("levels off") != std::string::npos);
}

TEST_CASE("transfer count and throughput arithmetic") {
  testutil::TempDir dir;
  const auto row = measure_copy(dir.path(), 16 * kMiB, 2 * kMiB, false);
  CHECK(row.transfers == 8);
  CHECK(row.verified);
  CHECK(mib_per_second(16 * kMiB, 0.2) == doctest::Approx(80.0));
}
