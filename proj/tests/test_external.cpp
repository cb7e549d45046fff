#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "support.hpp"
#include "wht/core.hpp"
#include "wht/external.hpp"

using namespace wht;
namespace fs = std::filesystem;

namespace {

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::int64_t> transformed(std::vector<std::int64_t> x) {
  fwht_inplace(std::span<std::int64_t>(x));
  return x;
}

struct Killed : std::runtime_error {
  Killed() : std::runtime_error("killed") {}
};

}  // namespace

TEST_CASE("plan shape") {
  const auto p = plan_external(20, 12, ExternalMode::Blocked, 8 * 64);
  CHECK(p.q() == 9);
  CHECK(p.passes[0].stage == -1);
  CHECK(p.passes[1].stage == 12);
  CHECK(p.passes.back().stage == 19);
  CHECK(p.passes[1].units == 256);
  CHECK(p.passes[1].unit_elems == 4096);
  CHECK(p.io_block_elems == 64);
  CHECK(pass_io_volume(p) == 9ull * 2 * 8 * (1 << 20));

  CHECK(plan_external(10, 12, ExternalMode::EntryWise).q() == 1);
  CHECK(plan_external(12, 12, ExternalMode::EntryWise).q() == 1);
  CHECK(plan_external(13, 12, ExternalMode::EntryWise).q() == 2);
}

TEST_CASE("block size validation") {
  auto code = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::IoFailure;
  };
  CHECK(code([] { plan_external(20, 8, ExternalMode::Blocked, 8 * 256); }) == Errc::BadBlockSize);
  CHECK(code([] { plan_external(20, 8, ExternalMode::Blocked, 12); }) == Errc::BadBlockSize);
  CHECK(code([] { plan_external(20, 8, ExternalMode::Blocked, 8 * 24); }) == Errc::BadBlockSize);
  CHECK_NOTHROW(plan_external(20, 8, ExternalMode::Blocked, 8 * 128));
  CHECK(code([] { plan_external(20, 0, ExternalMode::Blocked, 8); }) == Errc::BadArguments);
  CHECK(default_io_block_bytes(8) == 8 * 128);
  CHECK(default_io_block_bytes(30) == kDefaultIoBlockBytes);
}

TEST_CASE("both modes match the in-memory transform") {
  testutil::TempDir dir;
  std::mt19937_64 rng(31);
  int id = 0;
  for (int n : {1, 5, 9, 12, 14}) {
    for (int b : {1, 3, 8}) {
      for (auto mode : {ExternalMode::EntryWise, ExternalMode::Blocked}) {
        for (bool journal : {true, false}) {
          const auto x = testutil::random_ints(n, 1 << 20, rng);
          const auto path = dir / ("e" + std::to_string(id++) + ".bin");
          auto ds = save_signal(path, IntSignal(x));
          const std::uint64_t s = std::uint64_t{1} << std::max(0, std::min(b - 1, 2));
          ExternalOptions opts;
          opts.journal = journal;
          const auto rep = run_external(ds, plan_external(n, b, mode, 8 * s), opts);
          INFO("n=" << n << " B=" << b << " journal=" << journal);
          CHECK(rep.passes_run == std::max(1, n - b + 1));
          CHECK(rep.per_pass.size() == std::size_t(rep.passes_run));
          CHECK(ds.load<std::int64_t>().vector() == transformed(x));
          CHECK(read_meta(path).domain == Domain::Walsh);
          CHECK_FALSE(read_meta(path).progress);
          CHECK_FALSE(fs::exists(journal_path(path)));
        }
      }
    }
  }
}

TEST_CASE("every pass moves the whole file once each way") {
  testutil::TempDir dir;
  std::mt19937_64 rng(32);
  const int n = 12;
  auto ds = save_signal(dir / "io.bin", IntSignal(testutil::random_ints(n, 100, rng)));
  const auto plan = plan_external(n, 8, ExternalMode::Blocked, 8 * 32);
  const auto rep = run_external(ds, plan);
  REQUIRE(rep.per_pass.size() == 5);
  for (const auto& s : rep.per_pass) {
    CHECK(s.bytes_read == 8u << n);
    CHECK(s.bytes_written == 8u << n);
  }
  std::uint64_t total = 0;
  for (const auto& s : rep.per_pass) total += s.bytes_read + s.bytes_written;
  CHECK(total == pass_io_volume(plan));
}

TEST_CASE("floating point data") {
  testutil::TempDir dir;
  std::mt19937_64 rng(33);
  auto x = testutil::random_reals(11, rng);
  auto ds = save_signal(dir / "f.bin", RealSignal(x));
  run_external_blocked(ds, 6, 8);
  fwht_inplace(std::span<double>(x));
  CHECK(ds.load<double>().vector() == x);
}

TEST_CASE("guards") {
  testutil::TempDir dir;
  auto ds = save_signal(dir / "g.bin", IntSignal(std::vector<std::int64_t>(16, 1)));
  CHECK_THROWS_AS(run_external(ds, plan_external(5, 2, ExternalMode::Blocked, 8)), Error);
  run_external_entrywise(ds, 2);
  // Already in the Walsh domain.
  CHECK_THROWS_AS(run_external_entrywise(ds, 2), Error);

  auto big = save_signal(dir / "big.bin",
                         IntSignal(std::vector<std::int64_t>{std::int64_t{1} << 61, 0, 0, 0}));
  try {
    run_external_entrywise(big, 1);
    FAIL("expected Overflow");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Overflow);
  }
}

TEST_CASE("restart after a kill at a random I/O operation gives identical output") {
  testutil::TempDir dir;
  std::mt19937_64 rng(34);
  const int n = 10;
  int id = 0;
  for (auto mode : {ExternalMode::EntryWise, ExternalMode::Blocked}) {
    for (int b : {3, 6}) {
      const auto x = testutil::random_ints(n, 1 << 16, rng);
      const auto ref_path = dir / ("ref" + std::to_string(id) + ".bin");
      {
        auto ref = save_signal(ref_path, IntSignal(x));
        run_external(ref, plan_external(n, b, mode, 8 * 2));
      }
      const auto ref_bytes = file_bytes(ref_path);

      // Count operations of an undisturbed run.
      std::uint64_t ops = 0;
      {
        auto probe = save_signal(dir / ("probe" + std::to_string(id) + ".bin"), IntSignal(x));
        probe.set_io_hook([&](const IoEvent&) { ++ops; });
        run_external(probe, plan_external(n, b, mode, 8 * 2));
      }

      for (int trial = 0; trial < 12; ++trial) {
        const auto path = dir / ("k" + std::to_string(id) + "_" + std::to_string(trial) + ".bin");
        const std::uint64_t kill_at = std::uniform_int_distribution<std::uint64_t>(1, ops)(rng);
        {
          auto ds = save_signal(path, IntSignal(x));
          std::uint64_t count = 0;
          ds.set_io_hook([&](const IoEvent&) {
            if (++count == kill_at) throw Killed();
          });
          CHECK_THROWS_AS(run_external(ds, plan_external(n, b, mode, 8 * 2)), Killed);
        }
        auto ds = DatasetFile::open_validated(path);
        ExternalOptions opts;
        opts.resume = read_meta(path).progress.has_value();
        INFO("mode " << to_string(mode) << ", B " << b << ", kill at " << kill_at << " of " << ops);
        run_external(ds, plan_external(n, b, mode, 8 * 2), opts);
        CHECK(file_bytes(path) == ref_bytes);
        CHECK(read_meta(path).domain == Domain::Walsh);
      }
      ++id;
    }
  }
}

TEST_CASE("repeated kills during one transform") {
  testutil::TempDir dir;
  std::mt19937_64 rng(35);
  const int n = 9;
  const auto x = testutil::random_ints(n, 1000, rng);
  const auto path = dir / "multi.bin";
  save_signal(path, IntSignal(x));
  const auto plan = plan_external(n, 4, ExternalMode::Blocked, 8 * 4);
  bool done = false;
  int attempts = 0;
  while (!done && attempts < 200) {
    auto ds = DatasetFile::open_validated(path);
    std::uint64_t count = 0;
    const std::uint64_t kill_at = std::uniform_int_distribution<std::uint64_t>(5, 120)(rng);
    ds.set_io_hook([&](const IoEvent&) {
      if (++count == kill_at) throw Killed();
    });
    ExternalOptions opts;
    opts.resume = attempts > 0;
    try {
      run_external(ds, plan, opts);
      done = true;
    } catch (const Killed&) {
    }
    ++attempts;
  }
  REQUIRE(done);
  CHECK(attempts > 1);
  auto ds = DatasetFile::open_validated(path);
  CHECK(ds.load<std::int64_t>().vector() == transformed(x));
}

TEST_CASE("without a journal only pass boundaries are restartable") {
  testutil::TempDir dir;
  std::mt19937_64 rng(36);
  const int n = 8;
  const auto x = testutil::random_ints(n, 1000, rng);
  const auto plan = plan_external(n, 4, ExternalMode::Blocked, 8 * 2);
  ExternalOptions opts;
  opts.journal = false;

  // Kill on the sidecar update that would start pass 2.
  const auto path = dir / "nj.bin";
  {
    auto ds = save_signal(path, IntSignal(x));
    int sidecar_writes = 0;
    ds.set_io_hook([&](const IoEvent& e) {
      if (e.target == IoTarget::Sidecar && e.op == IoOp::Write && ++sidecar_writes == 6) throw Killed();
    });
    CHECK_THROWS_AS(run_external(ds, plan, opts), Killed);
  }
  {
    auto ds = DatasetFile::open_validated(path);
    opts.resume = true;
    run_external(ds, plan, opts);
    CHECK(ds.load<std::int64_t>().vector() == transformed(x));
  }

  // Kill inside a pass: refused rather than silently corrupting.
  const auto path2 = dir / "nj2.bin";
  {
    auto ds = save_signal(path2, IntSignal(x));
    int data_writes = 0;
    ds.set_io_hook([&](const IoEvent& e) {
      if (e.target == IoTarget::Data && e.op == IoOp::Write && ++data_writes == 300) throw Killed();
    });
    opts.resume = false;
    CHECK_THROWS_AS(run_external(ds, plan, opts), Killed);
  }
  auto ds = DatasetFile::open_validated(path2);
  opts.resume = true;
  try {
    run_external(ds, plan, opts);
    FAIL("expected IoFailure");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IoFailure);
  }
}

TEST_CASE("interrupted dataset must be resumed explicitly") {
  testutil::TempDir dir;
  const auto path = dir / "r.bin";
  {
    auto ds = save_signal(path, IntSignal(std::vector<std::int64_t>(64, 3)));
    int count = 0;
    ds.set_io_hook([&](const IoEvent&) {
      if (++count == 20) throw Killed();
    });
    CHECK_THROWS_AS(run_external_blocked(ds, 3, 2), Killed);
  }
  auto ds = DatasetFile::open_validated(path);
  CHECK_THROWS_AS(run_external_blocked(ds, 3, 2), Error);
  ExternalOptions opts;
  opts.resume = true;
  CHECK_THROWS_AS(run_external_blocked(ds, 4, 2, opts), Error);  // different B
  run_external_blocked(ds, 3, 2, opts);
  auto expect = std::vector<std::int64_t>(64, 0);
  expect[0] = 3 * 64;
  CHECK(ds.load<std::int64_t>().vector() == expect);
}

TEST_CASE("threads in the in-memory pass") {
  testutil::TempDir dir;
  std::mt19937_64 rng(37);
  const auto x = testutil::random_ints(12, 1000, rng);
  auto ds = save_signal(dir / "t.bin", IntSignal(x));
  ExternalOptions opts;
  opts.threads = 4;
  run_external(ds, plan_external(12, 9, ExternalMode::Blocked, 8 * 16), opts);
  CHECK(ds.load<std::int64_t>().vector() == transformed(x));
}
