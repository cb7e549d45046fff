#include "wht/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "wht/core.hpp"
#include "wht/dataset.hpp"
#include "wht/external.hpp"
#include "wht/iobench.hpp"
#include "wht/noisy.hpp"
#include "wht/parallel.hpp"
#include "wht/perf_model.hpp"
#include "wht/subspace.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace wht::cli {

ExitCode exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::BadArguments:
    case Errc::BadBlockSize:
    case Errc::InvalidWorkerCount:
    case Errc::BadDims:
    case Errc::BadSpec:
      return kUsage;
    case Errc::IoFailure:
    case Errc::DiskFull:
    case Errc::PathExists:
    case Errc::OutOfBounds:
    case Errc::DirectIoUnsupported:
      return kIo;
    case Errc::OracleTooLarge:
    case Errc::Overflow:
    case Errc::InexactDivision:
    case Errc::SizeMismatch:
    case Errc::BadMetadata:
    case Errc::EmptyReport:
    case Errc::DimMismatch:
    case Errc::ZeroNoise:
      return kValidation;
  }
  return kIo;
}

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool quiet = false;
  bool json = false;
};

/// Writes results either as one JSON document or as human text.
class Reporter {
 public:
  Reporter(const Globals& g, std::string command, std::ostream& out)
      : g_(g), out_(out) {
    doc_["schema_version"] = kJsonSchemaVersion;
    doc_["command"] = std::move(command);
  }

  json& doc() { return doc_; }

  /// Human line; skipped under --quiet and --json.
  std::ostream& text() {
    static std::ostream null(nullptr);
    return (g_.quiet || g_.json) ? null : out_;
  }

  void finish() {
    if (g_.json) out_ << doc_.dump(2) << '\n';
  }

 private:
  const Globals& g_;
  std::ostream& out_;
  json doc_;
};

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string full(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

ElementKind parse_kind(const std::string& text) {
  if (text == "int64") return ElementKind::Int64;
  if (text == "float64") return ElementKind::Float64;
  throw Error(Errc::BadArguments, "unknown element kind '" + text + "'");
}

DatasetFile open_dataset(const fs::path& path, bool force, const std::string& kind,
                         OpenOptions opts = {}) {
  if (!fs::exists(path)) throw Error(Errc::IoFailure, "no such file: " + path.string());
  if (!fs::exists(sidecar_path(path))) {
    if (!force) {
      throw Error(Errc::BadMetadata, "missing sidecar " + sidecar_path(path).string() +
                                         " (pass --force to adopt a raw file)");
    }
    return DatasetFile::adopt_raw(path, parse_kind(kind), Domain::Time, opts);
  }
  return DatasetFile::open_validated(path, opts);
}

void require_absent(const fs::path& path) {
  if (fs::exists(path) || fs::exists(sidecar_path(path))) {
    throw Error(Errc::PathExists, path.string());
  }
}

std::vector<SupportEntry> parse_support(const std::string& text) {
  std::vector<SupportEntry> out;
  if (text.empty()) return out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw Error(Errc::BadArguments, "support entry '" + item + "' is not idx:amp");
    }
    try {
      std::size_t used = 0;
      SupportEntry e;
      e.index = std::stoull(item.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument(item);
      const std::string amp = item.substr(colon + 1);
      e.amplitude = std::stod(amp, &used);
      if (used != amp.size()) throw std::invalid_argument(item);
      out.push_back(e);
    } catch (const std::logic_error&) {
      throw Error(Errc::BadArguments, "support entry '" + item + "' is not idx:amp");
    }
  }
  return out;
}

std::vector<std::uint64_t> parse_block_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(parse_byte_size(item));
  }
  if (out.empty()) throw Error(Errc::BadArguments, "empty block list");
  return out;
}

void copy_dataset(const fs::path& from, const fs::path& to) {
  require_absent(to);
  fs::copy_file(from, to);
  fs::copy_file(sidecar_path(from), sidecar_path(to));
}

// ---- gen -------------------------------------------------------------------

struct GenArgs {
  int n = 0;
  std::string support;
  std::string noise = "none";
  double sigma = 0;
  std::string out;
  std::string clean_out;
  std::string kind = "auto";
};

bool exact_integer_plan(const NoisySignalSpec& spec) {
  const double scale = std::ldexp(1.0, spec.log2_dim);
  for (const auto& e : spec.support) {
    if (e.amplitude / scale != std::trunc(e.amplitude / scale)) return false;
  }
  if (spec.noise == NoiseKind::None || spec.sigma == 0) return true;
  return spec.noise == NoiseKind::Rademacher && spec.sigma == std::trunc(spec.sigma);
}

int cmd_gen(const GenArgs& a, const Globals& g, std::ostream& out) {
  NoisySignalSpec spec;
  spec.log2_dim = a.n;
  spec.support = parse_support(a.support);
  spec.noise = parse_noise_kind(a.noise);
  spec.sigma = a.sigma;
  spec.seed = g.seed;
  spec.validate();
  if (a.kind != "auto") parse_kind(a.kind);
  const bool integral = exact_integer_plan(spec);
  const bool as_int = a.kind == "int64" || (a.kind == "auto" && integral);
  if (a.kind == "int64" && !integral) {
    throw Error(Errc::BadSpec, "int64 output needs amplitudes that are multiples of 2^n and "
                               "integer Rademacher (or no) noise");
  }
  require_absent(a.out);
  if (!a.clean_out.empty()) require_absent(a.clean_out);

  if (as_int) {
    IntSignal clean = gen_clean_exact(spec);
    auto noise = make_noise(spec.log2_dim, spec.noise, spec.sigma, spec.seed);
    std::vector<std::int64_t> noisy(clean.vector());
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += static_cast<std::int64_t>(noise[i]);
    save_signal(a.out, IntSignal(std::move(noisy), Domain::Time));
    if (!a.clean_out.empty()) save_signal(a.clean_out, clean);
  } else {
    auto sig = gen(spec);
    save_signal(a.out, sig.noisy);
    if (!a.clean_out.empty()) save_signal(a.clean_out, sig.clean);
  }

  Reporter r(g, "gen", out);
  const std::string kind = as_int ? "int64" : "float64";
  r.doc()["out"] = a.out;
  r.doc()["log2_dim"] = a.n;
  r.doc()["kind"] = kind;
  r.doc()["support_size"] = spec.support.size();
  r.doc()["noise"] = to_string(spec.noise);
  r.doc()["sigma"] = spec.sigma;
  r.doc()["seed"] = spec.seed;
  r.text() << "wrote " << a.out << ": n = " << a.n << ", " << kind << ", "
           << spec.support.size() << " planted coefficients, noise " << to_string(spec.noise)
           << " sigma " << spec.sigma << ", seed " << spec.seed << '\n';
  r.finish();
  return kOk;
}

// ---- transform -------------------------------------------------------------

struct TransformArgs {
  std::string in;
  std::string out;
  std::uint64_t threads = 1;
  bool force = false;
  std::string kind = "int64";
  // ext only
  int mem_log2 = 0;
  std::string mode = "blocked";
  std::string io_block;
  bool resume = false;
  bool no_journal = false;
  bool sync_journal = false;
  bool direct = false;
};

template <Scalar T>
void transform_in_memory(DatasetFile& ds, std::uint64_t threads) {
  auto meta = ds.meta();
  auto data = ds.read_block<T>({0, ds.size()});
  if constexpr (std::is_same_v<T, std::int64_t>) {
    if (!meta.magnitude_bound) meta.magnitude_bound = max_magnitude(data);
    require_magnitude_bound(*meta.magnitude_bound, meta.log2_dim);
  }
  fwht_threaded(std::span<T>(data), threads);
  ds.write_from<T>(0, data);
  ds.sync();
  if (meta.magnitude_bound) *meta.magnitude_bound <<= meta.log2_dim;
  meta.domain = flipped(meta.domain);
  ds.update_meta(meta);
}

int cmd_transform_mem(const TransformArgs& a, const Globals& g, std::ostream& out) {
  if (a.threads == 0 || !std::has_single_bit(a.threads)) {
    throw Error(Errc::InvalidWorkerCount, "--threads must be a power of two");
  }
  if (a.force) parse_kind(a.kind);
  fs::path target = a.in;
  if (!a.out.empty()) {
    { auto probe = open_dataset(a.in, a.force, a.kind, {.read_only = true}); }
    copy_dataset(a.in, a.out);
    target = a.out;
  }
  auto ds = open_dataset(target, a.force, a.kind);
  if (ds.meta().progress) {
    throw Error(Errc::BadMetadata, "dataset has an unfinished external transform; resume it first");
  }
  if (ds.kind() == ElementKind::Int64) {
    transform_in_memory<std::int64_t>(ds, a.threads);
  } else {
    transform_in_memory<double>(ds, a.threads);
  }

  Reporter r(g, "transform mem", out);
  r.doc()["path"] = target.string();
  r.doc()["log2_dim"] = ds.log2_dim();
  r.doc()["threads"] = a.threads;
  r.doc()["domain"] = to_string(ds.domain());
  r.text() << "transformed " << target.string() << " in memory: n = " << ds.log2_dim()
           << ", threads " << a.threads << ", now " << to_string(ds.domain()) << '\n';
  r.finish();
  return kOk;
}

int cmd_transform_ext(const TransformArgs& a, const Globals& g, std::ostream& out,
                      std::ostream& err) {
  if (a.threads == 0 || !std::has_single_bit(a.threads)) {
    throw Error(Errc::InvalidWorkerCount, "--threads must be a power of two");
  }
  const auto mode = parse_external_mode(a.mode);
  if (a.mem_log2 < 1) throw Error(Errc::BadArguments, "--mem-log2 must be >= 1");
  const std::uint64_t block_bytes =
      a.io_block.empty() ? default_io_block_bytes(a.mem_log2) : parse_byte_size(a.io_block);
  if (a.force) parse_kind(a.kind);

  // Validate the plan against the sidecar before anything is written.
  int n = 0;
  if (fs::exists(sidecar_path(a.in))) {
    n = read_meta(a.in).log2_dim;
  } else if (a.force && fs::exists(a.in)) {
    const auto bytes = fs::file_size(a.in);
    if (bytes % 8 != 0 || !std::has_single_bit(bytes / 8)) {
      throw Error(Errc::SizeMismatch, "raw file size is not 8 * 2^n bytes");
    }
    n = std::countr_zero(bytes / 8);
  }
  const auto plan = plan_external(n, a.mem_log2, mode, block_bytes);

  fs::path target = a.in;
  if (!a.out.empty()) {
    if (a.resume) throw Error(Errc::BadArguments, "--resume works in place; drop --out");
    { auto probe = open_dataset(a.in, a.force, a.kind, {.read_only = true}); }
    copy_dataset(a.in, a.out);
    target = a.out;
  }
  auto ds = open_dataset(target, a.force, a.kind, {.direct_io = a.direct});
  if (!ds.direct_io_warning().empty() && !g.quiet) err << "warning: " << ds.direct_io_warning() << '\n';
  if (ds.log2_dim() != plan.log2_dim) throw Error(Errc::SizeMismatch, "dataset changed size");

  ExternalOptions opts;
  opts.resume = a.resume;
  opts.journal = !a.no_journal;
  opts.sync_journal = a.sync_journal;
  opts.threads = a.threads;
  const auto rep = run_external(ds, plan, opts);

  std::uint64_t bytes_read = 0, bytes_written = 0;
  for (const auto& s : rep.per_pass) {
    bytes_read += s.bytes_read;
    bytes_written += s.bytes_written;
  }
  Reporter r(g, "transform ext", out);
  r.doc()["path"] = target.string();
  r.doc()["log2_dim"] = plan.log2_dim;
  r.doc()["mem_log2"] = plan.mem_log2;
  r.doc()["mode"] = to_string(plan.mode);
  r.doc()["io_block_bytes"] = plan.io_block_elems * 8;
  r.doc()["passes_planned"] = rep.passes_planned;
  r.doc()["first_pass_run"] = rep.first_pass_run;
  r.doc()["passes_run"] = rep.passes_run;
  r.doc()["replayed_journal"] = rep.replayed_journal;
  r.doc()["bytes_read"] = bytes_read;
  r.doc()["bytes_written"] = bytes_written;
  r.text() << "transformed " << target.string() << " out of core: n = " << plan.log2_dim
           << ", B = " << plan.mem_log2 << ", mode " << to_string(plan.mode) << ", S = "
           << plan.io_block_elems * 8 << " bytes\n"
           << "passes: " << rep.passes_run << " run of " << rep.passes_planned << " planned";
  if (rep.first_pass_run > 0) r.text() << " (resumed at pass " << rep.first_pass_run << ")";
  if (rep.replayed_journal) r.text() << ", journal replayed";
  r.text() << "\nbytes read " << bytes_read << ", written " << bytes_written << '\n';
  r.finish();
  return kOk;
}

// ---- oracle ----------------------------------------------------------------

struct OracleArgs {
  std::string in;
  std::string out;
  int limit = kDefaultOracleLimit;
  bool force = false;
  std::string kind = "int64";
};

int cmd_oracle(const OracleArgs& a, const Globals& g, std::ostream& out) {
  if (a.limit < 0 || a.limit > 30) throw Error(Errc::BadArguments, "--limit must be in [0, 30]");
  if (a.force) parse_kind(a.kind);
  require_absent(a.out);
  auto ds = open_dataset(a.in, a.force, a.kind, {.read_only = true});
  if (ds.log2_dim() > a.limit) {
    throw Error(Errc::OracleTooLarge, "n = " + std::to_string(ds.log2_dim()) +
                                          " exceeds the oracle limit " + std::to_string(a.limit));
  }
  auto run = [&]<typename T>(T) {
    auto sig = ds.load<T>();
    if constexpr (std::is_same_v<T, std::int64_t>) {
      if (ds.meta().magnitude_bound) sig.register_bound(*ds.meta().magnitude_bound);
    }
    save_signal(a.out, wht_bruteforce(sig, a.limit));
  };
  if (ds.kind() == ElementKind::Int64) {
    run(std::int64_t{});
  } else {
    run(double{});
  }
  Reporter r(g, "oracle", out);
  r.doc()["in"] = a.in;
  r.doc()["out"] = a.out;
  r.doc()["log2_dim"] = ds.log2_dim();
  r.text() << "wrote brute-force transform of " << a.in << " to " << a.out << '\n';
  r.finish();
  return kOk;
}

// ---- extract ---------------------------------------------------------------

struct ExtractArgs {
  std::string in;
  double threshold = -1;
  std::string out;
};

int cmd_extract(const ExtractArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  if (!(a.threshold >= 0)) throw Error(Errc::BadArguments, "--threshold must be >= 0");
  if (!a.out.empty() && fs::exists(a.out)) throw Error(Errc::PathExists, a.out);
  auto ds = open_dataset(a.in, false, "", {.read_only = true});
  if (ds.domain() != Domain::Walsh) {
    throw Error(Errc::BadMetadata, a.in + " is in the time domain; transform it first");
  }

  std::ostringstream csv;
  json rows = json::array();
  std::size_t count = 0;
  auto emit = [&]<typename T>(T) {
    const auto coeffs = extract_above<T>(ds, a.threshold);
    count = coeffs.size();
    csv << "index,coefficient\n";
    for (const auto& c : coeffs) {
      if constexpr (std::is_same_v<T, std::int64_t>) {
        csv << c.index << ',' << c.value << '\n';
      } else {
        csv << c.index << ',' << full(c.value) << '\n';
      }
      rows.push_back({{"index", c.index}, {"coefficient", c.value}});
    }
  };
  if (ds.kind() == ElementKind::Int64) {
    emit(std::int64_t{});
  } else {
    emit(double{});
  }

  Reporter r(g, "extract", out);
  r.doc()["in"] = a.in;
  r.doc()["threshold"] = a.threshold;
  r.doc()["count"] = count;
  r.doc()["coefficients"] = rows;
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    f << csv.str();
    if (!f) throw Error(Errc::IoFailure, "cannot write " + a.out);
    r.text() << count << " coefficients with |y| >= " << a.threshold << " written to " << a.out
             << '\n';
  } else if (!g.json) {
    out << csv.str();
    if (!g.quiet) err << count << " coefficients with |y| >= " << a.threshold << '\n';
  }
  r.finish();
  return kOk;
}

// ---- snr -------------------------------------------------------------------

struct SnrArgs {
  std::string in;
  double sigma = -1;
};

int cmd_snr(const SnrArgs& a, const Globals& g, std::ostream& out) {
  if (!(a.sigma >= 0)) throw Error(Errc::BadArguments, "--sigma must be >= 0");
  auto ds = open_dataset(a.in, false, "", {.read_only = true});
  if (ds.domain() != Domain::Time) throw Error(Errc::BadMetadata, "snr expects a time-domain signal");
  std::vector<double> x(ds.size());
  if (ds.kind() == ElementKind::Int64) {
    auto v = ds.read_block<std::int64_t>({0, ds.size()});
    for (std::size_t i = 0; i < v.size(); ++i) x[i] = static_cast<double>(v[i]);
  } else {
    ds.read_into<double>(0, x);
  }
  const auto rep = snr(std::span<const double>(x), a.sigma);

  Reporter r(g, "snr", out);
  r.doc()["in"] = a.in;
  r.doc()["log2_dim"] = ds.log2_dim();
  r.doc()["sigma"] = a.sigma;
  r.doc()["infinite"] = rep.infinite;
  r.doc()["snr_linear"] = rep.infinite ? json(nullptr) : json(rep.snr_linear);
  r.doc()["snr_db"] = rep.infinite ? json(nullptr) : json(rep.snr_db);
  r.doc()["signal_energy"] = rep.signal_energy;
  r.doc()["noise_walsh_variance"] = rep.noise_walsh_variance;
  r.doc()["threshold_db_natural"] = rep.threshold_db_natural;
  r.doc()["threshold_db_log2"] = rep.threshold_db_log2;
  r.doc()["above_threshold"] = rep.above_threshold;
  if (rep.infinite) {
    r.text() << "snr: infinite (sigma = 0)\n";
  } else {
    r.text() << "snr: " << full(rep.snr_linear) << " (" << fixed(rep.snr_db, 4) << " dB)\n";
  }
  r.text() << "signal energy " << full(rep.signal_energy) << ", noise Walsh variance "
           << full(rep.noise_walsh_variance) << '\n'
           << "threshold " << fixed(rep.threshold_db_natural, 4) << " dB (natural log), "
           << fixed(rep.threshold_db_log2, 4) << " dB (log base 2): "
           << (rep.above_threshold ? "above" : "below") << '\n';
  r.finish();
  return kOk;
}

// ---- plan ------------------------------------------------------------------

struct PlanArgs {
  int n = -1;
  int b = -1;
  std::optional<double> tcp;
  std::optional<double> tcp_n;
  std::optional<double> tcpu_ref;
  std::optional<int> tcpu_n;
  std::optional<double> io_overhead;
  std::optional<double> flash_factor;
  bool table = false;
  std::optional<int> source_n;
  int machines = 1;
};

json estimate_json(const PerfEstimate& e) {
  return {{"q", e.q},
          {"t_cpu_seconds", e.t_cpu_seconds},
          {"t_io_seconds", e.t_io_seconds},
          {"total_seconds", e.total_seconds}};
}

int cmd_plan(const PlanArgs& a, const Globals& g, std::ostream& out) {
  PerfParams params;
  if (a.tcp) params.t_cp_seconds = *a.tcp;
  if (a.tcp_n) params.unit_log2_dim = *a.tcp_n;
  if (a.tcpu_ref) params.t_cpu_ref_seconds = *a.tcpu_ref;
  if (a.tcpu_n) params.n_ref = *a.tcpu_n;
  if (a.io_overhead) params.io_overhead = *a.io_overhead;
  if (a.flash_factor) params.flash_factor = *a.flash_factor;
  params.validate();
  const auto est = estimate(params, a.n, a.b);

  Reporter r(g, "plan", out);
  r.doc()["log2_dim"] = a.n;
  r.doc()["mem_log2"] = a.b;
  r.doc()["params"] = {{"t_cpu_ref_seconds", params.t_cpu_ref_seconds},
                       {"n_ref", params.n_ref},
                       {"t_cp_seconds", params.t_cp_seconds},
                       {"unit_log2_dim", params.unit_log2_dim},
                       {"io_overhead", params.io_overhead},
                       {"flash_factor", params.flash_factor}};
  r.doc()["estimate"] = estimate_json(est);
  r.text() << "n = " << a.n << ", B = " << a.b << ": q = " << est.q << " passes\n"
           << "T_cpu " << fixed(est.t_cpu_seconds, 1) << " s, T_io " << fixed(est.t_io_seconds, 1)
           << " s, total " << fixed(est.total_seconds, 1) << " s ("
           << fixed(est.total_seconds / 3600.0, 2) << " h, "
           << fixed(est.total_seconds / 86400.0, 2) << " days)\n";

  if (a.table) {
    json rows = json::array();
    r.text() << "n,hours\n";
    for (const auto& [n, e] : estimate_table(params, 32, 40, a.b)) {
      rows.push_back({{"log2_dim", n}, {"hours", e.total_seconds / 3600.0}, {"estimate", estimate_json(e)}});
      r.text() << n << ',' << fixed(e.total_seconds / 3600.0, 2) << '\n';
    }
    r.doc()["table"] = rows;
  }
  if (a.source_n) {
    const auto d = estimate_distributed(params, *a.source_n, a.n, a.b, a.machines);
    r.doc()["distributed"] = {{"source_log2_dim", *a.source_n},
                              {"machines", a.machines},
                              {"fold_cpu_seconds", d.fold_cpu_seconds},
                              {"reduced", estimate_json(d.reduced)},
                              {"per_machine_seconds", d.per_machine_seconds},
                              {"expected_coverage", d.expected_coverage}};
    r.text() << "fold 2^" << *a.source_n << " -> 2^" << a.n << " on " << a.machines
             << " machines: " << fixed(d.per_machine_seconds, 0) << " s per machine ("
             << fixed(d.per_machine_seconds / 86400.0, 2) << " days), expected coverage "
             << fixed(d.expected_coverage, 4) << '\n';
  }
  r.finish();
  return kOk;
}

// ---- iobench ---------------------------------------------------------------

struct IoBenchArgs {
  std::string dir;
  double file_gb = 0;
  std::string blocks;
  bool direct = false;
  std::string csv;
};

int cmd_iobench(const IoBenchArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  if (!(a.file_gb > 0)) throw Error(Errc::BadArguments, "--file-gb must be > 0");
  const auto file_bytes = static_cast<std::uint64_t>(std::llround(std::ldexp(a.file_gb, 30)));
  if (file_bytes < 4096) throw Error(Errc::BadArguments, "--file-gb is too small");
  const auto blocks = a.blocks.empty() ? default_block_sizes() : parse_block_list(a.blocks);
  if (!a.csv.empty() && fs::exists(a.csv)) throw Error(Errc::PathExists, a.csv);
  if (!fs::is_directory(a.dir)) throw Error(Errc::IoFailure, "not a directory: " + a.dir);

  const auto rep = sweep(a.dir, file_bytes, blocks, a.direct);

  Reporter r(g, "iobench", out);
  r.doc()["file_bytes"] = rep.file_bytes;
  r.doc()["direct_io"] = rep.direct_io;
  json rows = json::array();
  for (const auto& row : rep.rows) {
    json j = {{"block_bytes", row.block_bytes},
              {"transfer_bytes", row.transfer_bytes},
              {"transfers", row.transfers},
              {"seconds", row.copy_seconds},
              {"mbps", row.mbps},
              {"read_seconds", row.read_seconds},
              {"write_seconds", row.write_seconds},
              {"read_mbps", row.read_mbps},
              {"write_mbps", row.write_mbps},
              {"capped", row.capped},
              {"verified", row.verified},
              {"direct_io", row.direct_io}};
    if (!row.warning.empty()) j["warning"] = row.warning;
    if (!row.error.empty()) j["error"] = row.error;
    rows.push_back(j);
    if (!row.ok() && !g.quiet) err << "block " << row.block_bytes << ": " << row.error << '\n';
  }
  r.doc()["rows"] = rows;
  r.doc()["annotation"] = rep.annotation;
  r.doc()["arithmetic_consistent"] = rep.arithmetic_consistent();

  if (!a.csv.empty()) {
    std::ofstream f(a.csv);
    f << rep.to_csv();
    if (!f) throw Error(Errc::IoFailure, "cannot write " + a.csv);
    r.text() << rep.to_table();
  } else if (!g.json) {
    out << rep.to_csv();
    if (!g.quiet) err << rep.to_table();
  }
  r.finish();
  bool any_ok = false;
  for (const auto& row : rep.rows) any_ok = any_ok || row.ok();
  return any_ok ? kOk : kIo;
}

// ---- fold ------------------------------------------------------------------

struct FoldArgs {
  std::string in;
  std::string matrix;
  std::string out;
  int dout = -1;
  std::string save_matrix;
  bool force = false;
  std::string kind = "int64";
};

int cmd_fold(const FoldArgs& a, const Globals& g, std::ostream& out) {
  if (a.matrix.empty() == (a.dout < 0)) {
    throw Error(Errc::BadArguments, "give exactly one of --matrix or --dout");
  }
  if (a.force) parse_kind(a.kind);
  require_absent(a.out);
  if (!a.save_matrix.empty() && fs::exists(a.save_matrix)) throw Error(Errc::PathExists, a.save_matrix);

  std::optional<LinearMap> map;
  if (!a.matrix.empty()) map = load_matrix(a.matrix);
  auto ds = open_dataset(a.in, a.force, a.kind, {.read_only = true});
  if (!map) map = random_full_rank(ds.log2_dim(), a.dout, g.seed);
  auto folded = fold_dataset(ds, *map, a.out);
  if (!a.save_matrix.empty()) wht::save_matrix(*map, a.save_matrix);

  Reporter r(g, "fold", out);
  r.doc()["in"] = a.in;
  r.doc()["out"] = a.out;
  r.doc()["d_in"] = map->d_in();
  r.doc()["d_out"] = map->d_out();
  r.doc()["matrix"] = format_matrix(*map);
  r.text() << "folded " << a.in << " (2^" << map->d_in() << ") to " << a.out << " (2^"
           << map->d_out() << ")\n";
  r.finish();
  return kOk;
}

// ---- coverage --------------------------------------------------------------

struct CoverageArgs {
  int din = -1;
  int dout = -1;
  int machines = 1;
  int trials = 20;
  std::uint64_t samples = 0;
  std::string csv;
};

int cmd_coverage(const CoverageArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  if (!a.csv.empty() && fs::exists(a.csv)) throw Error(Errc::PathExists, a.csv);
  const auto res = coverage_simulate(a.din, a.dout, a.machines, a.trials, g.seed, a.samples);

  std::ostringstream csv;
  csv << "trial,coverage\n";
  for (std::size_t t = 0; t < res.per_trial.size(); ++t) csv << t << ',' << full(res.per_trial[t]) << '\n';

  Reporter r(g, "coverage", out);
  r.doc()["d_in"] = a.din;
  r.doc()["d_out"] = a.dout;
  r.doc()["machines"] = a.machines;
  r.doc()["trials"] = a.trials;
  r.doc()["seed"] = g.seed;
  r.doc()["sampled"] = res.sampled;
  r.doc()["per_trial"] = res.per_trial;
  r.doc()["mean"] = res.mean;
  r.doc()["model"] = res.model;
  std::ostringstream summary;
  summary << "mean coverage " << fixed(res.mean, 6) << " over " << a.trials << " trials, model "
          << fixed(res.model, 6) << (res.sampled ? " (sampled)" : "") << '\n';
  if (!a.csv.empty()) {
    std::ofstream f(a.csv);
    f << csv.str();
    if (!f) throw Error(Errc::IoFailure, "cannot write " + a.csv);
    r.text() << summary.str();
  } else if (!g.json) {
    out << csv.str();
    if (!g.quiet) err << summary.str();
  }
  r.finish();
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exact Walsh-Hadamard transforms of in-memory and on-disk signals", "wht"};
  app.fallthrough();
  app.require_subcommand(1);

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_flag("--quiet", g.quiet, "Suppress human-readable summaries");
  app.add_flag("--json", g.json, "Print results as one JSON document");

  GenArgs gen_a;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a sparse Walsh spectrum plus noise");
  gen_cmd->add_option("--n", gen_a.n, "log2 of the dimension")->required()->check(CLI::Range(0, 40));
  gen_cmd->add_option("--support", gen_a.support, "Planted coefficients idx:amp,...");
  gen_cmd->add_option("--noise", gen_a.noise, "none, uniform, gaussian or rademacher");
  gen_cmd->add_option("--sigma", gen_a.sigma, "Noise standard deviation per sample");
  gen_cmd->add_option("--out", gen_a.out, "Output dataset")->required();
  gen_cmd->add_option("--clean-out", gen_a.clean_out, "Also write the noise-free signal");
  gen_cmd->add_option("--kind", gen_a.kind, "auto, int64 or float64");

  TransformArgs tr_a;
  auto* tr_cmd = app.add_subcommand("transform", "Transform a dataset in place");
  tr_cmd->require_subcommand(1);
  auto add_common = [&](CLI::App* c) {
    c->add_option("--in", tr_a.in, "Dataset to transform")->required();
    c->add_option("--out", tr_a.out, "Transform a copy written here instead");
    c->add_option("--threads", tr_a.threads, "Worker threads (power of two)");
    c->add_flag("--force", tr_a.force, "Adopt a raw file without a sidecar");
    c->add_option("--kind", tr_a.kind, "Element kind assumed with --force");
  };
  auto* mem_cmd = tr_cmd->add_subcommand("mem", "Whole dataset in memory");
  add_common(mem_cmd);
  auto* ext_cmd = tr_cmd->add_subcommand("ext", "Out of core with at most 2^B elements in memory");
  add_common(ext_cmd);
  ext_cmd->add_option("--mem-log2", tr_a.mem_log2, "B")->required();
  ext_cmd->add_option("--mode", tr_a.mode, "entrywise or blocked");
  ext_cmd->add_option("--io-block-bytes", tr_a.io_block, "Blocked-mode transfer size (e.g. 4096, 2M)");
  ext_cmd->add_flag("--resume", tr_a.resume, "Finish an interrupted run");
  ext_cmd->add_flag("--no-journal", tr_a.no_journal, "Skip the per-unit journal");
  ext_cmd->add_flag("--sync-journal", tr_a.sync_journal, "Flush the journal before each unit");
  ext_cmd->add_flag("--direct", tr_a.direct, "Use direct I/O where possible");

  OracleArgs or_a;
  auto* or_cmd = app.add_subcommand("oracle", "Brute-force transform of a small dataset");
  or_cmd->add_option("--in", or_a.in)->required();
  or_cmd->add_option("--out", or_a.out)->required();
  or_cmd->add_option("--limit", or_a.limit, "Largest n accepted");
  or_cmd->add_flag("--force", or_a.force, "Adopt a raw file without a sidecar");
  or_cmd->add_option("--kind", or_a.kind, "Element kind assumed with --force");

  ExtractArgs ex_a;
  auto* ex_cmd = app.add_subcommand("extract", "List Walsh coefficients above a threshold");
  ex_cmd->add_option("--in", ex_a.in)->required();
  ex_cmd->add_option("--threshold", ex_a.threshold, "Keep |y| >= threshold")->required();
  ex_cmd->add_option("--out", ex_a.out, "CSV file (index,coefficient)");

  SnrArgs snr_a;
  auto* snr_cmd = app.add_subcommand("snr", "SNR of a clean signal under white noise");
  snr_cmd->add_option("--in", snr_a.in, "Clean time-domain dataset")->required();
  snr_cmd->add_option("--sigma", snr_a.sigma, "Noise standard deviation per sample")->required();

  PlanArgs pl_a;
  auto* pl_cmd = app.add_subcommand("plan", "Predict out-of-core runtime");
  pl_cmd->add_option("--n", pl_a.n)->required()->check(CLI::Range(1, 62));
  pl_cmd->add_option("--b", pl_a.b, "log2 of elements held in memory")->required()->check(CLI::Range(1, 62));
  pl_cmd->add_option("--tcp", pl_a.tcp, "Seconds to copy the reference dataset");
  pl_cmd->add_option("--tcp-n", pl_a.tcp_n, "log2 elements of the reference dataset");
  pl_cmd->add_option("--tcpu-ref", pl_a.tcpu_ref, "Seconds for an in-memory WHT at --tcpu-n");
  pl_cmd->add_option("--tcpu-n", pl_a.tcpu_n);
  pl_cmd->add_option("--io-overhead", pl_a.io_overhead, "Measured / copy time per pass");
  pl_cmd->add_option("--flash-factor", pl_a.flash_factor, "Copy-time multiplier");
  pl_cmd->add_flag("--table", pl_a.table, "Hours for n = 32..40");
  pl_cmd->add_option("--source-n", pl_a.source_n, "Fold from 2^source-n down to 2^n first");
  pl_cmd->add_option("--machines", pl_a.machines, "Machines folding independently")->check(CLI::PositiveNumber);

  IoBenchArgs io_a;
  auto* io_cmd = app.add_subcommand("iobench", "Copy-time sweep over block sizes");
  io_cmd->add_option("--dir", io_a.dir, "Scratch directory")->required();
  io_cmd->add_option("--file-gb", io_a.file_gb, "Scratch file size in GiB")->required();
  io_cmd->add_option("--blocks", io_a.blocks, "Block sizes, e.g. 2M,8M,32M");
  io_cmd->add_flag("--direct", io_a.direct, "Bypass the page cache");
  io_cmd->add_option("--csv", io_a.csv, "CSV file (block_bytes,seconds,mbps)");

  FoldArgs fo_a;
  auto* fo_cmd = app.add_subcommand("fold", "Fold a dataset through a GF(2) linear map");
  fo_cmd->add_option("--in", fo_a.in)->required();
  fo_cmd->add_option("--matrix", fo_a.matrix, "Matrix file, one row of 0/1 per line");
  fo_cmd->add_option("--dout", fo_a.dout, "Draw a random full-rank map to 2^dout instead");
  fo_cmd->add_option("--save-matrix", fo_a.save_matrix, "Write the map used here");
  fo_cmd->add_option("--out", fo_a.out)->required();
  fo_cmd->add_flag("--force", fo_a.force, "Adopt a raw file without a sidecar");
  fo_cmd->add_option("--kind", fo_a.kind, "Element kind assumed with --force");

  CoverageArgs co_a;
  auto* co_cmd = app.add_subcommand("coverage", "Simulate coverage of random subspaces");
  co_cmd->add_option("--din", co_a.din)->required();
  co_cmd->add_option("--dout", co_a.dout)->required();
  co_cmd->add_option("--machines", co_a.machines)->check(CLI::PositiveNumber);
  co_cmd->add_option("--trials", co_a.trials)->check(CLI::PositiveNumber);
  co_cmd->add_option("--samples", co_a.samples, "Sample this many indices instead of enumerating");
  co_cmd->add_option("--csv", co_a.csv, "CSV file (trial,coverage)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    // Help of the deepest subcommand that was selected.
    const CLI::App* sub = &app;
    for (bool descended = true; descended;) {
      descended = false;
      for (const auto* s : sub->get_subcommands()) {
        sub = s;
        descended = true;
        break;
      }
    }
    err << sub->help();
    return kUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen_a, g, out);
    if (*mem_cmd) return cmd_transform_mem(tr_a, g, out);
    if (*ext_cmd) return cmd_transform_ext(tr_a, g, out, err);
    if (*or_cmd) return cmd_oracle(or_a, g, out);
    if (*ex_cmd) return cmd_extract(ex_a, g, out, err);
    if (*snr_cmd) return cmd_snr(snr_a, g, out);
    if (*pl_cmd) return cmd_plan(pl_a, g, out);
    if (*io_cmd) return cmd_iobench(io_a, g, out, err);
    if (*fo_cmd) return cmd_fold(fo_a, g, out);
    if (*co_cmd) return cmd_coverage(co_a, g, out, err);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: IoFailure: " << e.what() << '\n';
    return kIo;
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return kIo;
  }
  err << app.help();
  return kUsage;
}

}  // namespace wht::cli
