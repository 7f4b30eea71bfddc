#pragma once

// Binary tensor files, estimate manifests and sample import.
//
// Tensor file layout (all integers u32 little-endian):
//   "PSCA" | version | rank | dims[rank] | dtype | payload | crc32(payload)
// with dtype 1 = IEEE-754 binary64 little-endian and the payload in row-major
// order of the declared dims.

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "psca/errors.hpp"
#include "psca/predictor.hpp"
#include "psca/rsep_operator.hpp"
#include "psca/sample_set.hpp"
#include "psca/scd_fit.hpp"
#include "psca/tensor_core.hpp"

namespace psca {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr char kLibraryVersion[] = "0.1.0";
inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint32_t kDtypeF64 = 1;
inline constexpr int kManifestSchemaVersion = 1;
inline constexpr int kSignRuleVersion = 1;
inline constexpr char kTensorExtension[] = ".psca";

/// Decoded tensor file: dims plus the row-major payload.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

inline void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

inline std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + b])) << (8 * b);
  return v;
}

inline double get_f64(const std::string& s, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + b])) << (8 * b);
  return std::bit_cast<double>(v);
}

inline std::uint32_t crc32_of(const char* p, std::size_t n) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = ::crc32(c, reinterpret_cast<const Bytef*>(p), chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace detail

inline std::string encode_tensor(const std::vector<std::uint32_t>& dims, const double* data) {
  if (dims.size() != 2 && dims.size() != 4) throw InvalidArgument("tensor files hold rank 2 or 4");
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  std::string out = "PSCA";
  detail::put_u32(out, kTensorFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) detail::put_u32(out, d);
  detail::put_u32(out, kDtypeF64);
  const std::size_t payload_at = out.size();
  out.reserve(payload_at + 8 * count + 4);
  for (std::size_t i = 0; i < count; ++i) detail::put_f64(out, data[i]);
  detail::put_u32(out, detail::crc32_of(out.data() + payload_at, 8 * count));
  return out;
}

inline Tensor decode_tensor(const std::string& bytes, const std::string& name = "tensor") {
  const auto fail = [&](const std::string& why) { throw FormatError(name + ": " + why); };
  if (bytes.size() < 12 || bytes.compare(0, 4, "PSCA") != 0) fail("bad magic");
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != kTensorFormatVersion) fail("unsupported format version " + std::to_string(version));
  const std::uint32_t rank = detail::get_u32(bytes, 8);
  if (rank != 2 && rank != 4) fail("rank must be 2 or 4");
  const std::size_t header = 12 + 4 * static_cast<std::size_t>(rank) + 4;
  if (bytes.size() < header) fail("truncated header");
  Tensor t;
  std::size_t count = 1;
  for (std::uint32_t r = 0; r < rank; ++r) {
    t.dims.push_back(detail::get_u32(bytes, 12 + 4 * r));
    count *= t.dims.back();
  }
  if (detail::get_u32(bytes, header - 4) != kDtypeF64) fail("unsupported dtype");
  if (bytes.size() != header + 8 * count + 4) fail("payload length does not match dims");
  const std::uint32_t crc = detail::get_u32(bytes, header + 8 * count);
  if (crc != detail::crc32_of(bytes.data() + header, 8 * count)) fail("CRC mismatch");
  t.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) t.data[i] = detail::get_f64(bytes, header + 8 * i);
  return t;
}

inline void write_matrix(const fs::path& path, const Matrix& m) {
  const Vector v = vec_rowmajor(m);
  detail::spit(path, encode_tensor({static_cast<std::uint32_t>(m.rows()),
                                    static_cast<std::uint32_t>(m.cols())},
                                   v.data()));
}

inline Matrix tensor_to_matrix(const Tensor& t, const std::string& name) {
  if (t.dims.size() != 2) throw FormatError(name + ": expected a rank-2 tensor");
  Vector v = Eigen::Map<const Vector>(t.data.data(), static_cast<Index>(t.data.size()));
  return unvec_rowmajor(v, t.dims[0], t.dims[1]);
}

/// Reads a matrix from a tensor file, or from a CSV file (one row per line).
inline Matrix read_matrix(const fs::path& path);

inline void write_cov4(const fs::path& path, const DenseCov4& c) {
  const Index k1 = c.k1(), k2 = c.k2();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(k1 * k2 * k1 * k2));
  for (Index i = 0; i < k1; ++i)
    for (Index j = 0; j < k2; ++j)
      for (Index k = 0; k < k1; ++k)
        for (Index l = 0; l < k2; ++l) data.push_back(c(i, j, k, l));
  const auto u = [](Index x) { return static_cast<std::uint32_t>(x); };
  detail::spit(path, encode_tensor({u(k1), u(k2), u(k1), u(k2)}, data.data()));
}

inline DenseCov4 read_cov4(const fs::path& path) {
  const Tensor t = decode_tensor(detail::slurp(path), path.string());
  if (t.dims.size() != 4 || t.dims[0] != t.dims[2] || t.dims[1] != t.dims[3]) {
    throw FormatError(path.string() + ": expected a k1 x k2 x k1 x k2 tensor");
  }
  const Index k1 = t.dims[0], k2 = t.dims[1];
  Matrix op(k1 * k2, k1 * k2);
  std::size_t at = 0;
  for (Index row = 0; row < k1 * k2; ++row)
    for (Index col = 0; col < k1 * k2; ++col) op(row, col) = t.data[at++];
  try {
    return DenseCov4::from_operator(op, k1, k2);
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// CSV ----------------------------------------------------------------------

inline std::vector<std::vector<std::string>> read_csv_cells(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline Matrix read_csv_matrix(const fs::path& path) {
  const auto rows = read_csv_cells(path);
  if (rows.empty()) throw FormatError(path.string() + ": empty CSV");
  const std::size_t cols = rows.front().size();
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw FormatError(path.string() + ": ragged CSV rows");
    for (std::size_t j = 0; j < cols; ++j) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(rows[i][j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != rows[i][j].size()) {
        throw FormatError(path.string() + ": non-numeric cell '" + rows[i][j] + "'");
      }
      m(static_cast<Index>(i), static_cast<Index>(j)) = v;
    }
  }
  return m;
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) { return json(v).dump(); }

inline void write_csv_matrix(const fs::path& path, const Matrix& m) {
  std::ostringstream out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
  detail::spit(path, out.str());
}

inline bool is_csv(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv";
}

inline Matrix read_matrix(const fs::path& path) {
  if (is_csv(path)) return read_csv_matrix(path);
  return tensor_to_matrix(decode_tensor(detail::slurp(path), path.string()), path.string());
}

// Samples ------------------------------------------------------------------

inline constexpr char kSampleListing[] = "samples.csv";

/// Writes sample_00001.psca, ... plus a samples.csv listing into `dir`.
inline void write_samples(const fs::path& dir, const std::vector<Matrix>& samples) {
  fs::create_directories(dir);
  std::ostringstream listing;
  listing << "file\n";
  for (std::size_t n = 0; n < samples.size(); ++n) {
    std::ostringstream name;
    name << "sample_" << std::setw(5) << std::setfill('0') << n + 1 << kTensorExtension;
    write_matrix(dir / name.str(), samples[n]);
    listing << name.str() << '\n';
  }
  detail::spit(dir / kSampleListing, listing.str());
}

/// Sample matrices from a list of paths. A single directory is read through its
/// samples.csv listing (one file name per line, optional "file" header, names
/// relative to the directory). Files ending in .csv are imported as one matrix
/// each; anything else must be a rank-2 tensor file.
inline std::vector<Matrix> read_sample_matrices(const std::vector<fs::path>& paths) {
  std::vector<fs::path> files;
  if (paths.size() == 1 && fs::is_directory(paths.front())) {
    const fs::path dir = paths.front();
    const fs::path listing = dir / kSampleListing;
    if (!fs::exists(listing)) throw FormatError(dir.string() + ": missing " + kSampleListing);
    const auto rows = read_csv_cells(listing);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].empty() || rows[i][0].empty()) continue;
      if (i == 0 && rows[i][0] == "file") continue;
      files.push_back(dir / rows[i][0]);
    }
  } else {
    files = paths;
  }
  if (files.empty()) throw FormatError("no sample files given");
  std::vector<Matrix> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    out.push_back(read_matrix(f));
    if (out.back().rows() != out.front().rows() || out.back().cols() != out.front().cols()) {
      throw FormatError(f.string() + ": sample dimensions differ from the first sample");
    }
  }
  return out;
}

inline SampleSet read_samples(const std::vector<fs::path>& paths, bool center = true) {
  return SampleSet(read_sample_matrices(paths), center);
}

inline SampleSet read_samples(const fs::path& path, bool center = true) {
  return read_samples(std::vector<fs::path>{path}, center);
}

// Estimates ----------------------------------------------------------------

inline constexpr char kManifestName[] = "manifest.json";

/// UTC timestamp; the epoch when `deterministic` so reruns match byte for byte.
inline std::string timestamp_utc(bool deterministic) {
  if (deterministic) return "1970-01-01T00:00:00Z";
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json diagnostics_json(const FitDiagnostics& d) {
  json j;
  j["iterations_per_component"] = d.iterations_per_component;
  j["final_residual_per_component"] = d.final_residual_per_component;
  j["converged"] = d.converged_flags;
  j["score_gaps"] = d.score_gaps;
  j["score_changes"] = d.score_changes;
  j["warnings"] = d.warnings;
  return j;
}

/// Writes manifest.json and one tensor file per factor into `dir`.
inline void write_estimate(const ScdEstimate& est, const fs::path& dir, double ridge = 0.0,
                           bool deterministic = false) {
  fs::create_directories(dir);
  json m;
  m["format"] = "psca-estimate";
  m["schema_version"] = kManifestSchemaVersion;
  m["library_version"] = kLibraryVersion;
  m["sign_rule_version"] = kSignRuleVersion;
  m["created"] = timestamp_utc(deterministic);
  m["k1"] = est.k1;
  m["k2"] = est.k2;
  m["component_count"] = est.size();
  m["ridge"] = ridge;
  m["scores"] = est.scores();
  json comps = json::array();
  for (std::size_t r = 0; r < est.size(); ++r) {
    std::ostringstream l, rr;
    l << "left_" << std::setw(3) << std::setfill('0') << r + 1 << kTensorExtension;
    rr << "right_" << std::setw(3) << std::setfill('0') << r + 1 << kTensorExtension;
    write_matrix(dir / l.str(), est.components[r].left);
    write_matrix(dir / rr.str(), est.components[r].right);
    comps.push_back({{"score", est.components[r].score}, {"left", l.str()}, {"right", rr.str()}});
  }
  m["components"] = comps;
  m["diagnostics"] = diagnostics_json(est.diagnostics);
  detail::spit(dir / kManifestName, m.dump(2) + "\n");
}

inline void write_estimate(const RSepOperator& op, const fs::path& dir, bool deterministic = false) {
  ScdEstimate est;
  est.k1 = op.k1;
  est.k2 = op.k2;
  est.components = op.components;
  write_estimate(est, dir, op.ridge, deterministic);
}

struct LoadedEstimate {
  ScdEstimate estimate;
  double ridge = 0.0;
};

/// Reads a manifest (or a directory holding manifest.json) and its factor files.
inline LoadedEstimate read_estimate_full(const fs::path& path) {
  const fs::path manifest = fs::is_directory(path) ? path / kManifestName : path;
  const fs::path dir = manifest.parent_path();
  json m;
  try {
    m = json::parse(detail::slurp(manifest));
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  try {
    if (m.at("format").get<std::string>() != "psca-estimate") throw FormatError("not an estimate manifest");
    if (m.at("schema_version").get<int>() != kManifestSchemaVersion) {
      throw FormatError("unsupported manifest schema version");
    }
    LoadedEstimate out;
    out.estimate.k1 = m.at("k1").get<Index>();
    out.estimate.k2 = m.at("k2").get<Index>();
    out.ridge = m.at("ridge").get<double>();
    const auto& comps = m.at("components");
    if (comps.size() != m.at("component_count").get<std::size_t>()) {
      throw FormatError("component_count does not match the component list");
    }
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& c : comps) {
      SepComponent sc;
      sc.score = c.at("score").get<double>();
      if (sc.score > prev) throw FormatError("scores are not non-increasing");
      prev = sc.score;
      sc.left = read_matrix(dir / c.at("left").get<std::string>());
      sc.right = read_matrix(dir / c.at("right").get<std::string>());
      if (sc.left.rows() != out.estimate.k1 || sc.left.cols() != out.estimate.k1 ||
          sc.right.rows() != out.estimate.k2 || sc.right.cols() != out.estimate.k2) {
        throw FormatError("factor dimensions do not match k1, k2");
      }
      out.estimate.components.push_back(std::move(sc));
    }
    if (m.contains("diagnostics")) {
      const auto& d = m["diagnostics"];
      auto& dg = out.estimate.diagnostics;
      dg.iterations_per_component = d.value("iterations_per_component", std::vector<int>{});
      dg.final_residual_per_component = d.value("final_residual_per_component", std::vector<double>{});
      dg.converged_flags = d.value("converged", std::vector<bool>{});
      dg.score_gaps = d.value("score_gaps", std::vector<double>{});
      dg.score_changes = d.value("score_changes", std::vector<double>{});
      dg.warnings = d.value("warnings", std::vector<std::string>{});
    }
    return out;
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
}

inline RSepOperator read_estimate(const fs::path& path) {
  LoadedEstimate le = read_estimate_full(path);
  return RSepOperator(le.estimate.k1, le.estimate.k2, std::move(le.estimate.components), le.ridge);
}

// Missing patterns ---------------------------------------------------------

/// JSON pattern file: {"kind": "rowcol", "missing_rows": [...], "missing_cols": [...]}
/// or {"kind": "mask", "observed": [[1, 0, ...], ...]} with 1 = observed.
inline MissingPattern read_pattern(const fs::path& path) {
  try {
    const json j = json::parse(detail::slurp(path));
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "rowcol") {
      return MissingPattern::row_col(j.value("missing_rows", std::vector<Index>{}),
                                     j.value("missing_cols", std::vector<Index>{}));
    }
    if (kind == "mask") {
      const auto rows = j.at("observed").get<std::vector<std::vector<int>>>();
      if (rows.empty()) throw FormatError("empty mask");
      Mask m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size()) throw FormatError("ragged mask");
        for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k] != 0;
      }
      return MissingPattern::arbitrary(std::move(m));
    }
    throw FormatError("unknown pattern kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_pattern(const fs::path& path, const MissingPattern& p) {
  json j;
  if (p.kind == MissingPattern::Kind::kRowCol) {
    j["kind"] = "rowcol";
    j["missing_rows"] = p.missing_rows;
    j["missing_cols"] = p.missing_cols;
  } else {
    j["kind"] = "mask";
    json rows = json::array();
    for (Index i = 0; i < p.mask.rows(); ++i) {
      std::vector<int> r;
      for (Index k = 0; k < p.mask.cols(); ++k) r.push_back(p.mask(i, k) ? 1 : 0);
      rows.push_back(r);
    }
    j["observed"] = rows;
  }
  detail::spit(path, j.dump(2) + "\n");
}

}  // namespace psca
