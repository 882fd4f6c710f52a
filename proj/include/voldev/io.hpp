#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "voldev/error.hpp"
#include "voldev/grid.hpp"
#include "voldev/sve_sim.hpp"

namespace voldev {

static_assert(std::endian::native == std::endian::little, "binary output assumes a little-endian host");

// Shortest representation that reads back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 32> buf;
  auto r = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), r.ptr);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Provenance lines written at the top of every output file.
struct OutputHeader {
  std::string command;
  std::uint64_t config_hash = 0;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::vector<std::pair<std::string, std::string>> extra;

  std::vector<std::pair<std::string, std::string>> fields() const {
    std::vector<std::pair<std::string, std::string>> f{{"command", command}, {"config_hash", hex64(config_hash)}};
    if (seed) f.emplace_back("seed", std::to_string(*seed));
    f.insert(f.end(), extra.begin(), extra.end());
    if (!deterministic) f.emplace_back("created", utc_timestamp());
    return f;
  }
};

inline std::ofstream open_output(const std::string& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw Error(ErrorCode::domain_error, "cannot open " + path + " for writing");
  return os;
}

// RFC 4180 rows with CRLF line ends, preceded by '#' comment lines.
class CsvWriter {
 public:
  CsvWriter(std::ostream& os, const OutputHeader& h, const std::vector<std::string>& columns) : os_(os) {
    for (const auto& [k, v] : h.fields()) os_ << "# " << k << ": " << v << "\r\n";
    row(columns);
  }

  void comment(const std::string& key, const std::string& value) { os_ << "# " << key << ": " << value << "\r\n"; }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os_ << ',';
      os_ << quote(cells[i]);
    }
    os_ << "\r\n";
  }

  void row(const std::vector<double>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (double x : cells) s.push_back(format_double(x));
    row(s);
  }

  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + '"';
  }

 private:
  std::ostream& os_;
};

// Binary path dump: 32-byte header then little-endian f64 values laid out
// [path][node][component], followed by one log weight per path.
//   bytes 0-3   magic "VDP1"
//   bytes 4-7   u32 state dimension
//   bytes 8-11  u32 number of paths
//   bytes 12-15 u32 number of nodes
//   bytes 16-23 u64 config hash
//   bytes 24-31 u64 seed
inline constexpr char kBinaryMagic[4] = {'V', 'D', 'P', '1'};

inline void write_binary(std::ostream& os, const PathEnsemble& e, std::uint64_t config_hash) {
  const auto check = [](std::size_t v) {
    if (v > 0xffffffffull) throw Error(ErrorCode::domain_error, "ensemble too large for the binary format");
    return static_cast<std::uint32_t>(v);
  };
  const std::uint32_t dims[3] = {check(e.dim), check(e.n_paths), check(e.grid.size())};
  const std::uint64_t seed = e.seed;
  os.write(kBinaryMagic, 4);
  os.write(reinterpret_cast<const char*>(dims), sizeof dims);
  os.write(reinterpret_cast<const char*>(&config_hash), 8);
  os.write(reinterpret_cast<const char*>(&seed), 8);
  os.write(reinterpret_cast<const char*>(e.paths.data()), static_cast<std::streamsize>(e.paths.size() * 8));
  // Plain runs carry unit weights.
  const std::vector<double> lw = e.log_weights.empty() ? std::vector<double>(e.n_paths, 0.0) : e.log_weights;
  os.write(reinterpret_cast<const char*>(lw.data()), static_cast<std::streamsize>(lw.size() * 8));
}

struct BinaryDump {
  std::uint32_t dim = 0, n_paths = 0, n_nodes = 0;
  std::uint64_t config_hash = 0, seed = 0;
  std::vector<double> paths, log_weights;
};

inline BinaryDump read_binary(std::istream& is) {
  char magic[4];
  BinaryDump d;
  std::uint32_t dims[3];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kBinaryMagic, 4) != 0) throw Error(ErrorCode::domain_error, "not a path dump");
  is.read(reinterpret_cast<char*>(dims), sizeof dims);
  is.read(reinterpret_cast<char*>(&d.config_hash), 8);
  is.read(reinterpret_cast<char*>(&d.seed), 8);
  d.dim = dims[0];
  d.n_paths = dims[1];
  d.n_nodes = dims[2];
  d.paths.resize(std::size_t{d.dim} * d.n_paths * d.n_nodes);
  d.log_weights.resize(d.n_paths);
  is.read(reinterpret_cast<char*>(d.paths.data()), static_cast<std::streamsize>(d.paths.size() * 8));
  is.read(reinterpret_cast<char*>(d.log_weights.data()), static_cast<std::streamsize>(d.log_weights.size() * 8));
  if (!is) throw Error(ErrorCode::domain_error, "truncated path dump");
  return d;
}

// Numeric CSV with a header row; '#' lines are skipped. Column 0 holds the
// time nodes, the rest become the components of the returned function.
inline GridFunction read_csv_grid_function(std::istream& is) {
  std::string line;
  bool header = true;
  std::vector<double> t, vals;
  std::size_t width = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double x;
      const char* b = cell.data();
      auto r = std::from_chars(b, b + cell.size(), x);
      if (r.ec != std::errc() || r.ptr != b + cell.size())
        throw Error(ErrorCode::domain_error, "bad number '" + cell + "' in path csv");
      cells.push_back(x);
    }
    if (cells.size() < 2) throw Error(ErrorCode::domain_error, "path csv needs t and at least one component");
    if (width == 0) width = cells.size();
    if (cells.size() != width) throw Error(ErrorCode::domain_error, "ragged path csv");
    t.push_back(cells[0]);
    vals.insert(vals.end(), cells.begin() + 1, cells.end());
  }
  if (t.size() < 2) throw Error(ErrorCode::domain_error, "path csv needs at least two rows");
  return GridFunction(TimeGrid::from_nodes(std::move(t)), std::move(vals), width - 1);
}

}  // namespace voldev
