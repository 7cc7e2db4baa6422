#include "resotube/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "json.hpp"
#include "resotube/errors.hpp"

namespace resotube::io {

namespace {

void throw_io(const std::filesystem::path& path, const char* what) {
  throw ConfigError(path.string() + ": " + what);
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  std::ofstream os(path, mode | std::ios::trunc);
  if (!os) throw_io(path, "cannot open for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  std::ifstream is(path, mode);
  if (!is) throw_io(path, "cannot open for reading");
  return is;
}

double parse_cell(std::string_view cell, const std::filesystem::path& path) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || end != cell.data() + cell.size())
    throw ConfigError(path.string() + ": bad numeric cell '" + std::string(cell) + "'");
  return v;
}

void write_u64_le(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = char((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

std::uint64_t read_u64_le(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf[i]) << (8 * i);
  return v;
}

void write_f64_block(std::ostream& os, std::span<const double> vals) {
  for (double v : vals) write_u64_le(os, std::bit_cast<std::uint64_t>(v));
}

void read_f64_block(std::istream& is, std::span<double> vals) {
  for (double& v : vals) v = std::bit_cast<double>(read_u64_le(is));
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  // shortest precision that round-trips; 17 always does
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v || (v != v && back != back)) break;
  }
  return buf;
}

void write_csv(const std::filesystem::path& path, const Csv& table) {
  if (table.header.size() != table.columns.size())
    throw std::invalid_argument("csv: header/column count mismatch");
  const std::size_t rows = table.columns.empty() ? 0 : table.columns.front().size();
  for (const auto& col : table.columns)
    if (col.size() != rows) throw std::invalid_argument("csv: ragged columns");

  auto os = open_out(path);
  for (std::size_t c = 0; c < table.header.size(); ++c)
    os << (c ? "," : "") << table.header[c];
  os << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < table.columns.size(); ++c)
      os << (c ? "," : "") << format_double(table.columns[c][r]);
    os << '\n';
  }
  if (!os) throw_io(path, "write failed");
}

Csv read_csv(const std::filesystem::path& path) {
  auto is = open_in(path);
  Csv table;
  std::string line;
  if (!std::getline(is, line)) throw_io(path, "empty csv");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) table.header.push_back(cell);
  table.columns.resize(table.header.size());

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t c = 0, pos = 0;
    while (pos <= line.size()) {
      const std::size_t next = std::min(line.find(',', pos), line.size());
      if (c >= table.columns.size()) throw_io(path, "row wider than header");
      table.columns[c++].push_back(parse_cell({line.data() + pos, next - pos}, path));
      pos = next + 1;
    }
    if (c != table.columns.size()) throw_io(path, "row narrower than header");
  }
  return table;
}

void write_waveform_csv(const std::filesystem::path& path, const excitation::PeriodicWaveform& w,
                        const std::string& value_name) {
  Csv table;
  table.header = {"t", value_name};
  const std::size_t n = w.size();
  const double dt = w.period() / double(n);
  table.columns.resize(2);
  table.columns[0].reserve(n);
  table.columns[1].assign(w.samples().begin(), w.samples().end());
  for (std::size_t i = 0; i < n; ++i) table.columns[0].push_back(double(i) * dt);
  write_csv(path, table);
}

excitation::PeriodicWaveform read_waveform_csv(const std::filesystem::path& path, double f0) {
  const Csv table = read_csv(path);
  if (table.columns.size() != 2) throw_io(path, "expected two columns (t, value)");
  if (table.columns[1].empty()) throw_io(path, "no samples");
  return {f0, table.columns[1]};
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  auto os = open_out(path, std::ios::binary);
  os.write(text.data(), std::streamsize(text.size()));
  if (!os) throw_io(path, "write failed");
}

std::string read_text(const std::filesystem::path& path) {
  auto is = open_in(path, std::ios::binary);
  std::ostringstream buf;
  buf << is.rdbuf();
  return std::move(buf).str();
}

void write_field_dump(const std::filesystem::path& path, const fdm::FdmSolution& sol) {
  if (sol.p.size() != sol.nx * sol.nt || sol.U.size() != sol.nx * sol.nt)
    throw std::invalid_argument("field dump: inconsistent solution sizes");
  auto os = open_out(path, std::ios::binary);
  write_u64_le(os, sol.nx);
  write_u64_le(os, sol.nt);
  write_u64_le(os, std::bit_cast<std::uint64_t>(sol.dx));
  write_u64_le(os, std::bit_cast<std::uint64_t>(sol.dt));
  write_f64_block(os, sol.p);
  write_f64_block(os, sol.U);
  if (!os) throw_io(path, "write failed");
}

FieldDump read_field_dump(const std::filesystem::path& path) {
  auto is = open_in(path, std::ios::binary);
  FieldDump d;
  d.nx = read_u64_le(is);
  d.nt = read_u64_le(is);
  d.dx = std::bit_cast<double>(read_u64_le(is));
  d.dt = std::bit_cast<double>(read_u64_le(is));
  if (!is || d.nx == 0 || d.nt == 0 || d.nx > (1u << 20) || d.nt > (1u << 26))
    throw_io(path, "bad field dump header");
  d.p.resize(d.nx * d.nt);
  d.U.resize(d.nx * d.nt);
  read_f64_block(is, d.p);
  read_f64_block(is, d.U);
  if (!is) throw_io(path, "truncated field dump");
  return d;
}

void write_manifest(const std::filesystem::path& dir, std::uint64_t seed,
                    std::span<const std::string> file_names) {
  std::vector<std::string> names(file_names.begin(), file_names.end());
  std::sort(names.begin(), names.end());
  nlohmann::json files = nlohmann::json::array();
  for (const auto& name : names) {
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(dir / name, ec);
    if (ec) throw_io(dir / name, "listed in manifest but unreadable");
    files.push_back({{"name", name}, {"bytes", bytes}});
  }
  const nlohmann::json manifest = {
      {"tool_version", kToolVersion}, {"seed", seed}, {"files", files}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace resotube::io
