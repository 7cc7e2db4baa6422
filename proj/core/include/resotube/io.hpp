#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "resotube/fdm.hpp"
#include "resotube/waveform.hpp"

namespace resotube::io {

inline constexpr char kToolVersion[] = "resotube 1.0.0";

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

/// Column-oriented numeric table. All columns share one length.
struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
};

void write_csv(const std::filesystem::path& path, const Csv& table);

/// Strict reader for files produced by write_csv (numeric cells only).
Csv read_csv(const std::filesystem::path& path);

/// One-period time series: columns t, <value_name>.
void write_waveform_csv(const std::filesystem::path& path, const excitation::PeriodicWaveform& w,
                        const std::string& value_name);

/// Inverse of write_waveform_csv; needs f0 to rebuild the waveform.
excitation::PeriodicWaveform read_waveform_csv(const std::filesystem::path& path, double f0);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

/// Full space-time field dump, little-endian binary:
///   u64 nx, u64 nt, f64 dx, f64 dt, then nt*nx doubles p, then U
/// (row-major, t = 0 first).
void write_field_dump(const std::filesystem::path& path, const fdm::FdmSolution& sol);

struct FieldDump {
  std::size_t nx = 0, nt = 0;
  double dx = 0, dt = 0;
  std::vector<double> p, U;
};

FieldDump read_field_dump(const std::filesystem::path& path);

/// manifest.json for a run directory: tool version, seed, and the size of
/// every listed file (sorted by name, no timestamps, so reruns are
/// byte-identical). The manifest itself is not listed.
void write_manifest(const std::filesystem::path& dir, std::uint64_t seed,
                    std::span<const std::string> file_names);

}  // namespace resotube::io
