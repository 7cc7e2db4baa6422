#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "resotube/errors.hpp"
#include "resotube/io.hpp"

using namespace resotube;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("format_double is shortest and round-trips exactly") {
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(0.25) == "0.25");
  CHECK(io::format_double(-2.0) == "-2");
  CHECK(io::format_double(0.0) == "0");

  for (double v : {1.0 / 3.0, 3.8226e-3, 7.29e-5, 1.6384e3, 1e300, -4.9e-324,
                   0.1 + 0.2, 261.6}) {
    const std::string s = io::format_double(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);  // stod raises on subnormals
  }
}

TEST_CASE("csv writes and reads back bit-identical columns") {
  TempDir dir("resotube_io_csv");
  const fs::path path = dir.path / "table.csv";

  io::Csv t;
  t.header = {"t", "p"};
  t.columns = {{0.0, 1.0 / 3.0, 2e-300}, {-1.5, 7.29e-5, 0.1 + 0.2}};
  io::write_csv(path, t);

  const io::Csv back = io::read_csv(path);
  REQUIRE(back.header == t.header);
  REQUIRE(back.columns.size() == 2);
  for (std::size_t c = 0; c < 2; ++c) {
    REQUIRE(back.columns[c].size() == 3);
    for (std::size_t r = 0; r < 3; ++r) CHECK(back.columns[c][r] == t.columns[c][r]);
  }
}

TEST_CASE("csv rejects malformed tables and files") {
  TempDir dir("resotube_io_csv_bad");
  const fs::path path = dir.path / "bad.csv";

  io::Csv ragged;
  ragged.header = {"a", "b"};
  ragged.columns = {{1.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(io::write_csv(path, ragged), std::invalid_argument);

  io::Csv mismatched;
  mismatched.header = {"a"};
  mismatched.columns = {{1.0}, {2.0}};
  CHECK_THROWS_AS(io::write_csv(path, mismatched), std::invalid_argument);

  io::write_text(path, "a,b\n1.0,2.0,3.0\n");
  CHECK_THROWS_AS(io::read_csv(path), ConfigError);  // row wider than header
  io::write_text(path, "a,b\n1.0\n");
  CHECK_THROWS_AS(io::read_csv(path), ConfigError);  // row narrower
  io::write_text(path, "a,b\n1.0,zebra\n");
  CHECK_THROWS_AS(io::read_csv(path), ConfigError);  // non-numeric cell
  CHECK_THROWS_AS(io::read_csv(dir.path / "absent.csv"), ConfigError);
}

TEST_CASE("waveform csv round-trip preserves samples and time grid") {
  TempDir dir("resotube_io_wave");
  const fs::path path = dir.path / "wave.csv";
  const excitation::PeriodicWaveform w(261.6, std::vector<double>{0.0, 0.5, -0.25, 1.0});
  io::write_waveform_csv(path, w, "v");

  const io::Csv raw = io::read_csv(path);
  CHECK(raw.header == std::vector<std::string>{"t", "v"});
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(raw.columns[0][i] == double(i) * w.period() / 4.0);

  const auto back = io::read_waveform_csv(path, 261.6);
  REQUIRE(back.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(back.samples()[i] == w.samples()[i]);

  io::write_text(path, "t,a,b\n0,1,2\n");
  CHECK_THROWS_AS(io::read_waveform_csv(path, 261.6), ConfigError);
}

TEST_CASE("field dump round-trips header and payload") {
  TempDir dir("resotube_io_field");
  const fs::path path = dir.path / "field.bin";

  fdm::FdmSolution sol;
  sol.nx = 3;
  sol.nt = 2;
  sol.dx = 1e-3;
  sol.dt = 0.5e-6;
  sol.p = {1.0, -2.0, 3.5, 0.1, 0.2, 0.3};
  sol.U = {7.29e-5, 0.0, -1e-9, 4.0, 5.0, 6.0};
  io::write_field_dump(path, sol);

  const auto d = io::read_field_dump(path);
  CHECK(d.nx == 3);
  CHECK(d.nt == 2);
  CHECK(d.dx == sol.dx);
  CHECK(d.dt == sol.dt);
  REQUIRE(d.p.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(d.p[i] == sol.p[i]);
    CHECK(d.U[i] == sol.U[i]);
  }

  fdm::FdmSolution bad = sol;
  bad.p.pop_back();
  CHECK_THROWS_AS(io::write_field_dump(dir.path / "x.bin", bad), std::invalid_argument);

  fs::resize_file(path, fs::file_size(path) - 8);
  CHECK_THROWS_AS(io::read_field_dump(path), ConfigError);
}

TEST_CASE("manifest lists files sorted with sizes, no timestamps") {
  TempDir dir("resotube_io_manifest");
  io::write_text(dir.path / "b.csv", "x\n1\n");
  io::write_text(dir.path / "a.json", "{}\n");

  const std::vector<std::string> names{"b.csv", "a.json"};
  io::write_manifest(dir.path, 42, names);

  const auto parsed = nlohmann::json::parse(io::read_text(dir.path / "manifest.json"));
  CHECK(parsed["tool_version"] == io::kToolVersion);
  CHECK(parsed["seed"] == 42);
  REQUIRE(parsed["files"].size() == 2);
  CHECK(parsed["files"][0]["name"] == "a.json");  // sorted
  CHECK(parsed["files"][0]["bytes"] == 3);
  CHECK(parsed["files"][1]["name"] == "b.csv");
  CHECK(parsed["files"][1]["bytes"] == 4);

  // byte-identical on rerun
  const std::string first = io::read_text(dir.path / "manifest.json");
  io::write_manifest(dir.path, 42, names);
  CHECK(io::read_text(dir.path / "manifest.json") == first);

  const std::vector<std::string> missing{"ghost.bin"};
  CHECK_THROWS_AS(io::write_manifest(dir.path, 1, missing), ConfigError);
}

TEST_CASE("text files round-trip byte for byte") {
  TempDir dir("resotube_io_text");
  const std::string text = "line one\nline two\n\ttabbed\n";
  io::write_text(dir.path / "t.txt", text);
  CHECK(io::read_text(dir.path / "t.txt") == text);
  CHECK_THROWS_AS(io::read_text(dir.path / "absent.txt"), ConfigError);
}

TEST_SUITE_END();
