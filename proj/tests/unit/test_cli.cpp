#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#ifndef EQAPPROX_TOOL_PATH
#error "EQAPPROX_TOOL_PATH must name the CLI binary"
#endif

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(EQAPPROX_TOOL_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::size_t k;
  while ((k = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), k);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::filesystem::path scratch() {
  auto dir = std::filesystem::temp_directory_path() / ("eqapprox_cli_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("cli gadget test") {
  Result r = run("gadget test --kind product --param eps=0.01 --grid 21");
  CHECK(r.code == 0);
  auto doc = nlohmann::json::parse(r.out);
  CHECK(doc["sup_error"].get<double>() <= 0.01);
}

TEST_CASE("cli build and evaluate a deepsets network") {
  auto dir = scratch();
  const auto net = (dir / "ds.json").string();
  REQUIRE(run("build deepsets --target max_coord --d 1 --n 3 --m 4 --exhaustive --out " + net).code == 0);
  write(dir / "x.csv", "0.2\n0.7\n0.4\n");
  Result r = run("net eval --net " + net + " --input " + (dir / "x.csv").string());
  CHECK(r.code == 0);
  CHECK(std::fabs(std::stod(r.out) - 0.7) <= 0.25 + 1e-9);
  Result m = run("measure --net " + net + " --target max_coord --d 1 --n 3 --samples 200");
  CHECK(m.code == 0);
  CHECK(nlohmann::json::parse(m.out)["sup"].get<double>() <= 0.25 + 1e-9);
  std::filesystem::remove_all(dir);
}

TEST_CASE("cli rates and cover") {
  auto dir = scratch();
  write(dir / "r.csv", "m,error\n2,0.5\n4,0.25\n8,0.125\n");
  Result r = run("rates --input " + (dir / "r.csv").string());
  CHECK(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["slope"].get<double>() == doctest::Approx(-1.0));
  write(dir / "p.csv", "0.5,0.5\n0.5,0.5\n0.5,0.5\n");
  Result c = run("cover --input " + (dir / "p.csv").string() + " --radii 0.1,0.05");
  CHECK(c.code == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("cli run exit codes") {
  auto dir = scratch();
  nlohmann::json cfg = {{"name", "cli"}, {"d", 1}, {"n", 2}, {"m_sweep", {2, 4, 8}}, {"samples", 200}, {"invariance_trials", 20}};
  write(dir / "ok.json", cfg.dump());
  Result ok = run("run " + (dir / "ok.json").string());
  CHECK(ok.code == 0);
  CHECK(ok.out.find("PASS") != std::string::npos);
  cfg["m_sweep"] = nlohmann::json::array();
  write(dir / "bad.json", cfg.dump());
  CHECK(run("run " + (dir / "bad.json").string()).code == 2);
  write(dir / "broken.json", "{\"d\": 1,");
  CHECK(run("run " + (dir / "broken.json").string()).code == 2);
  CHECK(run("run " + (dir / "missing.json").string()).code == 2);
  std::filesystem::remove_all(dir);
}
