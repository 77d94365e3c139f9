#ifndef RNML_TEST_UTIL_HPP
#define RNML_TEST_UTIL_HPP

#include "rnml/core.hpp"
#include "rnml/datagen.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace rnml::test {

inline std::filesystem::path tmp_dir(const std::string& name) {
#ifdef RNML_TEST_TMP
  std::filesystem::path base(RNML_TEST_TMP);
#else
  std::filesystem::path base = std::filesystem::temp_directory_path() / "rnml_tests";
#endif
  auto dir = base / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline int run_cli(const std::string& args) {
#ifdef RNML_CLI_PATH
  const std::string cmd = std::string(RNML_CLI_PATH) + " " + args + " > /dev/null 2>&1";
#else
  const std::string cmd = "false";
#endif
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

inline int run_cli_capture(const std::string& args, const std::filesystem::path& log) {
#ifdef RNML_CLI_PATH
  const std::string cmd = std::string(RNML_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
#else
  const std::string cmd = "false";
#endif
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

// quick hand-built trip for unit tests
inline Trip make_trip(std::int64_t id, std::int64_t depart_ts, std::vector<std::int32_t> links,
                      std::vector<double> speeds, double travel_time = 100.0,
                      std::int32_t driver = 1) {
  Trip t;
  t.trip_id = id;
  t.driver_id = driver;
  t.depart_ts = depart_ts;
  t.link_ids = std::move(links);
  t.link_speeds_mps = std::move(speeds);
  t.travel_time_s = travel_time;
  return t;
}

// timestamp at hh:mm on the first day of the synthetic horizon (a Monday)
inline std::int64_t at_time(int hour, int minute, int day = 0) {
  return kEpochStart + day * 86400 + hour * 3600 + minute * 60;
}

}  // namespace rnml::test

#endif  // RNML_TEST_UTIL_HPP
