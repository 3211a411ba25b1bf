// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/report.hpp"

#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include "gmbinet/parallel.hpp"

namespace gmbinet {

std::string hardware_descriptor() {
  std::string model = "unknown-cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  for (std::string line; std::getline(cpuinfo, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  std::ostringstream os;
  os << model << "; logical_cores=" << std::thread::hardware_concurrency() << "; threads=" << thread_count();
#if defined(__clang__)
  os << "; compiler=clang " << __clang_major__ << '.' << __clang_minor__;
#elif defined(__GNUC__)
  os << "; compiler=gcc " << __GNUC__ << '.' << __GNUC_MINOR__;
#endif
  return os.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace gmbinet
