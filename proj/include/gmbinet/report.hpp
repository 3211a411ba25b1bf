// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <string>

namespace gmbinet {

/// CPU model, logical core count, compiler and thread setting on one line.
std::string hardware_descriptor();

/// UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace gmbinet
