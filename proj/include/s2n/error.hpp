/*
   Copyright 2026 The s2ndiff Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

namespace s2n {

/// Invalid user input: unknown family, missing parameter, malformed JSON,
/// arguments violating a documented precondition.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the domain of a function (time outside a schedule window,
/// lambda outside the attainable range, s >= t for a backward step).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// NaN/Inf produced during a computation, or a broken numerical invariant.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::cerr << "s2n warning: " << msg << '\n';
  };
  return sink;
}

inline std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

/// Replace the warning sink (tests capture warnings through this).
inline void set_warning_sink(std::function<void(const std::string&)> sink) {
  std::lock_guard<std::mutex> lock(detail::warning_mutex());
  detail::warning_sink() = std::move(sink);
}

inline void warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(detail::warning_mutex());
  if (detail::warning_sink()) detail::warning_sink()(msg);
}

}  // namespace s2n
