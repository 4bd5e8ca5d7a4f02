/* Copyright 2026 The Astra Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace astra {

// log 0. The only non-finite value a lattice is allowed to hold; it marks a
// hard-masked transition.
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Structurally invalid arguments: bad shapes, out-of-range ids, empty input.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// A file or JSON document does not match the expected schema.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Well-formed input that defines an empty problem, e.g. a lattice whose total
// probability is zero.
class DegenerateInputError : public std::runtime_error {
 public:
  explicit DegenerateInputError(const std::string& what)
      : std::runtime_error(what) {}
};

namespace detail {

template <typename... Args>
std::string str_cat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  return oss.str();
}

}  // namespace detail
}  // namespace astra
