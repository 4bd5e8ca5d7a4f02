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

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "astra/common.hpp"
#include "astra/matrix.hpp"

// JSON tensor interchange. A tensor file is a single top-level object whose
// keys map to rectangular nested arrays of numbers; the string "-inf" is the
// one permitted sentinel and reads back as kNegInf. Output is written by a
// hand-rolled serializer that keeps key order and prints doubles with 17
// significant digits, so identical values always produce identical bytes and
// every finite double round-trips exactly.

namespace astra {

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (!root.is_object()) {
    throw FormatError(path + ": top-level JSON value must be an object");
  }
  return root;
}

inline Matrix tensor_from_json(const nlohmann::json& root,
                               const std::string& key) {
  if (!root.contains(key)) {
    throw FormatError("key \"" + key + "\" not found");
  }
  const nlohmann::json& arr = root.at(key);
  if (!arr.is_array()) {
    throw FormatError("key \"" + key + "\": value must be an array of rows");
  }
  const std::size_t rows = arr.size();
  std::size_t cols = 0;
  if (rows > 0) {
    if (!arr[0].is_array()) {
      throw FormatError("key \"" + key + "\": row 0 is not an array");
    }
    cols = arr[0].size();
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const nlohmann::json& row = arr[r];
    if (!row.is_array()) {
      throw FormatError(detail::str_cat("key \"", key, "\": row ", r,
                                        " is not an array"));
    }
    if (row.size() != cols) {
      throw FormatError(detail::str_cat("key \"", key, "\": row ", r,
                                        " has ", row.size(),
                                        " entries, expected ", cols));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const nlohmann::json& cell = row[c];
      if (cell.is_number()) {
        double v = cell.get<double>();
        if (!std::isfinite(v)) {
          throw FormatError(detail::str_cat("key \"", key, "\": row ", r,
                                            ", column ", c,
                                            ": non-finite number"));
        }
        m(r, c) = v;
      } else if (cell.is_string() && cell.get<std::string>() == "-inf") {
        m(r, c) = kNegInf;
      } else {
        throw FormatError(detail::str_cat("key \"", key, "\": row ", r,
                                          ", column ", c,
                                          ": non-numeric entry"));
      }
    }
  }
  return m;
}

inline Matrix read_tensor_json(const std::string& path,
                               const std::string& key) {
  return tensor_from_json(load_json_file(path), key);
}

// Flat sequence of non-negative integers, used for label sequences.
inline std::vector<int> int_sequence_from_json(const nlohmann::json& root,
                                               const std::string& key) {
  if (!root.contains(key)) {
    throw FormatError("key \"" + key + "\" not found");
  }
  const nlohmann::json& arr = root.at(key);
  if (!arr.is_array()) {
    throw FormatError("key \"" + key + "\": value must be an array");
  }
  std::vector<int> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number_integer()) {
      throw FormatError(detail::str_cat("key \"", key, "\": entry ", i,
                                        " is not an integer"));
    }
    out.push_back(arr[i].get<int>());
  }
  return out;
}

inline std::string format_json_number(double v) {
  if (v == kNegInf) return "\"-inf\"";
  if (!std::isfinite(v)) {
    throw FormatError("cannot serialize NaN or +inf");
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Ordered JSON object builder for result files and metric lines.
class JsonObjectWriter {
 public:
  void scalar(const std::string& key, double v) {
    begin_field(key);
    body_ += format_json_number(v);
  }

  void integer(const std::string& key, std::int64_t v) {
    begin_field(key);
    body_ += std::to_string(v);
  }

  void matrix(const std::string& key, const Matrix& m) {
    begin_field(key);
    body_ += '[';
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (r) body_ += ',';
      body_ += '[';
      for (std::size_t c = 0; c < m.cols(); ++c) {
        if (c) body_ += ',';
        body_ += format_json_number(m(r, c));
      }
      body_ += ']';
    }
    body_ += ']';
  }

  std::string str() const { return "{" + body_ + "}"; }

 private:
  void begin_field(const std::string& key) {
    if (!body_.empty()) body_ += ',';
    body_ += '"' + key + "\":";
  }

  std::string body_;
};

inline void write_tensor_json(
    const std::string& path,
    const std::vector<std::pair<std::string, Matrix>>& tensors) {
  JsonObjectWriter w;
  for (const auto& [key, m] : tensors) w.matrix(key, m);
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << w.str() << '\n';
}

}  // namespace astra
