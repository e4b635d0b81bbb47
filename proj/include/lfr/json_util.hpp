#pragma once

#include "lfr/types.hpp"

#include <json.hpp>

namespace lfr::json_util {

// Matrices are stored as {"shape": [rows, cols], "data": [row-major values]}.
inline nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

inline Mat matrix_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
    throw ConfigError("expected a {shape, data} matrix object");
  }
  const auto& shape = j.at("shape");
  if (!shape.is_array() || shape.size() != 2) throw ConfigError("matrix shape must have two entries");
  const Index r = shape[0].get<Index>();
  const Index c = shape[1].get<Index>();
  const auto& data = j.at("data");
  if (r < 0 || c < 0 || !data.is_array() || static_cast<Index>(data.size()) != r * c) {
    throw ConfigError("matrix data length does not match its shape");
  }
  Mat m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index k = 0; k < c; ++k) m(i, k) = data[static_cast<std::size_t>(i * c + k)].get<double>();
  return m;
}

inline nlohmann::json vector_to_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vec vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("expected a numeric array");
  Vec v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace lfr::json_util
