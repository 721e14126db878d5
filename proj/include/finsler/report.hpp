#pragma once

// Deterministic JSON text for verification reports: object keys sorted,
// every floating value printed with 17 significant digits, non-finite values
// written as strings.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "finsler/tensor_block.hpp"

namespace finsler::report {

using Json = nlohmann::json;  // std::map storage, so keys come out sorted

inline std::string format_number(double v) {
  if (std::isnan(v)) return "\"nan\"";
  if (std::isinf(v)) return v > 0 ? "\"inf\"" : "\"-inf\"";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void write(const Json& j, int indent, int depth, std::string& out) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + Json(it.key()).dump() + ": ";
        write(it.value(), indent, depth + 1, out);
      }
      out += "\n" + close + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // flat numeric arrays stay on one line
      bool flat = true;
      for (const auto& e : j) flat &= e.is_number() || e.is_boolean() || e.is_null();
      if (flat) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          write(j[i], indent, depth + 1, out);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        write(j[i], indent, depth + 1, out);
      }
      out += "\n" + close + "]";
      return;
    }
    case Json::value_t::number_float:
      out += format_number(j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

}  // namespace detail

inline std::string serialize(const Json& j, int indent = 2) {
  std::string out;
  detail::write(j, indent, 0, out);
  out += "\n";
  return out;
}

/// Nested arrays in the tensor's index order.
inline Json tensor_json(const TensorBlock& t) {
  const int n = t.dim();
  const int r = t.rank();
  if (r == 0) return t.data().empty() ? Json(0.0) : Json(t.data()[0]);
  std::size_t stride = 1;
  for (int i = 1; i < r; ++i) stride *= static_cast<std::size_t>(n);
  // recursive split of the flat row-major storage
  struct Build {
    static Json run(const std::vector<double>& d, std::size_t off, std::size_t stride, int n, int rank) {
      Json a = Json::array();
      for (int i = 0; i < n; ++i) {
        if (rank == 1)
          a.push_back(d[off + static_cast<std::size_t>(i)]);
        else
          a.push_back(run(d, off + static_cast<std::size_t>(i) * stride, stride / static_cast<std::size_t>(n), n,
                          rank - 1));
      }
      return a;
    }
  };
  return Build::run(t.data(), 0, stride, n, r);
}

inline Json vector_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double c : v) a.push_back(c);
  return a;
}

}  // namespace finsler::report
