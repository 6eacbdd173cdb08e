#pragma once

// Strict accessors over nlohmann::json used by every deserializer. Errors are
// raised as ParseError with the JSON pointer of the offending entry so the
// command-line front end can map them back to source lines.

#include <initializer_list>
#include <type_traits>
#include <string>
#include <vector>

#include <json.hpp>

#include "homog/error.hpp"

namespace homog::json_util {

using json = nlohmann::json;

/// Path helper: child(path, "key") / child(path, 3).
inline std::string child(const std::string& path, const std::string& key) { return path + "/" + key; }
inline std::string child(const std::string& path, std::size_t index) { return path + "/" + std::to_string(index); }

/// Rejects keys of `obj` not listed in `allowed`.
inline void require_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ParseError("expected a table/object", path);
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) ok = true;
    if (!ok) throw ParseError("unknown key '" + it.key() + "'", child(path, it.key()));
  }
}

inline const json& at(const json& obj, const std::string& path, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) throw ParseError(std::string("missing key '") + key + "'", path);
  return obj.at(key);
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError("expected a number", path);
  return v.get<double>();
}

inline long integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ParseError("expected an integer", path);
  return v.get<long>();
}

inline bool boolean(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ParseError("expected a boolean", path);
  return v.get<bool>();
}

inline std::string string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ParseError("expected a string", path);
  return v.get<std::string>();
}

inline std::vector<double> numbers(const json& v, const std::string& path) {
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw ParseError("expected an array of numbers", path);
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], child(path, i)));
  return out;
}

inline std::vector<int> integers(const json& v, const std::string& path) {
  if (v.is_number_integer()) return {v.get<int>()};
  if (!v.is_array()) throw ParseError("expected an array of integers", path);
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(static_cast<int>(integer(v[i], child(path, i))));
  return out;
}

template <class T>
T get_or(const json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  const auto p = child(path, key);
  if constexpr (std::is_same_v<T, double>)
    return number(obj.at(key), p);
  else if constexpr (std::is_same_v<T, bool>)
    return boolean(obj.at(key), p);
  else if constexpr (std::is_same_v<T, std::string>)
    return string(obj.at(key), p);
  else if constexpr (std::is_integral_v<T>)
    return static_cast<T>(integer(obj.at(key), p));
  else if constexpr (std::is_same_v<T, std::vector<double>>)
    return numbers(obj.at(key), p);
  else if constexpr (std::is_same_v<T, std::vector<int>>)
    return integers(obj.at(key), p);
  else
    static_assert(sizeof(T) == 0, "unsupported type");
}

}  // namespace homog::json_util
