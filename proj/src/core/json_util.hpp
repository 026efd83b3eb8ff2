// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "errors.hpp"

#include <nlohmann/json.hpp>

#include <initializer_list>
#include <string>

namespace bckd {

using json = nlohmann::json;

// Rejects keys outside the allowed set; `where` names the object in messages.
inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  require(obj.is_object(), ErrorKind::config, where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    require(ok, ErrorKind::config, where + ": unknown key '" + key + "'");
  }
}

// Reads obj[key] into out when present; type mismatches become config errors.
template <typename T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::config, where + "." + key + ": " + e.what());
  }
}

}  // namespace bckd
