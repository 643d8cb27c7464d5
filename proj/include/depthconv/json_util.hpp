// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <initializer_list>
#include <stdexcept>
#include <string>

namespace depthconv {

using Json = nlohmann::ordered_json;

// Invalid or unknown configuration content (CLI exit code 2).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Throws ConfigError naming the first key of `j` not listed in `allowed`.
void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& context);

template <typename T>
T get_or(const Json& j, const char* key, T fallback, const std::string& context) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(context + "." + key + ": " + e.what());
    }
}

}  // namespace depthconv
