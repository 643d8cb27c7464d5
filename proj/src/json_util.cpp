// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/json_util.hpp"

#include <algorithm>
#include <cstring>

namespace depthconv {

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + ": expected an object");
    for (const auto& item : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return std::strcmp(k, item.key().c_str()) == 0; });
        if (!known) throw ConfigError("unknown key \"" + item.key() + "\" in " + context);
    }
}

}  // namespace depthconv
