#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "wafl/error.hpp"

namespace wafl {

/// Rejects any key of `obj` not listed in `allowed`, naming the offender.
inline void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                                std::string_view context) {
    if (!obj.is_object()) {
        throw Error(ErrorCode::InvalidConfig, std::string(context) + ": expected a JSON object");
    }
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (!known) {
            throw Error(ErrorCode::InvalidConfig, std::string(context) + ": unknown key '" + key + "'");
        }
    }
}

/// Reads `obj[key]` into `out` if present, converting type errors to InvalidConfig.
template <typename T>
void read_optional(const nlohmann::json& obj, std::string_view key, T& out, std::string_view context) {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::InvalidConfig,
                    std::string(context) + ": key '" + std::string(key) + "' has the wrong type");
    }
}

}  // namespace wafl
