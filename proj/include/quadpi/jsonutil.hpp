#pragma once

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "quadpi/common.hpp"

namespace quadpi {

using Json = nlohmann::json;

inline Json load_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    try {
        return Json::parse(f);
    } catch (const Json::parse_error& e) {
        throw SchemaError(path + ": " + e.what(), path);
    }
}

// Rejects keys outside the allowed set; `where` names the document location
// in diagnostics.
inline void check_keys(const Json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where) {
    if (!obj.is_object()) throw SchemaError(where + ": expected an object", where);
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw SchemaError(where + ": unknown key '" + item.key() + "'", item.key());
    }
}

inline const Json& require_key(const Json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(where + ": missing required key '" + key + "'", key);
    return *it;
}

template <typename T>
T get_or(const Json& obj, const char* key, T fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    return it->get<T>();
}

}  // namespace quadpi
