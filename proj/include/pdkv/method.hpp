// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>

namespace pdkv {

/// BM: prefill-and-decode eviction. ED: extreme decoding-only eviction. FKV: full cache.
enum class Method { BM, ED, FKV };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::BM: return "BM";
        case Method::ED: return "ED";
        case Method::FKV: return "FKV";
    }
    return "?";
}

/// Case-insensitive; nullopt for anything else.
inline std::optional<Method> parse_method(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "bm") return Method::BM;
    if (lower == "ed") return Method::ED;
    if (lower == "fkv") return Method::FKV;
    return std::nullopt;
}

}  // namespace pdkv
