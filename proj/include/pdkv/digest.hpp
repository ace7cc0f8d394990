// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <type_traits>

namespace pdkv {

/// 64-bit FNV-1a, fed field by field.
class Fnv1a {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
    }

    template <class T>
        requires std::is_integral_v<T> || std::is_enum_v<T>
    Fnv1a& add(T value) {
        const auto wide = static_cast<std::uint64_t>(value);
        bytes(&wide, sizeof wide);
        return *this;
    }

    std::uint64_t value() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace pdkv
