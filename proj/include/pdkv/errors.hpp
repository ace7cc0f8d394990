// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace pdkv {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid dimensions, method parameters, or file/flag values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A cache would grow past its capacity.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// A caller broke an operation's precondition (ordering, shapes, ranges).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Bad user-supplied data such as empty samples or an empty grid.
class InputError : public Error {
public:
    using Error::Error;
};

namespace detail {

template <class E>
inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw E(msg);
    }
}

}  // namespace detail
}  // namespace pdkv
