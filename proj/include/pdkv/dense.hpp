// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace pdkv {

// Activations and projections are stored one token per row.
template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using TokenId = std::int32_t;
using Position = std::int64_t;

using TokenMatrix = Eigen::Matrix<TokenId, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskArray = Eigen::Array<bool, Eigen::Dynamic, 1>;

inline constexpr TokenId kPadToken = 0;
inline constexpr TokenId kBosToken = 1;
inline constexpr TokenId kFirstContentToken = 2;

}  // namespace pdkv
