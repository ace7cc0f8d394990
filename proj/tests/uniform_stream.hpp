// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include <Eigen/Core>

#include "pdkv/kv_cache.hpp"

namespace pdkv::streams {

struct StreamCounts {
    std::size_t steps = 0;
    std::size_t sum_argmin_newest = 0;
    std::size_t ave_argmin_newest = 0;
};

/// Index of the smallest entry, lowest index on ties.
inline Eigen::Index argmin(const Eigen::Ref<const Eigen::VectorXd>& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (v[i] < v[best]) best = i;
    }
    return best;
}

/**
 * One query per step, each spreading weight 1/|kv| over every retained pair.
 * When the cache is full, `p` pairs are evicted before the next append, with
 * curr_id the id of the query just processed.
 */
inline StreamCounts run_uniform_stream(std::size_t length, std::size_t kvmax, std::size_t p) {
    KVCache<double> cache(1, kvmax);
    StreamCounts counts;
    const Eigen::MatrixXd one = Eigen::MatrixXd::Zero(1, 1);
    for (std::size_t i = 0; i < length; ++i) {
        const auto id = static_cast<Position>(i);
        if (cache.size() == kvmax) cache.evict_smallest(p, id - 1);
        const Position ids[] = {id};
        cache.append(one, one, ids);
        const auto n = static_cast<Eigen::Index>(cache.size());
        cache.record_attention(Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n)));
        const auto newest = n - 1;
        ++counts.steps;
        if (argmin(cache.sum_weights()) == newest) ++counts.sum_argmin_newest;
        if (argmin(cache.ave_weights(id)) == newest) ++counts.ave_argmin_newest;
    }
    return counts;
}

}  // namespace pdkv::streams
