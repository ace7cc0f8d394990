// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pdkv/dense.hpp"
#include "pdkv/errors.hpp"

namespace pdkv {

enum class EvictionTrigger { PrefillBlock, DecodeStep };

inline const char* to_string(EvictionTrigger trigger) {
    return trigger == EvictionTrigger::PrefillBlock ? "prefill_block" : "decode_step";
}

/// What one eviction did to one cache.
struct EvictionEvent {
    EvictionTrigger trigger = EvictionTrigger::PrefillBlock;
    std::vector<Position> evicted_kv_ids;
    std::size_t cache_len_before = 0;
    std::size_t cache_len_after = 0;
    std::size_t step_index = 0;
};

enum class PolicyKind { AverageAttention, MostRecentOnly, NoEviction };

/**
 * Eviction rule applied once a cache reaches its cap.
 *
 * AverageAttention drops the `p` pairs with the smallest accumulated attention
 * divided by the number of queries that could have seen them. MostRecentOnly
 * collapses the cache to its newest pair. NoEviction never removes anything.
 */
struct EvictionPolicy {
    PolicyKind kind = PolicyKind::NoEviction;
    std::size_t p = 0;

    static EvictionPolicy average_attention(std::size_t p) { return {PolicyKind::AverageAttention, p}; }
    static EvictionPolicy most_recent_only() { return {PolicyKind::MostRecentOnly, 0}; }
    static EvictionPolicy no_eviction() { return {PolicyKind::NoEviction, 0}; }

    void validate(std::size_t kvmax) const {
        if (kind == PolicyKind::AverageAttention) {
            detail::require<ConfigError>(p >= 1 && p < kvmax,
                                         "average-attention eviction needs 1 <= p < kvmax (p=" + std::to_string(p) +
                                             ", kvmax=" + std::to_string(kvmax) + ")");
        }
    }
};

/// Element-wise sum_weights / (curr_id + 1 - kv_ids).
inline Eigen::VectorXd ave_weights(const Eigen::Ref<const Eigen::VectorXd>& sum_weights,
                                   std::span<const Position> kv_ids,
                                   Position curr_id) {
    detail::require<ContractError>(static_cast<std::size_t>(sum_weights.size()) == kv_ids.size(),
                                   "ave_weights: sum_weights and kv_ids differ in length");
    Eigen::VectorXd out(sum_weights.size());
    for (Eigen::Index i = 0; i < sum_weights.size(); ++i) {
        const Position id = kv_ids[static_cast<std::size_t>(i)];
        detail::require<ContractError>(curr_id >= id,
                                       "ave_weights: curr_id " + std::to_string(curr_id) + " precedes kv_id " +
                                           std::to_string(id));
        out[i] = sum_weights[i] / static_cast<double>(curr_id + 1 - id);
    }
    return out;
}

/// Indices of the `count` smallest entries, ties resolved toward the lower index. Result is sorted by index.
inline std::vector<std::size_t> smallest_indices(const Eigen::Ref<const Eigen::VectorXd>& scores, std::size_t count) {
    const auto n = static_cast<std::size_t>(scores.size());
    detail::require<ContractError>(count <= n, "cannot select more entries than exist");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto less = [&](std::size_t a, std::size_t b) {
        const auto sa = scores[static_cast<Eigen::Index>(a)];
        const auto sb = scores[static_cast<Eigen::Index>(b)];
        return sa < sb || (sa == sb && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(), less);
    order.resize(count);
    std::sort(order.begin(), order.end());
    return order;
}

/**
 * Key/value store for one (layer, head, sample) with per-pair eviction statistics.
 *
 * Pairs are kept in kv_id order. `capacity` is the hard cap on retained pairs; a
 * cache built with `kUnbounded` grows on demand.
 */
template <class Scalar = double>
class KVCache {
public:
    static constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

    KVCache() = default;

    KVCache(std::size_t head_dim, std::size_t capacity, std::size_t reserve = 0)
        : head_dim_(head_dim), capacity_(capacity) {
        detail::require<ConfigError>(head_dim >= 1, "KVCache: head_dim must be >= 1");
        detail::require<ConfigError>(capacity >= 1, "KVCache: capacity must be >= 1");
        grow_storage(capacity == kUnbounded ? reserve : capacity);
    }

    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }
    std::size_t capacity() const { return capacity_; }
    std::size_t head_dim() const { return head_dim_; }

    auto keys() const { return keys_.topRows(static_cast<Eigen::Index>(size_)); }
    auto values() const { return values_.topRows(static_cast<Eigen::Index>(size_)); }
    auto sum_weights() const { return sum_weights_.head(static_cast<Eigen::Index>(size_)); }
    std::span<const Position> kv_ids() const { return {kv_ids_.data(), size_}; }

    /// Appends pairs with zeroed statistics. Ids must continue the increasing sequence.
    template <class KeyBlock, class ValueBlock>
    void append(const Eigen::MatrixBase<KeyBlock>& new_keys,
                const Eigen::MatrixBase<ValueBlock>& new_values,
                std::span<const Position> new_ids) {
        const auto count = new_ids.size();
        detail::require<ContractError>(static_cast<std::size_t>(new_keys.rows()) == count &&
                                           static_cast<std::size_t>(new_values.rows()) == count,
                                       "KVCache::append: row count mismatch");
        detail::require<ContractError>(static_cast<std::size_t>(new_keys.cols()) == head_dim_ &&
                                           static_cast<std::size_t>(new_values.cols()) == head_dim_,
                                       "KVCache::append: head_dim mismatch");
        detail::require<CapacityError>(count <= capacity_ - size_,
                                       "KVCache::append: " + std::to_string(size_) + " + " + std::to_string(count) +
                                           " pairs exceeds capacity " + std::to_string(capacity_));
        Position last = size_ == 0 ? Position{-1} : kv_ids_[size_ - 1];
        for (auto id : new_ids) {
            detail::require<ContractError>(id > last && id >= 0, "KVCache::append: kv_ids must be strictly increasing");
            last = id;
        }
        if (size_ + count > static_cast<std::size_t>(keys_.rows())) {
            grow_storage(std::max(size_ + count, 2 * static_cast<std::size_t>(keys_.rows())));
        }
        const auto at = static_cast<Eigen::Index>(size_);
        const auto n = static_cast<Eigen::Index>(count);
        keys_.middleRows(at, n) = new_keys.template cast<Scalar>();
        values_.middleRows(at, n) = new_values.template cast<Scalar>();
        sum_weights_.segment(at, n).setZero();
        std::copy(new_ids.begin(), new_ids.end(), kv_ids_.begin() + static_cast<std::ptrdiff_t>(size_));
        size_ += count;
    }

    /**
     * Adds each row of a post-softmax attention block to sum_weights.
     *
     * Column j of `weights` is cache entry j. A query that could not see entry j
     * carries a zero there, so fewer columns than entries is allowed; more is not.
     */
    template <class Derived>
    void record_attention(const Eigen::MatrixBase<Derived>& weights) {
        const auto cols = static_cast<std::size_t>(weights.cols());
        detail::require<ContractError>(cols <= size_, "record_attention: row length " + std::to_string(cols) +
                                                          " exceeds cache length " + std::to_string(size_));
        if (weights.rows() == 0 || cols == 0) {
            return;
        }
        sum_weights_.head(weights.cols()) += weights.template cast<double>().colwise().sum().transpose();
    }

    Eigen::VectorXd ave_weights(Position curr_id) const { return pdkv::ave_weights(sum_weights(), kv_ids(), curr_id); }

    /// Removes the `p` pairs with the smallest average attention, older pair first on ties.
    EvictionEvent evict_smallest(std::size_t p, Position curr_id) {
        detail::require<ContractError>(p <= size_, "evict_smallest: p=" + std::to_string(p) + " exceeds cache length " +
                                                       std::to_string(size_));
        const auto victims = smallest_indices(ave_weights(curr_id), p);
        return remove(victims);
    }

    /// Keeps only the newest pair, ignoring statistics.
    EvictionEvent evict_all_but_most_recent() {
        detail::require<ContractError>(size_ >= 1, "evict_all_but_most_recent: cache is empty");
        std::vector<std::size_t> victims(size_ - 1);
        std::iota(victims.begin(), victims.end(), std::size_t{0});
        return remove(victims);
    }

private:
    void grow_storage(std::size_t rows) {
        const auto keep = static_cast<Eigen::Index>(size_);
        Matrix<Scalar> keys(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(head_dim_));
        Matrix<Scalar> values(keys.rows(), keys.cols());
        Eigen::VectorXd sums(keys.rows());
        if (keep > 0) {
            keys.topRows(keep) = keys_.topRows(keep);
            values.topRows(keep) = values_.topRows(keep);
            sums.head(keep) = sum_weights_.head(keep);
        }
        keys_.swap(keys);
        values_.swap(values);
        sum_weights_.swap(sums);
        kv_ids_.resize(rows);
    }

    // `victims` must be sorted ascending and unique.
    EvictionEvent remove(const std::vector<std::size_t>& victims) {
        EvictionEvent event;
        event.cache_len_before = size_;
        event.evicted_kv_ids.reserve(victims.size());
        std::size_t write = 0;
        std::size_t next_victim = 0;
        for (std::size_t read = 0; read < size_; ++read) {
            if (next_victim < victims.size() && victims[next_victim] == read) {
                event.evicted_kv_ids.push_back(kv_ids_[read]);
                ++next_victim;
                continue;
            }
            if (write != read) {
                const auto w = static_cast<Eigen::Index>(write);
                const auto r = static_cast<Eigen::Index>(read);
                keys_.row(w) = keys_.row(r);
                values_.row(w) = values_.row(r);
                sum_weights_[w] = sum_weights_[r];
                kv_ids_[write] = kv_ids_[read];
            }
            ++write;
        }
        size_ = write;
        event.cache_len_after = size_;
        return event;
    }

    std::size_t head_dim_ = 1;
    std::size_t capacity_ = 1;
    std::size_t size_ = 0;
    Matrix<Scalar> keys_;
    Matrix<Scalar> values_;
    Eigen::VectorXd sum_weights_;
    std::vector<Position> kv_ids_;
};

}  // namespace pdkv
