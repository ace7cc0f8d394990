// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#include "pdkv/memory_model.hpp"

#include <algorithm>
#include <utility>

#include "pdkv/errors.hpp"

namespace pdkv {

MemorySpec MemorySpec::from_model(const ModelConfig& model, std::uint64_t budget_bytes,
                                  std::uint64_t overhead_bytes_per_sample) {
    MemorySpec spec;
    spec.num_layers = model.num_layers;
    spec.num_heads = model.num_heads;
    spec.head_dim = model.head_dim;
    spec.dtype_bytes = model.dtype_bytes;
    spec.budget_bytes = budget_bytes;
    spec.overhead_bytes_per_sample = overhead_bytes_per_sample;
    return spec;
}

void MemorySpec::validate() const {
    detail::require<ConfigError>(num_layers > 0 && num_heads > 0 && head_dim > 0 && dtype_bytes > 0,
                                 "memory: model dimensions must be positive");
    detail::require<ConfigError>(budget_bytes > 0, "memory: budget_bytes must be positive");
    detail::require<ConfigError>(budget_bytes >= kv_pair_bytes(*this),
                                 "memory: budget_bytes is smaller than a single KV pair");
}

std::uint64_t kv_pair_bytes(const MemorySpec& spec) {
    return std::uint64_t{2} * spec.num_layers * spec.num_heads * spec.head_dim * spec.dtype_bytes;
}

std::size_t peak_kv_pairs(Method method, std::size_t s_bar, std::size_t kvmax, std::size_t max_gen) {
    const std::size_t full = s_bar + (max_gen > 0 ? max_gen - 1 : 0);
    switch (method) {
        case Method::BM: return std::min(full, kvmax);
        case Method::ED: return std::max(s_bar, std::min(max_gen, kvmax));
        case Method::FKV: return full;
    }
    return full;
}

std::size_t max_batch(const MemorySpec& spec, Method method, std::size_t s_bar, std::size_t kvmax,
                      std::size_t max_gen) {
    const std::uint64_t per_sample =
        peak_kv_pairs(method, s_bar, kvmax, max_gen) * kv_pair_bytes(spec) + spec.overhead_bytes_per_sample;
    if (per_sample == 0) {
        return 0;
    }
    return static_cast<std::size_t>(spec.budget_bytes / per_sample);
}

std::uint64_t idle_pairs(std::size_t s_bar, std::size_t kvmax, std::size_t b) {
    return s_bar > kvmax ? std::uint64_t{s_bar - kvmax} * b : 0;
}

bool exceeds_budget(const MemorySpec& spec, Method method, std::size_t b, std::size_t s_bar, std::size_t kvmax,
                    std::size_t max_gen) {
    return b > max_batch(spec, method, s_bar, kvmax, max_gen);
}

std::vector<PlanRow> plan_memory(const MemorySpec& spec, std::size_t s_bar, std::size_t bm_kvmax,
                                 std::size_t ed_kvmax, std::size_t max_gen) {
    spec.validate();
    std::vector<PlanRow> rows;
    for (auto [method, kvmax] : {std::pair{Method::BM, bm_kvmax}, std::pair{Method::ED, ed_kvmax},
                                 std::pair{Method::FKV, std::size_t{0}}}) {
        PlanRow row;
        row.method = method;
        row.kvmax = kvmax;
        row.peak_pairs = peak_kv_pairs(method, s_bar, kvmax, max_gen);
        row.bytes_per_sample = row.peak_pairs * kv_pair_bytes(spec) + spec.overhead_bytes_per_sample;
        row.max_b = max_batch(spec, method, s_bar, kvmax, max_gen);
        if (method == Method::ED) {
            row.idle_pairs = idle_pairs(s_bar, kvmax, row.max_b);
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace pdkv
