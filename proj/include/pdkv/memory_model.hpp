// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pdkv/method.hpp"
#include "pdkv/model.hpp"

namespace pdkv {

/// KV memory budget. Only KV pairs are modeled, plus a flat per-sample allowance.
struct MemorySpec {
    std::size_t num_layers = 1;
    std::size_t num_heads = 1;
    std::size_t head_dim = 1;
    std::size_t dtype_bytes = 4;
    std::uint64_t budget_bytes = 0;
    std::uint64_t overhead_bytes_per_sample = 0;

    static MemorySpec from_model(const ModelConfig& model, std::uint64_t budget_bytes,
                                 std::uint64_t overhead_bytes_per_sample = 0);

    void validate() const;
};

/// Bytes for one token's key and value across every layer and head of one sample.
std::uint64_t kv_pair_bytes(const MemorySpec& spec);

/**
 * Largest per-sample cache length a method reaches (padded prompt length s_bar).
 *
 *   BM:  min(s_bar + max_gen - 1, kvmax)
 *   ED:  max(s_bar, min(max_gen, kvmax))   (the prompt is processed uncompressed)
 *   FKV: s_bar + max_gen - 1
 */
std::size_t peak_kv_pairs(Method method, std::size_t s_bar, std::size_t kvmax, std::size_t max_gen);

/// floor(budget / (peak * pair_bytes + overhead)); 0 means even b = 1 does not fit.
std::size_t max_batch(const MemorySpec& spec, Method method, std::size_t s_bar, std::size_t kvmax,
                      std::size_t max_gen);

/// Prefill pairs a decoding-only method keeps allocated but cannot use while decoding: (s_bar - kvmax) * b.
std::uint64_t idle_pairs(std::size_t s_bar, std::size_t kvmax, std::size_t b);

/// True when b samples of `method` exceed the budget.
bool exceeds_budget(const MemorySpec& spec, Method method, std::size_t b, std::size_t s_bar, std::size_t kvmax,
                    std::size_t max_gen);

struct PlanRow {
    Method method = Method::BM;
    std::size_t kvmax = 0;  // 0 for FKV
    std::size_t peak_pairs = 0;
    std::uint64_t bytes_per_sample = 0;
    std::size_t max_b = 0;
    std::uint64_t idle_pairs = 0;  // decoding-only rows; 0 elsewhere
};

/// One row per method: BM at `bm_kvmax`, ED at `ed_kvmax`, FKV. Idle pairs are taken at ED's max batch.
std::vector<PlanRow> plan_memory(const MemorySpec& spec, std::size_t s_bar, std::size_t bm_kvmax,
                                 std::size_t ed_kvmax, std::size_t max_gen);

}  // namespace pdkv
