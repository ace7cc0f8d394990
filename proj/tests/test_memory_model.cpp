// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "pdkv/engine.hpp"
#include "pdkv/memory_model.hpp"

using namespace pdkv;

namespace {

MemorySpec spec(std::size_t l, std::size_t h, std::size_t d, std::size_t e, std::uint64_t budget = 1 << 20) {
    MemorySpec s;
    s.num_layers = l;
    s.num_heads = h;
    s.head_dim = d;
    s.dtype_bytes = e;
    s.budget_bytes = budget;
    return s;
}

}  // namespace

TEST(KvPairBytes, Examples) {
    EXPECT_EQ(kv_pair_bytes(spec(2, 4, 8, 4)), 512u);
    EXPECT_EQ(kv_pair_bytes(spec(2, 4, 8, 8)), 1024u);
    EXPECT_EQ(kv_pair_bytes(spec(1, 1, 1, 1)), 2u);
}

TEST(PeakKvPairs, Examples) {
    EXPECT_EQ(peak_kv_pairs(Method::BM, 3584, 1024, 512), 1024u);
    EXPECT_EQ(peak_kv_pairs(Method::ED, 3584, 2, 512), 3584u);
    EXPECT_EQ(peak_kv_pairs(Method::FKV, 100, 0, 512), 611u);
}

TEST(PeakKvPairs, DecodeGrowthBelowCap) {
    EXPECT_EQ(peak_kv_pairs(Method::BM, 4, 100, 512), 100u);
    EXPECT_EQ(peak_kv_pairs(Method::BM, 4, 100, 10), 13u);
    EXPECT_EQ(peak_kv_pairs(Method::ED, 1, 8, 1), 1u);
    EXPECT_EQ(peak_kv_pairs(Method::ED, 1, 8, 5), 5u);
}

TEST(MaxBatch, Examples) {
    const auto s = spec(2, 4, 8, 4);
    EXPECT_EQ(max_batch(s, Method::BM, 512, 64, 512), 32u);
    EXPECT_EQ(max_batch(s, Method::ED, 512, 2, 512), 4u);
    auto small = spec(2, 4, 8, 4, 1000);
    EXPECT_EQ(max_batch(small, Method::ED, 512, 2, 512), 0u);
    EXPECT_TRUE(exceeds_budget(small, Method::ED, 1, 512, 2, 512));
}

TEST(MaxBatch, OverheadCounts) {
    auto s = spec(2, 4, 8, 4);
    s.overhead_bytes_per_sample = 32768;
    EXPECT_EQ(max_batch(s, Method::BM, 512, 64, 512), 16u);
}

TEST(MemorySpecValidate, RejectsTinyBudget) {
    EXPECT_THROW(spec(2, 4, 8, 4, 0).validate(), ConfigError);
    EXPECT_THROW(spec(2, 4, 8, 4, 511).validate(), ConfigError);
    EXPECT_NO_THROW(spec(2, 4, 8, 4, 512).validate());
}

TEST(IdlePairs, Examples) {
    EXPECT_EQ(idle_pairs(512, 512, 4), 0u);
    EXPECT_EQ(idle_pairs(100, 512, 4), 0u);
    EXPECT_EQ(idle_pairs(3584, 1024, 4), 10240u);
    EXPECT_LT(idle_pairs(3584, 1024, 4), idle_pairs(3584, 1024, 5));
    EXPECT_LT(idle_pairs(3584, 1024, 4), idle_pairs(3585, 1024, 4));
}

TEST(IdlePairs, EqualsPeakMinusDecodeResident) {
    for (std::size_t s_bar : {10u, 100u, 3584u}) {
        for (std::size_t kvmax : {2u, 8u}) {
            EXPECT_EQ(idle_pairs(s_bar, kvmax, 3), (peak_kv_pairs(Method::ED, s_bar, kvmax, 512) - kvmax) * 3);
        }
    }
}

TEST(Plan, RowsAndFkvSmallest) {
    const auto rows = plan_memory(spec(2, 4, 8, 4), 512, 64, 2, 512);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].method, Method::BM);
    EXPECT_EQ(rows[0].max_b, 32u);
    EXPECT_EQ(rows[1].max_b, 4u);
    EXPECT_EQ(rows[1].idle_pairs, (512u - 2u) * 4u);
    EXPECT_LE(rows[2].max_b, std::min(rows[0].max_b, rows[1].max_b));
    const auto short_rows = plan_memory(spec(2, 4, 8, 4), 32, 64, 64, 16);
    for (const auto& r : short_rows) EXPECT_EQ(r.idle_pairs, 0u);
}

TEST(Dominance, BmAdmitsAtLeastDecodingOnly) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        auto s = spec(1 + rng() % 8, 1 + rng() % 8, 1 + rng() % 64, 1 + rng() % 4, 1 + rng() % (1ull << 30));
        s.overhead_bytes_per_sample = rng() % 4096;
        const std::size_t kvmax = 2 + rng() % 1024;
        const std::size_t s_bar = kvmax + 1 + rng() % 4096;
        const std::size_t gen = 1 + rng() % 1024;
        const auto bm = max_batch(s, Method::BM, s_bar, kvmax, gen);
        const auto ed = max_batch(s, Method::ED, s_bar, kvmax, gen);
        EXPECT_GE(bm, ed);
    }
}

TEST(Consistency, PredictedPeakEqualsObserved) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        RunConfig cfg;
        cfg.model.num_layers = 1;
        cfg.model.num_heads = 1;
        cfg.model.head_dim = 2;
        cfg.model.vocab_size = 8;
        cfg.model.max_position = 256;
        cfg.method = static_cast<Method>(rng() % 3);
        cfg.kvmax = 2 + rng() % 20;
        cfg.p = 1 + rng() % (cfg.kvmax - 1);
        cfg.max_gen = 1 + rng() % 30;
        const std::size_t len = 1 + rng() % 40;
        std::vector<TokenId> prompt(len, 3);
        const auto w = init_model(cfg.model, 0);
        const auto r = run_method(pad_batch({prompt}), cfg, w);
        EXPECT_EQ(r.trace.peak_kv_pairs_observed, peak_kv_pairs(cfg.method, len, cfg.kvmax, cfg.max_gen));
    }
}
