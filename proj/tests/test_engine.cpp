// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pdkv/engine.hpp"

using namespace pdkv;

namespace {

ModelConfig tiny() {
    ModelConfig c;
    c.num_layers = 2;
    c.num_heads = 2;
    c.head_dim = 4;
    c.vocab_size = 16;
    c.max_position = 512;
    return c;
}

RunConfig config(Method m, std::size_t kvmax, std::size_t p, std::size_t max_gen, std::size_t b = 1) {
    RunConfig cfg;
    cfg.method = m;
    cfg.kvmax = kvmax;
    cfg.p = p;
    cfg.max_gen = max_gen;
    cfg.b = b;
    cfg.model = tiny();
    return cfg;
}

std::vector<TokenId> random_prompt(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
    std::vector<TokenId> s(n);
    for (auto& t : s) t = static_cast<TokenId>(2 + rng() % (vocab - 2));
    return s;
}

std::vector<std::size_t> lengths_of(const std::vector<TracePhase>& phases) {
    std::vector<std::size_t> out;
    for (const auto& ph : phases) out.push_back(ph.len_after);
    return out;
}

TracePhase block(Position t0, Position t1, std::size_t before, std::size_t after, PhaseKind kind = PhaseKind::PrefillBlock,
                 std::size_t step = 0) {
    TracePhase ph;
    ph.kind = kind;
    ph.t0 = t0;
    ph.t1 = t1;
    ph.step = step;
    ph.len_before = before;
    ph.len_after = after;
    return ph;
}

TracePhase evict(EvictionTrigger trigger, std::size_t step, std::size_t before, std::size_t after) {
    TracePhase ph;
    ph.kind = PhaseKind::Evict;
    ph.trigger = trigger;
    ph.step = step;
    ph.len_before = before;
    ph.len_after = after;
    return ph;
}

}  // namespace

TEST(PadBatch, LeftPads) {
    const auto b = pad_batch({{5, 6, 7}, {2, 3, 4, 5, 6}});
    EXPECT_EQ(b.padded_length(), 5u);
    EXPECT_EQ(b.pad_counts, (std::vector<Position>{2, 0}));
    EXPECT_EQ(b.token_ids(0, 0), kPadToken);
    EXPECT_EQ(b.token_ids(0, 1), kPadToken);
    EXPECT_EQ(b.token_ids(0, 2), 5);
    EXPECT_TRUE(b.is_pad(0, 1));
    EXPECT_FALSE(b.is_pad(0, 2));
}

TEST(PadBatch, EqualLengthsAndSingleSampleHaveNoPads) {
    EXPECT_EQ(pad_batch({{2, 3}, {4, 5}}).pad_counts, (std::vector<Position>{0, 0}));
    EXPECT_EQ(pad_batch({{2, 3, 4}}).pad_counts, (std::vector<Position>{0}));
}

TEST(PadBatch, EmptyInputsThrow) {
    EXPECT_THROW(pad_batch(std::vector<std::vector<TokenId>>{}), InputError);
    EXPECT_THROW(pad_batch({{2, 3}, {}}), InputError);
}

TEST(Schedule, BmHandTrace) {
    using enum EvictionTrigger;
    const std::vector<TracePhase> expected{
        block(0, 6, 0, 6),
        evict(PrefillBlock, 1, 6, 4),
        block(6, 8, 4, 6),
        evict(PrefillBlock, 2, 6, 4),
        block(8, 10, 4, 6),
        evict(DecodeStep, 1, 6, 4),
        block(10, 11, 4, 5, PhaseKind::DecodeStep, 1),
        block(11, 12, 5, 6, PhaseKind::DecodeStep, 2),
        evict(DecodeStep, 3, 6, 4),
        block(12, 13, 4, 5, PhaseKind::DecodeStep, 3),
    };
    EXPECT_EQ(bm_schedule(10, 6, 2, 4), expected);
}

TEST(Schedule, BmShortPromptSingleBlock) {
    const auto s = bm_schedule(4, 100, 64, 1);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0], block(0, 4, 0, 4));
}

TEST(Schedule, EdHandTrace) {
    EXPECT_EQ(lengths_of(ed_schedule(5, 2, 3)), (std::vector<std::size_t>{5, 1, 2, 1, 2, 1}));
}

TEST(Schedule, FkvLengths) {
    const auto s = fkv_schedule(7, 5);
    EXPECT_EQ(s.front().len_after, 7u);
    EXPECT_EQ(s.back().len_after, 11u);
    EXPECT_EQ(peak_length(s), 11u);
}

TEST(RunBm, TraceMatchesHandTrace) {
    const auto cfg = config(Method::BM, 6, 2, 4);
    const auto w = init_model(cfg.model, 0);
    std::mt19937_64 rng(0);
    const auto r = run_bm(pad_batch({random_prompt(rng, 10, 16)}), cfg, w);
    EXPECT_EQ(r.trace.phases, bm_schedule(10, 6, 2, 4));
    EXPECT_EQ(r.trace.peak_kv_pairs_observed, 6u);
    EXPECT_EQ(r.tokens.cols(), 4);
}

TEST(RunBm, MatchesScheduleOverSmallGrid) {
    std::mt19937_64 rng(1);
    for (std::size_t s_bar : {1u, 5u, 17u, 40u}) {
        for (std::size_t kvmax : {2u, 3u, 8u, 16u}) {
            for (std::size_t p = 1; p < kvmax && p <= 5; ++p) {
                const auto cfg = config(Method::BM, kvmax, p, 6);
                const auto w = init_model(cfg.model, 1);
                const auto r = run_bm(pad_batch({random_prompt(rng, s_bar, 16)}), cfg, w);
                ASSERT_EQ(r.trace.phases, bm_schedule(s_bar, kvmax, p, 6));
            }
        }
    }
}

TEST(RunBm, RejectsBadConfig) {
    const auto w = init_model(tiny(), 0);
    const auto batch = pad_batch({{2, 3, 4}});
    EXPECT_THROW(run_bm(batch, config(Method::BM, 8, 8, 2), w), ConfigError);
    EXPECT_THROW(run_bm(batch, config(Method::BM, 1, 1, 2), w), ConfigError);
    EXPECT_THROW(run_bm(batch, config(Method::ED, 8, 2, 2), w), ConfigError);
    EXPECT_THROW(run_bm(batch, config(Method::BM, 8, 2, 2, 2), w), ConfigError);
}

TEST(RunBm, EvictionEventsAreRecordedPerCache) {
    const auto cfg = config(Method::BM, 6, 2, 4);
    const auto w = init_model(cfg.model, 0);
    RunOptions opts;
    opts.record_evictions = true;
    const auto r = run_bm(pad_batch({{2, 3, 4, 5, 6, 7, 8, 9, 10, 11}}), cfg, w, opts);
    const std::size_t caches = cfg.model.num_layers * cfg.model.num_heads;
    EXPECT_EQ(r.trace.evictions.size(), r.trace.eviction_phases * caches);
    for (const auto& e : r.trace.evictions) {
        EXPECT_EQ(e.event.evicted_kv_ids.size(), 2u);
        EXPECT_EQ(e.event.cache_len_after, e.event.cache_len_before - 2);
    }
}

TEST(RunEd, HandTraceAndCaps) {
    const auto cfg = config(Method::ED, 2, 64, 3);
    const auto w = init_model(cfg.model, 0);
    const auto r = run_ed(pad_batch({{2, 3, 4, 5, 6}}), cfg, w);
    EXPECT_EQ(lengths_of(r.trace.phases), (std::vector<std::size_t>{5, 1, 2, 1, 2, 1}));
    EXPECT_EQ(r.trace.phases, ed_schedule(5, 2, 3));
    EXPECT_EQ(r.trace.peak_kv_pairs_observed, 5u);
    for (std::size_t i = 2; i < r.trace.phases.size(); ++i) EXPECT_LE(r.trace.phases[i].len_after, 2u);
}

TEST(RunEd, DecodeAttentionRowsHaveAtMostTwoEntries) {
    const auto cfg = config(Method::ED, 2, 64, 5);
    const auto w = init_model(cfg.model, 3);
    auto batch = pad_batch({{2, 3, 4, 5, 6, 7}});
    CacheSet<double> caches(1, w.config, 6);
    auto out = forward_block(w, batch.token_ids, 0, caches, batch.pad_counts, true);
    for (std::size_t i = 0; i < caches.count(); ++i) caches.flat(i).evict_all_but_most_recent();
    TokenId next = greedy_token(out.logits.row(0));
    for (int t = 1; t < 5; ++t) {
        TokenMatrix one(1, 1);
        one(0, 0) = next;
        out = forward_block(w, one, 6 + t - 1, caches, batch.pad_counts, true);
        for (const auto& a : out.attention) EXPECT_LE(a.cols(), 2);
        if (caches.length() == 2) {
            for (std::size_t i = 0; i < caches.count(); ++i) caches.flat(i).evict_all_but_most_recent();
        }
        next = greedy_token(out.logits.row(0));
    }
}

TEST(RunFkv, LengthsAndDeterminism) {
    const auto cfg = config(Method::FKV, 0, 64, 6);
    const auto w = init_model(cfg.model, 0);
    const auto batch = pad_batch({{2, 3, 4, 5, 6, 7, 8}});
    const auto a = run_fkv(batch, cfg, w);
    const auto b = run_fkv(batch, cfg, w);
    EXPECT_EQ(a.trace.phases.front().len_after, 7u);
    EXPECT_EQ(a.trace.phases.back().len_after, 7u + 6 - 1);
    EXPECT_EQ(a.tokens, b.tokens);
}

TEST(Equivalence, UnbindingBmEqualsFkvEqualsReference) {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t len = 1 + rng() % 24;
        const std::size_t gen = 1 + rng() % 12;
        auto fkv = config(Method::FKV, 0, 4, gen);
        auto bm = config(Method::BM, len + gen + rng() % 4, 4, gen);
        const auto w = init_model(fkv.model, static_cast<std::uint64_t>(trial));
        const auto prompt = random_prompt(rng, len, 16);
        const auto batch = pad_batch({prompt});
        RunOptions opts;
        opts.collect_logits = true;
        const auto rf = run_fkv(batch, fkv, w, opts);
        const auto rb = run_bm(batch, bm, w, opts);
        const auto ref = full_attention_reference(w, prompt, gen);
        EXPECT_EQ(rb.trace.eviction_phases, 0u);
        EXPECT_EQ(rf.tokens, rb.tokens);
        for (std::size_t t = 0; t < gen; ++t) {
            EXPECT_EQ(rf.tokens(0, static_cast<Eigen::Index>(t)), ref.tokens[t]);
            EXPECT_LT((rf.logits[t].row(0) - ref.logits[t]).cwiseAbs().maxCoeff(), 1e-5);
            EXPECT_EQ(rf.logits[t], rb.logits[t]);
        }
    }
}

TEST(Equivalence, LeftPaddedSampleMatchesPaddedReference) {
    const auto cfg = config(Method::FKV, 0, 4, 5, 2);
    const auto w = init_model(cfg.model, 9);
    const std::vector<TokenId> shorter{4, 5, 6};
    const std::vector<TokenId> longer{2, 3, 4, 5, 6, 7, 8};
    const auto r = run_fkv(pad_batch({shorter, longer}), cfg, w);
    std::vector<TokenId> padded(4, kPadToken);
    padded.insert(padded.end(), shorter.begin(), shorter.end());
    const auto ref = full_attention_reference(w, padded, 5, 4);
    for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(r.tokens(0, static_cast<Eigen::Index>(t)), ref.tokens[t]);
}

TEST(Equivalence, OneTokenPromptOneStep) {
    const auto cfg = config(Method::FKV, 0, 4, 1);
    const auto w = init_model(cfg.model, 2);
    const auto r = run_fkv(pad_batch({{7}}), cfg, w);
    EXPECT_EQ(r.tokens(0, 0), greedy_token(detail::dense_last_logits(w, {7}, 0)));
}

TEST(BatchIndependence, FkvSampleSameAloneOrBatched) {
    std::mt19937_64 rng(8);
    std::vector<std::vector<TokenId>> samples;
    for (int i = 0; i < 4; ++i) samples.push_back(random_prompt(rng, 12, 16));
    auto cfg = config(Method::FKV, 0, 4, 8, 4);
    const auto w = init_model(cfg.model, 5);
    const auto together = run_fkv(pad_batch(samples), cfg, w);
    cfg.b = 1;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto alone = run_fkv(pad_batch({samples[i]}), cfg, w);
        EXPECT_EQ(alone.tokens.row(0), together.tokens.row(static_cast<Eigen::Index>(i)));
    }
}

TEST(OutputCount, EveryMethodEmitsMaxGen) {
    const auto w = init_model(tiny(), 0);
    const auto batch = pad_batch({{2, 3, 4, 5, 6, 7, 8, 9}, {3, 4, 5}});
    for (Method m : {Method::BM, Method::ED, Method::FKV}) {
        for (std::size_t gen : {1u, 2u, 9u}) {
            const auto cfg = config(m, m == Method::ED ? 2 : 4, 2, gen, 2);
            const auto r = run_method(batch, cfg, w);
            EXPECT_EQ(r.tokens.rows(), 2);
            EXPECT_EQ(r.tokens.cols(), static_cast<Eigen::Index>(gen));
            EXPECT_EQ(r.trace.phases, expected_schedule(cfg, 8));
        }
    }
}

TEST(Padding, BmEvictsPadsFirst) {
    auto cfg = config(Method::BM, 6, 2, 2, 2);
    const auto w = init_model(cfg.model, 0);
    RunOptions opts;
    opts.record_evictions = true;
    const auto r = run_bm(pad_batch({{5, 6, 7, 8, 9, 10, 11, 12}, {2, 3, 4, 5, 6, 7, 8, 9, 10, 11}}), cfg, w, opts);
    CacheSet<double> index_helper(2, cfg.model, 1);
    for (const auto& e : r.trace.evictions) {
        const bool first_sample = e.cache_index < index_helper.index(1, 0, 0);
        if (first_sample && e.event.step_index == 1 && e.event.trigger == EvictionTrigger::PrefillBlock) {
            EXPECT_EQ(e.event.evicted_kv_ids, (std::vector<Position>{0, 1}));
        }
    }
}
