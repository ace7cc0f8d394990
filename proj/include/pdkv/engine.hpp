// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pdkv/dense.hpp"
#include "pdkv/errors.hpp"
#include "pdkv/kv_cache.hpp"
#include "pdkv/method.hpp"
#include "pdkv/model.hpp"
#include "pdkv/schedule.hpp"

namespace pdkv {

/// Left-padded token matrix for one batch.
struct Batch {
    TokenMatrix token_ids;               // b x s_bar
    std::vector<Position> pad_counts;    // leading pad slots per row
    std::vector<std::size_t> lengths;    // unpadded s_j

    std::size_t size() const { return lengths.size(); }
    std::size_t padded_length() const { return static_cast<std::size_t>(token_ids.cols()); }
    bool is_pad(std::size_t row, Position pos) const { return pos < pad_counts[row]; }
};

/// Adds s_bar - s_j pad tokens to the left of sample j.
inline Batch pad_batch(std::span<const std::vector<TokenId>> samples) {
    detail::require<InputError>(!samples.empty(), "pad_batch: batch must contain at least one sample");
    std::size_t s_bar = 0;
    for (const auto& s : samples) {
        detail::require<InputError>(!s.empty(), "pad_batch: empty sample");
        s_bar = std::max(s_bar, s.size());
    }
    Batch batch;
    batch.token_ids = TokenMatrix::Constant(static_cast<Eigen::Index>(samples.size()),
                                            static_cast<Eigen::Index>(s_bar), kPadToken);
    for (std::size_t j = 0; j < samples.size(); ++j) {
        const auto pads = s_bar - samples[j].size();
        batch.pad_counts.push_back(static_cast<Position>(pads));
        batch.lengths.push_back(samples[j].size());
        for (std::size_t i = 0; i < samples[j].size(); ++i) {
            batch.token_ids(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(pads + i)) = samples[j][i];
        }
    }
    return batch;
}

inline Batch pad_batch(const std::vector<std::vector<TokenId>>& samples) {
    return pad_batch(std::span<const std::vector<TokenId>>(samples));
}

struct RunConfig {
    Method method = Method::BM;
    std::size_t b = 1;
    std::size_t kvmax = 1024;  // ignored by FKV
    std::size_t p = 64;        // BM only
    std::size_t max_gen = 512;
    std::uint64_t seed = 0;
    ModelConfig model;

    EvictionPolicy policy() const {
        switch (method) {
            case Method::BM: return EvictionPolicy::average_attention(p);
            case Method::ED: return EvictionPolicy::most_recent_only();
            case Method::FKV: return EvictionPolicy::no_eviction();
        }
        return EvictionPolicy::no_eviction();
    }

    void validate() const {
        model.validate();
        detail::require<ConfigError>(b >= 1, "run: batch size b must be >= 1");
        detail::require<ConfigError>(max_gen >= 1, "run: max_gen must be >= 1");
        if (method != Method::FKV) {
            detail::require<ConfigError>(kvmax >= 2, "run: kvmax must be >= 2 for " + std::string(to_string(method)));
        }
        policy().validate(kvmax);
    }
};

/// Defaults for the decoding-only baseline: the smallest non-empty decode cache.
inline RunConfig ed_config(RunConfig cfg) {
    cfg.method = Method::ED;
    cfg.kvmax = 2;
    return cfg;
}

struct GenerationTrace {
    Method method = Method::FKV;
    std::vector<TracePhase> phases;
    std::size_t peak_kv_pairs_observed = 0;
    std::size_t eviction_phases = 0;
    // Per-cache detail, filled only when RunOptions::record_evictions is set.
    // `cache_index` follows CacheSet::index.
    struct CacheEviction {
        std::size_t cache_index = 0;
        EvictionEvent event;
    };
    std::vector<CacheEviction> evictions;
    double prefill_seconds = 0;
    double decode_seconds = 0;
};

struct RunOptions {
    bool collect_logits = false;
    bool record_evictions = false;
};

template <class Scalar = double>
struct RunResult {
    TokenMatrix tokens;                  // b x max_gen
    std::vector<Matrix<Scalar>> logits;  // per generated index, b x vocab (collect_logits only)
    GenerationTrace trace;
};

namespace detail {

template <class Scalar>
class Runner {
public:
    using Clock = std::chrono::steady_clock;

    Runner(const Batch& batch, const RunConfig& cfg, const ModelWeights<Scalar>& weights, const RunOptions& options,
           std::size_t capacity)
        : batch_(batch),
          weights_(weights),
          options_(options),
          caches_(batch.size(), weights.config, capacity,
                  capacity == KVCache<Scalar>::kUnbounded ? batch.padded_length() + cfg.max_gen : 0) {
        cfg.validate();
        require<ConfigError>(cfg.model == weights.config, "run: RunConfig.model does not match the weights");
        require<ConfigError>(batch.size() == cfg.b, "run: batch holds " + std::to_string(batch.size()) +
                                                        " samples but b=" + std::to_string(cfg.b));
        result_.tokens.resize(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(cfg.max_gen));
        result_.trace.method = cfg.method;
    }

    std::size_t s_bar() const { return batch_.padded_length(); }
    std::size_t length() const { return caches_.length(); }

    /// Prefill positions [t0, t1) from the prompt.
    BlockOutput<Scalar> prefill(std::size_t t0, std::size_t t1, bool record_stats) {
        const auto start = Clock::now();
        auto out = run_block(batch_.token_ids.middleCols(static_cast<Eigen::Index>(t0),
                                                         static_cast<Eigen::Index>(t1 - t0)),
                             t0, PhaseKind::PrefillBlock, 0, record_stats);
        result_.trace.prefill_seconds += seconds_since(start);
        return out;
    }

    /// Decode step t: process the token generated at index t - 1 and emit index t.
    void decode(std::size_t t, bool record_stats) {
        const auto start = Clock::now();
        const TokenMatrix input = result_.tokens.col(static_cast<Eigen::Index>(t - 1));
        auto out = run_block(input, s_bar() + t - 1, PhaseKind::DecodeStep, t, record_stats);
        emit(out.logits, t);
        result_.trace.decode_seconds += seconds_since(start);
    }

    void emit(const Matrix<Scalar>& logits, std::size_t index) {
        const auto next = greedy_next(logits);
        for (std::size_t s = 0; s < next.size(); ++s) {
            result_.tokens(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(index)) = next[s];
        }
        if (options_.collect_logits) {
            result_.logits.push_back(logits);
        }
    }

    void evict_smallest(std::size_t p, Position curr_id, EvictionTrigger trigger, std::size_t step) {
        timed(trigger, [&] {
            evict_each(trigger, step, [&](KVCache<Scalar>& c) { return c.evict_smallest(p, curr_id); });
        });
    }

    void evict_all_but_most_recent(EvictionTrigger trigger, std::size_t step) {
        timed(trigger, [&] {
            evict_each(trigger, step, [](KVCache<Scalar>& c) { return c.evict_all_but_most_recent(); });
        });
    }

    RunResult<Scalar> finish() { return std::move(result_); }

private:
    static double seconds_since(Clock::time_point start) {
        return std::chrono::duration<double>(Clock::now() - start).count();
    }

    template <class F>
    void timed(EvictionTrigger trigger, F&& f) {
        const auto start = Clock::now();
        f();
        (trigger == EvictionTrigger::PrefillBlock ? result_.trace.prefill_seconds : result_.trace.decode_seconds) +=
            seconds_since(start);
    }

    BlockOutput<Scalar> run_block(const Eigen::Ref<const TokenMatrix>& tokens, std::size_t t0, PhaseKind kind,
                                  std::size_t step, bool record_stats) {
        TracePhase ph;
        ph.kind = kind;
        ph.t0 = static_cast<Position>(t0);
        ph.t1 = static_cast<Position>(t0) + tokens.cols();
        ph.step = step;
        ph.len_before = caches_.length();
        auto out = forward_block(weights_, tokens, static_cast<Position>(t0), caches_, batch_.pad_counts, record_stats);
        if (record_stats) {
            for (std::size_t i = 0; i < caches_.count(); ++i) {
                caches_.flat(i).record_attention(out.attention[i]);
            }
        }
        ph.len_after = caches_.length();
        observe(ph);
        return out;
    }

    template <class F>
    void evict_each(EvictionTrigger trigger, std::size_t step, F&& evict) {
        TracePhase ph;
        ph.kind = PhaseKind::Evict;
        ph.trigger = trigger;
        ph.step = step;
        ph.len_before = caches_.length();
        for (std::size_t i = 0; i < caches_.count(); ++i) {
            auto event = evict(caches_.flat(i));
            if (options_.record_evictions) {
                event.trigger = trigger;
                event.step_index = step;
                result_.trace.evictions.push_back({i, std::move(event)});
            }
        }
        ph.len_after = caches_.length();
        ++result_.trace.eviction_phases;
        observe(ph);
    }

    void observe(const TracePhase& ph) {
        auto& trace = result_.trace;
        trace.peak_kv_pairs_observed = std::max({trace.peak_kv_pairs_observed, ph.len_before, ph.len_after});
        trace.phases.push_back(ph);
    }

    const Batch& batch_;
    const ModelWeights<Scalar>& weights_;
    RunOptions options_;
    CacheSet<Scalar> caches_;
    RunResult<Scalar> result_;
};

inline void require_method(const RunConfig& cfg, Method expected) {
    require<ConfigError>(cfg.method == expected, std::string("run: expected method ") + to_string(expected) +
                                                     ", got " + to_string(cfg.method));
}

}  // namespace detail

/**
 * Prefill-and-decode eviction with the average-attention rule.
 *
 * Prefill processes min(s_bar, kvmax) tokens, then alternates "evict p pairs,
 * process the next min(p, remaining) tokens". Decoding evicts p pairs whenever
 * the cache sits at kvmax before a step. The first generated token comes from
 * the last prefill block, so there are max_gen - 1 decode steps.
 */
template <class Scalar>
RunResult<Scalar> run_bm(const Batch& batch, const RunConfig& cfg, const ModelWeights<Scalar>& weights,
                         const RunOptions& options = {}) {
    detail::require_method(cfg, Method::BM);
    detail::Runner<Scalar> run(batch, cfg, weights, options, cfg.kvmax);
    const std::size_t s_bar = run.s_bar();

    std::size_t t1 = std::min(s_bar, cfg.kvmax);
    auto out = run.prefill(0, t1, true);
    std::size_t evictions = 0;
    while (t1 < s_bar) {
        run.evict_smallest(cfg.p, static_cast<Position>(t1) - 1, EvictionTrigger::PrefillBlock, ++evictions);
        const std::size_t t0 = t1;
        t1 = std::min(s_bar, t0 + cfg.p);
        out = run.prefill(t0, t1, true);
    }
    run.emit(out.logits, 0);

    for (std::size_t t = 1; t < cfg.max_gen; ++t) {
        if (run.length() == cfg.kvmax) {
            run.evict_smallest(cfg.p, static_cast<Position>(s_bar + t - 1), EvictionTrigger::DecodeStep, t);
        }
        run.decode(t, true);
    }
    return run.finish();
}

/**
 * Extreme decoding-only eviction: the whole prompt in one block (peak s_bar
 * pairs), then collapse to the newest pair; during decoding collapse again each
 * time the cache reaches kvmax.
 */
template <class Scalar>
RunResult<Scalar> run_ed(const Batch& batch, const RunConfig& cfg, const ModelWeights<Scalar>& weights,
                         const RunOptions& options = {}) {
    detail::require_method(cfg, Method::ED);
    detail::Runner<Scalar> run(batch, cfg, weights, options, std::max(batch.padded_length(), cfg.kvmax));
    const std::size_t s_bar = run.s_bar();

    auto out = run.prefill(0, s_bar, false);
    run.evict_all_but_most_recent(EvictionTrigger::PrefillBlock, 1);
    run.emit(out.logits, 0);

    for (std::size_t t = 1; t < cfg.max_gen; ++t) {
        run.decode(t, false);
        if (run.length() == cfg.kvmax) {
            run.evict_all_but_most_recent(EvictionTrigger::DecodeStep, t);
        }
    }
    return run.finish();
}

/// Full cache: single-block prefill and no eviction. The accuracy reference.
template <class Scalar>
RunResult<Scalar> run_fkv(const Batch& batch, const RunConfig& cfg, const ModelWeights<Scalar>& weights,
                          const RunOptions& options = {}) {
    detail::require_method(cfg, Method::FKV);
    detail::Runner<Scalar> run(batch, cfg, weights, options, batch.padded_length() + cfg.max_gen - 1);
    auto out = run.prefill(0, run.s_bar(), false);
    run.emit(out.logits, 0);
    for (std::size_t t = 1; t < cfg.max_gen; ++t) {
        run.decode(t, false);
    }
    return run.finish();
}

template <class Scalar>
RunResult<Scalar> run_method(const Batch& batch, const RunConfig& cfg, const ModelWeights<Scalar>& weights,
                             const RunOptions& options = {}) {
    switch (cfg.method) {
        case Method::BM: return run_bm(batch, cfg, weights, options);
        case Method::ED: return run_ed(batch, cfg, weights, options);
        case Method::FKV: return run_fkv(batch, cfg, weights, options);
    }
    throw ConfigError("run: unknown method");
}

/// Schedule the engine is expected to follow for `cfg` on a batch of padded length s_bar.
inline std::vector<TracePhase> expected_schedule(const RunConfig& cfg, std::size_t s_bar) {
    switch (cfg.method) {
        case Method::BM: return bm_schedule(s_bar, cfg.kvmax, cfg.p, cfg.max_gen);
        case Method::ED: return ed_schedule(s_bar, cfg.kvmax, cfg.max_gen);
        case Method::FKV: return fkv_schedule(s_bar, cfg.max_gen);
    }
    return {};
}

template <class Scalar = double>
struct ReferenceOutput {
    std::vector<TokenId> tokens;
    std::vector<RowVector<Scalar>> logits;  // one per generated token
};

namespace detail {

// Last-position logits of the whole sequence, recomputed densely with no cache.
// Deliberately shares no code with forward_block/attention_forward.
template <class Scalar>
RowVector<Scalar> dense_last_logits(const ModelWeights<Scalar>& w, const std::vector<TokenId>& seq,
                                    std::size_t pad_count) {
    const auto& cfg = w.config;
    const auto n = static_cast<Eigen::Index>(seq.size());
    const auto hidden = static_cast<Eigen::Index>(cfg.hidden_dim());
    const auto d = static_cast<Eigen::Index>(cfg.head_dim);
    auto norm = [&](const Matrix<Scalar>& x) {
        Matrix<Scalar> y = x;
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            Scalar ss = 0;
            for (Eigen::Index c = 0; c < x.cols(); ++c) ss += x(r, c) * x(r, c);
            y.row(r) /= std::sqrt(ss / static_cast<Scalar>(x.cols()) + Scalar(1e-6));
        }
        return y;
    };
    require<ContractError>(seq.size() <= cfg.max_position, "reference: sequence longer than max_position");
    Matrix<Scalar> x(n, hidden);
    for (Eigen::Index i = 0; i < n; ++i) {
        x.row(i) = w.embedding.row(seq[static_cast<std::size_t>(i)]) + w.positional.row(i);
    }
    const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
    for (const auto& lw : w.layers) {
        const Matrix<Scalar> h = norm(x);
        const Matrix<Scalar> q = h * lw.wq, k = h * lw.wk, v = h * lw.wv;
        Matrix<Scalar> mixed = Matrix<Scalar>::Zero(n, hidden);
        for (std::size_t head = 0; head < cfg.num_heads; ++head) {
            const auto col = static_cast<Eigen::Index>(head) * d;
            Matrix<Scalar> s = q.middleCols(col, d) * k.middleCols(col, d).transpose() /
                               std::sqrt(static_cast<Scalar>(d));
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < n; ++j) {
                    if (j > i || j < static_cast<Eigen::Index>(pad_count)) s(i, j) = neg_inf;
                }
                const Scalar mx = s.row(i).maxCoeff();
                if (mx == neg_inf) {
                    s.row(i).setZero();
                    continue;
                }
                s.row(i) = (s.row(i).array() - mx).exp().matrix();
                s.row(i) /= s.row(i).sum();
            }
            mixed.middleCols(col, d) = s * v.middleCols(col, d);
        }
        x += mixed * lw.wo;
        x += (norm(x) * lw.w1).cwiseMax(Scalar(0)) * lw.w2;
    }
    return norm(x.bottomRows(1)) * w.unembed;
}

}  // namespace detail

/**
 * Greedy generation that recomputes the whole growing sequence every step.
 *
 * `sequence` may begin with `pad_count` left-pad slots, which are masked exactly
 * as in the cached engine. Ground truth for the full-cache run.
 */
template <class Scalar>
ReferenceOutput<Scalar> full_attention_reference(const ModelWeights<Scalar>& weights, std::vector<TokenId> sequence,
                                                 std::size_t max_gen, std::size_t pad_count = 0) {
    detail::require<InputError>(sequence.size() > pad_count, "reference: prompt has no real tokens");
    ReferenceOutput<Scalar> out;
    for (std::size_t t = 0; t < max_gen; ++t) {
        auto logits = detail::dense_last_logits(weights, sequence, pad_count);
        const TokenId next = greedy_token(logits);
        out.tokens.push_back(next);
        out.logits.push_back(std::move(logits));
        sequence.push_back(next);
    }
    return out;
}

}  // namespace pdkv
