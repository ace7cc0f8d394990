// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "pdkv/dense.hpp"
#include "pdkv/kv_cache.hpp"

namespace pdkv {

enum class PhaseKind { PrefillBlock, Evict, DecodeStep };

inline const char* to_string(PhaseKind kind) {
    switch (kind) {
        case PhaseKind::PrefillBlock: return "prefill_block";
        case PhaseKind::Evict: return "evict";
        case PhaseKind::DecodeStep: return "decode_step";
    }
    return "?";
}

/**
 * One step of a generation schedule with the shared cache length around it.
 *
 * PrefillBlock and DecodeStep process positions [t0, t1). `step` is the decode
 * step t (1-based) for decode phases and for evictions triggered during decode;
 * for prefill evictions it counts evictions so far (1-based).
 */
struct TracePhase {
    PhaseKind kind = PhaseKind::PrefillBlock;
    Position t0 = 0;
    Position t1 = 0;
    std::size_t step = 0;
    EvictionTrigger trigger = EvictionTrigger::PrefillBlock;
    std::size_t len_before = 0;
    std::size_t len_after = 0;

    bool operator==(const TracePhase&) const = default;
};

inline std::string describe(const TracePhase& ph) {
    std::string s = to_string(ph.kind);
    if (ph.kind == PhaseKind::Evict) {
        s += std::string("(") + to_string(ph.trigger) + ", step " + std::to_string(ph.step) + ")";
    } else {
        s += " [" + std::to_string(ph.t0) + "," + std::to_string(ph.t1 - 1) + "]";
    }
    s += " " + std::to_string(ph.len_before) + "->" + std::to_string(ph.len_after);
    return s;
}

inline std::size_t peak_length(const std::vector<TracePhase>& phases) {
    std::size_t peak = 0;
    for (const auto& ph : phases) {
        peak = std::max({peak, ph.len_before, ph.len_after});
    }
    return peak;
}

// The functions below compute schedules from the lengths alone, with no model or
// cache involved. The engine runs its own loops; tests compare the two.

/// Prefill-and-decode eviction: block-wise prefill capped at kvmax, evicting p pairs at the cap.
inline std::vector<TracePhase> bm_schedule(std::size_t s_bar, std::size_t kvmax, std::size_t p, std::size_t max_gen) {
    std::vector<TracePhase> out;
    std::size_t len = 0;
    auto block = [&](std::size_t t0, std::size_t t1, PhaseKind kind, std::size_t step) {
        TracePhase ph;
        ph.kind = kind;
        ph.t0 = static_cast<Position>(t0);
        ph.t1 = static_cast<Position>(t1);
        ph.step = step;
        ph.len_before = len;
        len += t1 - t0;
        ph.len_after = len;
        out.push_back(ph);
    };
    auto evict = [&](EvictionTrigger trigger, std::size_t step) {
        TracePhase ph;
        ph.kind = PhaseKind::Evict;
        ph.trigger = trigger;
        ph.step = step;
        ph.len_before = len;
        len -= std::min(p, len);
        ph.len_after = len;
        out.push_back(ph);
    };

    std::size_t t1 = std::min(s_bar, kvmax);
    block(0, t1, PhaseKind::PrefillBlock, 0);
    std::size_t evictions = 0;
    while (t1 < s_bar) {
        evict(EvictionTrigger::PrefillBlock, ++evictions);
        const std::size_t t0 = t1;
        t1 = std::min(s_bar, t0 + p);
        block(t0, t1, PhaseKind::PrefillBlock, 0);
    }
    for (std::size_t t = 1; t < max_gen; ++t) {
        if (len == kvmax) {
            evict(EvictionTrigger::DecodeStep, t);
        }
        block(s_bar + t - 1, s_bar + t, PhaseKind::DecodeStep, t);
    }
    return out;
}

/// Decoding-only baseline: whole-prompt prefill, then keep only the newest pair whenever the cap is hit.
inline std::vector<TracePhase> ed_schedule(std::size_t s_bar, std::size_t kvmax, std::size_t max_gen) {
    std::vector<TracePhase> out;
    auto collapse = [&](EvictionTrigger trigger, std::size_t step, std::size_t len) {
        TracePhase ph;
        ph.kind = PhaseKind::Evict;
        ph.trigger = trigger;
        ph.step = step;
        ph.len_before = len;
        ph.len_after = std::min<std::size_t>(len, 1);
        out.push_back(ph);
        return ph.len_after;
    };
    TracePhase pre;
    pre.t1 = static_cast<Position>(s_bar);
    pre.len_after = s_bar;
    out.push_back(pre);
    std::size_t len = collapse(EvictionTrigger::PrefillBlock, 1, s_bar);
    for (std::size_t t = 1; t < max_gen; ++t) {
        TracePhase ph;
        ph.kind = PhaseKind::DecodeStep;
        ph.t0 = static_cast<Position>(s_bar + t - 1);
        ph.t1 = ph.t0 + 1;
        ph.step = t;
        ph.len_before = len;
        ph.len_after = ++len;
        out.push_back(ph);
        if (len == kvmax) {
            len = collapse(EvictionTrigger::DecodeStep, t, len);
        }
    }
    return out;
}

/// Full cache: one prefill block and max_gen - 1 decode steps, nothing evicted.
inline std::vector<TracePhase> fkv_schedule(std::size_t s_bar, std::size_t max_gen) {
    std::vector<TracePhase> out;
    TracePhase pre;
    pre.t1 = static_cast<Position>(s_bar);
    pre.len_after = s_bar;
    out.push_back(pre);
    for (std::size_t t = 1; t < max_gen; ++t) {
        TracePhase ph;
        ph.kind = PhaseKind::DecodeStep;
        ph.t0 = static_cast<Position>(s_bar + t - 1);
        ph.t1 = ph.t0 + 1;
        ph.step = t;
        ph.len_before = s_bar + t - 1;
        ph.len_after = s_bar + t;
        out.push_back(ph);
    }
    return out;
}

}  // namespace pdkv
