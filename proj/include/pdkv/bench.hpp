// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pdkv/dense.hpp"
#include "pdkv/engine.hpp"
#include "pdkv/memory_model.hpp"
#include "pdkv/model.hpp"

namespace pdkv {

struct LengthDistribution {
    enum class Kind { Fixed, Uniform };
    Kind kind = Kind::Fixed;
    std::size_t lo = 128;
    std::size_t hi = 128;

    static LengthDistribution fixed(std::size_t n) { return {Kind::Fixed, n, n}; }
    static LengthDistribution uniform(std::size_t lo, std::size_t hi) { return {Kind::Uniform, lo, hi}; }

    /// "fixed:N" or "uniform:LO:HI".
    static LengthDistribution parse(const std::string& text);
    std::string to_string() const;
};

struct WorkloadSpec {
    std::size_t num_samples = 96;
    LengthDistribution lengths;
    std::size_t max_input_len = 3584;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Workload {
    std::vector<std::vector<TokenId>> samples;
    std::uint64_t digest = 0;

    std::size_t size() const { return samples.size(); }
    std::size_t max_length() const;
    bool equal_lengths() const;
};

/// Content tokens drawn uniformly from [2, vocab_size); lengths per the distribution, capped at max_input_len.
Workload gen_workload(const WorkloadSpec& spec, std::size_t vocab_size);

std::uint64_t workload_digest(const std::vector<std::vector<TokenId>>& samples);

/// Batch sizes that divide n, ascending.
std::vector<std::size_t> divisors(std::size_t n);

/// Largest divisor of n that is <= limit, or 0.
std::size_t largest_divisor_at_most(std::size_t n, std::size_t limit);

enum class RunStatus { Ok, Oom };

inline const char* to_string(RunStatus s) { return s == RunStatus::Ok ? "ok" : "oom"; }

/// Outputs of a full-cache pass used to score other runs.
struct FkvReference {
    std::size_t b = 0;
    TokenMatrix tokens;                 // num_samples x max_gen
    std::vector<Matrix<double>> logits;  // per sample, max_gen x vocab
};

struct RunReport {
    RunConfig config;
    RunStatus status = RunStatus::Ok;
    std::size_t num_samples = 0;
    std::size_t generated_tokens = 0;
    double tokens_per_second = 0;
    double total_seconds = 0;
    double prefill_seconds = 0;
    double decode_seconds = 0;
    std::size_t peak_kv_pairs = 0;            // observed; predicted for OOM rows
    std::size_t predicted_peak_kv_pairs = 0;  // memory model at the workload's longest prompt
    double agreement_vs_fkv = 0;
    double mean_logit_divergence = 0;
    double mean_eviction_events_per_sample = 0;
    std::uint64_t workload_digest = 0;
    std::uint64_t trace_digest = 0;
    TokenMatrix outputs;                 // num_samples x max_gen
    std::vector<Matrix<double>> logits;  // filled when MeasureOptions::keep_logits
};

struct MeasureOptions {
    std::optional<MemorySpec> budget;
    const FkvReference* reference = nullptr;
    bool keep_logits = false;
};

/**
 * Runs every batch of the workload in order and times the whole pass.
 *
 * A configuration the memory model rejects is reported as OOM without running.
 * Agreement is the fraction of generated positions equal to the reference
 * (a full-cache run is its own reference when none is given).
 */
RunReport measure_run(const RunConfig& cfg, const Workload& workload, const ModelWeights<double>& weights,
                      const MeasureOptions& options = {});

RunReport measure_run(const RunConfig& cfg, const Workload& workload, const MeasureOptions& options = {});

/// Full-cache outputs batched exactly like a run with batch size b.
FkvReference compute_reference(const RunConfig& cfg, std::size_t b, const Workload& workload,
                               const ModelWeights<double>& weights);

struct GridCell {
    Method method = Method::BM;
    std::size_t b = 1;
    std::size_t kvmax = 0;

    bool operator==(const GridCell&) const = default;
};

struct SweepSpec {
    std::vector<GridCell> cells;
    RunConfig base;  // p, max_gen, seed, model
    MemorySpec budget;
    double min_agreement = 0.0;
};

struct SweepResult {
    std::vector<RunReport> reports;  // grid order
    std::optional<std::size_t> b0;   // smallest b at which ED with kvmax = 2 exceeds the budget
    std::optional<std::size_t> ed_best;
    std::optional<std::size_t> fkv_baseline;
    std::optional<std::size_t> bm_best;
};

SweepResult sweep(const SweepSpec& spec, const Workload& workload);

/// Multiples of `step` in [lo, hi].
std::vector<std::size_t> kvmax_grid(std::size_t lo, std::size_t hi, std::size_t step);

/// Second-stage candidates halfway between `center` and its coarse neighbours.
std::vector<std::size_t> refine_kvmax(std::size_t center, std::size_t coarse_step);

/**
 * Grid following the comparison procedure: find b0 for ED at kvmax = 2, run ED
 * (kvmax 2 and p + 1) and FKV at the largest admissible b < b0, and BM at the
 * largest admissible b for each kvmax candidate. Only batch sizes dividing
 * num_samples are used. The b0 cell itself is included as an OOM row when it
 * divides num_samples.
 */
std::vector<GridCell> procedure_grid(const RunConfig& base, const MemorySpec& budget, std::size_t s_bar,
                                     std::size_t num_samples, const std::vector<std::size_t>& bm_kvmax);

/// Pairs of cells (i, j) where i is OOM but a cell needing no more memory (j) is not.
std::vector<std::pair<std::size_t, std::size_t>> oom_monotonicity_violations(const SweepResult& result);

}  // namespace pdkv
