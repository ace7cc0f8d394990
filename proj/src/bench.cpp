// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#include "pdkv/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <utility>

#include "pdkv/digest.hpp"
#include "pdkv/errors.hpp"

namespace pdkv {

LengthDistribution LengthDistribution::parse(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ':');) {
        parts.push_back(item);
    }
    auto number = [&](const std::string& s) -> std::size_t {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(s, &used);
            if (used == s.size()) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
        throw ConfigError("length distribution: '" + s + "' is not a non-negative integer");
    };
    if (parts.size() == 2 && parts[0] == "fixed") {
        return fixed(number(parts[1]));
    }
    if (parts.size() == 3 && parts[0] == "uniform") {
        return uniform(number(parts[1]), number(parts[2]));
    }
    throw ConfigError("length distribution must be 'fixed:N' or 'uniform:LO:HI', got '" + text + "'");
}

std::string LengthDistribution::to_string() const {
    if (kind == Kind::Fixed) {
        return "fixed:" + std::to_string(lo);
    }
    return "uniform:" + std::to_string(lo) + ":" + std::to_string(hi);
}

void WorkloadSpec::validate() const {
    detail::require<ConfigError>(num_samples >= 1, "workload: num_samples must be >= 1");
    detail::require<ConfigError>(lengths.lo >= 1 && lengths.lo <= lengths.hi,
                                 "workload: lengths need 1 <= lo <= hi");
    detail::require<ConfigError>(max_input_len >= 1, "workload: max_input_len must be >= 1");
}

std::size_t Workload::max_length() const {
    std::size_t m = 0;
    for (const auto& s : samples) m = std::max(m, s.size());
    return m;
}

bool Workload::equal_lengths() const {
    return std::all_of(samples.begin(), samples.end(),
                       [&](const auto& s) { return s.size() == samples.front().size(); });
}

std::uint64_t workload_digest(const std::vector<std::vector<TokenId>>& samples) {
    Fnv1a h;
    h.add(samples.size());
    for (const auto& s : samples) {
        h.add(s.size());
        for (auto tok : s) h.add(tok);
    }
    return h.value();
}

Workload gen_workload(const WorkloadSpec& spec, std::size_t vocab_size) {
    spec.validate();
    detail::require<ConfigError>(vocab_size > static_cast<std::size_t>(kFirstContentToken),
                                 "workload: vocabulary has no content tokens");
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::size_t> length(spec.lengths.lo, spec.lengths.hi);
    std::uniform_int_distribution<TokenId> token(kFirstContentToken, static_cast<TokenId>(vocab_size - 1));
    Workload w;
    w.samples.resize(spec.num_samples);
    for (auto& s : w.samples) {
        const auto n = std::min(length(rng), spec.max_input_len);
        s.resize(n);
        for (auto& tok : s) tok = token(rng);
    }
    w.digest = workload_digest(w.samples);
    return w;
}

std::vector<std::size_t> divisors(std::size_t n) {
    std::vector<std::size_t> out;
    for (std::size_t d = 1; d <= n; ++d) {
        if (n % d == 0) out.push_back(d);
    }
    return out;
}

std::size_t largest_divisor_at_most(std::size_t n, std::size_t limit) {
    for (std::size_t d = std::min(n, limit); d >= 1; --d) {
        if (n % d == 0) return d;
    }
    return 0;
}

namespace {

std::uint64_t hash_trace(Fnv1a& h, const GenerationTrace& trace) {
    for (const auto& ph : trace.phases) {
        h.add(ph.kind).add(ph.t0).add(ph.t1).add(ph.step).add(ph.trigger).add(ph.len_before).add(ph.len_after);
    }
    return h.value();
}

std::size_t vocab_of(const RunReport& r) { return r.config.model.vocab_size; }

}  // namespace

RunReport measure_run(const RunConfig& cfg, const Workload& workload, const ModelWeights<double>& weights,
                      const MeasureOptions& options) {
    cfg.validate();
    RunReport report;
    report.config = cfg;
    report.num_samples = workload.size();
    report.workload_digest = workload.digest;
    const std::size_t s_max = workload.max_length();
    report.predicted_peak_kv_pairs = peak_kv_pairs(cfg.method, s_max, cfg.kvmax, cfg.max_gen);

    if (options.budget && exceeds_budget(*options.budget, cfg.method, cfg.b, s_max, cfg.kvmax, cfg.max_gen)) {
        report.status = RunStatus::Oom;
        report.peak_kv_pairs = report.predicted_peak_kv_pairs;
        return report;
    }
    detail::require<ConfigError>(workload.size() % cfg.b == 0,
                                 "batch size b=" + std::to_string(cfg.b) + " must divide num_samples=" +
                                     std::to_string(workload.size()) +
                                     " so every configuration sees the same samples");

    const bool want_logits = options.keep_logits || options.reference != nullptr;
    RunOptions run_options;
    run_options.collect_logits = want_logits;

    const auto n = static_cast<Eigen::Index>(workload.size());
    const auto gen = static_cast<Eigen::Index>(cfg.max_gen);
    report.outputs.resize(n, gen);
    if (want_logits) {
        report.logits.assign(workload.size(), Matrix<double>(gen, static_cast<Eigen::Index>(cfg.model.vocab_size)));
    }

    Fnv1a trace_hash;
    std::size_t eviction_phases = 0;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t first = 0; first < workload.size(); first += cfg.b) {
        const std::span<const std::vector<TokenId>> slice(workload.samples.data() + first, cfg.b);
        const Batch batch = pad_batch(slice);
        auto result = run_method(batch, cfg, weights, run_options);
        report.outputs.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(cfg.b)) = result.tokens;
        if (want_logits) {
            for (std::size_t t = 0; t < result.logits.size(); ++t) {
                for (std::size_t s = 0; s < cfg.b; ++s) {
                    report.logits[first + s].row(static_cast<Eigen::Index>(t)) =
                        result.logits[t].row(static_cast<Eigen::Index>(s));
                }
            }
        }
        report.peak_kv_pairs = std::max(report.peak_kv_pairs, result.trace.peak_kv_pairs_observed);
        report.prefill_seconds += result.trace.prefill_seconds;
        report.decode_seconds += result.trace.decode_seconds;
        eviction_phases += result.trace.eviction_phases * cfg.b;
        hash_trace(trace_hash, result.trace);
    }
    report.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    for (Eigen::Index r = 0; r < report.outputs.rows(); ++r) {
        for (Eigen::Index c = 0; c < report.outputs.cols(); ++c) trace_hash.add(report.outputs(r, c));
    }
    report.trace_digest = trace_hash.value();
    report.generated_tokens = workload.size() * cfg.max_gen;
    report.tokens_per_second =
        static_cast<double>(report.generated_tokens) / std::max(report.total_seconds, 1e-12);
    report.mean_eviction_events_per_sample =
        static_cast<double>(eviction_phases) / static_cast<double>(workload.size());

    if (options.reference != nullptr) {
        const auto& ref = *options.reference;
        detail::require<ContractError>(ref.tokens.rows() == n && ref.tokens.cols() == gen,
                                       "measure_run: reference does not match the workload shape");
        report.agreement_vs_fkv =
            static_cast<double>((report.outputs.array() == ref.tokens.array()).count()) / static_cast<double>(n * gen);
        double total = 0;
        for (std::size_t s = 0; s < workload.size(); ++s) {
            total += (report.logits[s] - ref.logits[s]).cwiseAbs().sum();
        }
        report.mean_logit_divergence =
            total / static_cast<double>(workload.size() * cfg.max_gen * vocab_of(report));
    } else if (cfg.method == Method::FKV) {
        report.agreement_vs_fkv = 1.0;
        report.mean_logit_divergence = 0.0;
    }
    if (!options.keep_logits) {
        report.logits.clear();
    }
    return report;
}

RunReport measure_run(const RunConfig& cfg, const Workload& workload, const MeasureOptions& options) {
    const auto weights = init_model<double>(cfg.model, cfg.seed);
    return measure_run(cfg, workload, weights, options);
}

FkvReference compute_reference(const RunConfig& cfg, std::size_t b, const Workload& workload,
                               const ModelWeights<double>& weights) {
    RunConfig fkv = cfg;
    fkv.method = Method::FKV;
    fkv.b = b;
    MeasureOptions opts;
    opts.keep_logits = true;
    auto report = measure_run(fkv, workload, weights, opts);
    FkvReference ref;
    ref.b = b;
    ref.tokens = std::move(report.outputs);
    ref.logits = std::move(report.logits);
    return ref;
}

std::vector<std::size_t> kvmax_grid(std::size_t lo, std::size_t hi, std::size_t step) {
    detail::require<ConfigError>(step >= 1, "kvmax grid: step must be >= 1");
    std::vector<std::size_t> out;
    for (std::size_t k = (lo + step - 1) / step * step; k <= hi; k += step) {
        if (k > 0) out.push_back(k);
    }
    return out;
}

std::vector<std::size_t> refine_kvmax(std::size_t center, std::size_t coarse_step) {
    detail::require<ConfigError>(coarse_step >= 2, "kvmax refinement: coarse step must be >= 2");
    const std::size_t half = coarse_step / 2;
    std::vector<std::size_t> out;
    if (center > half) out.push_back(center - half);
    out.push_back(center + half);
    return out;
}

std::vector<GridCell> procedure_grid(const RunConfig& base, const MemorySpec& budget, std::size_t s_bar,
                                     std::size_t num_samples, const std::vector<std::size_t>& bm_kvmax) {
    std::vector<GridCell> cells;
    const std::size_t ed_fit = max_batch(budget, Method::ED, s_bar, 2, base.max_gen);
    const std::size_t b0 = ed_fit + 1;
    const std::size_t b_ed = largest_divisor_at_most(num_samples, ed_fit);
    if (num_samples % b0 == 0) {
        cells.push_back({Method::ED, b0, 2});
    }
    if (b_ed >= 1) {
        cells.push_back({Method::ED, b_ed, 2});
        if (base.p + 1 > 2) cells.push_back({Method::ED, b_ed, base.p + 1});
        cells.push_back({Method::FKV, b_ed, 0});
    }
    for (auto kv : bm_kvmax) {
        if (kv <= base.p) continue;
        const auto b = largest_divisor_at_most(num_samples, max_batch(budget, Method::BM, s_bar, kv, base.max_gen));
        if (b >= 1) cells.push_back({Method::BM, b, kv});
    }
    return cells;
}

SweepResult sweep(const SweepSpec& spec, const Workload& workload) {
    detail::require<InputError>(!spec.cells.empty(), "sweep: grid is empty");
    spec.budget.validate();
    for (const auto& c : spec.cells) {
        detail::require<ConfigError>(c.b >= 1 && workload.size() % c.b == 0,
                                     "sweep: batch size b=" + std::to_string(c.b) + " must divide num_samples=" +
                                         std::to_string(workload.size()));
    }
    const auto weights = init_model<double>(spec.base.model, spec.base.seed);
    const std::size_t s_max = workload.max_length();

    // Without padding a sample's full-cache output does not depend on its batch, so one reference serves all b.
    std::map<std::size_t, FkvReference> references;
    auto reference_for = [&](std::size_t b) -> const FkvReference& {
        const std::size_t key = workload.equal_lengths() ? 0 : b;
        auto it = references.find(key);
        if (it == references.end()) {
            it = references.emplace(key, compute_reference(spec.base, b, workload, weights)).first;
        }
        return it->second;
    };

    SweepResult result;
    for (const auto& cell : spec.cells) {
        RunConfig cfg = spec.base;
        cfg.method = cell.method;
        cfg.b = cell.b;
        if (cell.method != Method::FKV) cfg.kvmax = cell.kvmax;
        MeasureOptions opts;
        opts.budget = spec.budget;
        if (!exceeds_budget(spec.budget, cfg.method, cfg.b, s_max, cfg.kvmax, cfg.max_gen)) {
            opts.reference = &reference_for(cfg.b);
        }
        result.reports.push_back(measure_run(cfg, workload, weights, opts));
    }

    const bool has_ed = std::any_of(spec.cells.begin(), spec.cells.end(),
                                    [](const GridCell& c) { return c.method == Method::ED; });
    if (has_ed) {
        result.b0 = max_batch(spec.budget, Method::ED, s_max, 2, spec.base.max_gen) + 1;
    }
    auto best = [&](Method m, double min_agreement) {
        std::optional<std::size_t> idx;
        for (std::size_t i = 0; i < result.reports.size(); ++i) {
            const auto& r = result.reports[i];
            if (r.config.method != m || r.status != RunStatus::Ok || r.agreement_vs_fkv < min_agreement) continue;
            if (!idx || r.tokens_per_second > result.reports[*idx].tokens_per_second) idx = i;
        }
        return idx;
    };
    result.ed_best = best(Method::ED, 0.0);
    result.fkv_baseline = best(Method::FKV, 0.0);
    result.bm_best = best(Method::BM, spec.min_agreement);
    return result;
}

std::vector<std::pair<std::size_t, std::size_t>> oom_monotonicity_violations(const SweepResult& result) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const auto& rs = result.reports;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        if (rs[i].status != RunStatus::Oom) continue;
        for (std::size_t j = 0; j < rs.size(); ++j) {
            const auto& a = rs[i].config;
            const auto& b = rs[j].config;
            if (a.method != b.method || rs[j].status == RunStatus::Oom) continue;
            const bool kv_ge = a.method == Method::FKV || b.kvmax >= a.kvmax;
            if (b.b >= a.b && kv_ge) out.emplace_back(i, j);
        }
    }
    return out;
}

}  // namespace pdkv
