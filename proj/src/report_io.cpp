// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#include "pdkv/report_io.hpp"

#include <cstdio>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace pdkv {
namespace {

using nlohmann::json;

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string kvmax_text(const RunReport& r) {
    return r.config.method == Method::FKV ? "N/A" : std::to_string(r.config.kvmax);
}

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

json cell_json(const SweepResult& result, const std::optional<std::size_t>& idx) {
    if (!idx) return nullptr;
    const auto& r = result.reports[*idx];
    return {{"index", *idx},
            {"method", to_string(r.config.method)},
            {"b", r.config.b},
            {"kvmax", kvmax_text(r)},
            {"agreement", r.agreement_vs_fkv},
            {"tokens_per_s", r.tokens_per_second}};
}

std::string cell_text(const SweepResult& result, const std::optional<std::size_t>& idx) {
    if (!idx) return "n/a";
    const auto& r = result.reports[*idx];
    return std::string(to_string(r.config.method)) + " b=" + std::to_string(r.config.b) + " kvmax=" + kvmax_text(r) +
           " agreement=" + fixed(r.agreement_vs_fkv, 4) + " tokens/s=" + fixed(r.tokens_per_second, 2);
}

}  // namespace

std::string csv_row(const RunReport& r) {
    const bool ok = r.status == RunStatus::Ok;
    std::string row = to_string(r.config.method);
    row += "," + std::to_string(r.config.b);
    row += "," + kvmax_text(r);
    row += "," + (ok ? fixed(r.agreement_vs_fkv, 6) : std::string());
    row += "," + (ok ? fixed(r.tokens_per_second, 3) : std::string());
    row += "," + std::to_string(r.peak_kv_pairs);
    row += ",";
    row += to_string(r.status);
    return row;
}

void write_csv(std::ostream& out, const std::vector<RunReport>& reports) {
    out << kCsvHeader << '\n';
    for (const auto& r : reports) out << csv_row(r) << '\n';
}

std::string jsonl_record(const RunReport& r) {
    const auto& c = r.config;
    json j = {{"kind", "run"},
              {"method", to_string(c.method)},
              {"b", c.b},
              {"kvmax", kvmax_text(r)},
              {"p", c.p},
              {"max_gen", c.max_gen},
              {"seed", c.seed},
              {"status", to_string(r.status)},
              {"num_samples", r.num_samples},
              {"peak_kv_pairs", r.peak_kv_pairs},
              {"predicted_peak_kv_pairs", r.predicted_peak_kv_pairs},
              {"workload_digest", hex(r.workload_digest)}};
    if (r.status == RunStatus::Ok) {
        j["agreement"] = r.agreement_vs_fkv;
        j["mean_logit_divergence"] = r.mean_logit_divergence;
        j["tokens_per_s"] = r.tokens_per_second;
        j["total_seconds"] = r.total_seconds;
        j["prefill_seconds"] = r.prefill_seconds;
        j["decode_seconds"] = r.decode_seconds;
        j["generated_tokens"] = r.generated_tokens;
        j["mean_eviction_events_per_sample"] = r.mean_eviction_events_per_sample;
        j["trace_digest"] = hex(r.trace_digest);
        json outputs = json::array();
        for (Eigen::Index s = 0; s < r.outputs.rows(); ++s) {
            std::vector<TokenId> row(r.outputs.row(s).begin(), r.outputs.row(s).end());
            outputs.push_back(row);
        }
        j["outputs"] = std::move(outputs);
    }
    return j.dump();
}

void write_jsonl(std::ostream& out, const std::vector<RunReport>& reports) {
    for (const auto& r : reports) out << jsonl_record(r) << '\n';
}

std::string format_summary(const SweepResult& result) {
    std::ostringstream os;
    os << "b0: " << (result.b0 ? std::to_string(*result.b0) : std::string("n/a")) << '\n';
    os << "ED-best: " << cell_text(result, result.ed_best) << '\n';
    os << "FKV-baseline: " << cell_text(result, result.fkv_baseline) << '\n';
    os << "BM-best: " << cell_text(result, result.bm_best) << '\n';
    return os.str();
}

std::string summary_record(const SweepResult& result) {
    json j = {{"kind", "summary"},
              {"b0", result.b0 ? json(*result.b0) : json(nullptr)},
              {"ed_best", cell_json(result, result.ed_best)},
              {"fkv_baseline", cell_json(result, result.fkv_baseline)},
              {"bm_best", cell_json(result, result.bm_best)}};
    return j.dump();
}

void write_trace_jsonl(std::ostream& out, const GenerationTrace& trace) {
    for (const auto& ph : trace.phases) {
        json j = {{"kind", to_string(ph.kind)}, {"len_before", ph.len_before}, {"len_after", ph.len_after}};
        if (ph.kind == PhaseKind::Evict) {
            j["trigger"] = to_string(ph.trigger);
            j["step"] = ph.step;
        } else {
            j["t0"] = ph.t0;
            j["t1"] = ph.t1;
            if (ph.kind == PhaseKind::DecodeStep) j["step"] = ph.step;
        }
        out << j.dump() << '\n';
    }
    for (const auto& e : trace.evictions) {
        json j = {{"kind", "eviction_event"},
                  {"cache", e.cache_index},
                  {"trigger", to_string(e.event.trigger)},
                  {"step", e.event.step_index},
                  {"cache_len_before", e.event.cache_len_before},
                  {"cache_len_after", e.event.cache_len_after},
                  {"evicted_kv_ids", e.event.evicted_kv_ids}};
        out << j.dump() << '\n';
    }
}

void write_plan_csv(std::ostream& out, const std::vector<PlanRow>& rows) {
    out << "method,kvmax,peak_pairs,bytes_per_sample,max_b,idle_pairs\n";
    for (const auto& r : rows) {
        out << to_string(r.method) << ',' << (r.method == Method::FKV ? std::string("N/A") : std::to_string(r.kvmax))
            << ',' << r.peak_pairs << ',' << r.bytes_per_sample << ',' << r.max_b << ',' << r.idle_pairs << '\n';
    }
}

void write_plan_table(std::ostream& out, const std::vector<PlanRow>& rows) {
    out << std::left << std::setw(8) << "method" << std::setw(8) << "kvmax" << std::setw(12) << "peak_pairs"
        << std::setw(18) << "bytes_per_sample" << std::setw(8) << "max_b" << "idle_pairs\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(8) << to_string(r.method) << std::setw(8)
            << (r.method == Method::FKV ? std::string("N/A") : std::to_string(r.kvmax)) << std::setw(12)
            << r.peak_pairs << std::setw(18) << r.bytes_per_sample << std::setw(8) << r.max_b << r.idle_pairs
            << '\n';
    }
}

}  // namespace pdkv
