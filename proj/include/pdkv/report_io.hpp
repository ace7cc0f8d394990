// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "pdkv/bench.hpp"
#include "pdkv/engine.hpp"
#include "pdkv/memory_model.hpp"

namespace pdkv {

inline constexpr std::string_view kCsvHeader = "method,b,kvmax,agreement,tokens_per_s,peak_kv_pairs,status";

/// One CSV line (no newline). OOM rows leave agreement and tokens_per_s empty.
std::string csv_row(const RunReport& report);
void write_csv(std::ostream& out, const std::vector<RunReport>& reports);

/// One JSON object per line; `kind` is "run".
std::string jsonl_record(const RunReport& report);
void write_jsonl(std::ostream& out, const std::vector<RunReport>& reports);

/// Human-readable lines naming b0, the best ED cell, the FKV baseline, and the best BM cell.
std::string format_summary(const SweepResult& result);
/// The same as a single JSON line with `kind` "summary".
std::string summary_record(const SweepResult& result);

/// Trace phases and, when recorded, per-cache eviction events as JSON lines.
void write_trace_jsonl(std::ostream& out, const GenerationTrace& trace);

void write_plan_csv(std::ostream& out, const std::vector<PlanRow>& rows);
void write_plan_table(std::ostream& out, const std::vector<PlanRow>& rows);

}  // namespace pdkv
