// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

// pdkv: run, sweep, plan, and trace the toy KV-eviction engine.
//
// Exit codes: 0 success, 2 usage, 3 configuration, 4 simulated out-of-memory, 1 anything else.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pdkv/bench.hpp"
#include "pdkv/errors.hpp"
#include "pdkv/memory_model.hpp"
#include "pdkv/report_io.hpp"
#include "pdkv/run_config_file.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitOom = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Overrides {
    std::string config_path;
    std::optional<std::string> method;
    std::optional<std::size_t> b;
    std::optional<std::size_t> kvmax;
    std::optional<std::size_t> p;
    std::optional<std::size_t> max_gen;
    std::optional<std::uint64_t> seed;
    std::optional<long long> budget_bytes;
    std::string output = "-";
    std::string format = "csv";
    std::string echo_config;
};

void add_common(CLI::App* cmd, Overrides& o, std::vector<std::string> formats = {"csv", "jsonl"}) {
    cmd->add_option("--config", o.config_path, "INI profile; omitted keys keep the built-in defaults");
    cmd->add_option("--method", o.method, "bm | ed | fkv");
    cmd->add_option("--b", o.b, "batch size");
    cmd->add_option("--kvmax", o.kvmax, "KV cache cap (BM, ED)");
    cmd->add_option("--p", o.p, "pairs evicted per BM eviction");
    cmd->add_option("--max-gen", o.max_gen, "tokens generated per sample");
    cmd->add_option("--seed", o.seed, "model and workload seed (default: PDKV_SEED or 0)");
    cmd->add_option("--budget-bytes", o.budget_bytes, "simulated KV memory budget");
    cmd->add_option("--output,-o", o.output, "output path, '-' for stdout");
    cmd->add_option("--format", o.format, "output format")->check(CLI::IsMember(formats));
    cmd->add_option("--echo-config", o.echo_config, "write the effective profile to this path ('-' for stderr)");
}

pdkv::Profile effective_profile(const Overrides& o) {
    auto profile = pdkv::default_profile();
    if (const char* env = std::getenv("PDKV_SEED"); env != nullptr && *env != '\0') {
        std::istringstream in("[run]\nseed = " + std::string(env) + "\n[workload]\nseed = " + env + "\n");
        pdkv::apply_ini(profile, in);
    }
    if (!o.config_path.empty()) {
        pdkv::apply_ini_file(profile, o.config_path);
    }
    if (o.method) {
        const auto m = pdkv::parse_method(*o.method);
        if (!m) throw UsageError("unknown method '" + *o.method + "' (expected bm, ed, or fkv)");
        profile.run.method = *m;
    }
    if (o.b) profile.run.b = *o.b;
    if (o.kvmax) {
        profile.run.kvmax = *o.kvmax;
    } else if (!profile.kvmax_given && profile.run.method == pdkv::Method::ED) {
        profile.run.kvmax = 2;
    }
    if (o.p) profile.run.p = *o.p;
    if (o.max_gen) profile.run.max_gen = *o.max_gen;
    if (o.seed) {
        profile.run.seed = *o.seed;
        profile.workload.seed = *o.seed;
    }
    if (o.budget_bytes) {
        if (*o.budget_bytes <= 0) throw pdkv::ConfigError("memory: budget_bytes must be positive");
        profile.budget_bytes = static_cast<std::uint64_t>(*o.budget_bytes);
    }
    if (!o.echo_config.empty()) {
        const auto text = pdkv::to_ini(profile);
        if (o.echo_config == "-") {
            std::cerr << text;
        } else {
            std::ofstream out(o.echo_config);
            if (!out) throw pdkv::ConfigError("cannot write '" + o.echo_config + "'");
            out << text;
        }
    }
    return profile;
}

class Output {
public:
    explicit Output(const std::string& path) {
        if (path != "-") {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) throw pdkv::ConfigError("cannot write '" + path + "'");
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

pdkv::MemorySpec validated_memory(const pdkv::Profile& profile) {
    auto spec = profile.memory();
    spec.validate();
    return spec;
}

int cmd_run(const Overrides& o) {
    const auto profile = effective_profile(o);
    profile.run.validate();
    const auto budget = validated_memory(profile);
    const auto workload = pdkv::gen_workload(profile.workload, profile.run.model.vocab_size);

    pdkv::MeasureOptions options;
    options.budget = budget;
    const auto weights = pdkv::init_model<double>(profile.run.model, profile.run.seed);
    std::optional<pdkv::FkvReference> reference;
    const auto s_max = workload.max_length();
    const auto& cfg = profile.run;
    if (cfg.method != pdkv::Method::FKV &&
        !pdkv::exceeds_budget(budget, cfg.method, cfg.b, s_max, cfg.kvmax, cfg.max_gen) &&
        workload.size() % cfg.b == 0) {
        reference = pdkv::compute_reference(cfg, cfg.b, workload, weights);
        options.reference = &*reference;
    }
    const auto report = pdkv::measure_run(cfg, workload, weights, options);

    Output out(o.output);
    if (o.format == "csv") {
        pdkv::write_csv(out.stream(), {report});
    } else {
        pdkv::write_jsonl(out.stream(), {report});
    }
    if (report.status == pdkv::RunStatus::Oom) {
        std::cerr << "pdkv: simulated out-of-memory: " << pdkv::to_string(cfg.method) << " at b=" << cfg.b
                  << " needs " << report.predicted_peak_kv_pairs << " pairs per sample\n";
        return kExitOom;
    }
    return kExitOk;
}

int cmd_sweep(const Overrides& o, const std::string& summary_path) {
    const auto profile = effective_profile(o);
    profile.run.validate();
    const auto budget = validated_memory(profile);
    const auto workload = pdkv::gen_workload(profile.workload, profile.run.model.vocab_size);

    pdkv::SweepSpec spec;
    spec.base = profile.run;
    spec.budget = budget;
    spec.min_agreement = profile.min_agreement;
    spec.cells = profile.sweep_cells.empty()
                     ? pdkv::procedure_grid(profile.run, budget, workload.max_length(), workload.size(),
                                            profile.sweep_bm_kvmax)
                     : profile.sweep_cells;
    const auto result = pdkv::sweep(spec, workload);

    Output out(o.output);
    if (o.format == "csv") {
        pdkv::write_csv(out.stream(), result.reports);
    } else {
        pdkv::write_jsonl(out.stream(), result.reports);
        out.stream() << pdkv::summary_record(result) << '\n';
    }
    if (summary_path == "-") {
        std::cerr << pdkv::format_summary(result);
    } else if (!summary_path.empty()) {
        std::ofstream summary(summary_path);
        if (!summary) throw pdkv::ConfigError("cannot write '" + summary_path + "'");
        summary << pdkv::format_summary(result);
    }
    return kExitOk;
}

int cmd_plan(const Overrides& o, std::optional<std::size_t> s_bar, std::size_t ed_kvmax) {
    const auto profile = effective_profile(o);
    profile.run.model.validate();
    const auto budget = validated_memory(profile);
    const std::size_t length = s_bar ? *s_bar : std::min(profile.workload.lengths.hi, profile.workload.max_input_len);
    const auto rows = pdkv::plan_memory(budget, length, profile.run.kvmax, ed_kvmax, profile.run.max_gen);
    Output out(o.output);
    if (o.format == "csv") {
        pdkv::write_plan_csv(out.stream(), rows);
    } else {
        pdkv::write_plan_table(out.stream(), rows);
    }
    return kExitOk;
}

int cmd_trace(const Overrides& o, bool record_evictions) {
    const auto profile = effective_profile(o);
    profile.run.validate();
    const auto workload = pdkv::gen_workload(profile.workload, profile.run.model.vocab_size);
    const auto& cfg = profile.run;
    if (cfg.b > workload.size()) {
        throw pdkv::ConfigError("trace: b=" + std::to_string(cfg.b) + " exceeds num_samples=" +
                                std::to_string(workload.size()));
    }
    const auto weights = pdkv::init_model<double>(cfg.model, cfg.seed);
    const std::span<const std::vector<pdkv::TokenId>> first(workload.samples.data(), cfg.b);
    pdkv::RunOptions options;
    options.record_evictions = record_evictions;
    const auto result = pdkv::run_method(pdkv::pad_batch(first), cfg, weights, options);
    Output out(o.output);
    pdkv::write_trace_jsonl(out.stream(), result.trace);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Toy transformer KV-cache eviction engine and benchmark harness"};
    app.require_subcommand(1);

    Overrides run_o, sweep_o, plan_o, trace_o;
    std::string summary_path = "-";
    std::optional<std::size_t> plan_s_bar;
    std::size_t plan_ed_kvmax = 2;
    bool record_evictions = false;

    auto* run = app.add_subcommand("run", "one (method, b, kvmax) pass over the workload");
    add_common(run, run_o);
    auto* sweep = app.add_subcommand("sweep", "grid of runs plus a summary of the best cells");
    add_common(sweep, sweep_o);
    sweep->add_option("--summary", summary_path, "summary path, '-' for stderr, '' to skip");
    auto* plan = app.add_subcommand("plan", "memory-model table: peak pairs, bytes per sample, max batch");
    plan_o.format = "table";
    add_common(plan, plan_o, {"table", "csv"});
    plan->add_option("--s-bar", plan_s_bar, "padded prompt length (default: longest workload prompt)");
    plan->add_option("--ed-kvmax", plan_ed_kvmax, "decode cap for the decoding-only row");
    auto* trace = app.add_subcommand("trace", "phase trace of the first batch as JSON lines");
    add_common(trace, trace_o);
    trace->add_flag("--record-evictions", record_evictions, "include per-cache eviction events");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (run->parsed()) return cmd_run(run_o);
        if (sweep->parsed()) return cmd_sweep(sweep_o, summary_path);
        if (plan->parsed()) return cmd_plan(plan_o, plan_s_bar, plan_ed_kvmax);
        if (trace->parsed()) return cmd_trace(trace_o, record_evictions);
    } catch (const UsageError& e) {
        std::cerr << "pdkv: " << e.what() << '\n';
        return kExitUsage;
    } catch (const pdkv::ConfigError& e) {
        std::cerr << "pdkv: configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const pdkv::InputError& e) {
        std::cerr << "pdkv: input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "pdkv: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitUsage;
}
