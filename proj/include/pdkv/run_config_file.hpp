// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include "pdkv/bench.hpp"
#include "pdkv/engine.hpp"

namespace pdkv {

/**
 * Everything a CLI invocation needs, loaded from a sectioned key = value file.
 *
 *   [model]    num_layers num_heads head_dim vocab_size dtype_bytes max_position ffn_mult
 *   [run]      method b kvmax p max_gen seed
 *   [workload] num_samples lengths (fixed:N | uniform:LO:HI) max_input_len seed
 *   [memory]   budget_bytes overhead_bytes_per_sample
 *   [sweep]    cells ("bm:8:128 ed:2:2 fkv:2"; empty = procedure grid) bm_kvmax min_agreement
 *
 * Keys left out keep their current value; unknown sections or keys are errors.
 * When run.kvmax is never given, ED runs use kvmax = 2.
 */
struct Profile {
    RunConfig run;
    WorkloadSpec workload;
    std::uint64_t budget_bytes = 0;
    std::uint64_t overhead_bytes_per_sample = 0;
    std::vector<GridCell> sweep_cells;
    std::vector<std::size_t> sweep_bm_kvmax;
    double min_agreement = 0.0;
    bool kvmax_given = false;  // set when a file names run.kvmax

    MemorySpec memory() const { return MemorySpec::from_model(run.model, budget_bytes, overhead_bytes_per_sample); }
};

/// Built-in desk-scale profile used when no file is given.
Profile default_profile();

void apply_ini(Profile& profile, std::istream& in);
void apply_ini_file(Profile& profile, const std::string& path);

/// Serializes every field, so loading the text back reproduces the profile.
std::string to_ini(const Profile& profile);

std::vector<GridCell> parse_cells(const std::string& text);
std::string format_cells(const std::vector<GridCell>& cells);

}  // namespace pdkv
