// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#include "pdkv/run_config_file.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "pdkv/errors.hpp"

namespace pdkv {
namespace {

namespace pt = boost::property_tree;

std::uint64_t to_u64(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        if (!text.empty() && text[0] != '-') {
            const auto v = std::stoull(text, &used);
            if (used == text.size()) return v;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("config: " + key + " = '" + text + "' is not a non-negative integer");
}

double to_double(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const auto v = std::stod(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("config: " + key + " = '" + text + "' is not a number");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    std::istringstream is(text);
    for (std::string item; is >> item;) {
        if (item.back() == ',') item.pop_back();
        if (!item.empty()) out.push_back(static_cast<std::size_t>(to_u64(key, item)));
    }
    return out;
}

}  // namespace

Profile default_profile() {
    Profile p;
    p.run.model = ModelConfig{};  // 2 layers, 2 heads, head_dim 16, vocab 64
    p.run.method = Method::BM;
    p.run.b = 8;
    p.run.kvmax = 128;
    p.run.p = 64;
    p.run.max_gen = 64;
    p.run.seed = 0;
    p.workload.num_samples = 16;
    p.workload.lengths = LengthDistribution::fixed(512);
    p.workload.max_input_len = 3584;
    p.workload.seed = 0;
    // 1152 pairs of 512 bytes: ED (512 pairs) and FKV (575 pairs) fit at b = 2, BM at kvmax 128 fits b = 9.
    p.budget_bytes = 1152 * 512;
    p.sweep_bm_kvmax = {128, 192, 256};
    p.min_agreement = 0.25;
    return p;
}

std::vector<GridCell> parse_cells(const std::string& text) {
    std::vector<GridCell> cells;
    std::istringstream is(text);
    for (std::string item; is >> item;) {
        if (item.back() == ',') item.pop_back();
        if (item.empty()) continue;
        std::vector<std::string> parts;
        std::stringstream ss(item);
        for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
        const auto method = parts.empty() ? std::nullopt : parse_method(parts[0]);
        if (!method || parts.size() < 2 || parts.size() > 3 || (*method != Method::FKV && parts.size() != 3)) {
            throw ConfigError("config: grid cell '" + item + "' must be method:b:kvmax (fkv:b for FKV)");
        }
        GridCell cell;
        cell.method = *method;
        cell.b = static_cast<std::size_t>(to_u64("sweep.cells", parts[1]));
        cell.kvmax = parts.size() == 3 ? static_cast<std::size_t>(to_u64("sweep.cells", parts[2])) : 0;
        cells.push_back(cell);
    }
    return cells;
}

std::string format_cells(const std::vector<GridCell>& cells) {
    std::string out;
    for (const auto& c : cells) {
        if (!out.empty()) out += ' ';
        std::string m = to_string(c.method);
        for (auto& ch : m) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        out += m + ":" + std::to_string(c.b);
        if (c.method != Method::FKV) out += ":" + std::to_string(c.kvmax);
    }
    return out;
}

void apply_ini(Profile& profile, std::istream& in) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    using Setter = std::function<void(const std::string&, const std::string&)>;
    auto size = [](std::size_t& field) {
        return Setter([&field](const std::string& k, const std::string& v) {
            field = static_cast<std::size_t>(to_u64(k, v));
        });
    };
    auto u64 = [](std::uint64_t& field) {
        return Setter([&field](const std::string& k, const std::string& v) { field = to_u64(k, v); });
    };
    auto& m = profile.run.model;
    auto& r = profile.run;
    auto& w = profile.workload;
    const std::map<std::string, Setter> setters = {
        {"model.num_layers", size(m.num_layers)},
        {"model.num_heads", size(m.num_heads)},
        {"model.head_dim", size(m.head_dim)},
        {"model.vocab_size", size(m.vocab_size)},
        {"model.dtype_bytes", size(m.dtype_bytes)},
        {"model.max_position", size(m.max_position)},
        {"model.ffn_mult", size(m.ffn_mult)},
        {"run.method",
         [&r](const std::string& k, const std::string& v) {
             const auto method = parse_method(v);
             if (!method) throw ConfigError("config: " + k + " = '" + v + "' is not one of bm, ed, fkv");
             r.method = *method;
         }},
        {"run.b", size(r.b)},
        {"run.kvmax",
         [&profile](const std::string& k, const std::string& v) {
             profile.run.kvmax = static_cast<std::size_t>(to_u64(k, v));
             profile.kvmax_given = true;
         }},
        {"run.p", size(r.p)},
        {"run.max_gen", size(r.max_gen)},
        {"run.seed", u64(r.seed)},
        {"workload.num_samples", size(w.num_samples)},
        {"workload.lengths",
         [&w](const std::string&, const std::string& v) { w.lengths = LengthDistribution::parse(v); }},
        {"workload.max_input_len", size(w.max_input_len)},
        {"workload.seed", u64(w.seed)},
        {"memory.budget_bytes", u64(profile.budget_bytes)},
        {"memory.overhead_bytes_per_sample", u64(profile.overhead_bytes_per_sample)},
        {"sweep.cells", [&profile](const std::string&, const std::string& v) { profile.sweep_cells = parse_cells(v); }},
        {"sweep.bm_kvmax",
         [&profile](const std::string& k, const std::string& v) { profile.sweep_bm_kvmax = to_list(k, v); }},
        {"sweep.min_agreement",
         [&profile](const std::string& k, const std::string& v) { profile.min_agreement = to_double(k, v); }},
    };
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError("config: key '" + section + "' must be inside a [section]");
        }
        for (const auto& [key, value] : body) {
            const auto full = section + "." + key;
            const auto it = setters.find(full);
            if (it == setters.end()) throw ConfigError("config: unknown key '" + full + "'");
            it->second(full, value.get_value<std::string>());
        }
    }
}

void apply_ini_file(Profile& profile, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    apply_ini(profile, in);
}

std::string to_ini(const Profile& p) {
    std::ostringstream os;
    const auto& m = p.run.model;
    std::string method = to_string(p.run.method);
    for (auto& ch : method) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    os << "[model]\n"
       << "num_layers = " << m.num_layers << "\n"
       << "num_heads = " << m.num_heads << "\n"
       << "head_dim = " << m.head_dim << "\n"
       << "vocab_size = " << m.vocab_size << "\n"
       << "dtype_bytes = " << m.dtype_bytes << "\n"
       << "max_position = " << m.max_position << "\n"
       << "ffn_mult = " << m.ffn_mult << "\n\n"
       << "[run]\n"
       << "method = " << method << "\n"
       << "b = " << p.run.b << "\n"
       << "kvmax = " << p.run.kvmax << "\n"
       << "p = " << p.run.p << "\n"
       << "max_gen = " << p.run.max_gen << "\n"
       << "seed = " << p.run.seed << "\n\n"
       << "[workload]\n"
       << "num_samples = " << p.workload.num_samples << "\n"
       << "lengths = " << p.workload.lengths.to_string() << "\n"
       << "max_input_len = " << p.workload.max_input_len << "\n"
       << "seed = " << p.workload.seed << "\n\n"
       << "[memory]\n"
       << "budget_bytes = " << p.budget_bytes << "\n"
       << "overhead_bytes_per_sample = " << p.overhead_bytes_per_sample << "\n\n"
       << "[sweep]\n"
       << "cells = " << format_cells(p.sweep_cells) << "\n"
       << "bm_kvmax =";
    for (auto k : p.sweep_bm_kvmax) os << ' ' << k;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", p.min_agreement);
    os << "\nmin_agreement = " << buf << "\n";
    return os.str();
}

}  // namespace pdkv
