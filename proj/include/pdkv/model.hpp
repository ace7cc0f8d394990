// Copyright (C) 2026 pdkv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pdkv/dense.hpp"
#include "pdkv/errors.hpp"
#include "pdkv/kv_cache.hpp"

namespace pdkv {

/// Dimensions of the toy decoder-only transformer.
struct ModelConfig {
    std::size_t num_layers = 2;
    std::size_t num_heads = 2;
    std::size_t head_dim = 16;
    std::size_t vocab_size = 64;
    std::size_t dtype_bytes = 4;  // memory accounting only
    std::size_t max_position = 4096;
    std::size_t ffn_mult = 4;

    std::size_t hidden_dim() const { return num_heads * head_dim; }
    std::size_t ffn_dim() const { return ffn_mult * hidden_dim(); }

    void validate() const {
        detail::require<ConfigError>(num_layers >= 1, "model: num_layers must be >= 1");
        detail::require<ConfigError>(num_heads >= 1, "model: num_heads must be >= 1");
        detail::require<ConfigError>(head_dim >= 1, "model: head_dim must be >= 1");
        detail::require<ConfigError>(vocab_size >= 4, "model: vocab_size must be >= 4 (pad, bos, two content tokens)");
        detail::require<ConfigError>(dtype_bytes >= 1, "model: dtype_bytes must be >= 1");
        detail::require<ConfigError>(max_position >= 1, "model: max_position must be >= 1");
        detail::require<ConfigError>(ffn_mult >= 1, "model: ffn_mult must be >= 1");
    }

    bool operator==(const ModelConfig&) const = default;
};

template <class Scalar = double>
struct LayerWeights {
    Matrix<Scalar> wq, wk, wv, wo;  // hidden x hidden
    Matrix<Scalar> w1;              // hidden x ffn
    Matrix<Scalar> w2;              // ffn x hidden
};

template <class Scalar = double>
struct ModelWeights {
    ModelConfig config;
    Matrix<Scalar> embedding;   // vocab x hidden
    Matrix<Scalar> positional;  // max_position x hidden, sinusoidal
    std::vector<LayerWeights<Scalar>> layers;
    Matrix<Scalar> unembed;  // hidden x vocab
};

namespace detail {

// Uniform on [-1, 1) from the top 53 bits of a 64-bit Mersenne Twister draw.
// Unlike std::uniform_real_distribution the mapping is fixed, so weights are
// bit-identical across standard library implementations.
class WeightStream {
public:
    explicit WeightStream(std::uint64_t seed) : engine_(seed) {}

    double next_symmetric() {
        const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return 2.0 * unit - 1.0;
    }

    template <class Scalar>
    Matrix<Scalar> draw(std::size_t rows, std::size_t cols, double fan_in) {
        // Uniform(-a, a) with a = sqrt(3 / fan_in) has variance 1 / fan_in.
        const double amplitude = std::sqrt(3.0 / fan_in);
        Matrix<Scalar> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                m(r, c) = static_cast<Scalar>(amplitude * next_symmetric());
            }
        }
        return m;
    }

private:
    std::mt19937_64 engine_;
};

template <class Scalar>
Matrix<Scalar> sinusoidal_table(std::size_t positions, std::size_t dim) {
    Matrix<Scalar> table(static_cast<Eigen::Index>(positions), static_cast<Eigen::Index>(dim));
    for (std::size_t pos = 0; pos < positions; ++pos) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
            const double angle = static_cast<double>(pos) * freq;
            table(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(i)) =
                static_cast<Scalar>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return table;
}

}  // namespace detail

/**
 * Generates deterministic weights for `config`.
 *
 * Every matrix entry is Uniform(-sqrt(3/fan_in), sqrt(3/fan_in)), drawn in a fixed
 * order from one Mersenne Twister stream seeded with `seed`: embedding (fan_in 1),
 * then per layer wq, wk, wv, wo, w1 (fan_in hidden), w2 (fan_in ffn), and finally
 * the unembedding (fan_in hidden). The positional table is sinusoidal, not drawn.
 */
template <class Scalar = double>
ModelWeights<Scalar> init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    const auto hidden = config.hidden_dim();
    const auto ffn = config.ffn_dim();
    detail::WeightStream stream(seed);

    ModelWeights<Scalar> w;
    w.config = config;
    w.embedding = stream.draw<Scalar>(config.vocab_size, hidden, 1.0);
    w.positional = detail::sinusoidal_table<Scalar>(config.max_position, hidden);
    w.layers.resize(config.num_layers);
    for (auto& layer : w.layers) {
        layer.wq = stream.draw<Scalar>(hidden, hidden, static_cast<double>(hidden));
        layer.wk = stream.draw<Scalar>(hidden, hidden, static_cast<double>(hidden));
        layer.wv = stream.draw<Scalar>(hidden, hidden, static_cast<double>(hidden));
        layer.wo = stream.draw<Scalar>(hidden, hidden, static_cast<double>(hidden));
        layer.w1 = stream.draw<Scalar>(hidden, ffn, static_cast<double>(hidden));
        layer.w2 = stream.draw<Scalar>(ffn, hidden, static_cast<double>(ffn));
    }
    w.unembed = stream.draw<Scalar>(hidden, config.vocab_size, static_cast<double>(hidden));
    return w;
}

/// Row-wise x / sqrt(mean(x^2) + eps), no learned gain.
template <class Derived>
Matrix<typename Derived::Scalar> rms_norm(const Eigen::MatrixBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    constexpr Scalar eps = Scalar(1e-6);
    Matrix<Scalar> out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const Scalar mean_sq = x.row(r).squaredNorm() / static_cast<Scalar>(x.cols());
        out.row(r) = x.row(r) / std::sqrt(mean_sq + eps);
    }
    return out;
}

template <class Scalar = double>
struct AttentionBlockResult {
    Matrix<Scalar> outputs;  // block_len x head_dim
    Matrix<Scalar> weights;  // block_len x cache_len, zero where a query cannot see an entry
};

/**
 * Scaled dot-product attention of a block of queries over a cache that already
 * contains the block's own keys.
 *
 * Query i sees cache entries [0, causal_offset + i] minus those flagged in
 * `masked`. A query with nothing visible (a left-pad query) gets an all-zero
 * row and a zero output.
 */
template <class QDerived, class KDerived, class VDerived>
AttentionBlockResult<typename QDerived::Scalar> attention_forward(const Eigen::MatrixBase<QDerived>& queries,
                                                                  const Eigen::MatrixBase<KDerived>& keys,
                                                                  const Eigen::MatrixBase<VDerived>& values,
                                                                  std::size_t causal_offset,
                                                                  const Eigen::Ref<const MaskArray>& masked) {
    using Scalar = typename QDerived::Scalar;
    const auto n = queries.rows();
    const auto m = keys.rows();
    detail::require<ContractError>(keys.cols() == queries.cols() && values.cols() == queries.cols(),
                                   "attention_forward: head_dim mismatch between queries and cache");
    detail::require<ContractError>(values.rows() == m && masked.size() == m,
                                   "attention_forward: cache keys, values, and mask differ in length");
    detail::require<ContractError>(causal_offset + static_cast<std::size_t>(n) <= static_cast<std::size_t>(m),
                                   "attention_forward: block does not fit inside the cache view");

    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(queries.cols()));
    Matrix<Scalar> scores = (queries * keys.transpose()) * scale;
    Matrix<Scalar> weights = Matrix<Scalar>::Zero(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto visible = static_cast<Eigen::Index>(causal_offset) + i + 1;
        Scalar max_score = -std::numeric_limits<Scalar>::infinity();
        for (Eigen::Index j = 0; j < visible; ++j) {
            if (!masked[j] && scores(i, j) > max_score) {
                max_score = scores(i, j);
            }
        }
        if (max_score == -std::numeric_limits<Scalar>::infinity()) {
            continue;
        }
        Scalar total = 0;
        for (Eigen::Index j = 0; j < visible; ++j) {
            if (!masked[j]) {
                weights(i, j) = std::exp(scores(i, j) - max_score);
                total += weights(i, j);
            }
        }
        weights.row(i).head(visible) /= total;
    }
    AttentionBlockResult<Scalar> result;
    result.outputs = weights * values;
    result.weights = std::move(weights);
    return result;
}

/// One KVCache per (sample, layer, head); all caches advance in lockstep.
template <class Scalar = double>
class CacheSet {
public:
    CacheSet(std::size_t batch, const ModelConfig& config, std::size_t capacity, std::size_t reserve = 0)
        : batch_(batch), layers_(config.num_layers), heads_(config.num_heads) {
        caches_.reserve(batch_ * layers_ * heads_);
        for (std::size_t i = 0; i < batch_ * layers_ * heads_; ++i) {
            caches_.emplace_back(config.head_dim, capacity, reserve);
        }
    }

    std::size_t batch() const { return batch_; }
    std::size_t num_layers() const { return layers_; }
    std::size_t num_heads() const { return heads_; }
    std::size_t count() const { return caches_.size(); }

    KVCache<Scalar>& at(std::size_t sample, std::size_t layer, std::size_t head) {
        return caches_[index(sample, layer, head)];
    }
    const KVCache<Scalar>& at(std::size_t sample, std::size_t layer, std::size_t head) const {
        return caches_[index(sample, layer, head)];
    }
    KVCache<Scalar>& flat(std::size_t i) { return caches_[i]; }
    const KVCache<Scalar>& flat(std::size_t i) const { return caches_[i]; }

    std::size_t index(std::size_t sample, std::size_t layer, std::size_t head) const {
        return (sample * layers_ + layer) * heads_ + head;
    }

    /// Shared length of every cache. Eviction removes the same count everywhere, so they never differ.
    std::size_t length() const { return caches_.empty() ? 0 : caches_.front().size(); }
    std::size_t capacity() const { return caches_.empty() ? 0 : caches_.front().capacity(); }

private:
    std::size_t batch_;
    std::size_t layers_;
    std::size_t heads_;
    std::vector<KVCache<Scalar>> caches_;
};

template <class Scalar = double>
struct BlockOutput {
    Matrix<Scalar> logits;  // batch x vocab, last position of each sample
    // Flat (sample, layer, head) order as in CacheSet::index; empty unless requested.
    std::vector<Matrix<Scalar>> attention;
};

/**
 * Runs one block of positions [first_position, first_position + block_len) for every sample.
 *
 * The block's keys and values are appended to every cache before attention, so each
 * query sees its own block causally plus everything retained from earlier blocks.
 * Positions below `pad_counts[sample]` are left-pad slots and are masked as keys.
 */
template <class Scalar>
BlockOutput<Scalar> forward_block(const ModelWeights<Scalar>& weights,
                                  const Eigen::Ref<const TokenMatrix>& tokens,
                                  Position first_position,
                                  CacheSet<Scalar>& caches,
                                  std::span<const Position> pad_counts,
                                  bool collect_attention) {
    const auto& cfg = weights.config;
    const auto batch = static_cast<std::size_t>(tokens.rows());
    const auto block_len = static_cast<std::size_t>(tokens.cols());
    const auto head_dim = static_cast<Eigen::Index>(cfg.head_dim);
    detail::require<ContractError>(batch == caches.batch() && batch == pad_counts.size(),
                                   "forward_block: batch size mismatch between tokens, caches, and pad counts");
    detail::require<ContractError>(block_len >= 1, "forward_block: empty block");
    detail::require<ContractError>(first_position >= 0 &&
                                       static_cast<std::size_t>(first_position) + block_len <= cfg.max_position,
                                   "forward_block: positions exceed max_position " + std::to_string(cfg.max_position));
    for (std::size_t i = 0; i < caches.count(); ++i) {
        const auto& c = caches.flat(i);
        detail::require<CapacityError>(block_len <= c.capacity() - c.size(),
                                       "forward_block: appending " + std::to_string(block_len) + " pairs to a cache of " +
                                           std::to_string(c.size()) + " exceeds capacity " +
                                           std::to_string(c.capacity()) + "; evict first");
    }

    std::vector<Position> ids(block_len);
    for (std::size_t i = 0; i < block_len; ++i) {
        ids[i] = first_position + static_cast<Position>(i);
    }

    BlockOutput<Scalar> out;
    out.logits.resize(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(cfg.vocab_size));
    if (collect_attention) {
        out.attention.resize(caches.count());
    }

    const auto hidden = static_cast<Eigen::Index>(cfg.hidden_dim());
    const auto n = static_cast<Eigen::Index>(block_len);
    for (std::size_t s = 0; s < batch; ++s) {
        Matrix<Scalar> x(n, hidden);
        for (Eigen::Index i = 0; i < n; ++i) {
            const TokenId tok = tokens(static_cast<Eigen::Index>(s), i);
            detail::require<ContractError>(tok >= 0 && static_cast<std::size_t>(tok) < cfg.vocab_size,
                                           "forward_block: token id out of vocabulary");
            x.row(i) = weights.embedding.row(tok) + weights.positional.row(first_position + i);
        }
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
            const auto& lw = weights.layers[l];
            const Matrix<Scalar> h = rms_norm(x);
            const Matrix<Scalar> q = h * lw.wq;
            const Matrix<Scalar> k = h * lw.wk;
            const Matrix<Scalar> v = h * lw.wv;
            Matrix<Scalar> mixed(n, hidden);
            for (std::size_t hd = 0; hd < cfg.num_heads; ++hd) {
                const auto col = static_cast<Eigen::Index>(hd) * head_dim;
                auto& cache = caches.at(s, l, hd);
                cache.append(k.middleCols(col, head_dim), v.middleCols(col, head_dim), ids);
                const auto kv_ids = cache.kv_ids();
                MaskArray masked(static_cast<Eigen::Index>(kv_ids.size()));
                for (std::size_t j = 0; j < kv_ids.size(); ++j) {
                    masked[static_cast<Eigen::Index>(j)] = kv_ids[j] < pad_counts[s];
                }
                auto r = attention_forward(q.middleCols(col, head_dim), cache.keys(), cache.values(),
                                           cache.size() - block_len, masked);
                mixed.middleCols(col, head_dim) = r.outputs;
                if (collect_attention) {
                    out.attention[caches.index(s, l, hd)] = std::move(r.weights);
                }
            }
            x += mixed * lw.wo;
            x += ((rms_norm(x) * lw.w1).cwiseMax(Scalar(0))) * lw.w2;
        }
        out.logits.row(static_cast<Eigen::Index>(s)) = rms_norm(x.bottomRows(1)) * weights.unembed;
    }
    return out;
}

/// Argmax with ties going to the lowest token id.
template <class Derived>
TokenId greedy_token(const Eigen::DenseBase<Derived>& logits) {
    detail::require<ContractError>(logits.size() >= 1, "greedy_token: empty logits");
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i) {
        if (logits(i) > logits(best)) {
            best = i;
        }
    }
    return static_cast<TokenId>(best);
}

template <class Derived>
std::vector<TokenId> greedy_next(const Eigen::MatrixBase<Derived>& logits) {
    std::vector<TokenId> next(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        next[static_cast<std::size_t>(r)] = greedy_token(logits.row(r));
    }
    return next;
}

}  // namespace pdkv
