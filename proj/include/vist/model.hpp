// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Decoder backbone: consumes interleaved text/visual embeddings under the
// sparse visibility rule with explicit (aliased) position ids, plus an
// evictable KV cache for incremental decoding.

#pragma once

#include <string>
#include <vector>

#include "vist/interleave.hpp"
#include "vist/nn.hpp"

namespace vist {

struct ModelConfig {
    int width = 128;  // d_lm
    int layer_count = 4;
    int head_count = 4;
    int vocab_size = 64;
    int ffn_width = 512;
    long max_position = 8192;
    double rope_base = 10000.0;
    double init_std = 0.04;

    int head_dim() const { return width / head_count; }

    void validate() const {
        if (width <= 0 || layer_count <= 0 || head_count <= 0 || vocab_size <= 0 ||
            ffn_width <= 0 || max_position <= 0)
            throw ConfigError("model dimensions must be positive");
        if (width % head_count != 0)
            throw ConfigError("model width must be divisible by head count");
        if (head_dim() % 2 != 0)
            throw ConfigError("head dimension must be even for rotary phases");
    }
};

template <class S>
struct ModelParams {
    MatX<S> token_embedding;  // V x d
    std::vector<LayerParams<S>> layers;
    VecX<S> final_norm_gain;
    MatX<S> output_head;      // d x V
};

template <class S, class F>
void for_each_tensor(ModelParams<S>& p, const std::string& prefix, F&& f) {
    f(prefix + "token_embedding", p.token_embedding);
    for (std::size_t i = 0; i < p.layers.size(); ++i)
        for_each_tensor(p.layers[i], prefix + "layer" + std::to_string(i), f);
    f(prefix + "final_norm_gain", p.final_norm_gain);
    f(prefix + "output_head", p.output_head);
}

template <class S>
ModelParams<S> make_model_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams<S> p;
    p.token_embedding.resize(cfg.vocab_size, cfg.width);
    fill_normal(p.token_embedding, rng, cfg.init_std);
    for (int i = 0; i < cfg.layer_count; ++i)
        p.layers.push_back(make_layer_params<S>(cfg.width, cfg.ffn_width, rng, cfg.init_std));
    p.final_norm_gain = VecX<S>::Ones(cfg.width);
    p.output_head.resize(cfg.width, cfg.vocab_size);
    fill_normal(p.output_head, rng, cfg.init_std);
    return p;
}

// One interleaved sequence: token ids for the TEXT tokens (layout order) and
// pre-aligned embeddings for the VISUAL tokens (layout order, stacked).
template <class S>
struct SequenceInput {
    InterleavedLayout layout;
    std::vector<TokenId> text_ids;
    MatX<S> visual_rows;  // (#visual tokens) x d_lm
};

template <class S>
struct DecoderTape {
    AttentionMask<S> mask;
    RotaryTable<S> rotary;
    MatX<S> input;  // embedded sequence, T x d
    std::vector<LayerTape<S>> layers;
    MatX<S> x_final;  // last layer output, input to the final norm
    VecX<S> final_inv_rms;
    MatX<S> final_normed;
    MatX<S> logits;  // T x V, every position (text rows are the contract)
};

namespace detail {

template <class S>
MatX<S> embed_sequence(const SequenceInput<S>& input, const ModelParams<S>& params,
                       const ModelConfig& cfg) {
    const auto& layout = input.layout;
    std::size_t text_seen = 0, visual_seen = 0;
    MatX<S> x(layout.total_length(), cfg.width);
    for (int i = 0; i < layout.total_length(); ++i) {
        const TokenMeta& tm = layout.tokens[static_cast<std::size_t>(i)];
        if (tm.modality == Modality::kText) {
            if (text_seen >= input.text_ids.size()) throw ShapeError("too few text ids");
            const TokenId id = input.text_ids[text_seen++];
            if (id < 0 || id >= cfg.vocab_size)
                throw ShapeError("token id out of vocabulary: " + std::to_string(id));
            x.row(i) = params.token_embedding.row(id);
        } else {
            if (static_cast<Index>(visual_seen) >= input.visual_rows.rows())
                throw ShapeError("too few visual rows");
            x.row(i) = input.visual_rows.row(static_cast<Index>(visual_seen++));
        }
    }
    if (text_seen != input.text_ids.size() ||
        static_cast<Index>(visual_seen) != input.visual_rows.rows())
        throw ShapeError("sequence inputs do not match layout");
    if (input.visual_rows.rows() > 0 && input.visual_rows.cols() != cfg.width)
        throw ShapeError("visual embedding width mismatch");
    for (long pos : layout.positions)
        if (pos > cfg.max_position)
            throw ShapeError("position id exceeds max_position");
    return x;
}

}  // namespace detail

// Full-sequence forward. Attention weights are exactly zero on invisible
// pairs; rotary phases come from the layout's explicit position ids.
template <class S>
MatX<S> forward(const SequenceInput<S>& input, const ModelParams<S>& params,
                const ModelConfig& cfg, DecoderTape<S>& tape) {
    const auto& layout = input.layout;
    tape.input = detail::embed_sequence(input, params, cfg);
    const VisibilityRule rule = build_mask(layout);
    tape.mask = AttentionMask<S>::from_rule(rule, layout.total_length());
    tape.rotary = RotaryTable<S>(layout.positions, cfg.head_dim(), cfg.rope_base);
    tape.layers.assign(params.layers.size(), LayerTape<S>());
    MatX<S> x = tape.input;
    for (std::size_t i = 0; i < params.layers.size(); ++i)
        x = layer_forward(x, params.layers[i], cfg.head_count, tape.mask, tape.rotary,
                          tape.layers[i]);
    tape.x_final = x;
    tape.final_inv_rms = rmsnorm_forward(x, params.final_norm_gain, tape.final_normed);
    tape.logits.noalias() = tape.final_normed * params.output_head;
    return tape.logits;
}

// Rows of the logits matrix that hold TEXT positions, in layout order.
template <class S>
MatX<S> text_logits(const MatX<S>& logits, const InterleavedLayout& layout) {
    Index count = 0;
    for (const TokenMeta& t : layout.tokens)
        if (t.modality == Modality::kText) ++count;
    MatX<S> out(count, logits.cols());
    Index r = 0;
    for (int i = 0; i < layout.total_length(); ++i)
        if (layout.tokens[static_cast<std::size_t>(i)].modality == Modality::kText)
            out.row(r++) = logits.row(i);
    return out;
}

// Backward from d(logits); accumulates parameter gradients and returns the
// gradient w.r.t. the visual input rows (layout order).
template <class S>
MatX<S> backward(const MatX<S>& dlogits, const SequenceInput<S>& input,
                 const ModelParams<S>& params, const ModelConfig& cfg,
                 const DecoderTape<S>& tape, ModelParams<S>& grads) {
    const auto& layout = input.layout;
    grads.output_head.noalias() += tape.final_normed.transpose() * dlogits;
    MatX<S> dnormed = dlogits * params.output_head.transpose();
    MatX<S> dx = MatX<S>::Zero(layout.total_length(), cfg.width);
    rmsnorm_backward(dnormed, tape.x_final, tape.final_inv_rms, params.final_norm_gain, dx,
                     grads.final_norm_gain);
    for (std::size_t i = params.layers.size(); i-- > 0;)
        dx = layer_backward(dx, params.layers[i], cfg.head_count, tape.rotary, tape.layers[i],
                            grads.layers[i]);

    MatX<S> dvisual(input.visual_rows.rows(), cfg.width);
    std::size_t text_seen = 0, visual_seen = 0;
    for (int i = 0; i < layout.total_length(); ++i) {
        const TokenMeta& tm = layout.tokens[static_cast<std::size_t>(i)];
        if (tm.modality == Modality::kText)
            grads.token_embedding.row(input.text_ids[text_seen++]) += dx.row(i);
        else
            dvisual.row(static_cast<Index>(visual_seen++)) = dx.row(i);
    }
    return dvisual;
}

// ---------------------------------------------------------------------------
// Incremental decoding with chunk-level eviction.
// ---------------------------------------------------------------------------

template <class S>
struct StepInput {
    std::vector<TokenMeta> metas;
    std::vector<long> positions;
    std::vector<TokenId> text_ids;  // per TEXT meta, in order
    MatX<S> visual_rows;            // per VISUAL meta, in order
};

// Per-layer ordered (key, value) entries tagged with modality, chunk index
// and position. Entry order is append order; positions alias across
// modalities by design.
template <class S>
class EvictableKVCache {
public:
    EvictableKVCache(int layer_count, int dim)
        : dim_(dim), keys_(static_cast<std::size_t>(layer_count)),
          values_(static_cast<std::size_t>(layer_count)) {
        for (auto& k : keys_) k.resize(0, dim);
        for (auto& v : values_) v.resize(0, dim);
    }

    int layer_count() const { return static_cast<int>(keys_.size()); }
    int entry_count() const { return static_cast<int>(metas_.size()); }
    const std::vector<TokenMeta>& metas() const { return metas_; }
    const std::vector<long>& positions() const { return positions_; }
    const std::vector<int>& block_lengths() const { return block_len_by_chunk_; }

    int text_entries(int chunk) const {
        int n = 0;
        for (const TokenMeta& m : metas_)
            if (m.modality == Modality::kText && m.chunk_index == chunk) ++n;
        return n;
    }

    bool has_block(int chunk) const {
        return chunk < static_cast<int>(block_len_by_chunk_.size()) &&
               block_len_by_chunk_[static_cast<std::size_t>(chunk)] > 0;
    }

    void register_meta(const TokenMeta& m, long position) {
        if (m.chunk_index < 0) throw CacheError("negative chunk index");
        if (!metas_.empty() && m.chunk_index < metas_.back().chunk_index)
            throw CacheError("inconsistent chunk indexing: appended chunk " +
                             std::to_string(m.chunk_index) + " after chunk " +
                             std::to_string(metas_.back().chunk_index));
        if (static_cast<int>(block_len_by_chunk_.size()) <= m.chunk_index)
            block_len_by_chunk_.resize(static_cast<std::size_t>(m.chunk_index) + 1, 0);
        if (m.modality == Modality::kVisual)
            ++block_len_by_chunk_[static_cast<std::size_t>(m.chunk_index)];
        metas_.push_back(m);
        positions_.push_back(position);
    }

    void append_kv(int layer, const MatX<S>& k, const MatX<S>& v) {
        auto& kl = keys_[static_cast<std::size_t>(layer)];
        auto& vl = values_[static_cast<std::size_t>(layer)];
        const Index old = kl.rows();
        kl.conservativeResize(old + k.rows(), dim_);
        vl.conservativeResize(old + v.rows(), dim_);
        kl.bottomRows(k.rows()) = k;
        vl.bottomRows(v.rows()) = v;
    }

    const MatX<S>& keys(int layer) const { return keys_[static_cast<std::size_t>(layer)]; }
    const MatX<S>& values(int layer) const { return values_[static_cast<std::size_t>(layer)]; }

    // Removes every TEXT entry of the chunk from all layers. The chunk's
    // block must already be in the cache, and double eviction is rejected.
    void evict_chunk(int chunk) {
        if (!has_block(chunk))
            throw CacheError("cannot evict chunk " + std::to_string(chunk) +
                             ": its visual block is absent");
        std::vector<Index> keep;
        keep.reserve(metas_.size());
        for (std::size_t i = 0; i < metas_.size(); ++i)
            if (!(metas_[i].modality == Modality::kText && metas_[i].chunk_index == chunk))
                keep.push_back(static_cast<Index>(i));
        if (keep.size() == metas_.size())
            throw CacheError("chunk " + std::to_string(chunk) +
                             " has no text entries (already evicted?)");
        std::vector<TokenMeta> metas;
        std::vector<long> positions;
        metas.reserve(keep.size());
        positions.reserve(keep.size());
        for (Index i : keep) {
            metas.push_back(metas_[static_cast<std::size_t>(i)]);
            positions.push_back(positions_[static_cast<std::size_t>(i)]);
        }
        metas_ = std::move(metas);
        positions_ = std::move(positions);
        for (std::size_t l = 0; l < keys_.size(); ++l) {
            MatX<S> k(static_cast<Index>(keep.size()), dim_);
            MatX<S> v(static_cast<Index>(keep.size()), dim_);
            for (std::size_t r = 0; r < keep.size(); ++r) {
                k.row(static_cast<Index>(r)) = keys_[l].row(keep[r]);
                v.row(static_cast<Index>(r)) = values_[l].row(keep[r]);
            }
            keys_[l] = std::move(k);
            values_[l] = std::move(v);
        }
    }

private:
    Index dim_;
    std::vector<TokenMeta> metas_;
    std::vector<long> positions_;
    std::vector<int> block_len_by_chunk_;
    std::vector<MatX<S>> keys_, values_;
};

template <class S>
void evict_chunk(EvictableKVCache<S>& cache, int chunk) {
    cache.evict_chunk(chunk);
}

// Appends the new tokens and returns logits for every new row. Visibility
// over cache entries and the intra-step prefix follows the same metadata
// rule as build_mask, so prefill+step reproduces a fresh forward.
template <class S>
MatX<S> step(EvictableKVCache<S>& cache, const StepInput<S>& input,
             const ModelParams<S>& params, const ModelConfig& cfg,
             AttentionVariant variant = AttentionVariant::kGcc) {
    if (cache.layer_count() != static_cast<int>(params.layers.size()))
        throw ShapeError("cache layer count mismatch");
    const Index rows = static_cast<Index>(input.metas.size());
    if (rows == 0) throw ShapeError("empty step");
    if (input.positions.size() != input.metas.size())
        throw ShapeError("positions do not match metas");

    // Embed new rows.
    MatX<S> x(rows, cfg.width);
    std::size_t text_seen = 0, visual_seen = 0;
    for (Index i = 0; i < rows; ++i) {
        const TokenMeta& tm = input.metas[static_cast<std::size_t>(i)];
        if (tm.modality == Modality::kText) {
            const TokenId id = input.text_ids.at(text_seen++);
            if (id < 0 || id >= cfg.vocab_size) throw ShapeError("token id out of vocabulary");
            x.row(i) = params.token_embedding.row(id);
        } else {
            x.row(i) = input.visual_rows.row(static_cast<Index>(visual_seen++));
        }
        if (input.positions[static_cast<std::size_t>(i)] > cfg.max_position)
            throw ShapeError("position id exceeds max_position");
    }

    const Index n_cache = cache.entry_count();
    for (Index i = 0; i < rows; ++i)
        cache.register_meta(input.metas[static_cast<std::size_t>(i)],
                            input.positions[static_cast<std::size_t>(i)]);
    const Index total = n_cache + rows;

    // Rectangular visibility of new queries over [cache entries | new rows];
    // K/V for all new rows are appended per layer before attention, so the
    // metadata rule alone decides visibility and step reproduces a fresh
    // forward over the concatenated layout.
    MatX<S> mask_w(rows, total);
    std::vector<char> row_any(static_cast<std::size_t>(rows), 0);
    const auto& metas = cache.metas();
    const auto& blens = cache.block_lengths();
    for (Index q = 0; q < rows; ++q) {
        bool any = false;
        const TokenMeta& qm = metas[static_cast<std::size_t>(n_cache + q)];
        for (Index k = 0; k < total; ++k) {
            const bool v = visible(qm, metas[static_cast<std::size_t>(k)], variant, blens);
            mask_w(q, k) = v ? S(1) : S(0);
            any = any || v;
        }
        row_any[static_cast<std::size_t>(q)] = any ? 1 : 0;
    }

    std::vector<long> new_positions(input.positions);
    RotaryTable<S> rotary(new_positions, cfg.head_dim(), cfg.rope_base);
    const int heads = cfg.head_count;
    const Index dh = cfg.head_dim();
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));

    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const LayerParams<S>& p = params.layers[l];
        MatX<S> a;
        rmsnorm_forward(x, p.norm1_gain, a);
        MatX<S> q = a * p.wq;
        MatX<S> k = a * p.wk;
        MatX<S> v = a * p.wv;
        for (int h = 0; h < heads; ++h) {
            rotary.apply(q.middleCols(h * dh, dh), S(1));
            rotary.apply(k.middleCols(h * dh, dh), S(1));
        }
        cache.append_kv(static_cast<int>(l), k, v);
        const MatX<S>& k_all = cache.keys(static_cast<int>(l));
        const MatX<S>& v_all = cache.values(static_cast<int>(l));
        MatX<S> heads_out(rows, cfg.width);
        for (int h = 0; h < heads; ++h) {
            MatX<S> scores =
                (q.middleCols(h * dh, dh) * k_all.middleCols(h * dh, dh).transpose()) * scale;
            MatX<S> prob = masked_probabilities(scores, mask_w, row_any);
            heads_out.middleCols(h * dh, dh).noalias() = prob * v_all.middleCols(h * dh, dh);
        }
        MatX<S> x1 = x + heads_out * p.wo;
        MatX<S> b;
        rmsnorm_forward(x1, p.norm2_gain, b);
        MatX<S> u = b * p.w1;
        x = x1 + silu(u) * p.w2;
    }

    MatX<S> normed;
    rmsnorm_forward(x, params.final_norm_gain, normed);
    return normed * params.output_head;
}

}  // namespace vist
