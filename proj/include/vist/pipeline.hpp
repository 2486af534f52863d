// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Ties renderer -> patchify -> encoder -> aligner -> decoder into one
// system with three parameter groups (encoder, aligner, llm).

#pragma once

#include <string>
#include <vector>

#include "vist/encoder.hpp"
#include "vist/model.hpp"
#include "vist/text_render.hpp"
#include "vist/vocab.hpp"

namespace vist {

template <class S>
struct Vist2Params {
    EncoderParams<S> encoder;
    AlignerParams<S> aligner;
    ModelParams<S> llm;
};

template <class S, class F>
void for_each_tensor(Vist2Params<S>& p, F&& f) {
    for_each_tensor(p.encoder, "encoder.", f);
    for_each_tensor(p.aligner, "aligner.", f);
    for_each_tensor(p.llm, "llm.", f);
}

template <class S>
void set_zero(Vist2Params<S>& p) {
    for_each_tensor(p, [](const std::string&, auto& t) { t.setZero(); });
}

// Static description of one system; parameters live separately so training
// state can be checkpointed/cloned without copying the atlas.
struct SystemConfig {
    int vocab_size = 64;
    ChunkingConfig chunking{8, 4};
    PageGeometry geometry{32, 32};
    int glyph_width = 8;
    int glyph_height = 16;
    EncoderConfig encoder;
    ModelConfig model;

    void validate() const {
        encoder.validate();
        model.validate();
        if (model.vocab_size < vocab_size)
            throw ConfigError("model vocab_size smaller than atlas vocabulary");
        if (chunking.visual_tokens != geometry.patch_count())
            throw ConfigError("beta must equal the page patch count (beta=" +
                              std::to_string(chunking.visual_tokens) + ", m=" +
                              std::to_string(geometry.patch_count()) + ")");
        if (encoder.patch_count != geometry.patch_count())
            throw ConfigError("encoder patch count must match page geometry");
    }
};

template <class S>
class Pipeline {
public:
    Pipeline(const SystemConfig& cfg, std::uint64_t init_seed)
        : cfg_(cfg), vocab_(cfg.vocab_size),
          atlas_(cfg.vocab_size, cfg.glyph_width, cfg.glyph_height) {
        cfg_.validate();
        const int capacity = cfg_.geometry.glyph_capacity(atlas_);
        if (cfg_.chunking.tokens_per_chunk > capacity)
            throw ConfigError("chunk size " + std::to_string(cfg_.chunking.tokens_per_chunk) +
                              " exceeds page glyph capacity " + std::to_string(capacity));
        Rng rng(init_seed);
        params_.encoder = make_encoder_params<S>(cfg_.encoder, rng);
        params_.aligner =
            make_aligner_params<S>(cfg_.encoder.width, cfg_.model.width, rng,
                                   cfg_.model.init_std);
        params_.llm = make_model_params<S>(cfg_.model, rng);
    }

    const SystemConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return vocab_; }
    const GlyphAtlas& atlas() const { return atlas_; }
    Vist2Params<S>& params() { return params_; }
    const Vist2Params<S>& params() const { return params_; }

    // Renders and encodes one chunk into its aligned block (with tape).
    VisualTokenBlock<S> compress_chunk(const TextChunk& chunk, PatchGrid<S>* grid_out = nullptr,
                                       EncoderTape<S>* tape_out = nullptr) const {
        const RenderedPage page = render_chunk(chunk, atlas_, cfg_.geometry);
        PatchGrid<S> grid = patchify<S>(page);
        EncoderTape<S> tape;
        VisualTokenBlock<S> block =
            encode_page(grid, params_.encoder, params_.aligner, tape);
        if (grid_out) *grid_out = std::move(grid);
        if (tape_out) *tape_out = std::move(tape);
        return block;
    }

    Vist2Params<S> zero_grads() const {
        Vist2Params<S> g = params_;
        set_zero(g);
        return g;
    }

private:
    SystemConfig cfg_;
    Vocab vocab_;
    GlyphAtlas atlas_;
    Vist2Params<S> params_;
};

}  // namespace vist
