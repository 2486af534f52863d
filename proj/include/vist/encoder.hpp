// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "vist/interleave.hpp"
#include "vist/nn.hpp"
#include "vist/text_render.hpp"

namespace vist {

constexpr int kPatchSize = 16;
constexpr int kPatchDim = kPatchSize * kPatchSize;

// m x 256 row-major flattened 16x16 tiles of one page.
template <class S>
struct PatchGrid {
    MatX<S> patches;
    int grid_rows = 0;
    int grid_cols = 0;
    int source_chunk = -1;

    int patch_count() const { return grid_rows * grid_cols; }
};

template <class S>
PatchGrid<S> patchify(const RenderedPage& page) {
    if (page.height() % kPatchSize != 0 || page.width() % kPatchSize != 0)
        throw ShapeError("page dimensions must be multiples of 16");
    PatchGrid<S> grid;
    grid.grid_rows = page.height() / kPatchSize;
    grid.grid_cols = page.width() / kPatchSize;
    grid.source_chunk = page.source_chunk;
    grid.patches.resize(grid.patch_count(), kPatchDim);
    for (int pr = 0; pr < grid.grid_rows; ++pr)
        for (int pc = 0; pc < grid.grid_cols; ++pc) {
            const int p = pr * grid.grid_cols + pc;
            for (int y = 0; y < kPatchSize; ++y)
                for (int x = 0; x < kPatchSize; ++x)
                    grid.patches(p, y * kPatchSize + x) =
                        static_cast<S>(page.pixels(pr * kPatchSize + y, pc * kPatchSize + x));
        }
    return grid;
}

template <class S>
RenderedPage depatchify(const PatchGrid<S>& grid) {
    RenderedPage page;
    page.source_chunk = grid.source_chunk;
    page.pixels.resize(grid.grid_rows * kPatchSize, grid.grid_cols * kPatchSize);
    for (int pr = 0; pr < grid.grid_rows; ++pr)
        for (int pc = 0; pc < grid.grid_cols; ++pc) {
            const int p = pr * grid.grid_cols + pc;
            for (int y = 0; y < kPatchSize; ++y)
                for (int x = 0; x < kPatchSize; ++x)
                    page.pixels(pr * kPatchSize + y, pc * kPatchSize + x) =
                        static_cast<float>(grid.patches(p, y * kPatchSize + x));
        }
    return page;
}

struct EncoderConfig {
    int width = 64;       // d_v
    int layer_count = 2;
    int head_count = 4;
    int patch_count = 0;  // m, fixed by the page geometry
    double init_std = 0.04;

    void validate() const {
        if (width <= 0 || layer_count <= 0 || head_count <= 0 || patch_count <= 0)
            throw ConfigError("encoder dimensions must be positive");
        if (width % head_count != 0)
            throw ConfigError("encoder width must be divisible by head count");
    }
};

template <class S>
struct EncoderParams {
    MatX<S> patch_projection;    // 256 x d_v
    MatX<S> position_embedding;  // m x d_v
    std::vector<LayerParams<S>> layers;
    int head_count = 0;
};

template <class S, class F>
void for_each_tensor(EncoderParams<S>& p, const std::string& prefix, F&& f) {
    f(prefix + "patch_projection", p.patch_projection);
    f(prefix + "position_embedding", p.position_embedding);
    for (std::size_t i = 0; i < p.layers.size(); ++i)
        for_each_tensor(p.layers[i], prefix + "layer" + std::to_string(i), f);
}

template <class S>
EncoderParams<S> make_encoder_params(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderParams<S> p;
    p.head_count = cfg.head_count;
    p.patch_projection.resize(kPatchDim, cfg.width);
    fill_normal(p.patch_projection, rng, cfg.init_std);
    p.position_embedding.resize(cfg.patch_count, cfg.width);
    fill_normal(p.position_embedding, rng, cfg.init_std);
    for (int i = 0; i < cfg.layer_count; ++i)
        p.layers.push_back(make_layer_params<S>(cfg.width, 4 * cfg.width, rng, cfg.init_std));
    return p;
}

template <class S>
struct AlignerParams {
    MatX<S> w;  // d_v x d_lm
    VecX<S> b;  // d_lm
};

template <class S, class F>
void for_each_tensor(AlignerParams<S>& p, const std::string& prefix, F&& f) {
    f(prefix + "w", p.w);
    f(prefix + "b", p.b);
}

template <class S>
AlignerParams<S> make_aligner_params(int d_v, int d_lm, Rng& rng, double init_std) {
    AlignerParams<S> p;
    p.w.resize(d_v, d_lm);
    fill_normal(p.w, rng, init_std);
    p.b = VecX<S>::Zero(d_lm);
    return p;
}

// The m aligned visual embeddings standing in for one chunk; every entry is
// strictly inside (-1, 1).
template <class S>
struct VisualTokenBlock {
    MatX<S> embeddings;  // m x d_lm
    int source_chunk = -1;

    BlockShape shape() const {
        return {source_chunk, static_cast<int>(embeddings.rows())};
    }
};

template <class S>
std::vector<BlockShape> shapes_of(const std::vector<VisualTokenBlock<S>>& blocks) {
    std::vector<BlockShape> shapes;
    shapes.reserve(blocks.size());
    for (const auto& b : blocks) shapes.push_back(b.shape());
    return shapes;
}

template <class S>
struct EncoderTape {
    MatX<S> embedded;  // patches*W + pos, input to layer 0
    std::vector<LayerTape<S>> layers;
    MatX<S> raw_out;   // m x d_v, pre-aligner
    MatX<S> aligned;   // m x d_lm, tanh output
};

// Bidirectional self-attention over the page's patches; no rotary phases,
// learned absolute position embeddings instead.
template <class S>
MatX<S> encode(const PatchGrid<S>& grid, const EncoderParams<S>& params, EncoderTape<S>& tape) {
    if (grid.patches.cols() != params.patch_projection.rows())
        throw ShapeError("patch dimension mismatch");
    if (grid.patch_count() != params.position_embedding.rows())
        throw ShapeError("patch count does not match encoder position table");
    tape.embedded.noalias() = grid.patches * params.patch_projection;
    tape.embedded += params.position_embedding;
    const auto mask = AttentionMask<S>::all_visible(grid.patch_count());
    const RotaryTable<S> no_rotary;
    tape.layers.assign(params.layers.size(), LayerTape<S>());
    MatX<S> x = tape.embedded;
    for (std::size_t i = 0; i < params.layers.size(); ++i)
        x = layer_forward(x, params.layers[i], params.head_count, mask, no_rotary,
                          tape.layers[i]);
    tape.raw_out = x;
    return x;
}

template <class S>
VisualTokenBlock<S> align(const MatX<S>& raw, const AlignerParams<S>& params, int source_chunk,
                          EncoderTape<S>* tape = nullptr) {
    if (raw.cols() != params.w.rows()) throw ShapeError("aligner input width mismatch");
    VisualTokenBlock<S> block;
    block.source_chunk = source_chunk;
    block.embeddings =
        ((raw * params.w).rowwise() + params.b.transpose()).array().tanh().matrix();
    if (tape) tape->aligned = block.embeddings;
    return block;
}

// Full page -> block forward with tape.
template <class S>
VisualTokenBlock<S> encode_page(const PatchGrid<S>& grid, const EncoderParams<S>& enc,
                                const AlignerParams<S>& aligner, EncoderTape<S>& tape) {
    const MatX<S> raw = encode(grid, enc, tape);
    return align(raw, aligner, grid.source_chunk, &tape);
}

// Backward from d(aligned block) through the aligner and encoder stack.
// Pixel gradients are not needed (pages are constants), so the patch input
// gradient is dropped after the projection term.
template <class S>
void encode_page_backward(const MatX<S>& d_aligned, const PatchGrid<S>& grid,
                          const EncoderParams<S>& enc, const AlignerParams<S>& aligner,
                          const EncoderTape<S>& tape, EncoderParams<S>& enc_grads,
                          AlignerParams<S>& aligner_grads) {
    // tanh' = 1 - tanh^2, with tanh cached in tape.aligned.
    const MatX<S> dpre =
        (d_aligned.array() * (S(1) - tape.aligned.array().square())).matrix();
    aligner_grads.w.noalias() += tape.raw_out.transpose() * dpre;
    aligner_grads.b += dpre.colwise().sum().transpose();
    MatX<S> dx = dpre * aligner.w.transpose();

    const RotaryTable<S> no_rotary;
    for (std::size_t i = enc.layers.size(); i-- > 0;)
        dx = layer_backward(dx, enc.layers[i], enc.head_count, no_rotary, tape.layers[i],
                            enc_grads.layers[i]);
    enc_grads.position_embedding += dx;
    enc_grads.patch_projection.noalias() += grid.patches.transpose() * dx;
}

}  // namespace vist
