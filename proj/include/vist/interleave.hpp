// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vist/common.hpp"
#include "vist/text_render.hpp"

namespace vist {

enum class Modality : std::uint8_t { kText, kVisual };
enum class OrderMode : std::uint8_t { kStandard, kFlipped };

// Two visibility variants, carried by the layout (the rule itself depends
// only on token metadata, never on surface order):
//  - kGcc: text queries of chunk i see visual blocks < i, their own causal
//    prefix, and the raw text of earlier chunks that have no block; visual
//    queries of block i see their full source chunk and blocks < i.
//  - kOcr: surface-causal in the flipped order; text queries additionally
//    see blocks <= i and all earlier raw text, visual queries see earlier
//    text/blocks plus their own block prefix (and never their own chunk's
//    text, which follows them).
enum class AttentionVariant : std::uint8_t { kGcc, kOcr };

struct Segment {
    Modality modality = Modality::kText;
    int chunk_index = 0;
    int length = 0;
};

struct TokenMeta {
    Modality modality = Modality::kText;
    int chunk_index = 0;
    int offset = 0;
};

// Minimal view of a visual token block for layout construction.
struct BlockShape {
    int chunk_index = 0;
    int length = 0;  // m of the block
};

struct InterleavedLayout {
    std::vector<Segment> segments;
    OrderMode order_mode = OrderMode::kStandard;
    AttentionVariant variant = AttentionVariant::kGcc;

    // Flattened per-token views, derived at construction.
    std::vector<TokenMeta> tokens;
    std::vector<long> positions;  // filled by assign_positions

    // Per chunk index: text length (0 if absent) and block length (0 if
    // absent). A chunk with a block counts as compressed.
    std::vector<int> chunk_text_len;
    std::vector<int> chunk_block_len;

    int total_length() const { return static_cast<int>(tokens.size()); }
    int chunk_count() const { return static_cast<int>(chunk_text_len.size()); }
    bool compressed(int chunk) const { return chunk_block_len[static_cast<std::size_t>(chunk)] > 0; }

    // Flat index of the first token of each segment, parallel to segments.
    std::vector<int> segment_start;

    int flat_index(Modality m, int chunk, int offset) const;
};

// Builds a layout from explicit segments (used for SFT/generation shapes).
// Validates contiguous chunk indices, ascending chunk order, at most one
// text and one visual segment per chunk, and per-mode intra-chunk order.
InterleavedLayout layout_from_segments(std::vector<Segment> segments, OrderMode mode,
                                       std::optional<AttentionVariant> variant = std::nullopt);

// Spec shape: one text segment per chunk, paired blocks. In kStandard mode
// the final chunks' blocks may be absent; kFlipped requires every block.
InterleavedLayout assemble(const std::vector<TextChunk>& chunks,
                           const std::vector<BlockShape>& blocks, OrderMode mode,
                           std::optional<AttentionVariant> variant = std::nullopt);

// Modality-agnostic position ids: chunk i's base is the sum over k<i of
//(block length if chunk k is compressed else its raw text length); text and
// visual tokens of the same chunk alias the same base.
std::vector<long> assign_positions(const InterleavedLayout& layout);

// The decidable predicate behind the sparse attention mask.
bool visible(const TokenMeta& q, const TokenMeta& k, AttentionVariant variant,
             const std::vector<int>& chunk_block_len);

class VisibilityRule {
public:
    explicit VisibilityRule(const InterleavedLayout& layout)
        : variant_(layout.variant),
          tokens_(layout.tokens),
          chunk_block_len_(layout.chunk_block_len) {}

    bool operator()(int q_index, int k_index) const {
        return visible(tokens_[static_cast<std::size_t>(q_index)],
                       tokens_[static_cast<std::size_t>(k_index)], variant_, chunk_block_len_);
    }

    int size() const { return static_cast<int>(tokens_.size()); }

    // Dense boolean materialization, row = query.
    MatX<bool> materialize() const;

    long visible_pair_count() const;

private:
    AttentionVariant variant_;
    std::vector<TokenMeta> tokens_;
    std::vector<int> chunk_block_len_;
};

inline VisibilityRule build_mask(const InterleavedLayout& layout) {
    return VisibilityRule(layout);
}

// Closed-form visible-pair count for a kGcc layout of n full chunks of K
// text tokens, each with a beta-token block:
//   n*K(K+1)/2 + sum_i K*(i*beta) + n*beta*K + sum_i beta*(i*beta)
long gcc_pair_count_closed_form(int n_chunks, int tokens_per_chunk, int beta);

// One token per line: modality chunk offset position visible-set-size.
std::string layout_dump(const InterleavedLayout& layout);

}  // namespace vist
