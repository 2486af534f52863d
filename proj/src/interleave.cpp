// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#include "vist/interleave.hpp"

#include <algorithm>
#include <sstream>

namespace vist {

int InterleavedLayout::flat_index(Modality m, int chunk, int offset) const {
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const Segment& seg = segments[s];
        if (seg.modality == m && seg.chunk_index == chunk) {
            if (offset < 0 || offset >= seg.length)
                throw LayoutError("offset out of range in flat_index");
            return segment_start[s] + offset;
        }
    }
    throw LayoutError("no such segment in flat_index");
}

InterleavedLayout layout_from_segments(std::vector<Segment> segments, OrderMode mode,
                                       std::optional<AttentionVariant> variant) {
    InterleavedLayout layout;
    layout.order_mode = mode;
    layout.variant = variant.value_or(mode == OrderMode::kFlipped ? AttentionVariant::kOcr
                                                                  : AttentionVariant::kGcc);
    layout.segments = std::move(segments);

    int max_chunk = -1;
    for (const Segment& seg : layout.segments) {
        if (seg.length < 1) throw LayoutError("segment length must be >= 1");
        if (seg.chunk_index < 0) throw LayoutError("negative chunk index");
        max_chunk = std::max(max_chunk, seg.chunk_index);
    }
    layout.chunk_text_len.assign(static_cast<std::size_t>(max_chunk + 1), 0);
    layout.chunk_block_len.assign(static_cast<std::size_t>(max_chunk + 1), 0);

    int prev_chunk = -1;
    Modality prev_mod = Modality::kVisual;
    for (const Segment& seg : layout.segments) {
        auto& slot = seg.modality == Modality::kText
                         ? layout.chunk_text_len[static_cast<std::size_t>(seg.chunk_index)]
                         : layout.chunk_block_len[static_cast<std::size_t>(seg.chunk_index)];
        if (slot != 0) throw LayoutError("duplicate segment for chunk " +
                                         std::to_string(seg.chunk_index));
        slot = seg.length;
        if (seg.chunk_index < prev_chunk)
            throw LayoutError("segments must be in ascending chunk order");
        if (seg.chunk_index == prev_chunk) {
            const bool text_first = prev_mod == Modality::kText && seg.modality == Modality::kVisual;
            const bool block_first = prev_mod == Modality::kVisual && seg.modality == Modality::kText;
            if (mode == OrderMode::kStandard && !text_first)
                throw LayoutError("standard order expects text before block within a chunk");
            if (mode == OrderMode::kFlipped && !block_first)
                throw LayoutError("flipped order expects block before text within a chunk");
        }
        prev_chunk = seg.chunk_index;
        prev_mod = seg.modality;
    }
    for (int c = 0; c <= max_chunk; ++c)
        if (layout.chunk_text_len[static_cast<std::size_t>(c)] == 0 &&
            layout.chunk_block_len[static_cast<std::size_t>(c)] == 0)
            throw LayoutError("chunk indices must be contiguous; missing " + std::to_string(c));

    for (const Segment& seg : layout.segments) {
        layout.segment_start.push_back(static_cast<int>(layout.tokens.size()));
        for (int j = 0; j < seg.length; ++j)
            layout.tokens.push_back({seg.modality, seg.chunk_index, j});
    }
    layout.positions = assign_positions(layout);
    return layout;
}

InterleavedLayout assemble(const std::vector<TextChunk>& chunks,
                           const std::vector<BlockShape>& blocks, OrderMode mode,
                           std::optional<AttentionVariant> variant) {
    if (blocks.size() > chunks.size())
        throw LayoutError("more blocks than chunks");
    if (mode == OrderMode::kFlipped && blocks.size() != chunks.size())
        throw LayoutError("flipped order requires a block for every chunk");
    if (mode == OrderMode::kStandard && chunks.size() - blocks.size() > 1)
        throw LayoutError("only the final chunk may lack a block");
    std::vector<Segment> segments;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (chunks[i].chunk_index != static_cast<int>(i))
            throw LayoutError("chunk indices must be contiguous from 0");
        const bool has_block = i < blocks.size();
        if (has_block && blocks[i].chunk_index != chunks[i].chunk_index)
            throw LayoutError("block " + std::to_string(blocks[i].chunk_index) +
                              " is not paired with chunk " + std::to_string(chunks[i].chunk_index));
        const Segment text{Modality::kText, chunks[i].chunk_index, chunks[i].length()};
        if (!has_block) {
            segments.push_back(text);
            continue;
        }
        const Segment block{Modality::kVisual, blocks[i].chunk_index, blocks[i].length};
        if (mode == OrderMode::kStandard) {
            segments.push_back(text);
            segments.push_back(block);
        } else {
            segments.push_back(block);
            segments.push_back(text);
        }
    }
    return layout_from_segments(std::move(segments), mode, variant);
}

std::vector<long> assign_positions(const InterleavedLayout& layout) {
    std::vector<long> base(static_cast<std::size_t>(layout.chunk_count()), 0);
    long b = 0;
    for (int c = 0; c < layout.chunk_count(); ++c) {
        base[static_cast<std::size_t>(c)] = b;
        const int beta = layout.chunk_block_len[static_cast<std::size_t>(c)];
        b += beta > 0 ? beta : layout.chunk_text_len[static_cast<std::size_t>(c)];
    }
    std::vector<long> positions;
    positions.reserve(layout.tokens.size());
    for (const TokenMeta& t : layout.tokens)
        positions.push_back(base[static_cast<std::size_t>(t.chunk_index)] + t.offset);
    return positions;
}

bool visible(const TokenMeta& q, const TokenMeta& k, AttentionVariant variant,
             const std::vector<int>& chunk_block_len) {
    const auto compressed = [&chunk_block_len](int chunk) {
        return chunk_block_len[static_cast<std::size_t>(chunk)] > 0;
    };
    if (variant == AttentionVariant::kGcc) {
        if (q.modality == Modality::kText) {
            if (k.modality == Modality::kText)
                return (k.chunk_index == q.chunk_index && k.offset <= q.offset) ||
                       (k.chunk_index < q.chunk_index && !compressed(k.chunk_index));
            return k.chunk_index < q.chunk_index;
        }
        if (k.modality == Modality::kText)
            return k.chunk_index == q.chunk_index ||
                   (k.chunk_index < q.chunk_index && !compressed(k.chunk_index));
        return k.chunk_index < q.chunk_index;
    }
    // kOcr: causal over the flipped surface order, expressed on metadata.
    if (q.modality == Modality::kText) {
        if (k.modality == Modality::kText)
            return k.chunk_index < q.chunk_index ||
                   (k.chunk_index == q.chunk_index && k.offset <= q.offset);
        return k.chunk_index <= q.chunk_index;
    }
    if (k.modality == Modality::kText) return k.chunk_index < q.chunk_index;
    return k.chunk_index < q.chunk_index ||
           (k.chunk_index == q.chunk_index && k.offset <= q.offset);
}

MatX<bool> VisibilityRule::materialize() const {
    const int n = size();
    MatX<bool> mask(n, n);
    for (int q = 0; q < n; ++q)
        for (int k = 0; k < n; ++k) mask(q, k) = (*this)(q, k);
    return mask;
}

long VisibilityRule::visible_pair_count() const {
    const int n = size();
    long count = 0;
    for (int q = 0; q < n; ++q)
        for (int k = 0; k < n; ++k)
            if ((*this)(q, k)) ++count;
    return count;
}

long gcc_pair_count_closed_form(int n_chunks, int tokens_per_chunk, int beta) {
    const long n = n_chunks, k = tokens_per_chunk, b = beta;
    const long tri = n * (n - 1) / 2;  // sum_{i<n} i
    return n * k * (k + 1) / 2 + k * b * tri + n * b * k + b * b * tri;
}

std::string layout_dump(const InterleavedLayout& layout) {
    const VisibilityRule rule = build_mask(layout);
    std::ostringstream os;
    for (int i = 0; i < layout.total_length(); ++i) {
        const TokenMeta& t = layout.tokens[static_cast<std::size_t>(i)];
        int vis = 0;
        for (int k = 0; k < layout.total_length(); ++k)
            if (rule(i, k)) ++vis;
        os << (t.modality == Modality::kText ? 'T' : 'V') << ' ' << t.chunk_index << ' '
           << t.offset << ' ' << layout.positions[static_cast<std::size_t>(i)] << ' ' << vis
           << '\n';
    }
    return os.str();
}

}  // namespace vist
