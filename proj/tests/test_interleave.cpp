// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "vist/interleave.hpp"

using namespace vist;

namespace {

// Independent brute-force visibility enumerator, written directly from the
// textual rule over (modality, chunk, offset) triples. Deliberately shares
// no code with vist::visible.
bool oracle_visible(const TokenMeta& q, const TokenMeta& k, AttentionVariant variant,
                    const std::vector<int>& block_len) {
    const bool k_compressed = block_len[static_cast<std::size_t>(k.chunk_index)] > 0;
    if (variant == AttentionVariant::kGcc) {
        if (q.modality == Modality::kText && k.modality == Modality::kText) {
            if (q.chunk_index == k.chunk_index) return k.offset <= q.offset;
            return k.chunk_index < q.chunk_index && !k_compressed;
        }
        if (q.modality == Modality::kText && k.modality == Modality::kVisual)
            return k.chunk_index < q.chunk_index;
        if (q.modality == Modality::kVisual && k.modality == Modality::kText) {
            if (q.chunk_index == k.chunk_index) return true;  // full source chunk
            return k.chunk_index < q.chunk_index && !k_compressed;
        }
        return k.chunk_index < q.chunk_index;  // visual -> visual
    }
    // OCR variant: plain causality of the flipped surface order
    // [v_0, c_0, v_1, c_1, ...] expressed on metadata.
    auto surface = [](const TokenMeta& t) {
        // (chunk, intra-chunk rank, offset): visual precedes text
        return std::tuple<int, int, int>(t.chunk_index, t.modality == Modality::kVisual ? 0 : 1,
                                         t.offset);
    };
    return surface(k) <= surface(q);
}

TextChunk make_chunk(int index, int len) {
    TextChunk c;
    c.chunk_index = index;
    for (int i = 0; i < len; ++i) c.token_ids.push_back(i % 7);
    return c;
}

std::vector<TextChunk> make_chunks(int n, int len) {
    std::vector<TextChunk> chunks;
    for (int i = 0; i < n; ++i) chunks.push_back(make_chunk(i, len));
    return chunks;
}

std::vector<BlockShape> make_blocks(int n, int beta) {
    std::vector<BlockShape> blocks;
    for (int i = 0; i < n; ++i) blocks.push_back({i, beta});
    return blocks;
}

}  // namespace

TEST_CASE("assemble orders segments per mode") {
    const auto chunks = make_chunks(2, 4);
    const auto blocks = make_blocks(2, 2);

    const auto standard = assemble(chunks, blocks, OrderMode::kStandard);
    REQUIRE(standard.segments.size() == 4);
    CHECK(standard.total_length() == 12);
    CHECK(standard.segments[0].modality == Modality::kText);
    CHECK(standard.segments[1].modality == Modality::kVisual);
    CHECK(standard.variant == AttentionVariant::kGcc);

    const auto flipped = assemble(chunks, blocks, OrderMode::kFlipped);
    CHECK(flipped.segments[0].modality == Modality::kVisual);
    CHECK(flipped.segments[1].modality == Modality::kText);
    CHECK(flipped.variant == AttentionVariant::kOcr);
    CHECK(flipped.total_length() == 12);

    const auto plain = assemble(make_chunks(1, 4), {}, OrderMode::kStandard);
    REQUIRE(plain.segments.size() == 1);
    CHECK(plain.total_length() == 4);

    SUBCASE("pairing mismatch is rejected") {
        auto bad = blocks;
        bad[1].chunk_index = 5;
        CHECK_THROWS_AS(assemble(chunks, bad, OrderMode::kStandard), LayoutError);
        CHECK_THROWS_AS(assemble(chunks, {blocks[0]}, OrderMode::kFlipped), LayoutError);
    }
}

TEST_CASE("build_mask equals the brute-force enumerator on all small layouts") {
    for (const auto variant : {AttentionVariant::kGcc, AttentionVariant::kOcr})
        for (const auto mode : {OrderMode::kStandard, OrderMode::kFlipped})
            for (int n = 1; n <= 5; ++n)
                for (int k = 1; k <= 8; k += 2)
                    for (int beta = 1; beta <= 4; ++beta) {
                        const auto layout =
                            assemble(make_chunks(n, k), make_blocks(n, beta), mode, variant);
                        const auto rule = build_mask(layout);
                        for (int q = 0; q < layout.total_length(); ++q)
                            for (int kk = 0; kk < layout.total_length(); ++kk) {
                                const bool got = rule(q, kk);
                                const bool want = oracle_visible(
                                    layout.tokens[static_cast<std::size_t>(q)],
                                    layout.tokens[static_cast<std::size_t>(kk)], variant,
                                    layout.chunk_block_len);
                                REQUIRE(got == want);
                            }
                    }
}

TEST_CASE("spec mask examples") {
    SUBCASE("single text chunk degenerates to causal") {
        const auto layout = assemble(make_chunks(1, 5), {}, OrderMode::kStandard);
        const auto rule = build_mask(layout);
        for (int q = 0; q < 5; ++q)
            for (int k = 0; k < 5; ++k) CHECK(rule(q, k) == (k <= q));
    }

    SUBCASE("layout [T2, V1, T2]: chunk-1 text sees the block, not chunk-0 text") {
        std::vector<Segment> segs{{Modality::kText, 0, 2},
                                  {Modality::kVisual, 0, 1},
                                  {Modality::kText, 1, 2}};
        const auto layout = layout_from_segments(segs, OrderMode::kStandard);
        const auto rule = build_mask(layout);
        const int q = layout.flat_index(Modality::kText, 1, 0);
        CHECK(rule(q, layout.flat_index(Modality::kVisual, 0, 0)));
        CHECK(rule(q, q));
        CHECK_FALSE(rule(q, layout.flat_index(Modality::kText, 0, 0)));
        CHECK_FALSE(rule(q, layout.flat_index(Modality::kText, 0, 1)));
        int visible_count = 0;
        for (int k = 0; k < layout.total_length(); ++k) visible_count += rule(q, k);
        CHECK(visible_count == 2);
    }

    SUBCASE("visual block 1 in [T2, V1, T2, V1] sees its chunk and block 0") {
        const auto layout =
            assemble(make_chunks(2, 2), make_blocks(2, 1), OrderMode::kStandard);
        const auto rule = build_mask(layout);
        const int q = layout.flat_index(Modality::kVisual, 1, 0);
        CHECK(rule(q, layout.flat_index(Modality::kText, 1, 0)));
        CHECK(rule(q, layout.flat_index(Modality::kText, 1, 1)));
        CHECK(rule(q, layout.flat_index(Modality::kVisual, 0, 0)));
        int visible_count = 0;
        for (int k = 0; k < layout.total_length(); ++k) visible_count += rule(q, k);
        CHECK(visible_count == 3);
    }
}

TEST_CASE("no text leakage across compressed chunks") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(3));
        const int k = 1 + static_cast<int>(rng.below(6));
        const int beta = 1 + static_cast<int>(rng.below(3));
        const auto layout = assemble(make_chunks(n, k), make_blocks(n, beta),
                                     OrderMode::kStandard);
        const auto rule = build_mask(layout);
        for (int q = 0; q < layout.total_length(); ++q)
            for (int kk = 0; kk < layout.total_length(); ++kk) {
                const auto& qa = layout.tokens[static_cast<std::size_t>(q)];
                const auto& kb = layout.tokens[static_cast<std::size_t>(kk)];
                if (kb.modality == Modality::kText && kb.chunk_index < qa.chunk_index)
                    CHECK_FALSE(rule(q, kk));
            }
    }
}

TEST_CASE("flip invariance: identical rule keyed by metadata in both orders") {
    for (const auto variant : {AttentionVariant::kGcc, AttentionVariant::kOcr}) {
        const auto chunks = make_chunks(3, 4);
        const auto blocks = make_blocks(3, 2);
        const auto std_layout = assemble(chunks, blocks, OrderMode::kStandard, variant);
        const auto flip_layout = assemble(chunks, blocks, OrderMode::kFlipped, variant);
        const auto std_rule = build_mask(std_layout);
        const auto flip_rule = build_mask(flip_layout);
        for (const auto& q : std_layout.tokens)
            for (const auto& k : std_layout.tokens) {
                const bool a = std_rule(std_layout.flat_index(q.modality, q.chunk_index, q.offset),
                                        std_layout.flat_index(k.modality, k.chunk_index, k.offset));
                const bool b =
                    flip_rule(flip_layout.flat_index(q.modality, q.chunk_index, q.offset),
                              flip_layout.flat_index(k.modality, k.chunk_index, k.offset));
                CHECK(a == b);
            }
    }
}

TEST_CASE("positions follow the base-plus-offset law") {
    SUBCASE("spec examples") {
        const auto layout = assemble(make_chunks(4, 8), make_blocks(4, 4),
                                     OrderMode::kStandard);
        CHECK(layout.positions[static_cast<std::size_t>(
                  layout.flat_index(Modality::kText, 0, 0))] == 0);
        CHECK(layout.positions[static_cast<std::size_t>(
                  layout.flat_index(Modality::kText, 3, 2))] == 3 * 4 + 2);
        // aliasing: visual token 1 of block 2 and text token 1 of chunk 2
        CHECK(layout.positions[static_cast<std::size_t>(
                  layout.flat_index(Modality::kVisual, 2, 1))] == 9);
        CHECK(layout.positions[static_cast<std::size_t>(
                  layout.flat_index(Modality::kText, 2, 1))] == 9);
    }

    SUBCASE("property vs one-line reference on random ragged layouts") {
        Rng rng(17);
        for (int trial = 0; trial < 200; ++trial) {
            const int n = 1 + static_cast<int>(rng.below(5));
            std::vector<TextChunk> chunks;
            std::vector<BlockShape> blocks;
            std::vector<int> beta(static_cast<std::size_t>(n));
            const bool last_has_block = rng.below(2) == 0;
            for (int i = 0; i < n; ++i) {
                chunks.push_back(make_chunk(i, 1 + static_cast<int>(rng.below(6))));
                if (i + 1 < n || last_has_block) {
                    const int b = 1 + static_cast<int>(rng.below(4));
                    blocks.push_back({i, b});
                    beta[static_cast<std::size_t>(i)] = b;
                } else {
                    beta[static_cast<std::size_t>(i)] = 0;
                }
            }
            const auto layout = assemble(chunks, blocks, OrderMode::kStandard);
            // reference: Pos(j) = sum of |v_<i| + j, with raw length for
            // chunks that have no block
            for (int i = 0; i < layout.total_length(); ++i) {
                const auto& t = layout.tokens[static_cast<std::size_t>(i)];
                long base = 0;
                for (int c = 0; c < t.chunk_index; ++c)
                    base += beta[static_cast<std::size_t>(c)] > 0
                                ? beta[static_cast<std::size_t>(c)]
                                : chunks[static_cast<std::size_t>(c)].length();
                CHECK(layout.positions[static_cast<std::size_t>(i)] == base + t.offset);
            }
            // monotone bases
            long prev = -1;
            for (int c = 0; c < n; ++c) {
                const long b = layout.positions[static_cast<std::size_t>(layout.flat_index(
                    Modality::kText, c, 0))];
                CHECK(b > prev);
                prev = b;
            }
        }
    }
}

TEST_CASE("closed-form pair count equals enumeration") {
    for (int n = 1; n <= 5; ++n)
        for (int k = 1; k <= 8; ++k)
            for (int beta = 1; beta <= 4; ++beta) {
                const auto layout =
                    assemble(make_chunks(n, k), make_blocks(n, beta), OrderMode::kStandard);
                CHECK(build_mask(layout).visible_pair_count() ==
                      gcc_pair_count_closed_form(n, k, beta));
            }
}

TEST_CASE("layout dump golden") {
    std::vector<Segment> segs{{Modality::kText, 0, 2},
                              {Modality::kVisual, 0, 1},
                              {Modality::kText, 1, 2}};
    const auto layout = layout_from_segments(segs, OrderMode::kStandard);
    CHECK(layout_dump(layout) ==
          "T 0 0 0 1\n"
          "T 0 1 1 2\n"
          "V 0 0 0 2\n"
          "T 1 0 1 2\n"
          "T 1 1 2 3\n");
}
