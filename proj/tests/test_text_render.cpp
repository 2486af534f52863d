// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "vist/text_render.hpp"
#include "vist/vocab.hpp"

using namespace vist;

namespace {

// Independent straight-line rasterizer: its own layout arithmetic, pixel by
// pixel, no shared code with render_chunk.
Eigen::MatrixXf oracle_raster(const std::vector<TokenId>& ids, const GlyphAtlas& atlas, int h,
                              int w) {
    Eigen::MatrixXf img = Eigen::MatrixXf::Zero(h, w);
    const int gw = atlas.glyph_width();
    const int gh = atlas.glyph_height();
    const int per_row = w / gw;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int row = static_cast<int>(i) / per_row;
        const int col = static_cast<int>(i) % per_row;
        const auto& bits = atlas.glyph(ids[i]);
        for (int y = 0; y < gh; ++y)
            for (int x = 0; x < gw; ++x)
                if (bits[static_cast<std::size_t>(y * gw + x)])
                    img(row * gh + y, col * gw + x) = 1.0f;
    }
    return img;
}

std::vector<TokenId> random_ids(Rng& rng, int n, int vocab) {
    std::vector<TokenId> ids;
    for (int i = 0; i < n; ++i)
        ids.push_back(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(vocab))));
    return ids;
}

}  // namespace

TEST_CASE("chunk_text partitions exactly") {
    const ChunkingConfig cfg(4, 2);
    std::vector<TokenId> ids(10);
    for (int i = 0; i < 10; ++i) ids[static_cast<std::size_t>(i)] = i;
    const auto chunks = chunk_text(ids, cfg);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].length() == 4);
    CHECK(chunks[1].length() == 4);
    CHECK(chunks[2].length() == 2);
    std::vector<TokenId> cat;
    for (const auto& c : chunks) {
        CHECK(c.chunk_index == static_cast<int>(&c - chunks.data()));
        cat.insert(cat.end(), c.token_ids.begin(), c.token_ids.end());
    }
    CHECK(cat == ids);

    CHECK(chunk_text({}, cfg).empty());

    std::vector<TokenId> big(4096, 1);
    CHECK(chunk_text(big, ChunkingConfig(1024, 256)).size() == 4);
}

TEST_CASE("atlas glyphs are distinct and serialize round-trip") {
    const GlyphAtlas atlas(64, 8, 16);
    CHECK(atlas.vocab_size() == 64);
    for (TokenId a = 0; a < atlas.vocab_size(); ++a) {
        bool any = false;
        for (auto b : atlas.glyph(a)) any = any || b;
        CHECK(any);  // anchor block keeps every glyph non-blank
    }
    const auto blob = atlas.serialize();
    const GlyphAtlas back = GlyphAtlas::deserialize(blob);
    CHECK(back == atlas);
    CHECK(back.serialize() == blob);

    auto corrupted = blob;
    corrupted[20] ^= 0x40;
    CHECK_THROWS_AS(GlyphAtlas::deserialize(corrupted), IoError);
}

TEST_CASE("embedded atlas blobs match the built-in generator") {
    const std::string root =
        std::filesystem::path(__FILE__).parent_path().parent_path().string();
    CHECK(GlyphAtlas::load(root + "/assets/atlas_64_8x16.vatl") == GlyphAtlas(64, 8, 16));
    CHECK(GlyphAtlas::load(root + "/assets/atlas_96_8x8.vatl") == GlyphAtlas(96, 8, 8));
}

TEST_CASE("render_chunk matches the independent rasterizer") {
    const GlyphAtlas atlas(64, 8, 16);
    const PageGeometry geom(32, 32);

    SUBCASE("empty chunk is a blank page") {
        const RenderedPage page = render_chunk({0, {}}, atlas, geom);
        CHECK(page.pixels.isZero(0.0f));
    }

    SUBCASE("single symbol lands at cell (0,0)") {
        const RenderedPage page = render_chunk({0, {7}}, atlas, geom);
        CHECK(page.pixels == oracle_raster({7}, atlas, 32, 32));
        CHECK(page.pixels.block(0, 8, 32, 24).isZero(0.0f));
        CHECK(page.pixels.block(16, 0, 16, 32).isZero(0.0f));
    }

    SUBCASE("reference 64-symbol page on 256x256, golden checksum") {
        const PageGeometry big(256, 256);
        std::vector<TokenId> ids;
        for (int i = 0; i < 64; ++i) ids.push_back(i);
        const RenderedPage page = render_chunk({0, ids}, atlas, big);
        CHECK(page.pixels == oracle_raster(ids, atlas, 256, 256));
        // Golden value frozen from the independent rasterizer.
        CHECK(page_checksum(page) == UINT64_C(0x1dd29de8f6c5651c));
    }

    SUBCASE("rendering is pure") {
        Rng rng(3);
        const auto ids = random_ids(rng, 8, 64);
        const RenderedPage a = render_chunk({0, ids}, atlas, geom);
        const RenderedPage b = render_chunk({0, ids}, atlas, geom);
        CHECK(a.pixels == b.pixels);
    }

    SUBCASE("capacity errors") {
        std::vector<TokenId> too_many(9, 1);  // 32x32 with 8x16 glyphs holds 8
        CHECK_THROWS_AS(render_chunk({0, too_many}, atlas, geom), CapacityError);
    }
}

TEST_CASE("decode_page_oracle inverts render_chunk") {
    const GlyphAtlas atlas(64, 8, 16);
    const PageGeometry geom(32, 32);

    SUBCASE("round-trip over random chunks") {
        Rng rng(11);
        for (int trial = 0; trial < 1000; ++trial) {
            const int len = static_cast<int>(rng.below(9));
            const auto ids = random_ids(rng, len, 64);
            const RenderedPage page = render_chunk({0, ids}, atlas, geom);
            CHECK(decode_page_oracle(page, atlas) == ids);
        }
    }

    SUBCASE("blank page decodes to the empty sequence") {
        const RenderedPage page = render_chunk({0, {}}, atlas, geom);
        CHECK(decode_page_oracle(page, atlas).empty());
    }

    SUBCASE("corrupted pixel raises a no-match error") {
        Rng rng(12);
        const auto ids = random_ids(rng, 8, 64);
        RenderedPage page = render_chunk({0, ids}, atlas, geom);
        page.pixels(3, 3) = 1.0f - page.pixels(3, 3);
        CHECK_THROWS_AS(decode_page_oracle(page, atlas), DecodeError);
    }
}

TEST_CASE("PGM export is byte-exact") {
    const GlyphAtlas atlas(64, 8, 16);
    const RenderedPage page = render_chunk({0, {0, 1, 2}}, atlas, PageGeometry(32, 32));
    const auto bytes = page_to_pgm(page);
    const std::string header(bytes.begin(), bytes.begin() + 13);
    CHECK(header == "P5\n32 32\n255\n");
    CHECK(bytes.size() == 13 + 32 * 32);
    for (std::size_t i = 13; i < bytes.size(); ++i)
        CHECK((bytes[i] == 0 || bytes[i] == 255));
    CHECK(page_to_pgm(page) == bytes);
}

TEST_CASE("vocab display round-trip") {
    const Vocab vocab(64);
    CHECK(vocab.content_size() == 59);
    std::vector<TokenId> ids;
    for (int i = 0; i < vocab.content_size(); ++i) ids.push_back(i);
    CHECK(vocab.encode_text(vocab.to_text(ids)) == ids);
    CHECK(vocab.to_text({vocab.reserved(Vocab::kEos)}) == "<eos>");
    CHECK_THROWS_AS(vocab.encode_text("\x01"), ConfigError);
}
