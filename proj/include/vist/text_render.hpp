// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "vist/common.hpp"

namespace vist {

// Tokens-per-chunk K, visual-tokens-per-chunk beta, and the compression
// ratio r = K/beta kept as an exact rational.
struct ChunkingConfig {
    int tokens_per_chunk = 0;   // K
    int visual_tokens = 0;      // beta

    ChunkingConfig() = default;
    ChunkingConfig(int k, int beta) : tokens_per_chunk(k), visual_tokens(beta) {
        if (k < 1 || beta < 1)
            throw ConfigError("chunking requires K >= 1 and beta >= 1");
    }

    int ratio_num() const { return tokens_per_chunk / std::gcd(tokens_per_chunk, visual_tokens); }
    int ratio_den() const { return visual_tokens / std::gcd(tokens_per_chunk, visual_tokens); }
    double ratio() const {
        return static_cast<double>(tokens_per_chunk) / static_cast<double>(visual_tokens);
    }
};

struct TextChunk {
    int chunk_index = 0;
    std::vector<TokenId> token_ids;

    int length() const { return static_cast<int>(token_ids.size()); }
};

// Splits a token stream into ceil(len/K) chunks; only the last may be short.
std::vector<TextChunk> chunk_text(const std::vector<TokenId>& token_ids,
                                  const ChunkingConfig& config);

// Fixed-cell monospace glyph set over a closed vocabulary. Glyphs are
// generated as structured block patterns (3x3 grid of ink blocks keyed by
// the symbol code, plus an always-on anchor so no glyph is blank); the
// constructor verifies pairwise distinctness.
class GlyphAtlas {
public:
    // Supported cell sizes: 8x8 and 8x16 (vertically doubled rows).
    GlyphAtlas(int vocab_size, int glyph_width, int glyph_height);

    int vocab_size() const { return static_cast<int>(glyphs_.size()); }
    int glyph_width() const { return glyph_width_; }
    int glyph_height() const { return glyph_height_; }

    // Row-major bits, glyph_height x glyph_width, one byte per pixel (0/1).
    const std::vector<std::uint8_t>& glyph(TokenId id) const;

    // Versioned binary blob; see docs/formats.md.
    std::vector<std::uint8_t> serialize() const;
    static GlyphAtlas deserialize(const std::vector<std::uint8_t>& blob);
    void save(const std::string& path) const;
    static GlyphAtlas load(const std::string& path);

    bool operator==(const GlyphAtlas& other) const;

private:
    GlyphAtlas() = default;
    int glyph_width_ = 0;
    int glyph_height_ = 0;
    std::vector<std::vector<std::uint8_t>> glyphs_;
};

struct PageGeometry {
    int height = 0;  // H, multiple of 16
    int width = 0;   // W, multiple of 16

    PageGeometry() = default;
    PageGeometry(int h, int w) : height(h), width(w) {
        if (h <= 0 || w <= 0 || h % 16 != 0 || w % 16 != 0)
            throw ConfigError("page dimensions must be positive multiples of 16");
    }

    int patch_rows() const { return height / 16; }
    int patch_cols() const { return width / 16; }
    int patch_count() const { return patch_rows() * patch_cols(); }  // m
    int cells_per_row(const GlyphAtlas& atlas) const { return width / atlas.glyph_width(); }
    int cell_rows(const GlyphAtlas& atlas) const { return height / atlas.glyph_height(); }
    int glyph_capacity(const GlyphAtlas& atlas) const {
        return cells_per_row(atlas) * cell_rows(atlas);
    }
};

// Grayscale page; background 0.0, ink 1.0. Rendering is a pure function of
// (chunk, atlas, geometry) and bit-exact across calls.
struct RenderedPage {
    Eigen::MatrixXf pixels;  // height x width
    int source_chunk = -1;

    int height() const { return static_cast<int>(pixels.rows()); }
    int width() const { return static_cast<int>(pixels.cols()); }
};

// Lays glyphs left-to-right, top-to-bottom on a fixed grid; unused cells
// stay at background. Throws CapacityError when the chunk does not fit.
RenderedPage render_chunk(const TextChunk& chunk, const GlyphAtlas& atlas,
                          const PageGeometry& geometry);

// Exact template matching; inverts render_chunk. The first blank cell
// terminates the page (glyphs are never blank); anything that is neither a
// glyph nor background raises DecodeError.
std::vector<TokenId> decode_page_oracle(const RenderedPage& page, const GlyphAtlas& atlas);

// Binary PGM (P5), maxval 255; byte-exact across platforms.
std::vector<std::uint8_t> page_to_pgm(const RenderedPage& page);
void write_pgm(const RenderedPage& page, const std::string& path);

std::uint64_t page_checksum(const RenderedPage& page);

}  // namespace vist
