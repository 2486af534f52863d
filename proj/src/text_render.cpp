// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#include "vist/text_render.hpp"

#include <cstring>
#include <fstream>

namespace vist {

std::vector<TextChunk> chunk_text(const std::vector<TokenId>& token_ids,
                                  const ChunkingConfig& config) {
    const int k = config.tokens_per_chunk;
    std::vector<TextChunk> chunks;
    for (std::size_t start = 0; start < token_ids.size(); start += k) {
        TextChunk chunk;
        chunk.chunk_index = static_cast<int>(chunks.size());
        const std::size_t end = std::min(token_ids.size(), start + k);
        chunk.token_ids.assign(token_ids.begin() + start, token_ids.begin() + end);
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

namespace {

// 3x3 grid of 2x2-pixel ink blocks inside an 8x8 cell with a 1px margin.
// Blocks 0..6 encode the symbol code bits, block 7 is unused, block 8 is an
// always-on anchor. Taller cells repeat rows.
std::vector<std::uint8_t> make_glyph(int code, int w, int h) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(w) * h, 0);
    const int repeat = h / 8;
    for (int block = 0; block < 9; ++block) {
        const bool on = block == 8 || (block < 7 && ((code >> block) & 1));
        if (!on) continue;
        const int bx = 1 + (block % 3) * 2;
        const int by = 1 + (block / 3) * 2;
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
                for (int rep = 0; rep < repeat; ++rep) {
                    const int y = (by + dy) * repeat + rep;
                    const int x = bx + dx;
                    bits[static_cast<std::size_t>(y) * w + x] = 1;
                }
    }
    return bits;
}

}  // namespace

GlyphAtlas::GlyphAtlas(int vocab_size, int glyph_width, int glyph_height)
    : glyph_width_(glyph_width), glyph_height_(glyph_height) {
    if (glyph_width != 8 || (glyph_height != 8 && glyph_height != 16))
        throw ConfigError("supported glyph cells are 8x8 and 8x16");
    if (vocab_size < 1 || vocab_size > 128)
        throw ConfigError("atlas vocabulary must have 1..128 symbols");
    glyphs_.reserve(vocab_size);
    for (int id = 0; id < vocab_size; ++id)
        glyphs_.push_back(make_glyph(id, glyph_width, glyph_height));
    for (std::size_t a = 0; a < glyphs_.size(); ++a)
        for (std::size_t b = a + 1; b < glyphs_.size(); ++b)
            if (glyphs_[a] == glyphs_[b])
                throw ConfigError("duplicate glyph bitmaps in atlas");
}

const std::vector<std::uint8_t>& GlyphAtlas::glyph(TokenId id) const {
    if (id < 0 || id >= vocab_size())
        throw ConfigError("glyph id out of range: " + std::to_string(id));
    return glyphs_[static_cast<std::size_t>(id)];
}

// Blob layout (little-endian): magic "VATL", u32 version=1, u32 width,
// u32 height, u32 count, then per glyph ceil(w*h/8) bytes of row-major bits
// (MSB first), then u64 FNV-1a of everything before it.
std::vector<std::uint8_t> GlyphAtlas::serialize() const {
    std::vector<std::uint8_t> out;
    auto put_u32 = [&out](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    out.insert(out.end(), {'V', 'A', 'T', 'L'});
    put_u32(1);
    put_u32(static_cast<std::uint32_t>(glyph_width_));
    put_u32(static_cast<std::uint32_t>(glyph_height_));
    put_u32(static_cast<std::uint32_t>(glyphs_.size()));
    const int bits_per_glyph = glyph_width_ * glyph_height_;
    for (const auto& g : glyphs_) {
        std::uint8_t byte = 0;
        for (int i = 0; i < bits_per_glyph; ++i) {
            byte = static_cast<std::uint8_t>((byte << 1) | g[static_cast<std::size_t>(i)]);
            if (i % 8 == 7) {
                out.push_back(byte);
                byte = 0;
            }
        }
        if (bits_per_glyph % 8 != 0)
            out.push_back(static_cast<std::uint8_t>(byte << (8 - bits_per_glyph % 8)));
    }
    const std::uint64_t sum = fnv1a(out.data(), out.size());
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(sum >> (8 * i)));
    return out;
}

GlyphAtlas GlyphAtlas::deserialize(const std::vector<std::uint8_t>& blob) {
    if (blob.size() < 28) throw IoError("atlas blob truncated");
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i)
        stored |= static_cast<std::uint64_t>(blob[blob.size() - 8 + i]) << (8 * i);
    if (fnv1a(blob.data(), blob.size() - 8) != stored)
        throw IoError("atlas blob checksum mismatch");
    std::size_t pos = 0;
    auto get_u32 = [&blob, &pos]() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(blob[pos++]) << (8 * i);
        return v;
    };
    if (std::memcmp(blob.data(), "VATL", 4) != 0) throw IoError("not an atlas blob");
    pos = 4;
    if (get_u32() != 1) throw IoError("unsupported atlas version");
    const int w = static_cast<int>(get_u32());
    const int h = static_cast<int>(get_u32());
    const int count = static_cast<int>(get_u32());
    GlyphAtlas atlas;
    atlas.glyph_width_ = w;
    atlas.glyph_height_ = h;
    const int bits_per_glyph = w * h;
    const int bytes_per_glyph = (bits_per_glyph + 7) / 8;
    if (blob.size() != pos + static_cast<std::size_t>(count) * bytes_per_glyph + 8)
        throw IoError("atlas blob size mismatch");
    for (int g = 0; g < count; ++g) {
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(bits_per_glyph));
        for (int i = 0; i < bits_per_glyph; ++i) {
            const std::uint8_t byte = blob[pos + static_cast<std::size_t>(i / 8)];
            bits[static_cast<std::size_t>(i)] = (byte >> (7 - i % 8)) & 1;
        }
        pos += bytes_per_glyph;
        atlas.glyphs_.push_back(std::move(bits));
    }
    return atlas;
}

void GlyphAtlas::save(const std::string& path) const {
    const auto blob = serialize();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

GlyphAtlas GlyphAtlas::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    return deserialize(blob);
}

bool GlyphAtlas::operator==(const GlyphAtlas& other) const {
    return glyph_width_ == other.glyph_width_ && glyph_height_ == other.glyph_height_ &&
           glyphs_ == other.glyphs_;
}

RenderedPage render_chunk(const TextChunk& chunk, const GlyphAtlas& atlas,
                          const PageGeometry& geometry) {
    if (chunk.length() > geometry.glyph_capacity(atlas))
        throw CapacityError("chunk of " + std::to_string(chunk.length()) +
                            " tokens exceeds page capacity of " +
                            std::to_string(geometry.glyph_capacity(atlas)));
    RenderedPage page;
    page.pixels = Eigen::MatrixXf::Zero(geometry.height, geometry.width);
    page.source_chunk = chunk.chunk_index;
    const int cpr = geometry.cells_per_row(atlas);
    const int gw = atlas.glyph_width();
    const int gh = atlas.glyph_height();
    for (int i = 0; i < chunk.length(); ++i) {
        const auto& bits = atlas.glyph(chunk.token_ids[static_cast<std::size_t>(i)]);
        const int cell_x = (i % cpr) * gw;
        const int cell_y = (i / cpr) * gh;
        for (int y = 0; y < gh; ++y)
            for (int x = 0; x < gw; ++x)
                page.pixels(cell_y + y, cell_x + x) =
                    bits[static_cast<std::size_t>(y) * gw + x] ? 1.0f : 0.0f;
    }
    return page;
}

std::vector<TokenId> decode_page_oracle(const RenderedPage& page, const GlyphAtlas& atlas) {
    const PageGeometry geometry(page.height(), page.width());
    const int cpr = geometry.cells_per_row(atlas);
    const int rows = geometry.cell_rows(atlas);
    const int gw = atlas.glyph_width();
    const int gh = atlas.glyph_height();
    std::vector<TokenId> out;
    bool terminated = false;
    for (int cell = 0; cell < cpr * rows; ++cell) {
        const int cell_x = (cell % cpr) * gw;
        const int cell_y = (cell / cpr) * gh;
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(gw) * gh);
        bool blank = true;
        for (int y = 0; y < gh; ++y)
            for (int x = 0; x < gw; ++x) {
                const float v = page.pixels(cell_y + y, cell_x + x);
                if (v != 0.0f && v != 1.0f)
                    throw DecodeError("non-binary pixel in cell " + std::to_string(cell));
                bits[static_cast<std::size_t>(y) * gw + x] = v == 1.0f ? 1 : 0;
                blank = blank && v == 0.0f;
            }
        if (blank) {
            terminated = true;
            continue;
        }
        if (terminated)
            throw DecodeError("ink after blank cell " + std::to_string(cell));
        TokenId match = -1;
        for (TokenId id = 0; id < atlas.vocab_size(); ++id)
            if (atlas.glyph(id) == bits) {
                match = id;
                break;
            }
        if (match < 0)
            throw DecodeError("cell " + std::to_string(cell) + " matches no glyph");
        out.push_back(match);
    }
    return out;
}

std::vector<std::uint8_t> page_to_pgm(const RenderedPage& page) {
    std::string header = "P5\n" + std::to_string(page.width()) + " " +
                         std::to_string(page.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    for (int y = 0; y < page.height(); ++y)
        for (int x = 0; x < page.width(); ++x) {
            const float v = page.pixels(y, x);
            out.push_back(static_cast<std::uint8_t>(v * 255.0f + 0.5f));
        }
    return out;
}

void write_pgm(const RenderedPage& page, const std::string& path) {
    const auto bytes = page_to_pgm(page);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::uint64_t page_checksum(const RenderedPage& page) {
    const auto bytes = page_to_pgm(page);
    return fnv1a(bytes.data(), bytes.size());
}

}  // namespace vist
