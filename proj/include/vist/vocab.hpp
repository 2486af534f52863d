// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "vist/common.hpp"

namespace vist {

// Character-level vocabulary over the glyph atlas. Ids [0, content_size)
// are corpus symbols with printable display characters; the tail of the id
// space holds reserved control symbols (chat-template markers etc.), which
// also carry glyphs so compressed segments containing them still render.
class Vocab {
public:
    static constexpr int kNumReserved = 5;
    enum Reserved : int { kEos = 0, kUser = 1, kAssistant = 2, kThink = 3, kThinkEnd = 4 };

    explicit Vocab(int size);

    int size() const { return size_; }
    int content_size() const { return size_ - kNumReserved; }
    TokenId reserved(Reserved r) const { return static_cast<TokenId>(content_size() + r); }
    bool is_reserved(TokenId id) const { return id >= content_size() && id < size_; }
    bool valid(TokenId id) const { return id >= 0 && id < size_; }

    // Display mapping used by text I/O. Content ids map to a fixed printable
    // alphabet; reserved ids render as bracketed tags.
    char display_char(TokenId id) const;
    std::string to_text(const std::vector<TokenId>& ids) const;
    // Inverse of display_char over content symbols; unknown characters error.
    std::vector<TokenId> encode_text(const std::string& text) const;

private:
    int size_;
};

}  // namespace vist
