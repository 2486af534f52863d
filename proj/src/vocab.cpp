// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#include "vist/vocab.hpp"

#include <array>

namespace vist {
namespace {

// 91 printable symbols; content vocabularies index a prefix of this list.
constexpr const char* kAlphabet =
    "abcdefghijklmnopqrstuvwxyz .,ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    ":;!?'\"()-+*/=<>[]{}@#%&_^~|";

constexpr std::array<const char*, Vocab::kNumReserved> kReservedTags = {
    "<eos>", "<user>", "<assistant>", "<think>", "</think>"};

}  // namespace

Vocab::Vocab(int size) : size_(size) {
    const int max_content = static_cast<int>(std::string(kAlphabet).size());
    if (size <= kNumReserved || size - kNumReserved > max_content)
        throw ConfigError("vocab size must be in [" + std::to_string(kNumReserved + 1) +
                          ", " + std::to_string(max_content + kNumReserved) + "], got " +
                          std::to_string(size));
}

char Vocab::display_char(TokenId id) const {
    if (!valid(id)) throw ConfigError("token id out of range: " + std::to_string(id));
    if (is_reserved(id)) return '\0';
    return kAlphabet[id];
}

std::string Vocab::to_text(const std::vector<TokenId>& ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (!valid(id)) throw ConfigError("token id out of range: " + std::to_string(id));
        if (is_reserved(id))
            out += kReservedTags[id - content_size()];
        else
            out += kAlphabet[id];
    }
    return out;
}

std::vector<TokenId> Vocab::encode_text(const std::string& text) const {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (char c : text) {
        bool found = false;
        for (int i = 0; i < content_size(); ++i) {
            if (kAlphabet[i] == c) {
                ids.push_back(i);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError(std::string("character not in vocabulary: '") + c + "'");
    }
    return ids;
}

}  // namespace vist
