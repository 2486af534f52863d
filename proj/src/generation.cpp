// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#include "vist/generation.hpp"

#include <sstream>

namespace vist {

std::string render_trace(const GenerationTrace& trace, const Vocab& vocab,
                         std::uint64_t config_checksum, std::uint64_t seed) {
    std::ostringstream os;
    os << "# vist2 trace v1 config=" << hex64(config_checksum) << " seed=" << seed << "\n";
    os << "prompt_entries=" << trace.prompt_entries << " prompt_chunks=" << trace.prompt_chunks
       << "\n";
    std::size_t next_event = 0;
    for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
        const TokenId id = trace.tokens[i];
        os << "T " << id << " " << vocab.to_text({id}) << " " << trace.cache_entries[i] << "\n";
        while (next_event < trace.events.size() &&
               trace.events[next_event].after_token == static_cast<long>(i) + 1) {
            const CompressionEvent& ev = trace.events[next_event++];
            os << "C " << ev.chunk_index << " " << ev.base_position << "\n";
        }
    }
    return os.str();
}

}  // namespace vist
