// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Cost accounting for NONE / PCC / GCC inference regimes. Attention work is
// counted in visible (query, key) pairs over a whole session: prefill of a
// prompt of L tokens, then M generated tokens. The NONE and PCC regimes are
// dense causal over their live streams; GCC inserts a block and evicts each
// completed chunk's text, so its decode cost follows the cache growth law
//   entries(t) = prompt + beta*floor(t/K) + t mod K.
// FLOPs are model-relative: flops = pairs * (4*d_lm + 8), the per-pair cost
// of one QK dot, one AV accumulation (2*d_lm each) plus softmax bookkeeping
// (8); reductions are model-free pair ratios.

#pragma once

#include <string>
#include <vector>

#include "vist/interleave.hpp"

namespace vist {

enum class Regime : std::uint8_t { kNone, kPcc, kGcc };

const char* regime_name(Regime regime);

struct EffScenario {
    long prompt_tokens = 4096;   // L
    long gen_tokens = 28672;     // M
    int tokens_per_chunk = 1024; // K
    int visual_tokens = 256;     // beta
    int d_lm = 128;
    int layer_count = 4;
    int bytes_per_scalar = 4;

    void validate() const {
        if (prompt_tokens < 0 || gen_tokens < 0 || tokens_per_chunk < 1 || visual_tokens < 1)
            throw ConfigError("invalid efficiency scenario");
    }
};

// Prompt entries after tail-rule compression: beta per full chunk, and a
// residual of m tokens contributes beta if m > beta, else m.
long compressed_prompt_entries(long prompt_tokens, int tokens_per_chunk, int visual_tokens);

struct CostReport {
    Regime regime = Regime::kNone;
    long prefill_tokens = 0;     // tokens entering the LLM before decoding
    long kv_entries = 0;         // per layer, at session end
    long long kv_bytes = 0;      // entries * 2 * d_lm * bytes * layers
    long long prefill_pairs = 0;
    long long decode_pairs = 0;  // text-query pairs during token-by-token decoding
    long long block_pairs = 0;   // visual-query pairs of inserted blocks (GCC)
    long long total_pairs = 0;
    double attention_flops = 0;
    // Relative reductions vs the NONE regime, in [0,1].
    double kv_reduction = 0;
    double decode_pair_reduction = 0;
    double total_pair_reduction = 0;
    double prefill_token_ratio = 1.0;  // NONE prefill tokens / this prefill
};

CostReport count_pairs(Regime regime, const EffScenario& scenario);

// All three regimes with reductions vs NONE filled in.
std::vector<CostReport> compare_regimes(const EffScenario& scenario);

// Line-based key-value report, one section per regime; all reductions are
// recomputable from the raw counts in the file.
std::string render_report(const std::vector<CostReport>& reports, const EffScenario& scenario,
                          std::uint64_t config_checksum);

}  // namespace vist
