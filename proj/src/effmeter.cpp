// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#include "vist/effmeter.hpp"

#include <sstream>

namespace vist {

const char* regime_name(Regime regime) {
    switch (regime) {
        case Regime::kNone: return "none";
        case Regime::kPcc: return "pcc";
        case Regime::kGcc: return "gcc";
    }
    return "?";
}

long compressed_prompt_entries(long prompt_tokens, int tokens_per_chunk, int visual_tokens) {
    const long full = prompt_tokens / tokens_per_chunk;
    const long tail = prompt_tokens % tokens_per_chunk;
    return full * visual_tokens + (tail > visual_tokens ? visual_tokens : tail);
}

namespace {

long long causal_pairs(long n) { return static_cast<long long>(n) * (n + 1) / 2; }

// Dense causal decoding over a prefix of P entries: token t attends P+t keys.
long long dense_decode_pairs(long prefix, long steps) {
    return static_cast<long long>(steps) * prefix + causal_pairs(steps);
}

}  // namespace

CostReport count_pairs(Regime regime, const EffScenario& sc) {
    sc.validate();
    const long l = sc.prompt_tokens, m = sc.gen_tokens;
    const int k = sc.tokens_per_chunk;
    const long beta = sc.visual_tokens;
    CostReport r;
    r.regime = regime;
    switch (regime) {
        case Regime::kNone: {
            r.prefill_tokens = l;
            r.prefill_pairs = causal_pairs(l);
            r.decode_pairs = dense_decode_pairs(l, m);
            r.kv_entries = l + m;
            break;
        }
        case Regime::kPcc: {
            const long p = compressed_prompt_entries(l, k, sc.visual_tokens);
            r.prefill_tokens = p;
            r.prefill_pairs = causal_pairs(p);
            r.decode_pairs = dense_decode_pairs(p, m);
            r.kv_entries = p + m;
            break;
        }
        case Regime::kGcc: {
            const long p = compressed_prompt_entries(l, k, sc.visual_tokens);
            r.prefill_tokens = p;
            // Prompt blocks see earlier blocks only (their raw text never
            // enters the LLM); a raw tail sees all blocks plus its prefix.
            const long full_blocks = l / k;
            const long tail = l % k;
            const bool tail_compressed = tail > beta;
            const long n_blocks = full_blocks + (tail_compressed ? 1 : 0);
            for (long i = 0; i < n_blocks; ++i) r.prefill_pairs += beta * (i * beta);
            if (tail > 0 && !tail_compressed)
                r.prefill_pairs += tail * n_blocks * beta + causal_pairs(tail);
            // Decoding: entries(t) = p + beta*c + (o+1) with c completed
            // chunks and o the offset of token t within its chunk.
            const long completed = m / k;
            const long rem = m % k;
            for (long c = 0; c < completed; ++c)
                r.decode_pairs += static_cast<long long>(k) * (p + c * beta) + causal_pairs(k);
            r.decode_pairs += static_cast<long long>(rem) * (p + completed * beta) +
                              causal_pairs(rem);
            // Each completed chunk's block attends its own K raw tokens plus
            // everything the chunk itself could see.
            for (long c = 0; c < completed; ++c)
                r.block_pairs += beta * (k + p + c * beta);
            r.kv_entries = p + completed * beta + rem;
            break;
        }
    }
    r.total_pairs = r.prefill_pairs + r.decode_pairs + r.block_pairs;
    r.kv_bytes = static_cast<long long>(r.kv_entries) * 2 * sc.d_lm * sc.bytes_per_scalar *
                 sc.layer_count;
    r.attention_flops = static_cast<double>(r.total_pairs) * (4.0 * sc.d_lm + 8.0);
    return r;
}

std::vector<CostReport> compare_regimes(const EffScenario& scenario) {
    std::vector<CostReport> reports;
    for (Regime regime : {Regime::kNone, Regime::kPcc, Regime::kGcc})
        reports.push_back(count_pairs(regime, scenario));
    const CostReport& none = reports.front();
    for (CostReport& r : reports) {
        r.kv_reduction = 1.0 - static_cast<double>(r.kv_entries) / none.kv_entries;
        r.decode_pair_reduction =
            1.0 - static_cast<double>(r.decode_pairs) / none.decode_pairs;
        r.total_pair_reduction = 1.0 - static_cast<double>(r.total_pairs) / none.total_pairs;
        r.prefill_token_ratio =
            static_cast<double>(none.prefill_tokens) / static_cast<double>(r.prefill_tokens);
    }
    return reports;
}

std::string render_report(const std::vector<CostReport>& reports, const EffScenario& sc,
                          std::uint64_t config_checksum) {
    std::ostringstream os;
    os << "# vist2 cost report v1\n";
    os << "# attention_flops = total_pairs * (4*d_lm + 8)\n";
    os << "config=" << hex64(config_checksum) << "\n";
    os << "prompt_tokens=" << sc.prompt_tokens << "\n";
    os << "gen_tokens=" << sc.gen_tokens << "\n";
    os << "tokens_per_chunk=" << sc.tokens_per_chunk << "\n";
    os << "visual_tokens=" << sc.visual_tokens << "\n";
    os << "d_lm=" << sc.d_lm << "\n";
    os << "layer_count=" << sc.layer_count << "\n";
    os << "bytes_per_scalar=" << sc.bytes_per_scalar << "\n";
    for (const CostReport& r : reports) {
        os << "\n[regime " << regime_name(r.regime) << "]\n";
        os << "prefill_tokens=" << r.prefill_tokens << "\n";
        os << "prefill_pairs=" << r.prefill_pairs << "\n";
        os << "decode_pairs=" << r.decode_pairs << "\n";
        os << "block_pairs=" << r.block_pairs << "\n";
        os << "total_pairs=" << r.total_pairs << "\n";
        os << "kv_entries=" << r.kv_entries << "\n";
        os << "kv_bytes=" << r.kv_bytes << "\n";
        char buf[200];
        std::snprintf(buf, sizeof(buf),
                      "attention_flops=%.6e\nkv_reduction=%.6f\ndecode_pair_reduction=%.6f\n"
                      "total_pair_reduction=%.6f\nprefill_token_ratio=%.6f\n",
                      r.attention_flops, r.kv_reduction, r.decode_pair_reduction,
                      r.total_pair_reduction, r.prefill_token_ratio);
        os << buf;
    }
    return os.str();
}

}  // namespace vist
