// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "vist/model.hpp"

using namespace vist;
using S = double;

namespace {

// Naive plain-causal transformer forward, written independently with
// per-token loops; the degeneracy oracle for single-chunk layouts.
MatX<S> naive_causal_forward(const std::vector<TokenId>& ids, const ModelParams<S>& p,
                             const ModelConfig& cfg) {
    const int t = static_cast<int>(ids.size());
    const int dh = cfg.head_dim();
    MatX<S> x(t, cfg.width);
    for (int i = 0; i < t; ++i) x.row(i) = p.token_embedding.row(ids[static_cast<std::size_t>(i)]);

    auto rms = [&](const Eigen::RowVectorXd& v, const VecX<S>& g) {
        const double inv = 1.0 / std::sqrt(v.squaredNorm() / cfg.width + kNormEps);
        return (v.array() * inv * g.transpose().array()).matrix().eval();
    };
    auto rope = [&](Eigen::RowVectorXd v, long pos) {
        for (int h = 0; h < cfg.head_count; ++h)
            for (int j = 0; j < dh / 2; ++j) {
                const double angle = pos * std::pow(cfg.rope_base, -2.0 * j / dh);
                const double c = std::cos(angle), s = std::sin(angle);
                const double a = v(h * dh + 2 * j), b = v(h * dh + 2 * j + 1);
                v(h * dh + 2 * j) = a * c - b * s;
                v(h * dh + 2 * j + 1) = a * s + b * c;
            }
        return v;
    };

    for (const auto& layer : p.layers) {
        MatX<S> q(t, cfg.width), k(t, cfg.width), v(t, cfg.width);
        for (int i = 0; i < t; ++i) {
            const auto n = rms(x.row(i), layer.norm1_gain);
            q.row(i) = rope(n * layer.wq, i);
            k.row(i) = rope(n * layer.wk, i);
            v.row(i) = n * layer.wv;
        }
        MatX<S> attn_out(t, cfg.width);
        for (int i = 0; i < t; ++i)
            for (int h = 0; h < cfg.head_count; ++h) {
                std::vector<double> scores(static_cast<std::size_t>(i + 1));
                double mx = -1e300;
                for (int j = 0; j <= i; ++j) {
                    scores[static_cast<std::size_t>(j)] =
                        q.row(i).segment(h * dh, dh).dot(k.row(j).segment(h * dh, dh)) /
                        std::sqrt(static_cast<double>(dh));
                    mx = std::max(mx, scores[static_cast<std::size_t>(j)]);
                }
                double z = 0;
                Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dh);
                for (int j = 0; j <= i; ++j) {
                    const double w = std::exp(scores[static_cast<std::size_t>(j)] - mx);
                    z += w;
                    acc += w * v.row(j).segment(h * dh, dh);
                }
                attn_out.row(i).segment(h * dh, dh) = acc / z;
            }
        for (int i = 0; i < t; ++i) x.row(i) += attn_out.row(i) * layer.wo;
        for (int i = 0; i < t; ++i) {
            const auto n = rms(x.row(i), layer.norm2_gain);
            Eigen::RowVectorXd u = n * layer.w1;
            for (Index c = 0; c < u.size(); ++c) u(c) = u(c) / (1.0 + std::exp(-u(c)));
            x.row(i) += u * layer.w2;
        }
    }
    MatX<S> logits(t, cfg.vocab_size);
    for (int i = 0; i < t; ++i) logits.row(i) = rms(x.row(i), p.final_norm_gain) * p.output_head;
    return logits;
}

struct Fixture {
    ModelConfig cfg;
    ModelParams<S> params;
    Rng rng{99};

    Fixture() {
        cfg.width = 16;
        cfg.layer_count = 2;
        cfg.head_count = 2;
        cfg.vocab_size = 13;
        cfg.ffn_width = 24;
        cfg.max_position = 128;
        Rng init(42);
        params = make_model_params<S>(cfg, init);
    }

    SequenceInput<S> interleaved(int n_chunks, int k, int beta, bool final_block = true) {
        std::vector<TextChunk> chunks;
        std::vector<BlockShape> shapes;
        std::vector<TokenId> ids;
        for (int i = 0; i < n_chunks; ++i) {
            TextChunk c{i, {}};
            for (int j = 0; j < k; ++j)
                c.token_ids.push_back(static_cast<TokenId>(rng.below(
                    static_cast<std::uint64_t>(cfg.vocab_size))));
            ids.insert(ids.end(), c.token_ids.begin(), c.token_ids.end());
            chunks.push_back(c);
            if (i + 1 < n_chunks || final_block) shapes.push_back({i, beta});
        }
        SequenceInput<S> input;
        input.layout = assemble(chunks, shapes, OrderMode::kStandard);
        input.text_ids = ids;
        Index vis = 0;
        for (const auto& s : shapes) vis += s.length;
        input.visual_rows.resize(vis, cfg.width);
        fill_normal(input.visual_rows, rng, 0.5);
        input.visual_rows = input.visual_rows.array().tanh().matrix();
        return input;
    }
};

// step() the layout in pieces of the given sizes and return logits rows of
// the final piece.
MatX<S> run_steps(EvictableKVCache<S>& cache, const SequenceInput<S>& input,
                  const ModelParams<S>& params, const ModelConfig& cfg,
                  const std::vector<int>& piece_sizes) {
    MatX<S> last;
    int at = 0;
    std::size_t text_at = 0, vis_at = 0;
    for (int size : piece_sizes) {
        StepInput<S> si;
        for (int i = 0; i < size; ++i) {
            const TokenMeta& m = input.layout.tokens[static_cast<std::size_t>(at + i)];
            si.metas.push_back(m);
            si.positions.push_back(input.layout.positions[static_cast<std::size_t>(at + i)]);
            if (m.modality == Modality::kText) si.text_ids.push_back(input.text_ids[text_at++]);
        }
        int vis_count = 0;
        for (const auto& m : si.metas) vis_count += m.modality == Modality::kVisual;
        si.visual_rows.resize(vis_count, cfg.width);
        for (int i = 0; i < vis_count; ++i)
            si.visual_rows.row(i) = input.visual_rows.row(static_cast<Index>(vis_at++));
        last = step(cache, si, params, cfg);
        at += size;
    }
    return last;
}

}  // namespace

TEST_CASE("single text chunk degenerates to a plain causal transformer") {
    Fixture f;
    std::vector<TokenId> ids{3, 1, 4, 1, 5, 9, 2, 6};
    SequenceInput<S> input;
    input.layout = assemble({TextChunk{0, ids}}, {}, OrderMode::kStandard);
    input.text_ids = ids;
    input.visual_rows.resize(0, f.cfg.width);
    DecoderTape<S> tape;
    const MatX<S> logits = forward(input, f.params, f.cfg, tape);
    const MatX<S> want = naive_causal_forward(ids, f.params, f.cfg);
    CHECK(((logits - want).cwiseAbs().maxCoeff() /
           std::max(1.0, want.cwiseAbs().maxCoeff())) < 1e-6);
    CHECK(text_logits(logits, input.layout).rows() == 8);
}

TEST_CASE("perturbing earlier raw text never reaches later chunks") {
    Fixture f;
    auto input = f.interleaved(3, 4, 2);
    DecoderTape<S> tape;
    const MatX<S> base = forward(input, f.params, f.cfg, tape);
    auto perturbed = input;
    perturbed.text_ids[1] = (perturbed.text_ids[1] + 1) % f.cfg.vocab_size;
    DecoderTape<S> tape2;
    const MatX<S> after = forward(perturbed, f.params, f.cfg, tape2);
    for (int i = 0; i < input.layout.total_length(); ++i) {
        const TokenMeta& t = input.layout.tokens[static_cast<std::size_t>(i)];
        if (t.modality == Modality::kText && t.chunk_index > 0) {
            const double rel = (after.row(i) - base.row(i)).cwiseAbs().maxCoeff() /
                               std::max(1.0, base.row(i).cwiseAbs().maxCoeff());
            CHECK(rel <= 1e-12);
        }
    }
}

TEST_CASE("model gradients match finite differences") {
    Fixture f;
    auto input = f.interleaved(2, 3, 2);
    std::vector<ScoredTarget> scored;
    scored.push_back({input.layout.flat_index(Modality::kText, 0, 0), 2});
    scored.push_back({input.layout.flat_index(Modality::kText, 1, 1), 7});
    scored.push_back({input.layout.flat_index(Modality::kVisual, 0, 1), 4});

    auto loss_fn = [&]() {
        DecoderTape<S> tape;
        return cross_entropy(forward(input, f.params, f.cfg, tape), scored).loss;
    };
    DecoderTape<S> tape;
    const auto ce = cross_entropy(forward(input, f.params, f.cfg, tape), scored);
    ModelParams<S> grads = f.params;
    for_each_tensor(grads, "llm.", [](const std::string&, auto& t) { t.setZero(); });
    const MatX<S> dvis = backward(ce.dlogits, input, f.params, f.cfg, tape, grads);

    double worst = 0;
    const double eps = 1e-6;
    std::vector<S*> pp, gp;
    std::vector<Index> sizes;
    for_each_tensor(f.params, "llm.", [&](const std::string&, auto& t) {
        pp.push_back(t.data());
        sizes.push_back(t.size());
    });
    for_each_tensor(grads, "llm.", [&](const std::string&, auto& t) { gp.push_back(t.data()); });
    Rng pick(5);
    for (std::size_t i = 0; i < pp.size(); ++i)
        for (int rep = 0; rep < 3; ++rep) {
            const Index idx =
                static_cast<Index>(pick.below(static_cast<std::uint64_t>(sizes[i])));
            const S orig = pp[i][idx];
            pp[i][idx] = orig + eps;
            const double lp = loss_fn();
            pp[i][idx] = orig - eps;
            const double lm = loss_fn();
            pp[i][idx] = orig;
            const double fd = (lp - lm) / (2 * eps);
            const double an = gp[i][idx];
            worst = std::max(worst,
                             std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}));
        }
    CHECK(worst < 1e-4);

    // visual-input gradients too
    for (int rep = 0; rep < 6; ++rep) {
        const Index idx = static_cast<Index>(
            pick.below(static_cast<std::uint64_t>(input.visual_rows.size())));
        const S orig = input.visual_rows.data()[idx];
        input.visual_rows.data()[idx] = orig + eps;
        const double lp = loss_fn();
        input.visual_rows.data()[idx] = orig - eps;
        const double lm = loss_fn();
        input.visual_rows.data()[idx] = orig;
        const double fd = (lp - lm) / (2 * eps);
        const double an = dvis.data()[idx];
        CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}) < 1e-4);
    }
}

TEST_CASE("incremental step reproduces the full forward") {
    Fixture f;

    SUBCASE("single token equals forward on one token") {
        SequenceInput<S> input;
        input.layout = assemble({TextChunk{0, {5}}}, {}, OrderMode::kStandard);
        input.text_ids = {5};
        input.visual_rows.resize(0, f.cfg.width);
        DecoderTape<S> tape;
        const MatX<S> want = forward(input, f.params, f.cfg, tape);
        EvictableKVCache<S> cache(f.cfg.layer_count, f.cfg.width);
        const MatX<S> got = run_steps(cache, input, f.params, f.cfg, {1});
        CHECK((got - want).cwiseAbs().maxCoeff() < 1e-9);
    }

    SUBCASE("prefill 8 then step 1 equals forward on 9") {
        std::vector<TokenId> ids{3, 1, 4, 1, 5, 9, 2, 6, 5};
        SequenceInput<S> input;
        input.layout = assemble({TextChunk{0, ids}}, {}, OrderMode::kStandard);
        input.text_ids = ids;
        input.visual_rows.resize(0, f.cfg.width);
        DecoderTape<S> tape;
        const MatX<S> want = forward(input, f.params, f.cfg, tape);
        EvictableKVCache<S> cache(f.cfg.layer_count, f.cfg.width);
        const MatX<S> got = run_steps(cache, input, f.params, f.cfg, {8, 1});
        const double rel = (got.row(0) - want.row(8)).cwiseAbs().maxCoeff() /
                           std::max(1.0, want.row(8).cwiseAbs().maxCoeff());
        CHECK(rel < 1e-6);
    }

    SUBCASE("interleaved layout stepped in pieces equals forward") {
        auto input = f.interleaved(3, 4, 2, false);
        DecoderTape<S> tape;
        const MatX<S> want = forward(input, f.params, f.cfg, tape);
        EvictableKVCache<S> cache(f.cfg.layer_count, f.cfg.width);
        const MatX<S> got =
            run_steps(cache, input, f.params, f.cfg, {4, 2, 4, 2, 3, 1});
        const Index t = input.layout.total_length();
        const double rel = (got.row(0) - want.row(t - 1)).cwiseAbs().maxCoeff() /
                           std::max(1.0, want.row(t - 1).cwiseAbs().maxCoeff());
        CHECK(rel < 1e-6);
    }
}

TEST_CASE("eviction equivalence and cache bookkeeping") {
    Fixture f;
    const int k = 4, beta = 2;
    auto input = f.interleaved(3, k, beta, false);

    // Reference: full forward over the layout (blocks for chunks 0,1).
    DecoderTape<S> tape;
    const MatX<S> want = forward(input, f.params, f.cfg, tape);

    // Incremental with eviction after each completed chunk's block.
    EvictableKVCache<S> cache(f.cfg.layer_count, f.cfg.width);
    MatX<S> last;
    {
        int flat = 0;
        std::size_t text_at = 0, vis_at = 0;
        auto feed = [&](int count) {
            StepInput<S> si;
            for (int i = 0; i < count; ++i) {
                const TokenMeta& m = input.layout.tokens[static_cast<std::size_t>(flat + i)];
                si.metas.push_back(m);
                si.positions.push_back(
                    input.layout.positions[static_cast<std::size_t>(flat + i)]);
                if (m.modality == Modality::kText)
                    si.text_ids.push_back(input.text_ids[text_at++]);
            }
            int vis = 0;
            for (const auto& m : si.metas) vis += m.modality == Modality::kVisual;
            si.visual_rows.resize(vis, f.cfg.width);
            for (int i = 0; i < vis; ++i)
                si.visual_rows.row(i) = input.visual_rows.row(static_cast<Index>(vis_at++));
            flat += count;
            last = step(cache, si, f.params, f.cfg);
        };
        feed(k);          // chunk 0 text
        feed(beta);       // block 0
        evict_chunk(cache, 0);
        CHECK(cache.entry_count() == beta);
        feed(k);          // chunk 1 text
        feed(beta);       // block 1
        evict_chunk(cache, 1);
        CHECK(cache.entry_count() == 2 * beta);
        feed(k);          // chunk 2 text (kept raw)
        CHECK(cache.entry_count() == 2 * beta + k);
    }
    const Index t = input.layout.total_length();
    for (int r = 0; r < k; ++r) {
        const double rel = (last.row(r) - want.row(t - k + r)).cwiseAbs().maxCoeff() /
                           std::max(1.0, want.row(t - k + r).cwiseAbs().maxCoeff());
        CHECK(rel < 1e-6);
    }

    SUBCASE("eviction errors") {
        EvictableKVCache<S> cache2(f.cfg.layer_count, f.cfg.width);
        StepInput<S> si;
        si.metas.push_back({Modality::kText, 0, 0});
        si.positions.push_back(0);
        si.text_ids.push_back(1);
        si.visual_rows.resize(0, f.cfg.width);
        step(cache2, si, f.params, f.cfg);
        CHECK_THROWS_AS(evict_chunk(cache2, 0), CacheError);  // block absent

        StepInput<S> bi;
        for (int j = 0; j < 2; ++j) {
            bi.metas.push_back({Modality::kVisual, 0, j});
            bi.positions.push_back(j);
        }
        bi.visual_rows = MatX<S>::Zero(2, f.cfg.width);
        step(cache2, bi, f.params, f.cfg);
        evict_chunk(cache2, 0);
        CHECK(cache2.entry_count() == 2);
        CHECK_THROWS_AS(evict_chunk(cache2, 0), CacheError);  // double eviction
    }
}

TEST_CASE("input validation") {
    Fixture f;
    SUBCASE("position beyond max_position") {
        ModelConfig tiny = f.cfg;
        tiny.max_position = 3;
        SequenceInput<S> input;
        input.layout = assemble({TextChunk{0, {1, 2, 3, 4, 5}}}, {}, OrderMode::kStandard);
        input.text_ids = {1, 2, 3, 4, 5};
        input.visual_rows.resize(0, tiny.width);
        DecoderTape<S> tape;
        CHECK_THROWS_AS(forward(input, f.params, tiny, tape), ShapeError);
    }
    SUBCASE("token id outside the vocabulary") {
        SequenceInput<S> input;
        input.layout = assemble({TextChunk{0, {1}}}, {}, OrderMode::kStandard);
        input.text_ids = {99};
        input.visual_rows.resize(0, f.cfg.width);
        DecoderTape<S> tape;
        CHECK_THROWS_AS(forward(input, f.params, f.cfg, tape), ShapeError);
    }
    SUBCASE("visual row count mismatch") {
        auto input = f.interleaved(2, 3, 2);
        input.visual_rows.conservativeResize(input.visual_rows.rows() - 1, Eigen::NoChange);
        DecoderTape<S> tape;
        CHECK_THROWS_AS(forward(input, f.params, f.cfg, tape), ShapeError);
    }
}
