// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "vist/encoder.hpp"

using namespace vist;
using S = double;

namespace {

RenderedPage random_page(Rng& rng, int h, int w) {
    RenderedPage page;
    page.pixels.resize(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) page.pixels(y, x) = rng.below(2) ? 1.0f : 0.0f;
    return page;
}

}  // namespace

TEST_CASE("patchify geometry and losslessness") {
    Rng rng(1);
    SUBCASE("patch counts") {
        CHECK(patchify<S>(random_page(rng, 256, 256)).patch_count() == 256);
        CHECK(patchify<S>(random_page(rng, 32, 32)).patch_count() == 4);
        CHECK(patchify<S>(random_page(rng, 32, 64)).patch_count() == 8);
    }
    SUBCASE("round-trip is bit-exact on random pages") {
        for (int trial = 0; trial < 100; ++trial) {
            const RenderedPage page = random_page(rng, 32, 48);
            const RenderedPage back = depatchify(patchify<float>(page));
            CHECK(back.pixels == page.pixels);
        }
    }
    SUBCASE("row-major patch order") {
        RenderedPage page;
        page.pixels = Eigen::MatrixXf::Zero(32, 32);
        page.pixels(0, 16) = 1.0f;  // top-right patch
        const auto grid = patchify<S>(page);
        CHECK(grid.patches(1, 0) == 1.0);
        CHECK(grid.patches.row(0).sum() == 0.0);
    }
}

TEST_CASE("encode shape law and permutation sensitivity") {
    Rng rng(2);
    for (const int hw : {32, 64}) {
        EncoderConfig cfg;
        cfg.width = 32;
        cfg.layer_count = 2;
        cfg.head_count = 4;
        cfg.patch_count = (hw / 16) * (hw / 16);
        EncoderParams<S> params = make_encoder_params<S>(cfg, rng);
        const auto grid = patchify<S>(random_page(rng, hw, hw));
        EncoderTape<S> tape;
        const MatX<S> raw = encode(grid, params, tape);
        CHECK(raw.rows() == grid.patch_count());
        CHECK(raw.cols() == cfg.width);

        // identical inputs give bit-identical outputs
        EncoderTape<S> tape2;
        CHECK(encode(grid, params, tape2) == raw);

        // swapping two patches changes the output (learned positions)
        auto swapped = grid;
        swapped.patches.row(0).swap(swapped.patches.row(1));
        EncoderTape<S> tape3;
        const MatX<S> raw_swapped = encode(swapped, params, tape3);
        CHECK((raw_swapped - raw).cwiseAbs().maxCoeff() > 1e-8);
    }
}

TEST_CASE("align is an affine map through tanh") {
    Rng rng(3);
    SUBCASE("zero input yields tanh of the bias") {
        AlignerParams<S> p = make_aligner_params<S>(4, 6, rng, 0.1);
        p.b.setConstant(0.3);
        const MatX<S> raw = MatX<S>::Zero(5, 4);
        const auto block = align(raw, p, 0);
        for (Index r = 0; r < 5; ++r)
            for (Index c = 0; c < 6; ++c)
                CHECK(block.embeddings(r, c) == doctest::Approx(std::tanh(0.3)).epsilon(1e-12));
    }
    SUBCASE("outputs stay strictly inside (-1,1)") {
        AlignerParams<S> p = make_aligner_params<S>(8, 8, rng, 2.0);
        MatX<S> raw(16, 8);
        fill_normal(raw, rng, 10.0);
        const auto block = align(raw, p, 1);
        CHECK(block.embeddings.cwiseAbs().maxCoeff() < 1.0);
        CHECK(block.source_chunk == 1);
    }
    SUBCASE("analytic cancellation") {
        AlignerParams<S> p;
        p.w = MatX<S>::Constant(1, 1, 2.0);
        p.b = VecX<S>::Constant(1, -2.0);
        const MatX<S> raw = MatX<S>::Constant(1, 1, 1.0);
        CHECK(align(raw, p, 0).embeddings(0, 0) == 0.0);
    }
}

TEST_CASE("encoder and aligner gradients match finite differences") {
    Rng rng(4);
    EncoderConfig cfg;
    cfg.width = 16;
    cfg.layer_count = 2;
    cfg.head_count = 2;
    cfg.patch_count = 4;
    EncoderParams<S> enc = make_encoder_params<S>(cfg, rng);
    AlignerParams<S> aligner = make_aligner_params<S>(cfg.width, 12, rng, 0.1);
    const auto grid = patchify<S>(random_page(rng, 32, 32));

    // smooth scalar head: weighted sum of the aligned block
    MatX<S> head(4, 12);
    fill_normal(head, rng, 1.0);

    auto loss_fn = [&]() {
        EncoderTape<S> tape;
        const auto block = encode_page(grid, enc, aligner, tape);
        return (block.embeddings.array() * head.array()).sum();
    };

    EncoderTape<S> tape;
    encode_page(grid, enc, aligner, tape);
    EncoderParams<S> enc_g = enc;
    for_each_tensor(enc_g, "", [](const std::string&, auto& t) { t.setZero(); });
    AlignerParams<S> al_g = aligner;
    for_each_tensor(al_g, "", [](const std::string&, auto& t) { t.setZero(); });
    encode_page_backward(head, grid, enc, aligner, tape, enc_g, al_g);

    const double eps = 1e-6;
    double worst = 0;
    auto probe = [&](auto& param_owner, auto& grad_owner, const std::string& prefix) {
        std::vector<std::pair<std::string, S*>> pptrs, gptrs;
        std::vector<Index> sizes;
        for_each_tensor(param_owner, prefix, [&](const std::string& n, auto& t) {
            pptrs.push_back({n, t.data()});
            sizes.push_back(t.size());
        });
        for_each_tensor(grad_owner, prefix, [&](const std::string& n, auto& t) {
            gptrs.push_back({n, t.data()});
        });
        Rng pick(9);
        for (std::size_t i = 0; i < pptrs.size(); ++i)
            for (int rep = 0; rep < 4; ++rep) {
                const Index idx = static_cast<Index>(pick.below(
                    static_cast<std::uint64_t>(sizes[i])));
                S* slot = pptrs[i].second + idx;
                const S orig = *slot;
                *slot = orig + eps;
                const double lp = loss_fn();
                *slot = orig - eps;
                const double lm = loss_fn();
                *slot = orig;
                const double fd = (lp - lm) / (2 * eps);
                const double an = gptrs[i].second[idx];
                const double rel =
                    std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
                worst = std::max(worst, rel);
            }
    };
    probe(enc, enc_g, "");
    probe(aligner, al_g, "");
    CHECK(worst < 1e-4);
}
