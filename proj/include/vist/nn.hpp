// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense transformer-block primitives shared by the optical encoder and the
// decoder backbone: RMSNorm, SiLU MLP, rotary phases from explicit position
// ids, and masked attention with exact zeros on invisible pairs. Forward
// passes record the activations needed by the hand-written backward passes.

#pragma once

#include <cmath>
#include <vector>

#include "vist/common.hpp"

namespace vist {

template <class S>
struct LayerParams {
    VecX<S> norm1_gain, norm2_gain;
    MatX<S> wq, wk, wv, wo;  // d x d
    MatX<S> w1, w2;          // d x f, f x d
};

template <class S, class F>
void for_each_tensor(LayerParams<S>& p, const std::string& prefix, F&& f) {
    f(prefix + ".norm1_gain", p.norm1_gain);
    f(prefix + ".wq", p.wq);
    f(prefix + ".wk", p.wk);
    f(prefix + ".wv", p.wv);
    f(prefix + ".wo", p.wo);
    f(prefix + ".norm2_gain", p.norm2_gain);
    f(prefix + ".w1", p.w1);
    f(prefix + ".w2", p.w2);
}

constexpr double kNormEps = 1e-5;

// y = x / rms(x) * gain, rowwise; returns inverse rms per row for backward.
template <class S>
VecX<S> rmsnorm_forward(const MatX<S>& x, const VecX<S>& gain, MatX<S>& y) {
    const Index d = x.cols();
    VecX<S> inv_rms(x.rows());
    y.resize(x.rows(), d);
    for (Index r = 0; r < x.rows(); ++r) {
        const S ms = x.row(r).squaredNorm() / static_cast<S>(d);
        const S inv = S(1) / std::sqrt(ms + static_cast<S>(kNormEps));
        inv_rms(r) = inv;
        y.row(r) = (x.row(r).array() * inv * gain.transpose().array()).matrix();
    }
    return inv_rms;
}

template <class S>
void rmsnorm_backward(const MatX<S>& dy, const MatX<S>& x, const VecX<S>& inv_rms,
                      const VecX<S>& gain, MatX<S>& dx, VecX<S>& dgain) {
    const Index d = x.cols();
    for (Index r = 0; r < x.rows(); ++r) {
        const S inv = inv_rms(r);
        dgain.array() += dy.row(r).transpose().array() * x.row(r).transpose().array() * inv;
        const auto dyg = (dy.row(r).array() * gain.transpose().array()).eval();
        const S dot = (dyg * x.row(r).array()).sum();
        dx.row(r).array() +=
            dyg * inv - x.row(r).array() * (dot * inv * inv * inv / static_cast<S>(d));
    }
}

template <class S>
S sigmoid(S v) {
    return S(1) / (S(1) + std::exp(-v));
}

template <class S>
MatX<S> silu(const MatX<S>& u) {
    return u.unaryExpr([](S v) { return v * sigmoid(v); });
}

template <class S>
MatX<S> silu_grad(const MatX<S>& u) {
    return u.unaryExpr([](S v) {
        const S sg = sigmoid(v);
        return sg * (S(1) + v * (S(1) - sg));
    });
}

// Rotary phase tables for one head dimension; dh must be even.
template <class S>
struct RotaryTable {
    MatX<S> cos_table, sin_table;  // T x dh/2

    RotaryTable() = default;
    RotaryTable(const std::vector<long>& positions, int dh, double base) {
        const int half = dh / 2;
        cos_table.resize(static_cast<Index>(positions.size()), half);
        sin_table.resize(static_cast<Index>(positions.size()), half);
        for (std::size_t t = 0; t < positions.size(); ++t)
            for (int j = 0; j < half; ++j) {
                const double freq = std::pow(base, -2.0 * j / dh);
                const double angle = static_cast<double>(positions[t]) * freq;
                cos_table(static_cast<Index>(t), j) = static_cast<S>(std::cos(angle));
                sin_table(static_cast<Index>(t), j) = static_cast<S>(std::sin(angle));
            }
    }

    bool empty() const { return cos_table.rows() == 0 && cos_table.cols() == 0; }

    // In-place rotation of one head slice (T x dh). sign=-1 applies the
    // transpose rotation (used on gradients).
    void apply(Eigen::Ref<MatX<S>> head, S sign) const {
        const Index half = cos_table.cols();
        for (Index t = 0; t < head.rows(); ++t)
            for (Index j = 0; j < half; ++j) {
                const S c = cos_table(t, j);
                const S s = sign * sin_table(t, j);
                const S a = head(t, 2 * j);
                const S b = head(t, 2 * j + 1);
                head(t, 2 * j) = a * c - b * s;
                head(t, 2 * j + 1) = a * s + b * c;
            }
    }
};

// Mask as a dense {0,1} matrix in the working scalar type, with a
// precomputed "has any visible key" flag per query row.
template <class S>
struct AttentionMask {
    MatX<S> weights;             // T x T, 1 = visible
    std::vector<char> row_any;   // per query

    static AttentionMask all_visible(Index n) {
        AttentionMask m;
        m.weights = MatX<S>::Ones(n, n);
        m.row_any.assign(static_cast<std::size_t>(n), 1);
        return m;
    }

    template <class Rule>
    static AttentionMask from_rule(const Rule& rule, Index n) {
        AttentionMask m;
        m.weights.resize(n, n);
        m.row_any.assign(static_cast<std::size_t>(n), 0);
        for (Index q = 0; q < n; ++q) {
            bool any = false;
            for (Index k = 0; k < n; ++k) {
                const bool v = rule(static_cast<int>(q), static_cast<int>(k));
                m.weights(q, k) = v ? S(1) : S(0);
                any = any || v;
            }
            m.row_any[static_cast<std::size_t>(q)] = any ? 1 : 0;
        }
        return m;
    }
};

// Rowwise softmax over visible keys with attention weight exactly zero on
// invisible pairs; a query row with no visible key yields an all-zero row.
// `scores` and `mask_w` may be rectangular (queries x keys).
template <class S>
MatX<S> masked_probabilities(const MatX<S>& scores, const MatX<S>& mask_w,
                             const std::vector<char>& row_any) {
    constexpr S kMaskFill = S(-1e30);
    MatX<S> filled =
        (scores.array() * mask_w.array() + (S(1) - mask_w.array()) * kMaskFill).matrix();
    VecX<S> row_max(scores.rows());
    for (Index r = 0; r < scores.rows(); ++r)
        row_max(r) = row_any[static_cast<std::size_t>(r)] ? filled.row(r).maxCoeff() : S(0);
    // Exponentiate the filled scores so invisible entries underflow to
    // exactly zero instead of overflowing before the mask multiply.
    MatX<S> prob = ((filled.colwise() - row_max).array().exp() * mask_w.array()).matrix();
    for (Index r = 0; r < scores.rows(); ++r) {
        const S z = prob.row(r).sum();
        if (z > S(0)) prob.row(r) /= z;
    }
    return prob;
}

template <class S>
struct LayerTape {
    MatX<S> x0;            // layer input
    VecX<S> inv_rms1;
    MatX<S> a;             // normed input
    MatX<S> q, k, v;       // post-rotation q,k
    std::vector<MatX<S>> attn;  // per head, T x T probabilities
    MatX<S> heads_out;     // concatenated head outputs, pre-wo
    MatX<S> x1;            // post-attention residual
    VecX<S> inv_rms2;
    MatX<S> b;             // normed x1
    MatX<S> u;             // pre-activation
    MatX<S> s;             // silu(u)
};

// Pre-norm block: x + Wo*attn(rmsnorm(x)) then x + W2*silu(W1*rmsnorm(x)).
// `rotary` may be empty (no positional rotation, as in the encoder).
template <class S>
MatX<S> layer_forward(const MatX<S>& x0, const LayerParams<S>& p, int heads,
                      const AttentionMask<S>& mask, const RotaryTable<S>& rotary,
                      LayerTape<S>& tape) {
    const Index t = x0.rows();
    const Index d = x0.cols();
    const Index dh = d / heads;
    if (d % heads != 0) throw ShapeError("width not divisible by head count");

    tape.x0 = x0;
    tape.inv_rms1 = rmsnorm_forward(x0, p.norm1_gain, tape.a);
    tape.q.noalias() = tape.a * p.wq;
    tape.k.noalias() = tape.a * p.wk;
    tape.v.noalias() = tape.a * p.wv;
    if (!rotary.empty()) {
        for (int h = 0; h < heads; ++h) {
            rotary.apply(tape.q.middleCols(h * dh, dh), S(1));
            rotary.apply(tape.k.middleCols(h * dh, dh), S(1));
        }
    }

    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    tape.attn.assign(static_cast<std::size_t>(heads), MatX<S>());
    tape.heads_out.resize(t, d);
    for (int h = 0; h < heads; ++h) {
        const auto qh = tape.q.middleCols(h * dh, dh);
        const auto kh = tape.k.middleCols(h * dh, dh);
        const auto vh = tape.v.middleCols(h * dh, dh);
        MatX<S> scores = (qh * kh.transpose()) * scale;
        tape.attn[static_cast<std::size_t>(h)] =
            masked_probabilities(scores, mask.weights, mask.row_any);
        tape.heads_out.middleCols(h * dh, dh).noalias() =
            tape.attn[static_cast<std::size_t>(h)] * vh;
    }

    tape.x1 = x0 + tape.heads_out * p.wo;
    tape.inv_rms2 = rmsnorm_forward(tape.x1, p.norm2_gain, tape.b);
    tape.u.noalias() = tape.b * p.w1;
    tape.s = silu(tape.u);
    return tape.x1 + tape.s * p.w2;
}

// Returns the gradient w.r.t. the layer input; parameter gradients are
// accumulated into `g`.
template <class S>
MatX<S> layer_backward(const MatX<S>& dx2, const LayerParams<S>& p, int heads,
                       const RotaryTable<S>& rotary, const LayerTape<S>& tape,
                       LayerParams<S>& g) {
    const Index t = tape.x0.rows();
    const Index d = tape.x0.cols();
    const Index dh = d / heads;

    // MLP half.
    MatX<S> dx1 = dx2;
    g.w2.noalias() += tape.s.transpose() * dx2;
    MatX<S> ds = dx2 * p.w2.transpose();
    MatX<S> du = (ds.array() * silu_grad(tape.u).array()).matrix();
    g.w1.noalias() += tape.b.transpose() * du;
    MatX<S> db = du * p.w1.transpose();
    rmsnorm_backward(db, tape.x1, tape.inv_rms2, p.norm2_gain, dx1, g.norm2_gain);

    // Attention half.
    MatX<S> dx0 = dx1;
    g.wo.noalias() += tape.heads_out.transpose() * dx1;
    MatX<S> dheads = dx1 * p.wo.transpose();

    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    MatX<S> dq = MatX<S>::Zero(t, d), dk = MatX<S>::Zero(t, d), dv = MatX<S>::Zero(t, d);
    for (int h = 0; h < heads; ++h) {
        const auto& prob = tape.attn[static_cast<std::size_t>(h)];
        const auto vh = tape.v.middleCols(h * dh, dh);
        const auto dout = dheads.middleCols(h * dh, dh);
        dv.middleCols(h * dh, dh).noalias() = prob.transpose() * dout;
        MatX<S> dprob = dout * vh.transpose();
        const VecX<S> row_dot = (dprob.array() * prob.array()).rowwise().sum();
        MatX<S> dscore =
            (prob.array() * (dprob.colwise() - row_dot).array()).matrix() * scale;
        dq.middleCols(h * dh, dh).noalias() = dscore * tape.k.middleCols(h * dh, dh);
        dk.middleCols(h * dh, dh).noalias() = dscore.transpose() * tape.q.middleCols(h * dh, dh);
    }
    if (!rotary.empty()) {
        for (int h = 0; h < heads; ++h) {
            rotary.apply(dq.middleCols(h * dh, dh), S(-1));
            rotary.apply(dk.middleCols(h * dh, dh), S(-1));
        }
    }
    g.wq.noalias() += tape.a.transpose() * dq;
    g.wk.noalias() += tape.a.transpose() * dk;
    g.wv.noalias() += tape.a.transpose() * dv;
    MatX<S> da = dq * p.wq.transpose();
    da.noalias() += dk * p.wk.transpose();
    da.noalias() += dv * p.wv.transpose();
    rmsnorm_backward(da, tape.x0, tape.inv_rms1, p.norm1_gain, dx0, g.norm1_gain);
    return dx0;
}

template <class S>
LayerParams<S> make_layer_params(Index d, Index f, Rng& rng, double init_std) {
    LayerParams<S> p;
    p.norm1_gain = VecX<S>::Ones(d);
    p.norm2_gain = VecX<S>::Ones(d);
    p.wq.resize(d, d);
    p.wk.resize(d, d);
    p.wv.resize(d, d);
    p.wo.resize(d, d);
    p.w1.resize(d, f);
    p.w2.resize(f, d);
    fill_normal(p.wq, rng, init_std);
    fill_normal(p.wk, rng, init_std);
    fill_normal(p.wv, rng, init_std);
    fill_normal(p.wo, rng, init_std);
    fill_normal(p.w1, rng, init_std);
    fill_normal(p.w2, rng, init_std);
    return p;
}

template <class S>
LayerParams<S> zeros_like(const LayerParams<S>& p) {
    LayerParams<S> z;
    z.norm1_gain = VecX<S>::Zero(p.norm1_gain.size());
    z.norm2_gain = VecX<S>::Zero(p.norm2_gain.size());
    z.wq = MatX<S>::Zero(p.wq.rows(), p.wq.cols());
    z.wk = MatX<S>::Zero(p.wk.rows(), p.wk.cols());
    z.wv = MatX<S>::Zero(p.wv.rows(), p.wv.cols());
    z.wo = MatX<S>::Zero(p.wo.rows(), p.wo.cols());
    z.w1 = MatX<S>::Zero(p.w1.rows(), p.w1.cols());
    z.w2 = MatX<S>::Zero(p.w2.rows(), p.w2.cols());
    return z;
}

// Mean cross-entropy over an explicit (row, target) scope; rows outside the
// scope contribute nothing and receive zero logit gradients.
struct ScoredTarget {
    int row = 0;
    TokenId target = 0;
};

template <class S>
struct CrossEntropyResult {
    double loss = 0.0;
    MatX<S> dlogits;
};

template <class S>
CrossEntropyResult<S> cross_entropy(const MatX<S>& logits,
                                    const std::vector<ScoredTarget>& scored) {
    if (scored.empty()) throw LayoutError("empty loss scope");
    CrossEntropyResult<S> result;
    result.dlogits = MatX<S>::Zero(logits.rows(), logits.cols());
    const S inv_n = S(1) / static_cast<S>(scored.size());
    double total = 0.0;
    for (const ScoredTarget& st : scored) {
        if (st.row < 0 || st.row >= logits.rows() || st.target < 0 ||
            st.target >= logits.cols())
            throw ShapeError("scored target out of range");
        const auto row = logits.row(st.row);
        const S m = row.maxCoeff();
        const S lse = std::log((row.array() - m).exp().sum()) + m;
        total += static_cast<double>(lse - row(st.target));
        result.dlogits.row(st.row).array() += (row.array() - lse).exp() * inv_n;
        result.dlogits(st.row, st.target) -= inv_n;
    }
    result.loss = total / static_cast<double>(scored.size());
    return result;
}

}  // namespace vist
