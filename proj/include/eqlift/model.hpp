#pragma once

#include <cmath>
#include <vector>

#include "eqlift/compute.hpp"
#include "eqlift/geometry.hpp"

namespace eqlift {

inline constexpr int kInputDim = 2 * kJoints;   // 32
inline constexpr int kOutputDim = 3 * kJoints;  // 48

struct EmbeddingConfig {
    int m = 128;               // number of unit 3-vectors
    double norm_epsilon = 1e-8;
};

struct ModelConfig {
    EmbeddingConfig embedding;
    int hidden = 1024;
    double dropout = 0.2;
    double lrelu_slope = 0.01;
};

// A batch of embeddings, one row per sample, laid out as M consecutive
// (x, y, z) triples. Helpers below treat each triple as a column of the
// 3xM representation.
inline void apply_rotation_rows(const Mat3& r, Mat& h) {
    const Eigen::Index m = h.cols() / 3;
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        for (Eigen::Index k = 0; k < m; ++k) {
            Vec3 v(h(i, 3 * k), h(i, 3 * k + 1), h(i, 3 * k + 2));
            Vec3 w = r * v;
            h(i, 3 * k) = w.x();
            h(i, 3 * k + 1) = w.y();
            h(i, 3 * k + 2) = w.z();
        }
    }
}

// r * h for a single embedding; columns stay unit-norm since r is orthonormal.
inline Mat rotate_embedding(const Rotation3& r, const Mat& h) {
    detail::check(h.cols() % 3 == 0, "rotate_embedding: width not divisible by 3");
    Mat out = h;
    apply_rotation_rows(r.m, out);
    return out;
}

struct EmbedNormCtx {
    Mat x;         // pre-normalization values
    Mat inv_norm;  // batch x M, 1/sqrt(|v|^2 + eps)
};

// Scales each 3-vector to (approximately) unit Euclidean norm; the epsilon
// inside the square root keeps gradients finite at zero columns.
inline Mat embed_normalize(const Mat& x, double eps, EmbedNormCtx& ctx) {
    const Eigen::Index m = x.cols() / 3;
    ctx.x = x;
    ctx.inv_norm.resize(x.rows(), m);
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index k = 0; k < m; ++k) {
            double sq = x(i, 3 * k) * x(i, 3 * k) +
                        x(i, 3 * k + 1) * x(i, 3 * k + 1) +
                        x(i, 3 * k + 2) * x(i, 3 * k + 2);
            double inv = 1.0 / std::sqrt(sq + eps);
            ctx.inv_norm(i, k) = inv;
            out(i, 3 * k) = x(i, 3 * k) * inv;
            out(i, 3 * k + 1) = x(i, 3 * k + 1) * inv;
            out(i, 3 * k + 2) = x(i, 3 * k + 2) * inv;
        }
    }
    return out;
}

inline Mat embed_normalize_backward(const Mat& up, const EmbedNormCtx& ctx) {
    const Eigen::Index m = ctx.inv_norm.cols();
    Mat dx(ctx.x.rows(), ctx.x.cols());
    for (Eigen::Index i = 0; i < ctx.x.rows(); ++i) {
        for (Eigen::Index k = 0; k < m; ++k) {
            Vec3 v(ctx.x(i, 3 * k), ctx.x(i, 3 * k + 1), ctx.x(i, 3 * k + 2));
            Vec3 g(up(i, 3 * k), up(i, 3 * k + 1), up(i, 3 * k + 2));
            double inv = ctx.inv_norm(i, k);
            // d(v/s)/dv with s = sqrt(|v|^2 + eps): g/s - v (v.g)/s^3
            Vec3 d = g * inv - v * (v.dot(g) * inv * inv * inv);
            dx(i, 3 * k) = d.x();
            dx(i, 3 * k + 1) = d.y();
            dx(i, 3 * k + 2) = d.z();
        }
    }
    return dx;
}

struct BranchCtx {
    DenseCtx enc_in, enc_out, dec_in, dec_out;
    ResidualBlockCtx enc_block, dec_block;
    EmbedNormCtx norm;
};

// Encoder f, equivariant embedding, decoder g. A single parameter set; the
// siamese wrapper evaluates it twice so both branches share weights by
// construction.
struct LiftingModel {
    ModelConfig cfg;
    Dense enc_in;             // 32 -> hidden
    ResidualBlock enc_block;  // hidden
    Dense enc_out;            // hidden -> 3M, no activation
    Dense dec_in;             // 3M -> hidden, no BN/dropout after
    ResidualBlock dec_block;  // hidden
    Dense dec_out;            // hidden -> 48

    LiftingModel() = default;
    explicit LiftingModel(const ModelConfig& c)
        : cfg(c),
          enc_in(kInputDim, c.hidden, "enc_in"),
          enc_block(c.hidden, "enc_block"),
          enc_out(c.hidden, 3 * c.embedding.m, "enc_out"),
          dec_in(3 * c.embedding.m, c.hidden, "dec_in"),
          dec_block(c.hidden, "dec_block"),
          dec_out(c.hidden, kOutputDim, "dec_out") {
        set_dropout(c.dropout);
        set_slope(c.lrelu_slope);
    }

    void set_dropout(double rate) {
        enc_block.dropout_rate = rate;
        dec_block.dropout_rate = rate;
    }
    void set_slope(double s) {
        enc_block.slope = s;
        dec_block.slope = s;
    }

    void init(RngStream& rng) {
        enc_in.init(rng);
        enc_block.init(rng);
        enc_out.init(rng);
        dec_in.init(rng);
        dec_block.init(rng);
        dec_out.init(rng);
    }

    std::vector<Param*> params() {
        std::vector<Param*> out;
        enc_in.collect(out);
        enc_block.collect(out);
        enc_out.collect(out);
        dec_in.collect(out);
        dec_block.collect(out);
        dec_out.collect(out);
        return out;
    }

    void zero_grads() {
        for (Param* p : params()) p->zero_grad();
    }

    // x: batch x 32 (normalized 2D). Returns batch x 3M with unit triples.
    Mat encode(const Mat& x, Mode mode, RngStream& rng, BranchCtx& ctx) {
        detail::check(x.cols() == kInputDim, "encode: input width != 32");
        Mat y = enc_in.forward(x, ctx.enc_in);
        y = enc_block.forward(y, mode, rng, ctx.enc_block);
        y = enc_out.forward(y, ctx.enc_out);
        return embed_normalize(y, cfg.embedding.norm_epsilon, ctx.norm);
    }

    // h: batch x 3M. Returns batch x 48 (normalized 3D).
    Mat decode(const Mat& h, Mode mode, RngStream& rng, BranchCtx& ctx) {
        detail::check(h.cols() == 3 * cfg.embedding.m, "decode: input width != 3M");
        Mat y = dec_in.forward(h, ctx.dec_in);
        y = dec_block.forward(y, mode, rng, ctx.dec_block);
        return dec_out.forward(y, ctx.dec_out);
    }

    // Gradient of decode w.r.t. its input h; accumulates decoder param grads.
    Mat decode_backward(const Mat& up, BranchCtx& ctx) {
        Mat g = dec_out.backward(up, ctx.dec_out);
        g = dec_block.backward(g, ctx.dec_block);
        return dec_in.backward(g, ctx.dec_in);
    }

    // dh: gradient at the normalized embedding; accumulates encoder grads.
    void encode_backward(const Mat& dh, BranchCtx& ctx) {
        Mat g = embed_normalize_backward(dh, ctx.norm);
        g = enc_out.backward(g, ctx.enc_out);
        g = enc_block.backward(g, ctx.enc_block);
        enc_in.backward(g, ctx.enc_in);
    }
};

struct SiameseOut {
    Mat h1, h2;      // batch x 3M
    Mat pred1, pred2;  // batch x 48
};

// Both branches run through the same parameter storage; gradients from both
// branches accumulate into it during the matching backward passes.
inline SiameseOut forward_siamese(LiftingModel& model, const Mat& x1, const Mat& x2,
                                  Mode mode, RngStream& rng, BranchCtx& ctx1,
                                  BranchCtx& ctx2) {
    detail::check(x1.rows() == x2.rows(), "forward_siamese: batch size mismatch");
    SiameseOut out;
    out.h1 = model.encode(x1, mode, rng, ctx1);
    out.pred1 = model.decode(out.h1, mode, rng, ctx1);
    out.h2 = model.encode(x2, mode, rng, ctx2);
    out.pred2 = model.decode(out.h2, mode, rng, ctx2);
    return out;
}

}  // namespace eqlift
