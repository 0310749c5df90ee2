#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eqlift/errors.hpp"
#include "eqlift/rng.hpp"

namespace eqlift {

// Row-major convention throughout the compute core: batch x features.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Mode { Train, Infer };

// One learnable tensor plus its gradient and Adam moments.
struct Param {
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;
    std::string name;

    Param() = default;
    Param(int rows, int cols, std::string n)
        : value(Mat::Zero(rows, cols)),
          grad(Mat::Zero(rows, cols)),
          adam_m(Mat::Zero(rows, cols)),
          adam_v(Mat::Zero(rows, cols)),
          name(std::move(n)) {}

    void zero_grad() { grad.setZero(); }
};

namespace detail {
inline void check(bool ok, const char* msg) {
    if (!ok) throw ShapeMismatch(msg);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Dense layer: y = x * w + b (x: batch x in, w: in x out, b: 1 x out).

struct DenseCtx {
    Mat x;
};

struct Dense {
    Param w, b;

    Dense() = default;
    Dense(int in, int out, const std::string& name)
        : w(in, out, name + ".w"), b(1, out, name + ".b") {}

    // He-style fan-in init suited to leaky rectifiers; biases stay zero.
    void init(RngStream& rng) {
        double scale = std::sqrt(2.0 / static_cast<double>(w.value.rows()));
        for (Eigen::Index i = 0; i < w.value.rows(); ++i)
            for (Eigen::Index j = 0; j < w.value.cols(); ++j)
                w.value(i, j) = scale * rng.gaussian();
    }

    Mat forward(const Mat& x, DenseCtx& ctx) const {
        detail::check(x.cols() == w.value.rows(), "dense: input width != weight rows");
        ctx.x = x;
        return (x * w.value).rowwise() + b.value.row(0);
    }

    Mat backward(const Mat& up, const DenseCtx& ctx) {
        detail::check(up.rows() == ctx.x.rows() && up.cols() == w.value.cols(),
                      "dense: upstream shape mismatch");
        w.grad += ctx.x.transpose() * up;
        b.grad.row(0) += up.colwise().sum();
        return up * w.value.transpose();
    }

    void collect(std::vector<Param*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

// ---------------------------------------------------------------------------
// Leaky ReLU; subgradient at 0 is the slope.

struct LeakyReluCtx {
    Mat x;
};

inline Mat leaky_relu(const Mat& x, double slope, LeakyReluCtx& ctx) {
    ctx.x = x;
    return x.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

inline Mat leaky_relu_backward(const Mat& up, double slope, const LeakyReluCtx& ctx) {
    return up.binaryExpr(ctx.x, [slope](double g, double v) {
        return v > 0.0 ? g : slope * g;
    });
}

// ---------------------------------------------------------------------------
// Batch normalization over the batch dimension, per feature.

struct BatchNormCtx {
    Mat xhat;
    Vec inv_std;
    int n = 0;
};

struct BatchNormState {
    Param gamma, beta;
    Vec running_mean, running_var;
    double epsilon = 1e-5;
    // Weight of the new batch: running <- (1 - momentum) * running + momentum * batch.
    double momentum = 0.1;

    BatchNormState() = default;
    BatchNormState(int features, const std::string& name)
        : gamma(1, features, name + ".gamma"),
          beta(1, features, name + ".beta"),
          running_mean(Vec::Zero(features)),
          running_var(Vec::Ones(features)) {
        gamma.value.setOnes();
    }

    Mat forward(const Mat& x, Mode mode, BatchNormCtx& ctx) {
        detail::check(x.cols() == gamma.value.cols(), "batchnorm: feature count mismatch");
        if (mode == Mode::Infer) {
            Mat out(x.rows(), x.cols());
            for (Eigen::Index f = 0; f < x.cols(); ++f) {
                double inv = 1.0 / std::sqrt(running_var(f) + epsilon);
                out.col(f) = (x.col(f).array() - running_mean(f)) * inv *
                                 gamma.value(0, f) +
                             beta.value(0, f);
            }
            return out;
        }
        const int n = static_cast<int>(x.rows());
        if (n < 2) throw BatchTooSmall("batchnorm: train mode needs batch >= 2");
        Vec mu = x.colwise().mean();
        Mat centered = x.rowwise() - mu.transpose();
        Vec var = centered.array().square().colwise().mean();  // biased
        ctx.inv_std = (var.array() + epsilon).sqrt().inverse();
        ctx.xhat = centered.array().rowwise() * ctx.inv_std.transpose().array();
        ctx.n = n;
        running_mean = (1.0 - momentum) * running_mean + momentum * mu;
        running_var = (1.0 - momentum) * running_var + momentum * var;
        return (ctx.xhat.array().rowwise() * gamma.value.row(0).array()).rowwise() +
               beta.value.row(0).array();
    }

    Mat backward(const Mat& up, const BatchNormCtx& ctx) {
        detail::check(ctx.n > 0, "batchnorm: backward without train-mode forward");
        gamma.grad.row(0) +=
            (up.array() * ctx.xhat.array()).colwise().sum().matrix();
        beta.grad.row(0) += up.colwise().sum();
        Mat dxhat = up.array().rowwise() * gamma.value.row(0).array();
        const double n = static_cast<double>(ctx.n);
        Vec sum_dxhat = dxhat.colwise().sum();
        Vec sum_dxhat_xhat = (dxhat.array() * ctx.xhat.array()).colwise().sum();
        Mat dx = (n * dxhat.array() -
                  (Mat::Ones(ctx.n, 1) * sum_dxhat.transpose()).array() -
                  ctx.xhat.array() *
                      (Mat::Ones(ctx.n, 1) * sum_dxhat_xhat.transpose()).array()) /
                 n;
        return dx.array().rowwise() * ctx.inv_std.transpose().array();
    }

    void collect(std::vector<Param*>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
};

// ---------------------------------------------------------------------------
// Inverted dropout: surviving entries scaled by 1/(1-rate); infer = identity.

struct DropoutCtx {
    Mat mask;  // empty in infer mode or at rate 0
};

inline Mat dropout(const Mat& x, double rate, RngStream& rng, Mode mode,
                   DropoutCtx& ctx) {
    if (mode == Mode::Infer || rate == 0.0) {
        ctx.mask.resize(0, 0);
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    ctx.mask.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            ctx.mask(i, j) = rng.uniform() >= rate ? keep_scale : 0.0;
    return x.cwiseProduct(ctx.mask);
}

inline Mat dropout_backward(const Mat& up, const DropoutCtx& ctx) {
    if (ctx.mask.size() == 0) return up;
    return up.cwiseProduct(ctx.mask);
}

// ---------------------------------------------------------------------------
// Residual block: (dense -> batchnorm -> leaky-relu -> dropout) twice, with a
// skip connection around the pair.

struct ResidualBlockCtx {
    DenseCtx fc1, fc2;
    BatchNormCtx bn1, bn2;
    LeakyReluCtx act1, act2;
    DropoutCtx do1, do2;
};

struct ResidualBlock {
    Dense fc1, fc2;
    BatchNormState bn1, bn2;
    double slope = 0.01;
    double dropout_rate = 0.2;

    ResidualBlock() = default;
    ResidualBlock(int width, const std::string& name)
        : fc1(width, width, name + ".fc1"),
          fc2(width, width, name + ".fc2"),
          bn1(width, name + ".bn1"),
          bn2(width, name + ".bn2") {}

    void init(RngStream& rng) {
        fc1.init(rng);
        fc2.init(rng);
    }

    Mat forward(const Mat& x, Mode mode, RngStream& rng, ResidualBlockCtx& ctx) {
        Mat y = fc1.forward(x, ctx.fc1);
        y = bn1.forward(y, mode, ctx.bn1);
        y = leaky_relu(y, slope, ctx.act1);
        y = dropout(y, dropout_rate, rng, mode, ctx.do1);
        y = fc2.forward(y, ctx.fc2);
        y = bn2.forward(y, mode, ctx.bn2);
        y = leaky_relu(y, slope, ctx.act2);
        y = dropout(y, dropout_rate, rng, mode, ctx.do2);
        return x + y;
    }

    Mat backward(const Mat& up, const ResidualBlockCtx& ctx) {
        Mat g = dropout_backward(up, ctx.do2);
        g = leaky_relu_backward(g, slope, ctx.act2);
        g = bn2.backward(g, ctx.bn2);
        g = fc2.backward(g, ctx.fc2);
        g = dropout_backward(g, ctx.do1);
        g = leaky_relu_backward(g, slope, ctx.act1);
        g = bn1.backward(g, ctx.bn1);
        g = fc1.backward(g, ctx.fc1);
        return up + g;
    }

    void collect(std::vector<Param*>& out) {
        fc1.collect(out);
        bn1.collect(out);
        fc2.collect(out);
        bn2.collect(out);
    }
};

// ---------------------------------------------------------------------------
// Adam with bias correction; lr decays exponentially per epoch.

struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step_count = 0;

    void step(const std::vector<Param*>& params, double lr) {
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (Param* p : params) {
            p->adam_m = beta1 * p->adam_m + (1.0 - beta1) * p->grad;
            p->adam_v = beta2 * p->adam_v.array() +
                        (1.0 - beta2) * p->grad.array().square();
            p->value.array() -= lr * (p->adam_m.array() / bc1) /
                                ((p->adam_v.array() / bc2).sqrt() + eps);
        }
    }
};

inline double lr_schedule(double lr0, double decay, int epoch) {
    return lr0 * std::pow(decay, static_cast<double>(epoch));
}

// ---------------------------------------------------------------------------
// Gradient checking: reverse-mode vs central finite differences.
//
// `loss` must be deterministic (frozen dropout masks, fixed batch). When
// `compute_grads` is true it must zero and then fill every param's grad.

inline double grad_check(const std::vector<Param*>& params,
                         const std::function<double(bool compute_grads)>& loss,
                         double h = 1e-5) {
    loss(true);
    std::vector<Mat> analytic;
    analytic.reserve(params.size());
    double gmax = 0.0;
    for (Param* p : params) {
        analytic.push_back(p->grad);
        if (p->grad.size() > 0)
            gmax = std::max(gmax, p->grad.array().abs().maxCoeff());
    }
    // Floor the denominator at a fraction of the largest gradient so finite-
    // difference noise on near-zero coordinates does not dominate the report.
    const double floor = std::max(1e-3 * gmax, 1e-12);

    double max_rel = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Param* p = params[k];
        for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
            for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
                const double orig = p->value(i, j);
                p->value(i, j) = orig + h;
                double lp = loss(false);
                p->value(i, j) = orig - h;
                double lm = loss(false);
                p->value(i, j) = orig;
                double numeric = (lp - lm) / (2.0 * h);
                double a = analytic[k](i, j);
                double denom = std::max({std::abs(a), std::abs(numeric), floor});
                max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
            }
        }
    }
    return max_rel;
}

}  // namespace eqlift
