#include "pairplan/nn/nn.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "pairplan/util/errors.hpp"
#include "pairplan/util/rng.hpp"

namespace pairplan::nn {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kLnEps = 1e-5;

using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;
using MapVec = Eigen::Map<Eigen::RowVectorXd>;
using CMapVec = Eigen::Map<const Eigen::RowVectorXd>;

double activate(Activation act, double x) {
    switch (act) {
        case Activation::kNone: return x;
        case Activation::kGelu: return gelu(x);
        case Activation::kTanh: return std::tanh(x);
    }
    return x;
}

double activate_grad(Activation act, double x) {
    switch (act) {
        case Activation::kNone: return 1.0;
        case Activation::kGelu: return gelu_grad(x);
        case Activation::kTanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

// Normalizes each row of x; writes per-row statistics into the cache vectors.
Mat layernorm_rows(const Mat& x, const double* gamma, const double* beta, Vec& mean,
                   Vec& rstd) {
    const int rows = static_cast<int>(x.rows());
    const int dim = static_cast<int>(x.cols());
    Mat out(rows, dim);
    mean.resize(rows);
    rstd.resize(rows);
    CMapVec g(gamma, dim), b(beta, dim);
    for (int r = 0; r < rows; ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().sum() / dim;
        const double rs = 1.0 / std::sqrt(var + kLnEps);
        mean(r) = mu;
        rstd(r) = rs;
        out.row(r) = ((x.row(r).array() - mu) * rs) * g.array() + b.array();
    }
    return out;
}

// dx for y = gamma*(x-mu)*rstd + beta, also accumulates dgamma/dbeta.
Mat layernorm_backward_rows(const Mat& x, const Vec& mean, const Vec& rstd,
                            const double* gamma, const Mat& dy, double* dgamma,
                            double* dbeta) {
    const int rows = static_cast<int>(x.rows());
    const int dim = static_cast<int>(x.cols());
    Mat dx(rows, dim);
    CMapVec g(gamma, dim);
    MapVec dg(dgamma, dim), db(dbeta, dim);
    for (int r = 0; r < rows; ++r) {
        const Eigen::ArrayXd xhat = (x.row(r).array() - mean(r)) * rstd(r);
        const Eigen::ArrayXd dyr = dy.row(r).array();
        dg += (dyr * xhat).matrix();
        db += dyr.matrix();
        const Eigen::ArrayXd dxhat = dyr * g.transpose().array();
        const double m1 = dxhat.mean();
        const double m2 = (dxhat * xhat).mean();
        dx.row(r) = (rstd(r) * (dxhat - m1 - xhat * m2)).matrix();
    }
    return dx;
}

Mat softmax_rows(const Mat& scores) {
    Mat out(scores.rows(), scores.cols());
    for (int r = 0; r < scores.rows(); ++r) {
        const double m = scores.row(r).maxCoeff();
        Eigen::ArrayXd e = (scores.row(r).array() - m).exp();
        out.row(r) = (e / e.sum()).matrix();
    }
    return out;
}

// dS for A = softmax_rows(S) given dA.
Mat softmax_backward_rows(const Mat& att, const Mat& datt) {
    Mat ds(att.rows(), att.cols());
    for (int r = 0; r < att.rows(); ++r) {
        const double dot = (datt.row(r).array() * att.row(r).array()).sum();
        ds.row(r) = (att.row(r).array() * (datt.row(r).array() - dot)).matrix();
    }
    return ds;
}

struct AttentionParams {
    CMapVec ln_g, ln_b;
    CMapMat wq, wk, wv, wo;
    CMapVec bq, bk, bv, bo;
};

AttentionParams map_attention(const LayerSpec& spec, const double* p) {
    const int d = spec.in_dim;
    const int c = spec.kind == LayerKind::kCrossAttention ? spec.ctx_dim : d;
    const double* cur = p;
    CMapVec ln_g(cur, d); cur += d;
    CMapVec ln_b(cur, d); cur += d;
    CMapMat wq(cur, d, d); cur += d * d;
    CMapVec bq(cur, d); cur += d;
    CMapMat wk(cur, c, d); cur += c * d;
    CMapVec bk(cur, d); cur += d;
    CMapMat wv(cur, c, d); cur += c * d;
    CMapVec bv(cur, d); cur += d;
    CMapMat wo(cur, d, d); cur += d * d;
    CMapVec bo(cur, d);
    return AttentionParams{ln_g, ln_b, wq, wk, wv, wo, bq, bk, bv, bo};
}

struct AttentionGrads {
    MapVec ln_g, ln_b;
    MapMat wq, wk, wv, wo;
    MapVec bq, bk, bv, bo;
};

AttentionGrads map_attention_grads(const LayerSpec& spec, double* p) {
    const int d = spec.in_dim;
    const int c = spec.kind == LayerKind::kCrossAttention ? spec.ctx_dim : d;
    double* cur = p;
    MapVec ln_g(cur, d); cur += d;
    MapVec ln_b(cur, d); cur += d;
    MapMat wq(cur, d, d); cur += d * d;
    MapVec bq(cur, d); cur += d;
    MapMat wk(cur, c, d); cur += c * d;
    MapVec bk(cur, d); cur += d;
    MapMat wv(cur, c, d); cur += c * d;
    MapVec bv(cur, d); cur += d;
    MapMat wo(cur, d, d); cur += d * d;
    MapVec bo(cur, d);
    return AttentionGrads{ln_g, ln_b, wq, wk, wv, wo, bq, bk, bv, bo};
}

Mat attention_forward(const LayerSpec& spec, const double* p, const Mat& x,
                      const Mat* ctx, LayerCache& cache) {
    const bool cross = spec.kind == LayerKind::kCrossAttention;
    if (cross && ctx == nullptr)
        throw ShapeError("cross-attention layer requires a context matrix");
    const int d = spec.in_dim;
    const int heads = spec.heads;
    if (d % heads != 0) throw ShapeError("attention heads must divide the model dim");
    const int dk = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    const auto w = map_attention(spec, p);
    cache.x = x;
    cache.xn = layernorm_rows(x, w.ln_g.data(), w.ln_b.data(), cache.row_mean,
                              cache.row_rstd);
    const Mat& kv_src = cross ? *ctx : cache.xn;
    if (cross) cache.ctx = *ctx;

    cache.q = cache.xn * w.wq;
    cache.q.rowwise() += w.bq;
    cache.k = kv_src * w.wk;
    cache.k.rowwise() += w.bk;
    cache.v = kv_src * w.wv;
    cache.v.rowwise() += w.bv;

    const int sq = static_cast<int>(x.rows());
    cache.att.assign(static_cast<std::size_t>(heads), Mat());
    cache.headcat.resize(sq, d);
    for (int h = 0; h < heads; ++h) {
        const auto qh = cache.q.middleCols(h * dk, dk);
        const auto kh = cache.k.middleCols(h * dk, dk);
        const auto vh = cache.v.middleCols(h * dk, dk);
        Mat scores = (qh * kh.transpose()) * scale;
        cache.att[static_cast<std::size_t>(h)] = softmax_rows(scores);
        cache.headcat.middleCols(h * dk, dk) = cache.att[static_cast<std::size_t>(h)] * vh;
    }
    Mat out = cache.headcat * w.wo;
    out.rowwise() += w.bo;
    return x + out;
}

Mat attention_backward(const LayerSpec& spec, const double* p, const LayerCache& cache,
                       const Mat& dy, double* grad, Mat* dctx) {
    const bool cross = spec.kind == LayerKind::kCrossAttention;
    const int d = spec.in_dim;
    const int heads = spec.heads;
    const int dk = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    const auto w = map_attention(spec, p);
    auto g = map_attention_grads(spec, grad);

    // y = x + headcat*Wo + bo
    Mat dx = dy;
    g.wo += cache.headcat.transpose() * dy;
    g.bo += dy.colwise().sum();
    Mat dheadcat = dy * w.wo.transpose();

    Mat dq = Mat::Zero(cache.q.rows(), d);
    Mat dkm = Mat::Zero(cache.k.rows(), d);
    Mat dvm = Mat::Zero(cache.v.rows(), d);
    for (int h = 0; h < heads; ++h) {
        const auto qh = cache.q.middleCols(h * dk, dk);
        const auto kh = cache.k.middleCols(h * dk, dk);
        const auto vh = cache.v.middleCols(h * dk, dk);
        const Mat& att = cache.att[static_cast<std::size_t>(h)];
        const auto doh = dheadcat.middleCols(h * dk, dk);

        Mat datt = doh * vh.transpose();
        dvm.middleCols(h * dk, dk) += att.transpose() * doh;
        Mat ds = softmax_backward_rows(att, datt);
        dq.middleCols(h * dk, dk) += (ds * kh) * scale;
        dkm.middleCols(h * dk, dk) += (ds.transpose() * qh) * scale;
    }

    const Mat& kv_src = cross ? cache.ctx : cache.xn;
    g.wq += cache.xn.transpose() * dq;
    g.bq += dq.colwise().sum();
    g.wk += kv_src.transpose() * dkm;
    g.bk += dkm.colwise().sum();
    g.wv += kv_src.transpose() * dvm;
    g.bv += dvm.colwise().sum();

    Mat dxn = dq * w.wq.transpose();
    Mat dkv = dkm * w.wk.transpose() + dvm * w.wv.transpose();
    if (cross) {
        if (dctx != nullptr) *dctx += dkv;
    } else {
        dxn += dkv;
    }
    dx += layernorm_backward_rows(cache.x, cache.row_mean, cache.row_rstd, w.ln_g.data(),
                                  dxn, g.ln_g.data(), g.ln_b.data());
    return dx;
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
           x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::kDense: return "dense";
        case LayerKind::kLayerNorm: return "layer_norm";
        case LayerKind::kSelfAttention: return "self_attention";
        case LayerKind::kCrossAttention: return "cross_attention";
        case LayerKind::kEmbedding: return "embedding";
    }
    return "unknown";
}

const char* activation_name(Activation act) {
    switch (act) {
        case Activation::kNone: return "none";
        case Activation::kGelu: return "gelu";
        case Activation::kTanh: return "tanh";
    }
    return "unknown";
}

std::size_t LayerSpec::param_count() const {
    const auto n = [](int a) { return static_cast<std::size_t>(a); };
    switch (kind) {
        case LayerKind::kDense:
            return n(in_dim) * n(out_dim) + n(out_dim);
        case LayerKind::kLayerNorm:
            return 2 * n(in_dim);
        case LayerKind::kSelfAttention:
            return 2 * n(in_dim) + 4 * n(in_dim) * n(in_dim) + 4 * n(in_dim);
        case LayerKind::kCrossAttention:
            return 2 * n(in_dim) + 2 * n(in_dim) * n(in_dim) +
                   2 * n(ctx_dim) * n(in_dim) + 4 * n(in_dim);
        case LayerKind::kEmbedding:
            return n(in_dim) * n(out_dim);
    }
    return 0;
}

LayerSpec dense(int in, int out, Activation act) {
    LayerSpec s;
    s.kind = LayerKind::kDense;
    s.in_dim = in;
    s.out_dim = out;
    s.act = act;
    return s;
}

LayerSpec layer_norm(int dim) {
    LayerSpec s;
    s.kind = LayerKind::kLayerNorm;
    s.in_dim = dim;
    s.out_dim = dim;
    return s;
}

LayerSpec self_attention(int dim, int heads) {
    LayerSpec s;
    s.kind = LayerKind::kSelfAttention;
    s.in_dim = dim;
    s.out_dim = dim;
    s.heads = heads;
    return s;
}

LayerSpec cross_attention(int dim, int ctx_dim, int heads) {
    LayerSpec s;
    s.kind = LayerKind::kCrossAttention;
    s.in_dim = dim;
    s.out_dim = dim;
    s.ctx_dim = ctx_dim;
    s.heads = heads;
    return s;
}

LayerSpec embedding(int rows, int cols) {
    LayerSpec s;
    s.kind = LayerKind::kEmbedding;
    s.in_dim = rows;
    s.out_dim = cols;
    return s;
}

std::size_t Manifest::total_params() const {
    std::size_t total = 0;
    for (const auto& l : layers) total += l.param_count();
    return total;
}

std::size_t Manifest::offset_of(std::size_t layer_index) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < layer_index; ++i) off += layers[i].param_count();
    return off;
}

std::string Manifest::to_json() const {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& l : layers) {
        nlohmann::ordered_json j;
        j["kind"] = layer_kind_name(l.kind);
        j["in_dim"] = l.in_dim;
        j["out_dim"] = l.out_dim;
        j["heads"] = l.heads;
        j["ctx_dim"] = l.ctx_dim;
        j["act"] = activation_name(l.act);
        arr.push_back(j);
    }
    return arr.dump();
}

Manifest Manifest::from_json(const std::string& text) {
    Manifest m;
    const auto arr = nlohmann::json::parse(text);
    for (const auto& j : arr) {
        LayerSpec l;
        const std::string kind = j.at("kind");
        if (kind == "dense") l.kind = LayerKind::kDense;
        else if (kind == "layer_norm") l.kind = LayerKind::kLayerNorm;
        else if (kind == "self_attention") l.kind = LayerKind::kSelfAttention;
        else if (kind == "cross_attention") l.kind = LayerKind::kCrossAttention;
        else if (kind == "embedding") l.kind = LayerKind::kEmbedding;
        else throw FormatError("unknown layer kind in manifest: " + kind);
        l.in_dim = j.at("in_dim");
        l.out_dim = j.at("out_dim");
        l.heads = j.at("heads");
        l.ctx_dim = j.at("ctx_dim");
        const std::string act = j.at("act");
        if (act == "none") l.act = Activation::kNone;
        else if (act == "gelu") l.act = Activation::kGelu;
        else if (act == "tanh") l.act = Activation::kTanh;
        else throw FormatError("unknown activation in manifest: " + act);
        m.layers.push_back(l);
    }
    return m;
}

double* ParameterSet::layer_params(std::size_t layer_index) {
    return values.data() + manifest.offset_of(layer_index);
}

const double* ParameterSet::layer_params(std::size_t layer_index) const {
    return values.data() + manifest.offset_of(layer_index);
}

ParameterSet init_params(const Manifest& manifest, std::uint64_t seed,
                         double embedding_scale) {
    ParameterSet params;
    params.manifest = manifest;
    params.values.assign(manifest.total_params(), 0.0);
    util::Rng rng(seed);
    for (std::size_t li = 0; li < manifest.layers.size(); ++li) {
        const LayerSpec& l = manifest.layers[li];
        double* p = params.layer_params(li);
        switch (l.kind) {
            case LayerKind::kDense: {
                const double sd = 1.0 / std::sqrt(static_cast<double>(l.in_dim));
                for (int i = 0; i < l.in_dim * l.out_dim; ++i) p[i] = rng.normal(0.0, sd);
                break;  // biases stay zero
            }
            case LayerKind::kLayerNorm: {
                for (int i = 0; i < l.in_dim; ++i) p[i] = 1.0;
                break;
            }
            case LayerKind::kSelfAttention:
            case LayerKind::kCrossAttention: {
                const int d = l.in_dim;
                const int c = l.kind == LayerKind::kCrossAttention ? l.ctx_dim : d;
                double* cur = p;
                for (int i = 0; i < d; ++i) cur[i] = 1.0;  // ln gamma
                cur += 2 * d;                              // skip ln beta
                const double sd_d = 1.0 / std::sqrt(static_cast<double>(d));
                const double sd_c = 1.0 / std::sqrt(static_cast<double>(c));
                for (int i = 0; i < d * d; ++i) cur[i] = rng.normal(0.0, sd_d);
                cur += d * d + d;
                for (int i = 0; i < c * d; ++i) cur[i] = rng.normal(0.0, sd_c);
                cur += c * d + d;
                for (int i = 0; i < c * d; ++i) cur[i] = rng.normal(0.0, sd_c);
                cur += c * d + d;
                for (int i = 0; i < d * d; ++i) cur[i] = rng.normal(0.0, sd_d);
                break;
            }
            case LayerKind::kEmbedding: {
                for (int i = 0; i < l.in_dim * l.out_dim; ++i)
                    p[i] = rng.normal(0.0, embedding_scale);
                break;
            }
        }
    }
    return params;
}

Mat layer_forward(const LayerSpec& spec, const double* p, const Mat& x, const Mat* ctx,
                  LayerCache& cache) {
    switch (spec.kind) {
        case LayerKind::kDense: {
            if (static_cast<int>(x.cols()) != spec.in_dim)
                throw ShapeError("dense input dim mismatch: got " +
                                 std::to_string(x.cols()) + ", expected " +
                                 std::to_string(spec.in_dim));
            CMapMat w(p, spec.in_dim, spec.out_dim);
            CMapVec b(p + spec.in_dim * spec.out_dim, spec.out_dim);
            cache.x = x;
            cache.pre = x * w;
            cache.pre.rowwise() += b;
            if (spec.act == Activation::kNone) return cache.pre;
            Mat out(cache.pre.rows(), cache.pre.cols());
            for (int r = 0; r < out.rows(); ++r)
                for (int c2 = 0; c2 < out.cols(); ++c2)
                    out(r, c2) = activate(spec.act, cache.pre(r, c2));
            return out;
        }
        case LayerKind::kLayerNorm: {
            if (static_cast<int>(x.cols()) != spec.in_dim)
                throw ShapeError("layer-norm dim mismatch");
            cache.x = x;
            return layernorm_rows(x, p, p + spec.in_dim, cache.row_mean, cache.row_rstd);
        }
        case LayerKind::kSelfAttention:
        case LayerKind::kCrossAttention: {
            if (static_cast<int>(x.cols()) != spec.in_dim)
                throw ShapeError("attention input dim mismatch");
            if (spec.kind == LayerKind::kCrossAttention && ctx != nullptr &&
                static_cast<int>(ctx->cols()) != spec.ctx_dim)
                throw ShapeError("cross-attention context dim mismatch");
            return attention_forward(spec, p, x, ctx, cache);
        }
        case LayerKind::kEmbedding: {
            cache.x = x;
            return CMapMat(p, spec.in_dim, spec.out_dim);
        }
    }
    throw ShapeError("unknown layer kind");
}

Mat layer_backward(const LayerSpec& spec, const double* p, const LayerCache& cache,
                   const Mat& dy, double* grad, Mat* dctx) {
    switch (spec.kind) {
        case LayerKind::kDense: {
            CMapMat w(p, spec.in_dim, spec.out_dim);
            Mat dpre = dy;
            if (spec.act != Activation::kNone) {
                for (int r = 0; r < dpre.rows(); ++r)
                    for (int c2 = 0; c2 < dpre.cols(); ++c2)
                        dpre(r, c2) *= activate_grad(spec.act, cache.pre(r, c2));
            }
            MapMat dw(grad, spec.in_dim, spec.out_dim);
            MapVec db(grad + spec.in_dim * spec.out_dim, spec.out_dim);
            dw += cache.x.transpose() * dpre;
            db += dpre.colwise().sum();
            return dpre * w.transpose();
        }
        case LayerKind::kLayerNorm: {
            return layernorm_backward_rows(cache.x, cache.row_mean, cache.row_rstd, p, dy,
                                           grad, grad + spec.in_dim);
        }
        case LayerKind::kSelfAttention:
        case LayerKind::kCrossAttention:
            return attention_backward(spec, p, cache, dy, grad, dctx);
        case LayerKind::kEmbedding: {
            MapMat dw(grad, spec.in_dim, spec.out_dim);
            dw += dy;
            return Mat::Zero(cache.x.rows(), cache.x.cols());
        }
    }
    throw ShapeError("unknown layer kind");
}

Mat forward(const ParameterSet& params, const Mat& input, StackCache& cache,
            const Mat* ctx) {
    cache.layers.assign(params.manifest.layers.size(), LayerCache{});
    Mat x = input;
    for (std::size_t li = 0; li < params.manifest.layers.size(); ++li) {
        x = layer_forward(params.manifest.layers[li], params.layer_params(li), x, ctx,
                          cache.layers[li]);
    }
    return x;
}

Mat backward(const ParameterSet& params, const StackCache& cache, const Mat& out_grad,
             GradientSet& grads, Mat* dctx) {
    if (grads.size() != params.values.size())
        grads.assign(params.values.size(), 0.0);
    if (cache.layers.size() != params.manifest.layers.size())
        throw ContractViolation("stale stack cache: layer count mismatch");
    Mat dy = out_grad;
    for (std::size_t i = params.manifest.layers.size(); i-- > 0;) {
        const std::size_t off = params.manifest.offset_of(i);
        dy = layer_backward(params.manifest.layers[i], params.layer_params(i),
                            cache.layers[i], dy, grads.data() + off, dctx);
    }
    return dy;
}

}  // namespace pairplan::nn
