#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace pairplan::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

enum class Activation : int { kNone = 0, kGelu = 1, kTanh = 2 };
enum class LayerKind : int {
    kDense = 0,
    kLayerNorm = 1,
    kSelfAttention = 2,
    kCrossAttention = 3,
    kEmbedding = 4,
};

const char* layer_kind_name(LayerKind kind);
const char* activation_name(Activation act);

struct LayerSpec {
    LayerKind kind = LayerKind::kDense;
    int in_dim = 0;    // dense input / layer-norm dim / attention model dim / embedding rows
    int out_dim = 0;   // dense output / attention model dim / embedding cols
    int heads = 0;     // attention head count; must divide the model dim
    int ctx_dim = 0;   // cross-attention context feature dim
    Activation act = Activation::kNone;

    std::size_t param_count() const;
};

LayerSpec dense(int in, int out, Activation act = Activation::kNone);
LayerSpec layer_norm(int dim);
LayerSpec self_attention(int dim, int heads);
LayerSpec cross_attention(int dim, int ctx_dim, int heads);
LayerSpec embedding(int rows, int cols);

struct Manifest {
    std::vector<LayerSpec> layers;

    std::size_t total_params() const;
    std::size_t offset_of(std::size_t layer_index) const;

    std::string to_json() const;
    static Manifest from_json(const std::string& text);
};

struct ParameterSet {
    Manifest manifest;
    std::vector<double> values;

    double* layer_params(std::size_t layer_index);
    const double* layer_params(std::size_t layer_index) const;
};

using GradientSet = std::vector<double>;  // aligned with ParameterSet::values

// Gaussian fan-in initialization; layer norms start at identity.
ParameterSet init_params(const Manifest& manifest, std::uint64_t seed,
                         double embedding_scale = 0.5);

// ---------------------------------------------------------------------------
// Layer-level forward/backward. Attention layers are pre-norm residual blocks:
// y = x + MHA(LN(x), ...). Backward accumulates (+=) into `grad` and `dctx`.
// ---------------------------------------------------------------------------

struct LayerCache {
    Mat x;
    Mat pre;                 // dense pre-activation
    Mat xn;                  // normalized input (LN / attention)
    Vec row_mean, row_rstd;  // layer-norm statistics
    Mat q, k, v;
    std::vector<Mat> att;    // per-head attention weights
    Mat headcat;             // concatenated head outputs before the output proj
    Mat ctx;
};

Mat layer_forward(const LayerSpec& spec, const double* p, const Mat& x, const Mat* ctx,
                  LayerCache& cache);
Mat layer_backward(const LayerSpec& spec, const double* p, const LayerCache& cache,
                   const Mat& dy, double* grad, Mat* dctx);

// ---------------------------------------------------------------------------
// Sequential stack over the manifest (the nn-core forward/backward contract).
// `ctx` feeds every cross-attention layer in the stack.
// ---------------------------------------------------------------------------

struct StackCache {
    std::vector<LayerCache> layers;
};

Mat forward(const ParameterSet& params, const Mat& input, StackCache& cache,
            const Mat* ctx = nullptr);

// Exact reverse-mode gradients of `forward`; returns d(input) and fills
// `grads` (accumulating) plus optionally d(ctx).
Mat backward(const ParameterSet& params, const StackCache& cache, const Mat& out_grad,
             GradientSet& grads, Mat* dctx = nullptr);

double gelu(double x);
double gelu_grad(double x);

}  // namespace pairplan::nn
