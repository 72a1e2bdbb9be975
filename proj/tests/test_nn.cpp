#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pairplan/nn/adamw.hpp"
#include "pairplan/nn/checkpoint.hpp"
#include "pairplan/nn/gradcheck.hpp"
#include "pairplan/nn/nn.hpp"
#include "pairplan/util/errors.hpp"
#include "pairplan/util/rng.hpp"

using namespace pairplan;
using nn::Mat;

namespace {

Mat random_mat(int rows, int cols, util::Rng& rng, double scale = 1.0) {
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, scale);
    return m;
}

// scalar loss: weighted sum of outputs, weights fixed per call site
double weighted_output_loss(const nn::ParameterSet& params, const Mat& input,
                            const Mat& weights, const Mat* ctx) {
    nn::StackCache cache;
    const Mat out = nn::forward(params, input, cache, ctx);
    return (out.array() * weights.array()).sum();
}

nn::GradientSet weighted_output_grad(const nn::ParameterSet& params, const Mat& input,
                                     const Mat& weights, const Mat* ctx) {
    nn::StackCache cache;
    const Mat out = nn::forward(params, input, cache, ctx);
    nn::GradientSet grads(params.values.size(), 0.0);
    nn::backward(params, cache, weights, grads);
    return grads;
}

}  // namespace

TEST_CASE("zero-parameter dense stack maps anything to zero") {
    nn::Manifest m;
    m.layers = {nn::dense(4, 8, nn::Activation::kGelu), nn::dense(8, 3)};
    nn::ParameterSet params;
    params.manifest = m;
    params.values.assign(m.total_params(), 0.0);
    util::Rng rng(2);
    nn::StackCache cache;
    const Mat out = nn::forward(params, random_mat(2, 4, rng), cache);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identity dense layer passes input through") {
    nn::Manifest m;
    m.layers = {nn::dense(3, 3)};
    nn::ParameterSet params;
    params.manifest = m;
    params.values.assign(m.total_params(), 0.0);
    for (int i = 0; i < 3; ++i) params.values[static_cast<std::size_t>(i * 3 + i)] = 1.0;
    util::Rng rng(5);
    const Mat x = random_mat(4, 3, rng);
    nn::StackCache cache;
    const Mat y = nn::forward(params, x, cache);
    CHECK((y - x).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("self-attention over a single token returns its value projection") {
    // softmax over one key is 1, so the block output is x + Wo(Wv ln(x) + bv) + bo
    nn::Manifest m;
    m.layers = {nn::self_attention(8, 2)};
    nn::ParameterSet params = nn::init_params(m, 11);
    util::Rng rng(13);
    const Mat x = random_mat(1, 8, rng);
    nn::StackCache cache;
    const Mat y = nn::forward(params, x, cache);

    // hand evaluation
    const double* p = params.layer_params(0);
    Eigen::Map<const Eigen::RowVectorXd> ln_g(p, 8), ln_b(p + 8, 8);
    Eigen::Map<const Mat> wv(p + 16 + 2 * (64 + 8), 8, 8);
    Eigen::Map<const Eigen::RowVectorXd> bv(p + 16 + 2 * (64 + 8) + 64, 8);
    Eigen::Map<const Mat> wo(p + 16 + 3 * (64 + 8), 8, 8);
    Eigen::Map<const Eigen::RowVectorXd> bo(p + 16 + 3 * (64 + 8) + 64, 8);
    const double mu = x.row(0).mean();
    const double var = (x.row(0).array() - mu).square().sum() / 8.0;
    Eigen::RowVectorXd xn =
        (((x.row(0).array() - mu) / std::sqrt(var + 1e-5)) * ln_g.array() +
         ln_b.array())
            .matrix();
    Eigen::RowVectorXd v = xn * wv + bv;
    Eigen::RowVectorXd want = x.row(0) + v * wo + bo;
    CHECK((y.row(0) - want).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("stack gradients match central finite differences on random nets") {
    util::Rng rng(101);
    for (int rep = 0; rep < 20; ++rep) {
        nn::Manifest m;
        m.layers = {nn::dense(5, 7, nn::Activation::kGelu),
                    nn::dense(7, 6, nn::Activation::kTanh), nn::dense(6, 2)};
        const nn::ParameterSet params = nn::init_params(m, 1000 + rep);
        const Mat x = random_mat(3, 5, rng);
        const Mat w = random_mat(3, 2, rng);

        const nn::GradientSet analytic = weighted_output_grad(params, x, w, nullptr);
        const auto report = nn::finite_diff_check(
            params.values,
            [&](const std::vector<double>& v) {
                nn::ParameterSet probe = params;
                probe.values = v;
                return weighted_output_loss(probe, x, w, nullptr);
            },
            analytic, 1e-4);
        CHECK(report.pass);
        CHECK(report.max_rel_err < 1e-4);
    }
}

TEST_CASE("attention block gradients match finite differences") {
    util::Rng rng(202);
    nn::Manifest m;
    m.layers = {nn::dense(4, 8), nn::self_attention(8, 2), nn::cross_attention(8, 6, 2),
                nn::layer_norm(8), nn::dense(8, 2)};
    const nn::ParameterSet params = nn::init_params(m, 77);
    const Mat x = random_mat(5, 4, rng);
    const Mat ctx = random_mat(3, 6, rng);
    const Mat w = random_mat(5, 2, rng);

    const nn::GradientSet analytic = weighted_output_grad(params, x, w, &ctx);
    const auto report = nn::finite_diff_check(
        params.values,
        [&](const std::vector<double>& v) {
            nn::ParameterSet probe = params;
            probe.values = v;
            return weighted_output_loss(probe, x, w, &ctx);
        },
        analytic, 1e-4);
    CHECK(report.pass);
}

TEST_CASE("input and context gradients are exact too") {
    util::Rng rng(303);
    nn::Manifest m;
    m.layers = {nn::self_attention(6, 3), nn::cross_attention(6, 4, 2)};
    const nn::ParameterSet params = nn::init_params(m, 99);
    Mat x = random_mat(4, 6, rng);
    Mat ctx = random_mat(2, 4, rng);
    const Mat w = random_mat(4, 6, rng);

    nn::StackCache cache;
    nn::forward(params, x, cache, &ctx);
    nn::GradientSet grads(params.values.size(), 0.0);
    Mat dctx = Mat::Zero(2, 4);
    const Mat dx = nn::backward(params, cache, w, grads, &dctx);

    const double h = 1e-6;
    for (int r = 0; r < x.rows(); ++r)
        for (int c = 0; c < x.cols(); ++c) {
            const double orig = x(r, c);
            x(r, c) = orig + h;
            nn::StackCache c1;
            const double up = (nn::forward(params, x, c1, &ctx).array() * w.array()).sum();
            x(r, c) = orig - h;
            nn::StackCache c2;
            const double dn = (nn::forward(params, x, c2, &ctx).array() * w.array()).sum();
            x(r, c) = orig;
            CHECK(dx(r, c) == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
        }
    for (int r = 0; r < ctx.rows(); ++r)
        for (int c = 0; c < ctx.cols(); ++c) {
            const double orig = ctx(r, c);
            ctx(r, c) = orig + h;
            nn::StackCache c1;
            const double up = (nn::forward(params, x, c1, &ctx).array() * w.array()).sum();
            ctx(r, c) = orig - h;
            nn::StackCache c2;
            const double dn = (nn::forward(params, x, c2, &ctx).array() * w.array()).sum();
            ctx(r, c) = orig;
            CHECK(dctx(r, c) == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
        }
}

TEST_CASE("finite_diff_check is its own oracle") {
    SUBCASE("linear loss is exact") {
        std::vector<double> params = {0.5, -1.0, 2.0};
        std::vector<double> grad = {1.0, 2.0, 3.0};
        const auto report = nn::finite_diff_check(
            params,
            [](const std::vector<double>& v) {
                return v[0] * 1.0 + v[1] * 2.0 + v[2] * 3.0;
            },
            grad, 1e-10);
        CHECK(report.pass);
        CHECK(report.max_rel_err < 1e-10);
    }
    SUBCASE("quadratic at theta=3 gives gradient 6 exactly") {
        std::vector<double> params = {3.0};
        std::vector<double> grad = {6.0};
        const auto report = nn::finite_diff_check(
            params, [](const std::vector<double>& v) { return v[0] * v[0]; }, grad, 1e-8);
        CHECK(report.pass);
    }
    SUBCASE("a corrupted gradient fails") {
        std::vector<double> params = {3.0};
        std::vector<double> grad = {6.6};  // +10%
        const auto report = nn::finite_diff_check(
            params, [](const std::vector<double>& v) { return v[0] * v[0]; }, grad, 1e-4);
        CHECK_FALSE(report.pass);
    }
}

TEST_CASE("adamw decoupled decay and determinism") {
    nn::Manifest m;
    m.layers = {nn::dense(2, 2)};

    SUBCASE("zero gradients scale params by 1 - lr*wd") {
        nn::ParameterSet params = nn::init_params(m, 3);
        const std::vector<double> before = params.values;
        nn::AdamWConfig cfg;
        cfg.lr = 0.01;
        cfg.weight_decay = 0.1;
        nn::AdamWState st = nn::AdamWState::create(cfg, params.values.size());
        nn::GradientSet zeros(params.values.size(), 0.0);
        CHECK(nn::adamw_step(params, zeros, st));
        for (std::size_t i = 0; i < before.size(); ++i)
            CHECK(params.values[i] == doctest::Approx(before[i] * (1.0 - 0.001)));
    }
    SUBCASE("lr = 0 leaves params unchanged") {
        nn::ParameterSet params = nn::init_params(m, 3);
        const std::vector<double> before = params.values;
        nn::AdamWConfig cfg;
        cfg.lr = 0.0;
        nn::AdamWState st = nn::AdamWState::create(cfg, params.values.size());
        nn::GradientSet grads(params.values.size(), 0.25);
        nn::adamw_step(params, grads, st);
        for (std::size_t i = 0; i < before.size(); ++i)
            CHECK(params.values[i] == before[i]);
    }
    SUBCASE("identical seeds and inputs give bit-identical parameters") {
        auto run = [&]() {
            nn::ParameterSet params = nn::init_params(m, 4);
            nn::AdamWConfig cfg;
            cfg.lr = 1e-2;
            nn::AdamWState st = nn::AdamWState::create(cfg, params.values.size());
            util::Rng rng(55);
            for (int step = 0; step < 20; ++step) {
                nn::GradientSet grads(params.values.size());
                for (auto& g : grads) g = rng.normal();
                nn::adamw_step(params, grads, st);
            }
            return params.values;
        };
        CHECK(run() == run());
    }
    SUBCASE("non-finite gradients skip the update") {
        nn::ParameterSet params = nn::init_params(m, 3);
        const std::vector<double> before = params.values;
        nn::AdamWConfig cfg;
        nn::AdamWState st = nn::AdamWState::create(cfg, params.values.size());
        nn::GradientSet grads(params.values.size(), 0.0);
        grads[1] = std::numeric_limits<double>::quiet_NaN();
        CHECK_FALSE(nn::adamw_step(params, grads, st));
        CHECK(params.values == before);
        CHECK(st.skipped == 1);
    }
}

TEST_CASE("cosine schedule decays from lr to lr_final") {
    nn::AdamWConfig cfg;
    cfg.lr = 1.0;
    cfg.lr_final = 0.0;
    cfg.schedule = nn::LrSchedule::kCosine;
    cfg.total_steps = 100;
    nn::AdamWState st = nn::AdamWState::create(cfg, 1);
    CHECK(nn::scheduled_lr(st) == doctest::Approx(1.0));
    st.step = 50;
    CHECK(nn::scheduled_lr(st) == doctest::Approx(0.5));
    st.step = 100;
    CHECK(nn::scheduled_lr(st) == doctest::Approx(0.0));
}

TEST_CASE("checkpoint files round trip bit-exactly and reject bad input") {
    const std::string path = "test_ckpt_roundtrip.bin";
    nn::CheckpointData data;
    data.role = "il";
    data.rng_seed = 123456789;
    data.step_count = 42;
    data.meta_json = "{\"hello\":1}";
    util::Rng rng(8);
    for (int i = 0; i < 257; ++i) data.params.push_back(rng.normal());
    data.has_optimizer = true;
    data.opt_step = 17;
    data.opt_m.assign(data.params.size(), 0.25);
    data.opt_v.assign(data.params.size(), 0.5);

    nn::save_checkpoint_file(path, data);
    const nn::CheckpointData loaded = nn::load_checkpoint_file(path);
    CHECK(loaded.role == data.role);
    CHECK(loaded.rng_seed == data.rng_seed);
    CHECK(loaded.step_count == data.step_count);
    CHECK(loaded.meta_json == data.meta_json);
    CHECK(loaded.params == data.params);  // bitwise
    CHECK(loaded.opt_m == data.opt_m);
    CHECK(loaded.opt_step == data.opt_step);

    SUBCASE("truncated file is a format error") {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        std::ofstream out("test_ckpt_trunc.bin", std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        out.close();
        CHECK_THROWS_AS(nn::load_checkpoint_file("test_ckpt_trunc.bin"), FormatError);
        std::filesystem::remove("test_ckpt_trunc.bin");
    }
    SUBCASE("wrong version tag is rejected with expected/found") {
        std::string buf;
        const std::string v0 = "pairplan_ckpt_v0";
        for (int i = 0; i < 8; ++i)
            buf.push_back(static_cast<char>((v0.size() >> (8 * i)) & 0xff));
        buf += v0;
        std::ofstream out("test_ckpt_v0.bin", std::ios::binary | std::ios::trunc);
        out << buf;
        out.close();
        try {
            nn::load_checkpoint_file("test_ckpt_v0.bin");
            CHECK(false);
        } catch (const FormatError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("pairplan_ckpt_v1") != std::string::npos);
            CHECK(msg.find("pairplan_ckpt_v0") != std::string::npos);
        }
        std::filesystem::remove("test_ckpt_v0.bin");
    }
    std::filesystem::remove(path);
}

TEST_CASE("manifest json round trip") {
    nn::Manifest m;
    m.layers = {nn::embedding(5, 16), nn::dense(5, 16, nn::Activation::kGelu),
                nn::self_attention(16, 4), nn::cross_attention(16, 8, 2),
                nn::layer_norm(16)};
    const nn::Manifest back = nn::Manifest::from_json(m.to_json());
    REQUIRE(back.layers.size() == m.layers.size());
    CHECK(back.total_params() == m.total_params());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        CHECK(back.layers[i].kind == m.layers[i].kind);
        CHECK(back.layers[i].in_dim == m.layers[i].in_dim);
        CHECK(back.layers[i].out_dim == m.layers[i].out_dim);
        CHECK(back.layers[i].heads == m.layers[i].heads);
        CHECK(back.layers[i].ctx_dim == m.layers[i].ctx_dim);
    }
}

TEST_CASE("dense layer rejects dimension mismatches") {
    nn::Manifest m;
    m.layers = {nn::dense(4, 2)};
    const nn::ParameterSet params = nn::init_params(m, 1);
    util::Rng rng(1);
    nn::StackCache cache;
    CHECK_THROWS_AS(nn::forward(params, random_mat(1, 5, rng), cache), ShapeError);
}
