#include "pairplan/il/il.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "pairplan/nn/checkpoint.hpp"
#include "pairplan/util/errors.hpp"
#include "pairplan/util/rng.hpp"

namespace pairplan::il {

nn::Manifest il_manifest(const IlConfig& cfg) {
    nn::Manifest m;
    m.layers = {nn::dense(cfg.feature_dim, cfg.hidden, nn::Activation::kGelu),
                nn::dense(cfg.hidden, cfg.hidden, nn::Activation::kGelu),
                nn::dense(cfg.hidden, 3 * cfg.horizon_steps)};
    return m;
}

ILCheckpoint il_init(const IlConfig& cfg, std::uint64_t seed) {
    ILCheckpoint ckpt;
    ckpt.config = cfg;
    ckpt.seed = seed;
    ckpt.params = nn::init_params(il_manifest(cfg), util::derive_seed(seed, 0x11));
    return ckpt;
}

namespace {

core::Trajectory decode_raw(const nn::Mat& raw, const IlConfig& cfg, bool clamp) {
    const int T = cfg.horizon_steps;
    core::Trajectory traj;
    traj.dt = cfg.dt;
    traj.points.resize(static_cast<std::size_t>(T) + 1);
    traj.points[0] = core::Waypoint{0.0, 0.0, 0.0};
    const double step_cap = cfg.v_max * cfg.dt;
    for (int t = 1; t <= T; ++t) {
        core::Waypoint p{raw(0, 3 * (t - 1)), raw(0, 3 * (t - 1) + 1),
                         core::normalize_angle(raw(0, 3 * (t - 1) + 2))};
        if (clamp) {
            const auto& prev = traj.points[static_cast<std::size_t>(t) - 1];
            const double dx = p.x - prev.x;
            const double dy = p.y - prev.y;
            const double d = std::hypot(dx, dy);
            if (d > step_cap) {
                p.x = prev.x + dx * step_cap / d;
                p.y = prev.y + dy * step_cap / d;
            }
        }
        traj.points[static_cast<std::size_t>(t)] = p;
    }
    return traj;
}

}  // namespace

core::Trajectory il_forward(const ILCheckpoint& ckpt, const SceneFeatures& features) {
    if (static_cast<int>(features.size()) != ckpt.config.feature_dim)
        throw ShapeError("scene feature dim mismatch");
    nn::Mat x(1, ckpt.config.feature_dim);
    for (int i = 0; i < ckpt.config.feature_dim; ++i) x(0, i) = features[static_cast<std::size_t>(i)];
    nn::StackCache cache;
    const nn::Mat raw = nn::forward(ckpt.params, x, cache);
    return decode_raw(raw, ckpt.config, /*clamp=*/true);
}

double il_loss(const core::Trajectory& pred, const core::Trajectory& human) {
    if (pred.points.size() != human.points.size())
        throw ShapeError("il_loss trajectory length mismatch");
    double acc = 0.0;
    for (std::size_t t = 0; t < pred.points.size(); ++t) {
        acc += std::abs(pred.points[t].x - human.points[t].x);
        acc += std::abs(pred.points[t].y - human.points[t].y);
        acc += std::abs(core::normalize_angle(pred.points[t].h - human.points[t].h));
    }
    return acc / (3.0 * static_cast<double>(pred.points.size()));
}

ILCheckpoint train_il(const std::vector<sim::Scenario>& suite, const IlConfig& cfg,
                      std::uint64_t seed) {
    if (suite.empty()) throw ConfigError("train_il: empty scenario suite");
    const int T = cfg.horizon_steps;
    const std::size_t n = suite.size();

    std::vector<nn::Mat> inputs(n);
    std::vector<core::Trajectory> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        const SceneFeatures f = encode_scene(suite[i]);
        nn::Mat x(1, cfg.feature_dim);
        for (int d = 0; d < cfg.feature_dim; ++d) x(0, d) = f[static_cast<std::size_t>(d)];
        inputs[i] = x;
        targets[i] = core::to_ego_frame(suite[i].expert, suite[i].ego_init);
        if (targets[i].horizon() != T)
            throw ConfigError("train_il: suite horizon differs from config");
    }

    ILCheckpoint ckpt = il_init(cfg, seed);
    nn::AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    nn::AdamWState opt = nn::AdamWState::create(opt_cfg, ckpt.params.values.size());

    util::Rng shuffle_rng(util::derive_seed(seed, 0x12));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const double denom = 3.0 * static_cast<double>(T + 1);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = i + shuffle_rng.next_u64() % (n - i);
            std::swap(order[i], order[j]);
        }
        double epoch_loss = 0.0;
        for (std::size_t base = 0; base < n; base += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(n, base + static_cast<std::size_t>(cfg.batch));
            nn::GradientSet grads(ckpt.params.values.size(), 0.0);
            for (std::size_t bi = base; bi < end; ++bi) {
                const std::size_t idx = order[bi];
                nn::StackCache cache;
                const nn::Mat raw = nn::forward(ckpt.params, inputs[idx], cache);
                const core::Trajectory pred = decode_raw(raw, cfg, /*clamp=*/false);
                epoch_loss += il_loss(pred, targets[idx]);

                nn::Mat draw(1, 3 * T);
                for (int t = 1; t <= T; ++t) {
                    const auto& p = pred.points[static_cast<std::size_t>(t)];
                    const auto& q = targets[idx].points[static_cast<std::size_t>(t)];
                    const double sx = p.x > q.x ? 1.0 : (p.x < q.x ? -1.0 : 0.0);
                    const double sy = p.y > q.y ? 1.0 : (p.y < q.y ? -1.0 : 0.0);
                    const double dh = core::normalize_angle(p.h - q.h);
                    const double sh = dh > 0.0 ? 1.0 : (dh < 0.0 ? -1.0 : 0.0);
                    draw(0, 3 * (t - 1)) = sx / denom;
                    draw(0, 3 * (t - 1) + 1) = sy / denom;
                    draw(0, 3 * (t - 1) + 2) = sh / denom;
                }
                const double scale = 1.0 / static_cast<double>(end - base);
                draw *= scale;
                nn::backward(ckpt.params, cache, draw, grads);
            }
            nn::adamw_step(ckpt.params, grads, opt);
            ckpt.steps += 1;
        }
        ckpt.loss_curve.push_back(epoch_loss / static_cast<double>(n));
    }
    return ckpt;
}

void save_il(const std::string& path, const ILCheckpoint& ckpt) {
    nlohmann::ordered_json meta;
    meta["manifest"] = nlohmann::json::parse(ckpt.params.manifest.to_json());
    meta["feature_dim"] = ckpt.config.feature_dim;
    meta["hidden"] = ckpt.config.hidden;
    meta["horizon_steps"] = ckpt.config.horizon_steps;
    meta["dt"] = ckpt.config.dt;
    meta["v_max"] = ckpt.config.v_max;
    meta["lr"] = ckpt.config.lr;
    meta["epochs"] = ckpt.config.epochs;
    meta["batch"] = ckpt.config.batch;
    meta["loss_curve"] = ckpt.loss_curve;

    nn::CheckpointData data;
    data.role = "il";
    data.rng_seed = ckpt.seed;
    data.step_count = ckpt.steps;
    data.meta_json = meta.dump();
    data.params = ckpt.params.values;
    nn::save_checkpoint_file(path, data);
}

ILCheckpoint load_il(const std::string& path) {
    const nn::CheckpointData data = nn::load_checkpoint_file(path);
    if (data.role != "il")
        throw FormatError("checkpoint role mismatch: expected 'il', found '" + data.role +
                          "'");
    const auto meta = nlohmann::json::parse(data.meta_json);
    ILCheckpoint ckpt;
    ckpt.config.feature_dim = meta.at("feature_dim");
    ckpt.config.hidden = meta.at("hidden");
    ckpt.config.horizon_steps = meta.at("horizon_steps");
    ckpt.config.dt = meta.at("dt");
    ckpt.config.v_max = meta.at("v_max");
    ckpt.config.lr = meta.at("lr");
    ckpt.config.epochs = meta.at("epochs");
    ckpt.config.batch = meta.at("batch");
    ckpt.loss_curve = meta.at("loss_curve").get<std::vector<double>>();
    ckpt.seed = data.rng_seed;
    ckpt.steps = data.step_count;
    ckpt.params.manifest = nn::Manifest::from_json(meta.at("manifest").dump());
    ckpt.params.values = data.params;
    if (ckpt.params.values.size() != ckpt.params.manifest.total_params())
        throw FormatError("il checkpoint parameter count mismatch");
    return ckpt;
}

}  // namespace pairplan::il
