#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "eqlift/checkpoint.hpp"
#include "eqlift/data.hpp"
#include "eqlift/eval.hpp"
#include "eqlift/losses.hpp"
#include "eqlift/model.hpp"

namespace eqlift {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 256;
    double lr0 = 0.001;
    double decay = 0.96;
    double dropout = 0.2;
    double lambda1 = 0.01;
    double lambda2 = 1.0;
    int m = 128;
    int hidden = 1024;
    double lrelu_slope = 0.01;
    std::uint64_t seed = 0;
    bool siamese_enabled = true;
    double same_pose_fraction = 0.5;
    bool verbose = false;

    void validate() const {
        if (epochs < 0 || batch_size < 2) throw ConfigInvalid("train: bad epochs/batch");
        if (lr0 <= 0 || decay <= 0 || decay > 1) throw ConfigInvalid("train: bad lr/decay");
        if (dropout < 0 || dropout >= 1) throw ConfigInvalid("train: dropout in [0,1)");
        if (m < 1 || hidden < 1) throw ConfigInvalid("train: bad m/hidden");
        if (same_pose_fraction < 0 || same_pose_fraction > 1)
            throw ConfigInvalid("train: same_pose_fraction in [0,1]");
    }
};

struct EpochLog {
    int epoch = 0;
    double l2_a = 0.0;
    double l2_b = 0.0;
    double l_s = 0.0;
    double total = 0.0;
    double test_mpjpe = 0.0;
    double lr = 0.0;
    double wall_s = 0.0;  // informational; kept out of hashable artifacts
};

struct TrainResult {
    LiftingModel final_model;
    LiftingModel best_model;
    NormStats stats;
    TrainerState state;
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_test_mpjpe = 0.0;
};

// Set by the CLI's SIGINT handler; the loop finishes the current step,
// flushes a checkpoint through the caller, and stops.
inline std::atomic<bool>& stop_requested() {
    static std::atomic<bool> flag{false};
    return flag;
}

// One epoch = ceil(N_train / batch) sampled pair-batches.
inline int steps_per_epoch(std::size_t n_train, int batch_size) {
    return static_cast<int>((n_train + static_cast<std::size_t>(batch_size) - 1) /
                            static_cast<std::size_t>(batch_size));
}

// Core loop: sample_pairs -> forward_siamese -> total_loss -> backward ->
// adam_step, lr decayed once per epoch, test MPJPE after every epoch.
// Pass `resume_from` to continue a checkpointed run.
inline TrainResult train(const TrainConfig& cfg,
                         const std::vector<FrameRecord>& train_records,
                         const std::vector<FrameRecord>& test_records,
                         std::optional<TrainResult> resume_from = std::nullopt) {
    cfg.validate();
    if (train_records.empty()) throw EmptySplit("train: no training records");

    TrainResult res;
    if (resume_from) {
        res = std::move(*resume_from);
        check_stats_fingerprint(res.stats, train_records);
    } else {
        ModelConfig mc;
        mc.embedding.m = cfg.m;
        mc.hidden = cfg.hidden;
        mc.dropout = cfg.dropout;
        mc.lrelu_slope = cfg.lrelu_slope;
        res.final_model = LiftingModel(mc);
        res.stats = fit_norm_stats(train_records);
        res.state.rng = RngStream(cfg.seed);
        RngStream init_rng = res.state.rng.substream(0x494E4954);  // init draws
        res.final_model.init(init_rng);
        res.best_model = res.final_model;
        res.state.next_epoch = 0;
    }
    LiftingModel& model = res.final_model;
    model.set_dropout(cfg.dropout);
    model.set_slope(cfg.lrelu_slope);

    PairSampler sampler(train_records, res.stats, cfg.siamese_enabled,
                        cfg.same_pose_fraction);

    // Unit-norm embedding columns cap the siamese distance at 2 sqrt(M); a
    // lambda1 that pushes typical targets past that cannot be fit.
    {
        RngStream probe = res.state.rng.substream(0x50524F42);
        PairBatch b = sampler.sample(std::min<int>(64, cfg.batch_size), probe);
        double mean_dist = 0.0;
        for (const SiameseTarget& t : b.targets) mean_dist += t.pose_dist;
        mean_dist /= static_cast<double>(b.targets.size());
        if (cfg.lambda1 * mean_dist > siamese_distance_bound(cfg.m))
            std::cerr << "warning: lambda1 * typical pose distance ("
                      << cfg.lambda1 * mean_dist << ") exceeds the embedding bound "
                      << siamese_distance_bound(cfg.m) << "; targets are unreachable\n";
    }

    const int spe = steps_per_epoch(train_records.size(), cfg.batch_size);
    const bool have_test = !test_records.empty();

    for (int epoch = res.state.next_epoch; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_schedule(cfg.lr0, cfg.decay, epoch);
        double sum_l2a = 0.0, sum_l2b = 0.0, sum_ls = 0.0, sum_total = 0.0;

        for (int step = 0; step < spe; ++step) {
            PairBatch batch = sampler.sample(cfg.batch_size, res.state.rng);
            model.zero_grads();

            BranchCtx ctx1, ctx2;
            SiameseOut out = forward_siamese(model, batch.x1, batch.x2, Mode::Train,
                                             res.state.rng, ctx1, ctx2);

            Mat dpred1, dpred2;
            double l2a = l2_pose_loss(out.pred1, batch.y1, &dpred1);
            double l2b = l2_pose_loss(out.pred2, batch.y2, &dpred2);
            Mat dh1s, dh2s;
            double ls = siamese_loss(out.h1, out.h2, batch.targets, cfg.lambda1,
                                     cfg.lambda2 != 0.0 ? &dh1s : nullptr,
                                     cfg.lambda2 != 0.0 ? &dh2s : nullptr);
            double total = total_loss(l2a, l2b, ls, cfg.lambda2);
            if (!std::isfinite(total))
                throw NonFiniteLoss("train: non-finite loss at epoch " +
                                    std::to_string(epoch) + " step " +
                                    std::to_string(step));

            Mat dh1 = model.decode_backward(dpred1, ctx1);
            if (cfg.lambda2 != 0.0) dh1 += cfg.lambda2 * dh1s;
            model.encode_backward(dh1, ctx1);
            Mat dh2 = model.decode_backward(dpred2, ctx2);
            if (cfg.lambda2 != 0.0) dh2 += cfg.lambda2 * dh2s;
            model.encode_backward(dh2, ctx2);

            res.state.adam.step(model.params(), lr);

            sum_l2a += l2a;
            sum_l2b += l2b;
            sum_ls += ls;
            sum_total += total;
            if (stop_requested().load()) break;
        }

        EpochLog log;
        log.epoch = epoch;
        log.l2_a = sum_l2a / spe;
        log.l2_b = sum_l2b / spe;
        log.l_s = sum_ls / spe;
        log.total = sum_total / spe;
        log.lr = lr;
        if (have_test) {
            std::vector<Pose3> preds = predict(model, res.stats, test_records);
            std::vector<Pose3> gts;
            gts.reserve(test_records.size());
            for (const FrameRecord& r : test_records) gts.push_back(r.pose3d_cam);
            log.test_mpjpe = mpjpe(preds, gts);
            if (res.best_epoch < 0 || log.test_mpjpe < res.best_test_mpjpe) {
                res.best_epoch = epoch;
                res.best_test_mpjpe = log.test_mpjpe;
                res.best_model = model;
                res.state.best_epoch = epoch;
            }
        }
        log.wall_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.log.push_back(log);
        res.state.next_epoch = epoch + 1;
        if (cfg.verbose)
            std::cout << "epoch " << epoch << " total " << log.total << " test_mpjpe "
                      << log.test_mpjpe << " lr " << lr << " (" << log.wall_s << " s)\n";
        if (stop_requested().load()) break;
    }
    if (res.best_epoch < 0) res.best_model = model;
    return res;
}

// Restores a checkpoint into a fresh TrainResult and continues training.
inline TrainResult resume(const std::vector<NamedTensor>& checkpoint,
                          const TrainConfig& cfg,
                          const std::vector<FrameRecord>& train_records,
                          const std::vector<FrameRecord>& test_records) {
    ModelConfig mc;
    mc.embedding.m = cfg.m;
    mc.hidden = cfg.hidden;
    mc.dropout = cfg.dropout;
    mc.lrelu_slope = cfg.lrelu_slope;
    TrainResult res;
    res.final_model = LiftingModel(mc);
    tensors_to_model(checkpoint, res.final_model, res.stats, &res.state);
    res.best_model = res.final_model;
    res.best_epoch = res.state.best_epoch;
    return train(cfg, train_records, test_records, std::move(res));
}

// ---------------------------------------------------------------------------
// Ablation suite at desk scale, with published full-scale reference values.

struct AblationRow {
    std::string variant;
    std::uint64_t seed = 0;
    double mpjpe_mm = 0.0;
    double reference_mm = 0.0;  // published full-scale value, for side-by-side reading
};

struct AblationSetup {
    Dataset base;                 // unaugmented, with world poses
    AugmentationConfig aug;
    SplitConfig split;
    std::string test_camera;
    TrainConfig train_cfg;        // shared by every variant
    std::vector<std::uint64_t> seeds{0, 1, 2};
};

inline std::vector<AblationRow> ablation_suite(const AblationSetup& setup) {
    struct Variant {
        std::string name;
        bool siamese;
        bool augmentation;
        double slope;
        double reference;
    };
    const std::vector<Variant> variants = {
        {"all_on", true, true, setup.train_cfg.lrelu_slope, 65.8},
        {"wo_siamese", false, true, setup.train_cfg.lrelu_slope, 71.1},
        {"wo_augmentation", true, false, setup.train_cfg.lrelu_slope, 81.0},
        {"wo_leaky_relu", true, true, 0.0, 67.1},
        {"baseline", false, false, setup.train_cfg.lrelu_slope, 86.5},
    };

    Dataset augmented = augment_cameras(setup.base, setup.aug, {setup.test_camera});
    std::vector<AblationRow> rows;
    for (const Variant& v : variants) {
        const Dataset& data = v.augmentation ? augmented : setup.base;
        Split split = split_protocol(data.records, 3, setup.test_camera, setup.split);
        for (std::uint64_t seed : setup.seeds) {
            TrainConfig cfg = setup.train_cfg;
            cfg.seed = seed;
            cfg.siamese_enabled = v.siamese;
            if (!v.siamese) cfg.lambda2 = 0.0;
            cfg.lrelu_slope = v.slope;
            TrainResult res = train(cfg, split.train, split.test);
            rows.push_back({v.name, seed, res.best_test_mpjpe, v.reference});
        }
    }
    return rows;
}

}  // namespace eqlift
