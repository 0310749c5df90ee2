// Acceptance gate: one named test case per criterion, each printing a single
// PASS/FAIL line. Long criteria train real models at desk scale; budgets are
// enforced through ctest timeouts.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "eqlift/commands.hpp"

using namespace eqlift;

namespace {

void report(const char* name, bool ok, const std::string& detail = "") {
    std::printf("[ACCEPTANCE] %s: %s%s%s\n", ok ? "PASS" : "FAIL", name,
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    CHECK_MESSAGE(ok, name << " " << detail);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

Mat random_mat(Eigen::Index r, Eigen::Index c, RngStream& rng) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
    return m;
}

// Synthetic capture used by the training-based criteria.
Dataset capture(int subjects, int actions, int frames, int cameras,
                std::uint64_t seed, double noise_px = 0.0) {
    SynthConfig cfg;
    cfg.n_subjects = subjects;
    cfg.n_actions = actions;
    cfg.frames_per_action = frames;
    cfg.n_cameras = cameras;
    cfg.seed = seed;
    cfg.detector_noise_px = noise_px;
    return generate_synthetic(cfg);
}

TrainConfig desk_train(int m, int hidden, int epochs, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.m = m;
    cfg.hidden = hidden;
    cfg.epochs = epochs;
    cfg.batch_size = 256;
    cfg.seed = seed;
    return cfg;
}

// Pair batches linking the held-out camera to every other view of the same
// instant, restricted to test subjects.
std::vector<PairBatch> held_out_pairs(const std::vector<FrameRecord>& records,
                                      const std::vector<int>& test_subjects,
                                      const std::string& held_camera,
                                      const NormStats& stats) {
    auto is_test = [&](int s) {
        return std::find(test_subjects.begin(), test_subjects.end(), s) !=
               test_subjects.end();
    };
    std::map<std::tuple<int, std::string, int>, std::vector<const FrameRecord*>> groups;
    for (const FrameRecord& r : records)
        if (is_test(r.subject))
            groups[std::make_tuple(r.subject, r.action, r.frame)].push_back(&r);

    std::vector<const FrameRecord*> firsts, seconds;
    for (const auto& [key, group] : groups) {
        const FrameRecord* held = nullptr;
        for (const FrameRecord* r : group)
            if (r->camera.id == held_camera) held = r;
        if (!held) continue;
        for (const FrameRecord* r : group)
            if (r->camera.id != held_camera) {
                firsts.push_back(r);
                seconds.push_back(held);
            }
    }
    REQUIRE(!firsts.empty());

    std::vector<PairBatch> batches;
    const std::size_t bs = 256;
    for (std::size_t lo = 0; lo < firsts.size(); lo += bs) {
        std::size_t hi = std::min(firsts.size(), lo + bs);
        PairBatch b;
        b.x1.resize(static_cast<Eigen::Index>(hi - lo), 2 * kJoints);
        b.x2.resize(static_cast<Eigen::Index>(hi - lo), 2 * kJoints);
        b.targets.resize(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) {
            b.x1.row(static_cast<Eigen::Index>(i - lo)) =
                stats.normalize2d(record_input(*firsts[i])).transpose();
            b.x2.row(static_cast<Eigen::Index>(i - lo)) =
                stats.normalize2d(record_input(*seconds[i])).transpose();
            b.targets[i - lo] =
                build_siamese_target(firsts[i]->camera, firsts[i]->pose3d_cam,
                                     seconds[i]->camera, seconds[i]->pose3d_cam);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace

TEST_CASE("acceptance_gradients") {
    auto t0 = std::chrono::steady_clock::now();
    ModelConfig mc;
    mc.embedding.m = 16;
    mc.hidden = 24;
    mc.dropout = 0.2;
    LiftingModel model(mc);
    RngStream init(3);
    model.init(init);

    RngStream data_rng(5);
    const int batch = 8;
    Mat x1 = random_mat(batch, kInputDim, data_rng);
    Mat x2 = random_mat(batch, kInputDim, data_rng);
    Mat y1 = random_mat(batch, kOutputDim, data_rng);
    Mat y2 = random_mat(batch, kOutputDim, data_rng);
    std::vector<SiameseTarget> targets(batch);
    for (int i = 0; i < batch; ++i) {
        targets[static_cast<std::size_t>(i)].rel_rot =
            rot_vertical(data_rng.uniform() * 360.0);
        targets[static_cast<std::size_t>(i)].pose_dist = data_rng.uniform() * 400.0;
    }
    const double lambda1 = 0.01, lambda2 = 1.0;

    std::vector<Param*> params = model.params();
    auto loss = [&](bool grads) {
        LiftingModel copy = model;  // freeze running batchnorm stats per probe
        // A fresh stream replays the identical dropout masks on every call.
        RngStream rng(0);
        BranchCtx c1, c2;
        SiameseOut out =
            forward_siamese(copy, x1, x2, Mode::Train, rng, c1, c2);
        Mat d1, d2, dh1s, dh2s;
        double l2a = l2_pose_loss(out.pred1, y1, grads ? &d1 : nullptr);
        double l2b = l2_pose_loss(out.pred2, y2, grads ? &d2 : nullptr);
        double ls = siamese_loss(out.h1, out.h2, targets, lambda1,
                                 grads ? &dh1s : nullptr, grads ? &dh2s : nullptr);
        if (grads) {
            copy.zero_grads();
            Mat dh1 = copy.decode_backward(d1, c1) + lambda2 * dh1s;
            copy.encode_backward(dh1, c1);
            Mat dh2 = copy.decode_backward(d2, c2) + lambda2 * dh2s;
            copy.encode_backward(dh2, c2);
            std::vector<Param*> cp = copy.params();
            for (std::size_t k = 0; k < params.size(); ++k)
                params[k]->grad = cp[k]->grad;
        }
        return total_loss(l2a, l2b, ls, lambda2);
    };
    double max_rel = grad_check(params, loss);
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char detail[128];
    std::snprintf(detail, sizeof(detail), "max rel err %.3g (tol 1e-4), %.1f s",
                  max_rel, secs);
    report("gradient suite", max_rel <= 1e-4 && secs < 30.0, detail);
}

TEST_CASE("acceptance_geometry") {
    auto t0 = std::chrono::steady_clock::now();
    RngStream rng(11);
    bool ok = true;

    // 100 random rigid transforms recovered exactly.
    double worst_recovery = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Pose3 gt;
        for (Eigen::Index i = 0; i < gt.size(); ++i)
            gt.data()[i] = rng.gaussian() * 300.0;
        Mat3 ry = rot_vertical(rng.uniform() * 360.0 - 180.0).m;
        double a = rng.uniform() * 6.28318530717958647692;
        Mat3 rx;
        rx << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
        Mat3 r = ry * rx;
        Vec3 t(rng.gaussian() * 100, rng.gaussian() * 100, rng.gaussian() * 100);
        Pose3 pred = r.transpose() * (gt.colwise() - t);
        Pose3 aligned = procrustes_align(pred, gt);
        worst_recovery =
            std::max(worst_recovery, (aligned - gt).cwiseAbs().maxCoeff());
    }
    ok = ok && worst_recovery <= 1e-9;

    // Projection against the homogeneous 4x4 pipeline.
    double worst_proj = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        double az = rng.uniform() * 6.28318530717958647692;
        Camera cam = look_at_camera(
            Vec3(4000 * std::sin(az), 1600, 4000 * std::cos(az)), Vec3(0, 1000, 0),
            {1150, 1150}, {500, 500}, "c");
        Pose3 pose;
        for (Eigen::Index i = 0; i < pose.size(); ++i)
            pose.data()[i] = rng.gaussian() * 350.0;
        pose.row(1).array() += 1000.0;
        Eigen::Matrix<double, 3, 4> ext;
        ext.block<3, 3>(0, 0) = cam.rot.m;
        ext.col(3) = -cam.rot.m * cam.center;
        Mat3 k = Mat3::Identity();
        k(0, 0) = cam.focal.x();
        k(1, 1) = cam.focal.y();
        k(0, 2) = cam.principal.x();
        k(1, 2) = cam.principal.y();
        Pose2 uv = project(cam, pose);
        for (int j = 0; j < kJoints; ++j) {
            Eigen::Vector4d ph(pose(0, j), pose(1, j), pose(2, j), 1.0);
            Vec3 q = k * (ext * ph);
            worst_proj = std::max(worst_proj, std::abs(uv(0, j) - q.x() / q.z()));
            worst_proj = std::max(worst_proj, std::abs(uv(1, j) - q.y() / q.z()));
        }
    }
    ok = ok && worst_proj <= 1e-9;

    // Rotation group laws.
    double worst_group = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        double a = rng.uniform() * 360.0 - 180.0;
        double b = rng.uniform() * 360.0 - 180.0;
        Rotation3 ra = rot_vertical(a), rb = rot_vertical(b);
        worst_group = std::max(
            worst_group, ((ra * rb).m - rot_vertical(a + b).m).norm());
        worst_group = std::max(
            worst_group, ((ra * ra.inverse()).m - Mat3::Identity()).norm());
        worst_group = std::max(worst_group, std::abs(ra.m.determinant() - 1.0));
    }
    ok = ok && worst_group <= 1e-12;

    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ok = ok && secs < 5.0;
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "recovery %.2g mm, projection %.2g px, group %.2g, %.1f s",
                  worst_recovery, worst_proj, worst_group, secs);
    report("geometry oracle suite", ok, detail);
}

TEST_CASE("acceptance_equivariance") {
    // 9 ring cameras, one held out; ~20k records, M=64, 30 epochs, 3 seeds.
    Dataset ds = capture(5, 3, 150, 9, 2024);
    SplitConfig sc = default_split(ds.records);
    const std::string held = "cam0";
    Split split = split_protocol(ds.records, 3, held, sc);

    std::vector<double> ratios;
    for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
        TrainConfig cfg = desk_train(64, 128, 30, seed);
        TrainConfig init_cfg = cfg;
        init_cfg.epochs = 0;
        TrainResult at_init = train(init_cfg, split.train, split.test);
        std::vector<PairBatch> pairs =
            held_out_pairs(ds.records, sc.test_subjects, held, at_init.stats);
        double before = equivariance_error(at_init.final_model, pairs).mean;

        TrainResult trained = train(cfg, split.train, split.test);
        double after = equivariance_error(trained.best_model, pairs).mean;
        ratios.push_back(after / before);
        std::printf("  seed %llu: equivariance error %.4f -> %.4f (ratio %.3f)\n",
                    static_cast<unsigned long long>(seed), before, after,
                    after / before);
        std::fflush(stdout);
    }
    double med = median(ratios);
    char detail[96];
    std::snprintf(detail, sizeof(detail), "median ratio %.3f (need <= 0.5)", med);
    report("equivariance training property", med <= 0.5, detail);
}

TEST_CASE("acceptance_cross_camera") {
    // Noisy detections and a coarse augmentation step leave room for the
    // siamese term to add cross-view information on the held-out camera.
    Dataset base = capture(4, 2, 40, 4, 77, 10.0);
    const std::string held = "cam0";
    SplitConfig sc = default_split(base.records);
    AugmentationConfig aug;
    aug.step_deg = 60.0;
    aug.noise_enabled = true;
    aug.noise_sigma_px = 10.0;
    Dataset augmented = augment_cameras(base, aug, {held});

    struct Variant {
        const char* name;
        bool siamese;
        bool augmentation;
    };
    const Variant variants[] = {
        {"all_on", true, true}, {"wo_siamese", false, true}, {"baseline", false, false}};

    std::map<std::string, double> medians;
    for (const Variant& v : variants) {
        const Dataset& data = v.augmentation ? augmented : base;
        Split split = split_protocol(data.records, 3, held, sc);
        std::vector<double> errs;
        for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
            TrainConfig cfg = desk_train(64, 128, 25, seed);
            cfg.lambda2 = 0.3;
            cfg.siamese_enabled = v.siamese;
            if (!v.siamese) cfg.lambda2 = 0.0;
            TrainResult res = train(cfg, split.train, split.test);
            errs.push_back(res.best_test_mpjpe);
        }
        medians[v.name] = median(errs);
        std::printf("  %s: median held-out MPJPE %.2f mm (seeds: %.2f %.2f %.2f)\n",
                    v.name, medians[v.name], errs[0], errs[1], errs[2]);
        std::fflush(stdout);
    }
    bool ok = medians["all_on"] < medians["wo_siamese"] &&
              medians["wo_siamese"] < medians["baseline"];
    char detail[128];
    std::snprintf(detail, sizeof(detail), "%.2f < %.2f < %.2f expected",
                  medians["all_on"], medians["wo_siamese"], medians["baseline"]);
    report("cross-camera benefit ordering", ok, detail);
}

TEST_CASE("acceptance_sweep") {
    Dataset base = capture(4, 2, 40, 4, 123, 10.0);
    const std::string held = "cam0";
    SplitConfig sc = default_split(base.records);
    AugmentationConfig aug;
    aug.step_deg = 60.0;
    aug.noise_enabled = true;
    aug.noise_sigma_px = 10.0;

    TrainConfig base_cfg = desk_train(64, 128, 25, 0);
    base_cfg.lambda2 = 0.3;
    auto rows = aug_distance_sweep(base, aug, sc, held, {15.0, 45.0, 90.0},
                                   {0, 1, 2}, make_train_eval(base_cfg));

    std::map<double, std::map<std::string, std::vector<double>>> grouped;
    for (const SweepRow& r : rows)
        grouped[r.distance_deg][r.variant].push_back(r.mpjpe_mm);
    bool ok = true;
    std::string detail;
    for (auto& [d, by_variant] : grouped) {
        double s = median(by_variant["siamese"]);
        double b = median(by_variant["baseline"]);
        char buf[80];
        std::snprintf(buf, sizeof(buf), "d=%g: %.2f vs %.2f; ", d, s, b);
        detail += buf;
        std::printf("  distance %g deg: siamese %.2f mm, baseline %.2f mm\n", d, s, b);
        std::fflush(stdout);
        ok = ok && s <= b;
    }
    report("distance sweep direction", ok, detail);
}

TEST_CASE("acceptance_embed_rotation") {
    Dataset ds = capture(4, 2, 60, 4, 55);
    SplitConfig sc = default_split(ds.records);
    const std::string held = "cam0";
    AugmentationConfig aug;
    Dataset augmented = augment_cameras(ds, aug, {held});
    Split split = split_protocol(augmented.records, 3, held, sc);

    TrainConfig cfg = desk_train(64, 128, 25, 0);
    TrainResult res = train(cfg, split.train, split.test);
    auto rows = embedding_rotation_experiment(res.best_model, res.stats, split.test,
                                              {-45.0, 0.0, 45.0});
    REQUIRE(rows.size() == 3);
    double at_zero = rows[1].median_mm;
    bool ok = rows[0].median_mm <= 1.5 * at_zero && rows[2].median_mm <= 1.5 * at_zero;
    char detail[128];
    std::snprintf(detail, sizeof(detail),
                  "median MPJPE -45/0/+45: %.2f / %.2f / %.2f mm (cap %.2f)",
                  rows[0].median_mm, at_zero, rows[2].median_mm, 1.5 * at_zero);
    report("embedding rotation sanity", ok, detail);
}

TEST_CASE("acceptance_determinism") {
    namespace fs = std::filesystem;
    Json cfg = load_config("");
    apply_override(cfg, "synth.n_subjects=3");
    apply_override(cfg, "synth.n_actions=2");
    apply_override(cfg, "synth.frames_per_action=10");
    apply_override(cfg, "synth.n_cameras=3");
    apply_override(cfg, "model.m=8");
    apply_override(cfg, "model.hidden=24");
    apply_override(cfg, "train.epochs=3");
    apply_override(cfg, "train.batch_size=16");
    apply_override(cfg, "eval.protocol=1");

    fs::path tmp = fs::temp_directory_path();
    Json cfg_a = cfg, cfg_b = cfg;
    cfg_a["output"]["dir"] = (tmp / "eqlift_det_a").string();
    cfg_b["output"]["dir"] = (tmp / "eqlift_det_b").string();
    // The output directory is excluded from the hashed identity of a run.
    Json hashed = cfg;
    hashed.erase("output");
    Json hashed_b = cfg;
    hashed_b.erase("output");
    bool same_hash = config_hash(hashed) == config_hash(hashed_b);

    cmd_train(cfg_a);
    cmd_train(cfg_b);

    bool ok = same_hash;
    for (const char* name : {"trainlog.csv", "best.eqlf", "final.eqlf"}) {
        std::string a = slurp((fs::path(cfg_a["output"]["dir"].get<std::string>()) /
                               name).string());
        std::string b = slurp((fs::path(cfg_b["output"]["dir"].get<std::string>()) /
                               name).string());
        // Only the self-describing config hash comment may differ, and with
        // equal configs it does not.
        std::string a_cmp = a, b_cmp = b;
        if (std::string(name) == "trainlog.csv") {
            auto strip = [](std::string s) {
                auto pos = s.find('\n');
                return s.substr(pos + 1);  // drop the config_hash comment line
            };
            a_cmp = strip(a_cmp);
            b_cmp = strip(b_cmp);
        }
        ok = ok && a_cmp == b_cmp;
    }
    fs::remove_all(cfg_a["output"]["dir"].get<std::string>());
    fs::remove_all(cfg_b["output"]["dir"].get<std::string>());
    report("determinism", ok, "byte-identical train logs and checkpoints");
}

TEST_CASE("acceptance_formats") {
    namespace fs = std::filesystem;
    fs::path tmp = fs::temp_directory_path();
    bool ok = true;

    // JSONL: write -> read -> write is byte-identical.
    Dataset ds = capture(2, 2, 5, 3, 13);
    std::string p1 = (tmp / "eqlift_fmt_1.jsonl").string();
    std::string p2 = (tmp / "eqlift_fmt_2.jsonl").string();
    write_dataset(ds, p1);
    Dataset back = read_dataset(p1);
    write_dataset(back, p2);
    ok = ok && slurp(p1) == slurp(p2);

    // EQLF: save -> load -> save is byte-identical.
    ModelConfig mc;
    mc.embedding.m = 4;
    mc.hidden = 16;
    LiftingModel model(mc);
    RngStream rng(21);
    model.init(rng);
    NormStats stats = fit_norm_stats(ds.records);
    std::string c1 = (tmp / "eqlift_fmt_1.eqlf").string();
    std::string c2 = (tmp / "eqlift_fmt_2.eqlf").string();
    write_checkpoint(c1, model_to_tensors(model, stats));
    LiftingModel loaded(mc);
    NormStats lstats;
    tensors_to_model(read_checkpoint(c1), loaded, lstats);
    write_checkpoint(c2, model_to_tensors(loaded, lstats));
    ok = ok && slurp(c1) == slurp(c2);

    // Corrupted inputs fail with the specified error classes.
    bool threw_checksum = false, threw_parse = false, threw_version = false;
    {
        std::string bytes = slurp(c1);
        bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x10);
        try {
            deserialize_checkpoint(bytes);
        } catch (const ChecksumError&) {
            threw_checksum = true;
        }
    }
    {
        std::string bad = (tmp / "eqlift_fmt_bad.jsonl").string();
        std::ofstream out(bad);
        out << "{\"schema_version\":1}\n{\"subject\": oops\n";
        out.close();
        try {
            read_dataset(bad);
        } catch (const ParseError&) {
            threw_parse = true;
        }
        std::remove(bad.c_str());
    }
    {
        std::string bad = (tmp / "eqlift_fmt_ver.jsonl").string();
        std::ofstream out(bad);
        out << "{\"schema_version\":42}\n";
        out.close();
        try {
            read_dataset(bad);
        } catch (const SchemaVersionMismatch&) {
            threw_version = true;
        }
        std::remove(bad.c_str());
    }
    ok = ok && threw_checksum && threw_parse && threw_version;

    for (const std::string& p : {p1, p2, c1, c2}) std::remove(p.c_str());
    report("format suite", ok, "JSONL and EQLF round trips lossless; errors typed");
}
