#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "eqlift/data.hpp"
#include "eqlift/losses.hpp"
#include "eqlift/model.hpp"

namespace eqlift {

// Worker cap from the environment; evaluation fans out over frozen-model
// batches, everything else stays single-threaded.
inline int worker_threads() {
    if (const char* env = std::getenv("EQLF_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

// Inference on raw detections: normalize -> encode -> decode -> denormalize.
// Returns hip-centered camera-frame poses in mm.
inline std::vector<Pose3> predict(LiftingModel& model, const NormStats& stats,
                                  const std::vector<FrameRecord>& records) {
    if (stats.mean2d.size() == 0) throw StatsMissing("predict: stats not fitted");
    const std::size_t n = records.size();
    std::vector<Pose3> out(n);
    const int threads = std::min<int>(worker_threads(), std::max<std::size_t>(n, 1));
    auto run_chunk = [&](std::size_t lo, std::size_t hi) {
        if (lo >= hi) return;
        Mat x(static_cast<Eigen::Index>(hi - lo), kInputDim);
        for (std::size_t i = lo; i < hi; ++i)
            x.row(static_cast<Eigen::Index>(i - lo)) =
                stats.normalize2d(record_input(records[i])).transpose();
        BranchCtx ctx;
        RngStream rng;  // unused in infer mode
        Mat h = model.encode(x, Mode::Infer, rng, ctx);
        Mat y = model.decode(h, Mode::Infer, rng, ctx);
        for (std::size_t i = lo; i < hi; ++i)
            out[i] = vec_to_pose3(
                stats.denormalize3d(y.row(static_cast<Eigen::Index>(i - lo)).transpose()));
    };
    if (threads <= 1) {
        run_chunk(0, n);
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (n + static_cast<std::size_t>(threads) - 1) /
                            static_cast<std::size_t>(threads);
        for (int t = 0; t < threads; ++t) {
            std::size_t lo = static_cast<std::size_t>(t) * chunk;
            std::size_t hi = std::min(n, lo + chunk);
            pool.emplace_back(run_chunk, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

// Mean over frames and joints of per-joint Euclidean distance, mm.
inline double mpjpe(const std::vector<Pose3>& preds, const std::vector<Pose3>& gts) {
    detail::check(preds.size() == gts.size() && !preds.empty(),
                  "mpjpe: batch size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        for (int j = 0; j < kJoints; ++j)
            sum += (preds[i].col(j) - gts[i].col(j)).norm();
    return sum / (static_cast<double>(preds.size()) * kJoints);
}

// Per-frame Procrustes alignment, then MPJPE.
inline double mpjpe_procrustes(const std::vector<Pose3>& preds,
                               const std::vector<Pose3>& gts, bool with_scale = false) {
    detail::check(preds.size() == gts.size() && !preds.empty(),
                  "mpjpe_procrustes: batch size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        Pose3 aligned = procrustes_align(preds[i], gts[i], with_scale);
        for (int j = 0; j < kJoints; ++j)
            sum += (aligned.col(j) - gts[i].col(j)).norm();
    }
    return sum / (static_cast<double>(preds.size()) * kJoints);
}

inline std::uint64_t model_fingerprint(LiftingModel& model) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix_bytes = [&h](const double* data, std::size_t n) {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n * sizeof(double); ++i) {
            h ^= p[i];
            h *= 0x100000001B3ULL;
        }
    };
    for (Param* p : model.params())
        mix_bytes(p->value.data(), static_cast<std::size_t>(p->value.size()));
    return h;
}

struct EvalReport {
    std::map<std::string, double> per_action;      // action -> MPJPE mm
    std::map<std::string, int> per_action_frames;  // action -> n frames
    double average = 0.0;                          // frame-weighted
    int protocol = 1;
    int n_frames = 0;
    std::uint64_t model_fp = 0;
    std::uint64_t seed = 0;
};

// Splits per protocol, predicts on the test side, groups by action.
// Protocol 2 uses Procrustes-aligned MPJPE; 1 and 3 use the plain metric.
inline EvalReport run_protocol(LiftingModel& model, const NormStats& stats,
                               const std::vector<FrameRecord>& records, int protocol,
                               const std::string& test_camera, const SplitConfig& split_cfg,
                               bool with_scale = false) {
    Split split = split_protocol(records, protocol, test_camera, split_cfg);
    std::vector<Pose3> preds = predict(model, stats, split.test);

    std::map<std::string, double> err_sum;
    std::map<std::string, int> count;
    for (std::size_t i = 0; i < split.test.size(); ++i) {
        const FrameRecord& r = split.test[i];
        Pose3 pred = preds[i];
        if (protocol == 2) pred = procrustes_align(pred, r.pose3d_cam, with_scale);
        double e = 0.0;
        for (int j = 0; j < kJoints; ++j)
            e += (pred.col(j) - r.pose3d_cam.col(j)).norm();
        err_sum[r.action] += e / kJoints;
        count[r.action] += 1;
    }

    EvalReport rep;
    rep.protocol = protocol;
    rep.model_fp = model_fingerprint(model);
    double total = 0.0;
    int frames = 0;
    for (const auto& [action, sum] : err_sum) {
        rep.per_action[action] = sum / count[action];
        rep.per_action_frames[action] = count[action];
        total += sum;
        frames += count[action];
    }
    rep.n_frames = frames;
    rep.average = total / frames;
    return rep;
}

struct EquivarianceStats {
    double mean = 0.0;
    double median = 0.0;
    double mean_normalized = 0.0;  // mean / (2 sqrt(M))
};

// Residual of the relation the siamese loss trains toward:
// |R2 R1^-1 h1 - h2|_F per pair, over already-normalized pair batches.
inline EquivarianceStats equivariance_error(LiftingModel& model,
                                            const std::vector<PairBatch>& batches) {
    std::vector<double> residuals;
    RngStream rng;
    for (const PairBatch& b : batches) {
        BranchCtx c1, c2;
        Mat h1 = model.encode(b.x1, Mode::Infer, rng, c1);
        Mat h2 = model.encode(b.x2, Mode::Infer, rng, c2);
        const Eigen::Index m = h1.cols() / 3;
        for (Eigen::Index i = 0; i < h1.rows(); ++i) {
            const Mat3& r = b.targets[static_cast<std::size_t>(i)].rel_rot.m;
            double sq = 0.0;
            for (Eigen::Index k = 0; k < m; ++k) {
                Vec3 v1(h1(i, 3 * k), h1(i, 3 * k + 1), h1(i, 3 * k + 2));
                Vec3 v2(h2(i, 3 * k), h2(i, 3 * k + 1), h2(i, 3 * k + 2));
                sq += (r * v1 - v2).squaredNorm();
            }
            residuals.push_back(std::sqrt(sq));
        }
    }
    EquivarianceStats s;
    if (residuals.empty()) return s;
    double sum = 0.0;
    for (double r : residuals) sum += r;
    s.mean = sum / static_cast<double>(residuals.size());
    std::sort(residuals.begin(), residuals.end());
    s.median = residuals[residuals.size() / 2];
    s.mean_normalized = s.mean / siamese_distance_bound(model.cfg.embedding.m);
    return s;
}

// Rotates embeddings about the world vertical axis (expressed in each
// record's camera frame), decodes, and compares to the rotated ground truth.
// Returns (angle_deg, mpjpe_mm) rows, plus per-frame medians.
struct EmbedRotationRow {
    double angle_deg = 0.0;
    double mpjpe_mm = 0.0;
    double median_mm = 0.0;
};

inline std::vector<EmbedRotationRow> embedding_rotation_experiment(
    LiftingModel& model, const NormStats& stats,
    const std::vector<FrameRecord>& records, const std::vector<double>& angles_deg) {
    const std::size_t n = records.size();
    Mat x(static_cast<Eigen::Index>(n), kInputDim);
    for (std::size_t i = 0; i < n; ++i)
        x.row(static_cast<Eigen::Index>(i)) =
            stats.normalize2d(record_input(records[i])).transpose();
    BranchCtx ctx;
    RngStream rng;
    Mat h = model.encode(x, Mode::Infer, rng, ctx);

    std::vector<EmbedRotationRow> rows;
    for (double angle : angles_deg) {
        Mat hr = h;
        std::vector<Mat3> rot_cam(n);
        Mat3 ry = rot_vertical(angle).m;
        for (std::size_t i = 0; i < n; ++i) {
            const Mat3& rc = records[i].camera.rot.m;
            rot_cam[i] = rc * ry * rc.transpose();
            Mat row = hr.row(static_cast<Eigen::Index>(i));
            apply_rotation_rows(rot_cam[i], row);
            hr.row(static_cast<Eigen::Index>(i)) = row;
        }
        BranchCtx dctx;
        Mat y = model.decode(hr, Mode::Infer, rng, dctx);
        std::vector<double> frame_err(n);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            Pose3 pred = vec_to_pose3(
                stats.denormalize3d(y.row(static_cast<Eigen::Index>(i)).transpose()));
            Pose3 gt = rot_cam[i] * records[i].pose3d_cam;
            double e = 0.0;
            for (int j = 0; j < kJoints; ++j) e += (pred.col(j) - gt.col(j)).norm();
            frame_err[i] = e / kJoints;
            sum += frame_err[i];
        }
        std::sort(frame_err.begin(), frame_err.end());
        rows.push_back({angle, sum / static_cast<double>(n), frame_err[n / 2]});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Sweep: test error as a function of the closest training camera's
// azimuth distance to the test camera. Training itself is injected so this
// header stays independent of the trainer.

struct SweepRow {
    double distance_deg = 0.0;
    std::string variant;  // "siamese" or "baseline"
    std::uint64_t seed = 0;
    double mpjpe_mm = 0.0;
};

// train_eval(train_records, test_records, siamese_enabled, seed) -> test MPJPE mm
using TrainEvalFn = std::function<double(const std::vector<FrameRecord>&,
                                         const std::vector<FrameRecord>&, bool,
                                         std::uint64_t)>;

// For each distance d, keeps only training cameras at azimuth distance >= d
// from the test camera (d = 0 additionally admits the test camera itself),
// then trains both variants from scratch per seed.
inline std::vector<SweepRow> aug_distance_sweep(
    const Dataset& base, const AugmentationConfig& aug_cfg, const SplitConfig& split_cfg,
    const std::string& test_camera, const std::vector<double>& distances_deg,
    const std::vector<std::uint64_t>& seeds, const TrainEvalFn& train_eval) {
    if (!base.ring) throw GeometryUnknown("sweep: dataset has no ring geometry");
    AugmentationConfig cfg = aug_cfg;
    cfg.drop_nearest = 0;  // distance filtering below supersedes it
    Dataset augmented = augment_cameras(base, cfg, {test_camera});

    double test_az = 0.0;
    bool found = false;
    for (const FrameRecord& r : augmented.records) {
        if (r.camera.id == test_camera) {
            test_az = camera_azimuth_deg(r.camera, *augmented.ring);
            found = true;
            break;
        }
    }
    if (!found) throw UnknownCamera("sweep: test camera " + test_camera);

    auto subject_in = [](const std::vector<int>& v, int s) {
        return std::find(v.begin(), v.end(), s) != v.end();
    };

    std::vector<FrameRecord> test_records;
    for (const FrameRecord& r : augmented.records)
        if (subject_in(split_cfg.test_subjects, r.subject) && r.camera.id == test_camera)
            test_records.push_back(r);
    if (test_records.empty()) throw EmptySplit("sweep: empty test set");

    std::vector<SweepRow> rows;
    for (double d : distances_deg) {
        std::vector<FrameRecord> train_records;
        for (const FrameRecord& r : augmented.records) {
            if (!subject_in(split_cfg.train_subjects, r.subject)) continue;
            if (r.camera.id == test_camera) {
                if (d == 0.0) train_records.push_back(r);
                continue;
            }
            double az = camera_azimuth_deg(r.camera, *augmented.ring);
            if (circular_distance_deg(az, test_az) >= d - 1e-9)
                train_records.push_back(r);
        }
        if (train_records.empty())
            throw EmptySplit("sweep: no training cameras at distance >= " +
                             std::to_string(d));
        for (std::uint64_t seed : seeds) {
            rows.push_back({d, "siamese", seed,
                            train_eval(train_records, test_records, true, seed)});
            rows.push_back({d, "baseline", seed,
                            train_eval(train_records, test_records, false, seed)});
        }
    }
    return rows;
}

}  // namespace eqlift
