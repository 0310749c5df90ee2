#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "eqlift/errors.hpp"
#include "eqlift/geometry.hpp"
#include "eqlift/losses.hpp"
#include "eqlift/rng.hpp"

namespace eqlift {

inline constexpr int kSchemaVersion = 1;

// Camera circle the dataset was captured on; needed to synthesize new
// viewpoints. Units: mm, world vertical = +y.
struct RingGeometry {
    Vec3 target{0, 1000, 0};
    double radius = 4000;
    double height = 1600;  // absolute camera y
};

// One observation: a 2D detection with its ground-truth 3D pose.
struct FrameRecord {
    int subject = 0;
    std::string action;
    int frame = 0;
    Camera camera;
    Pose2 pose2d_det;                    // pixels
    Pose3 pose3d_cam;                    // hip-centered camera-frame mm
    std::optional<Pose3> pose3d_world;   // world-frame mm, kept for synthetic data
    bool synthetic_cam = false;
};

struct Dataset {
    std::optional<RingGeometry> ring;
    std::vector<FrameRecord> records;
};

// ---------------------------------------------------------------------------
// JSONL serialization. Line 1 is a header object carrying the schema version
// and optional ring geometry; every following line is one FrameRecord.

namespace io_detail {

inline nlohmann::json pose_to_json(const Eigen::Ref<const Eigen::MatrixXd>& p) {
    nlohmann::json a = nlohmann::json::array();
    for (int j = 0; j < p.cols(); ++j) {
        nlohmann::json v = nlohmann::json::array();
        for (int i = 0; i < p.rows(); ++i) v.push_back(p(i, j));
        a.push_back(v);
    }
    return a;
}

template <typename PoseT>
inline PoseT pose_from_json(const nlohmann::json& a) {
    PoseT p;
    if (!a.is_array() || static_cast<int>(a.size()) != p.cols())
        throw ParseError("pose array must have 16 joints");
    for (int j = 0; j < p.cols(); ++j)
        for (int i = 0; i < p.rows(); ++i)
            p(i, j) = a.at(j).at(i).get<double>();
    return p;
}

inline nlohmann::json camera_to_json(const Camera& c) {
    nlohmann::json j;
    j["id"] = c.id;
    nlohmann::json rot = nlohmann::json::array();
    for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) rot.push_back(c.rot.m(r, k));
    j["rot"] = rot;
    j["center"] = {c.center.x(), c.center.y(), c.center.z()};
    j["focal"] = {c.focal.x(), c.focal.y()};
    j["principal"] = {c.principal.x(), c.principal.y()};
    return j;
}

inline Camera camera_from_json(const nlohmann::json& j) {
    Camera c;
    c.id = j.at("id").get<std::string>();
    const auto& rot = j.at("rot");
    for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) c.rot.m(r, k) = rot.at(3 * r + k).get<double>();
    for (int i = 0; i < 3; ++i) c.center(i) = j.at("center").at(i).get<double>();
    for (int i = 0; i < 2; ++i) c.focal(i) = j.at("focal").at(i).get<double>();
    for (int i = 0; i < 2; ++i) c.principal(i) = j.at("principal").at(i).get<double>();
    return c;
}

}  // namespace io_detail

inline void write_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DiskError("cannot open for writing: " + path);
    nlohmann::json header;
    header["schema_version"] = kSchemaVersion;
    if (ds.ring) {
        header["ring"] = {
            {"target", {ds.ring->target.x(), ds.ring->target.y(), ds.ring->target.z()}},
            {"radius", ds.ring->radius},
            {"height", ds.ring->height}};
    }
    out << header.dump() << "\n";
    for (const FrameRecord& r : ds.records) {
        nlohmann::json j;
        j["subject"] = r.subject;
        j["action"] = r.action;
        j["frame"] = r.frame;
        j["camera"] = io_detail::camera_to_json(r.camera);
        j["pose2d_det"] = io_detail::pose_to_json(r.pose2d_det);
        j["pose3d_cam"] = io_detail::pose_to_json(r.pose3d_cam);
        if (r.pose3d_world) j["pose3d_world"] = io_detail::pose_to_json(*r.pose3d_world);
        j["synthetic_cam"] = r.synthetic_cam;
        out << j.dump() << "\n";
    }
    if (!out) throw DiskError("write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DiskError("cannot open: " + path);
    Dataset ds;
    std::string line;
    int line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        try {
            if (!have_header) {
                int version = j.at("schema_version").get<int>();
                if (version != kSchemaVersion)
                    throw SchemaVersionMismatch(path + ": schema version " +
                                                std::to_string(version) +
                                                ", expected " +
                                                std::to_string(kSchemaVersion));
                if (j.contains("ring")) {
                    RingGeometry ring;
                    const auto& rj = j["ring"];
                    for (int i = 0; i < 3; ++i)
                        ring.target(i) = rj.at("target").at(i).get<double>();
                    ring.radius = rj.at("radius").get<double>();
                    ring.height = rj.at("height").get<double>();
                    ds.ring = ring;
                }
                have_header = true;
                continue;
            }
            FrameRecord r;
            r.subject = j.at("subject").get<int>();
            r.action = j.at("action").get<std::string>();
            r.frame = j.at("frame").get<int>();
            r.camera = io_detail::camera_from_json(j.at("camera"));
            r.pose2d_det = io_detail::pose_from_json<Pose2>(j.at("pose2d_det"));
            r.pose3d_cam = io_detail::pose_from_json<Pose3>(j.at("pose3d_cam"));
            if (j.contains("pose3d_world"))
                r.pose3d_world = io_detail::pose_from_json<Pose3>(j["pose3d_world"]);
            r.synthetic_cam = j.value("synthetic_cam", false);
            ds.records.push_back(std::move(r));
        } catch (const SchemaVersionMismatch&) {
            throw;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Normalization statistics. Input layout: 2D records flatten joint-major to
// 32 values [u0,v0,u1,v1,...]; 3D targets to 48 values [x0,y0,z0,...].

inline Vec record_input(const FrameRecord& r) {
    Vec v(2 * kJoints);
    for (int j = 0; j < kJoints; ++j) {
        v(2 * j) = r.pose2d_det(0, j);
        v(2 * j + 1) = r.pose2d_det(1, j);
    }
    return v;
}

inline Vec record_target(const FrameRecord& r) {
    Vec v(3 * kJoints);
    for (int j = 0; j < kJoints; ++j)
        for (int i = 0; i < 3; ++i) v(3 * j + i) = r.pose3d_cam(i, j);
    return v;
}

inline Pose3 vec_to_pose3(const Eigen::Ref<const Vec>& v) {
    Pose3 p;
    for (int j = 0; j < kJoints; ++j)
        for (int i = 0; i < 3; ++i) p(i, j) = v(3 * j + i);
    return p;
}

// Stable hash of the split a set of records came from; used as a leakage
// guard so stats fitted on one split cannot silently normalize another.
inline std::uint64_t split_fingerprint(const std::vector<FrameRecord>& records) {
    std::vector<std::string> keys;
    keys.reserve(records.size());
    for (const FrameRecord& r : records) {
        keys.push_back(std::to_string(r.subject) + "|" + r.action + "|" +
                       std::to_string(r.frame) + "|" + r.camera.id);
    }
    std::sort(keys.begin(), keys.end());
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const std::string& k : keys) {
        for (char c : k) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ULL;
        }
        h ^= 0xFF;
        h *= 0x100000001B3ULL;
    }
    return h;
}

struct NormStats {
    Vec mean2d, std2d;  // 32
    Vec mean3d, std3d;  // 48
    std::uint64_t fitted_on = 0;

    static constexpr double kStdFloor = 1e-6;

    Vec normalize2d(const Vec& x) const {
        return (x - mean2d).cwiseQuotient(std2d);
    }
    Vec denormalize2d(const Vec& x) const {
        return x.cwiseProduct(std2d) + mean2d;
    }
    Vec normalize3d(const Vec& x) const {
        return (x - mean3d).cwiseQuotient(std3d);
    }
    Vec denormalize3d(const Vec& x) const {
        return x.cwiseProduct(std3d) + mean3d;
    }
};

inline NormStats fit_norm_stats(const std::vector<FrameRecord>& train) {
    if (train.empty()) throw EmptySplit("fit_norm_stats: no training records");
    const double n = static_cast<double>(train.size());
    NormStats s;
    s.mean2d = Vec::Zero(2 * kJoints);
    s.mean3d = Vec::Zero(3 * kJoints);
    for (const FrameRecord& r : train) {
        s.mean2d += record_input(r);
        s.mean3d += record_target(r);
    }
    s.mean2d /= n;
    s.mean3d /= n;
    Vec var2d = Vec::Zero(2 * kJoints);
    Vec var3d = Vec::Zero(3 * kJoints);
    for (const FrameRecord& r : train) {
        var2d += (record_input(r) - s.mean2d).array().square().matrix();
        var3d += (record_target(r) - s.mean3d).array().square().matrix();
    }
    s.std2d = (var2d / n).cwiseSqrt().cwiseMax(NormStats::kStdFloor);
    s.std3d = (var3d / n).cwiseSqrt().cwiseMax(NormStats::kStdFloor);
    s.fitted_on = split_fingerprint(train);
    return s;
}

inline void check_stats_fingerprint(const NormStats& stats,
                                    const std::vector<FrameRecord>& train) {
    if (stats.fitted_on != split_fingerprint(train))
        throw DataError("norm stats were not fitted on this training split");
}

// ---------------------------------------------------------------------------
// Synthetic mocap generator: a 16-joint H36M-like skeleton on a camera ring.
//
// Joint order: 0 hip, 1 spine, 2 neck, 3 head, 4-6 right arm (shoulder,
// elbow, wrist), 7-9 left arm, 10-12 right leg (hip, knee, ankle), 13-15
// left leg.

inline const std::array<int, kJoints>& skeleton_parents() {
    static const std::array<int, kJoints> p = {-1, 0, 1, 2, 2, 4, 5, 2,
                                               7,  8, 0, 10, 11, 0, 13, 14};
    return p;
}

inline const std::array<Vec3, kJoints>& skeleton_directions() {
    static const std::array<Vec3, kJoints> d = {
        Vec3(0, 0, 0),   Vec3(0, 1, 0),  Vec3(0, 1, 0),  Vec3(0, 1, 0),
        Vec3(-1, 0, 0),  Vec3(0, -1, 0), Vec3(0, -1, 0), Vec3(1, 0, 0),
        Vec3(0, -1, 0),  Vec3(0, -1, 0), Vec3(-1, 0, 0), Vec3(0, -1, 0),
        Vec3(0, -1, 0),  Vec3(1, 0, 0),  Vec3(0, -1, 0), Vec3(0, -1, 0)};
    return d;
}

inline std::vector<double> default_bone_lengths() {
    // Indexed by child joint 1..15, mm.
    return {250, 250, 120, 170, 280, 250, 170, 280, 250, 110, 450, 450, 110, 450, 450};
}

struct SynthConfig {
    int n_subjects = 5;
    int n_actions = 3;
    int frames_per_action = 100;
    std::vector<double> bone_lengths = default_bone_lengths();  // child joints 1..15
    double joint_angle_max_deg = 30.0;
    double root_yaw_max_deg = 180.0;
    double cam_radius_mm = 4000.0;
    double cam_height_mm = 1600.0;
    double cam_target_height_mm = 1000.0;
    int n_cameras = 4;
    double focal_px = 1150.0;
    double principal_px = 500.0;
    double detector_noise_px = 0.0;
    std::uint64_t seed = 0;
};

namespace synth_detail {

inline double skeleton_reach(const std::vector<double>& lengths) {
    const auto& parents = skeleton_parents();
    std::array<double, kJoints> depth{};
    double reach = 0.0;
    for (int j = 1; j < kJoints; ++j) {
        depth[static_cast<std::size_t>(j)] =
            depth[static_cast<std::size_t>(parents[static_cast<std::size_t>(j)])] +
            lengths[static_cast<std::size_t>(j - 1)];
        reach = std::max(reach, depth[static_cast<std::size_t>(j)]);
    }
    return reach;
}

inline Mat3 random_axis_angle(RngStream& rng, double max_deg) {
    double gx = rng.gaussian(), gy = rng.gaussian(), gz = rng.gaussian();
    double angle = max_deg * (2.0 * rng.uniform() - 1.0) * 3.14159265358979323846 / 180.0;
    Vec3 axis(gx, gy, gz);
    double n = axis.norm();
    if (n < 1e-12 || max_deg == 0.0) return Mat3::Identity();
    return Eigen::AngleAxisd(angle, axis / n).toRotationMatrix();
}

inline Pose3 sample_pose(const SynthConfig& cfg, double subject_scale, RngStream& rng) {
    const auto& parents = skeleton_parents();
    const auto& dirs = skeleton_directions();
    double leg = (cfg.bone_lengths[10] + cfg.bone_lengths[11]) * subject_scale;
    Vec3 hip(0.0, leg + 80.0, 0.0);

    double yaw = cfg.root_yaw_max_deg * (2.0 * rng.uniform() - 1.0);
    std::array<Mat3, kJoints> accum;
    Pose3 pose;
    accum[0] = rot_vertical(yaw).m;
    pose.col(0) = hip;
    for (int j = 1; j < kJoints; ++j) {
        const int p = parents[static_cast<std::size_t>(j)];
        Mat3 q = random_axis_angle(rng, cfg.joint_angle_max_deg);
        accum[static_cast<std::size_t>(j)] = accum[static_cast<std::size_t>(p)] * q;
        Vec3 offset = dirs[static_cast<std::size_t>(j)] *
                      (cfg.bone_lengths[static_cast<std::size_t>(j - 1)] * subject_scale);
        pose.col(j) = pose.col(p) + accum[static_cast<std::size_t>(j)] * offset;
    }
    return pose;
}

}  // namespace synth_detail

inline void validate_synth_config(const SynthConfig& cfg) {
    if (cfg.n_subjects < 1 || cfg.n_actions < 1 || cfg.frames_per_action < 1 ||
        cfg.n_cameras < 1)
        throw ConfigInvalid("synth: counts must be positive");
    if (cfg.bone_lengths.size() != kJoints - 1)
        throw ConfigInvalid("synth: bone length table must have 15 entries");
    for (double l : cfg.bone_lengths)
        if (!(l > 0)) throw ConfigInvalid("synth: bone lengths must be positive");
    double reach = synth_detail::skeleton_reach(cfg.bone_lengths) * 1.1 + 80.0;
    if (cfg.cam_radius_mm <= reach)
        throw ConfigInvalid("synth: camera radius " + std::to_string(cfg.cam_radius_mm) +
                            " mm must exceed pose extent " + std::to_string(reach) + " mm");
    if (cfg.focal_px <= 0) throw ConfigInvalid("synth: focal must be positive");
}

inline std::vector<Camera> ring_cameras(const RingGeometry& ring, int n,
                                        double focal, double principal) {
    std::vector<Camera> cams;
    for (int k = 0; k < n; ++k) {
        double az = 360.0 * k / n * 3.14159265358979323846 / 180.0;
        Vec3 center(ring.target.x() + ring.radius * std::sin(az), ring.height,
                    ring.target.z() + ring.radius * std::cos(az));
        cams.push_back(look_at_camera(center, ring.target, {focal, focal},
                                      {principal, principal},
                                      "cam" + std::to_string(k)));
    }
    return cams;
}

inline Pose2 simulate_detector_noise(const Pose2& p2d, const Vec& sigma_px,
                                     RngStream& rng) {
    Pose2 out = p2d;
    for (int j = 0; j < kJoints; ++j) {
        double s = sigma_px.size() == 1 ? sigma_px(0) : sigma_px(j);
        out(0, j) += s * rng.gaussian();
        out(1, j) += s * rng.gaussian();
    }
    return out;
}

inline Pose2 simulate_detector_noise(const Pose2& p2d, double sigma_px,
                                     RngStream& rng) {
    Vec s(1);
    s(0) = sigma_px;
    return simulate_detector_noise(p2d, s, rng);
}

// Deterministic per seed: every draw comes from substreams keyed by
// (subject, action, frame), so record order never perturbs the content.
inline Dataset generate_synthetic(const SynthConfig& cfg) {
    validate_synth_config(cfg);
    Dataset ds;
    RingGeometry ring;
    ring.target = Vec3(0, cfg.cam_target_height_mm, 0);
    ring.radius = cfg.cam_radius_mm;
    ring.height = cfg.cam_height_mm;
    ds.ring = ring;

    std::vector<Camera> cams =
        ring_cameras(ring, cfg.n_cameras, cfg.focal_px, cfg.principal_px);
    RngStream root(cfg.seed);

    for (int s = 0; s < cfg.n_subjects; ++s) {
        RngStream sub_rng = root.substream(0x5375 + static_cast<std::uint64_t>(s));
        double scale = 0.9 + 0.2 * sub_rng.uniform();
        for (int a = 0; a < cfg.n_actions; ++a) {
            for (int f = 0; f < cfg.frames_per_action; ++f) {
                std::uint64_t key = (static_cast<std::uint64_t>(s) << 40) ^
                                    (static_cast<std::uint64_t>(a) << 24) ^
                                    static_cast<std::uint64_t>(f);
                RngStream frame_rng = root.substream(key);
                Pose3 world = synth_detail::sample_pose(cfg, scale, frame_rng);
                for (std::size_t c = 0; c < cams.size(); ++c) {
                    FrameRecord r;
                    r.subject = s;
                    r.action = "act" + std::to_string(a);
                    r.frame = f;
                    r.camera = cams[c];
                    Pose2 det = project(cams[c], world);
                    if (cfg.detector_noise_px > 0) {
                        RngStream noise_rng =
                            root.substream(key ^ (0x4E5AULL + (static_cast<std::uint64_t>(c) << 48)));
                        det = simulate_detector_noise(det, cfg.detector_noise_px, noise_rng);
                    }
                    r.pose2d_det = det;
                    r.pose3d_cam = to_camera_hip_centered(cams[c], world);
                    r.pose3d_world = world;
                    r.synthetic_cam = false;
                    ds.records.push_back(std::move(r));
                }
            }
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Camera-rotation augmentation.

struct AugmentationConfig {
    double step_deg = 15.0;
    int drop_nearest = 2;
    double noise_sigma_px = 5.0;
    bool noise_enabled = false;
    double coincident_tol_deg = 0.5;
    std::uint64_t seed = 0;
};

inline double camera_azimuth_deg(const Camera& cam, const RingGeometry& ring) {
    double az = std::atan2(cam.center.x() - ring.target.x(),
                           cam.center.z() - ring.target.z()) *
                180.0 / 3.14159265358979323846;
    if (az < 0) az += 360.0;
    return az;
}

inline double circular_distance_deg(double a, double b) {
    double d = std::fmod(std::abs(a - b), 360.0);
    return d > 180.0 ? 360.0 - d : d;
}

// Azimuths (degrees) of the synthetic cameras: every step_deg on the ring,
// minus those coincident with original/test cameras, minus the drop_nearest
// closest to each test camera.
inline std::vector<double> synthetic_azimuths(const std::vector<double>& original_az,
                                              const std::vector<double>& test_az,
                                              const AugmentationConfig& cfg) {
    if (cfg.step_deg <= 0) throw ConfigInvalid("augment: step_deg must be positive");
    if (cfg.drop_nearest < 0) throw ConfigInvalid("augment: drop_nearest must be >= 0");
    if (std::abs(std::remainder(360.0, cfg.step_deg)) > 1e-9)
        std::cerr << "warning: augmentation step " << cfg.step_deg
                  << " deg does not divide 360\n";
    std::vector<double> candidates;
    for (double a = 0.0; a < 360.0 - 1e-9; a += cfg.step_deg) {
        bool coincident = false;
        for (double o : original_az)
            if (circular_distance_deg(a, o) <= cfg.coincident_tol_deg) coincident = true;
        for (double t : test_az)
            if (circular_distance_deg(a, t) <= cfg.coincident_tol_deg) coincident = true;
        if (!coincident) candidates.push_back(a);
    }
    for (double t : test_az) {
        for (int k = 0; k < cfg.drop_nearest && !candidates.empty(); ++k) {
            auto it = std::min_element(candidates.begin(), candidates.end(),
                                       [t](double x, double y) {
                                           return circular_distance_deg(x, t) <
                                                  circular_distance_deg(y, t);
                                       });
            candidates.erase(it);
        }
    }
    return candidates;
}

// Appends synthetic-camera records for every unique frame instant. Requires
// ring geometry and world poses (GeometryUnknown otherwise).
inline Dataset augment_cameras(const Dataset& ds, const AugmentationConfig& cfg,
                               const std::vector<std::string>& test_camera_ids) {
    if (!ds.ring)
        throw GeometryUnknown("augment: dataset has no camera ring geometry");
    const RingGeometry& ring = *ds.ring;

    std::map<std::string, Camera> cams_by_id;
    for (const FrameRecord& r : ds.records)
        if (!r.synthetic_cam) cams_by_id.emplace(r.camera.id, r.camera);
    if (cams_by_id.empty()) throw GeometryUnknown("augment: no original cameras");

    std::vector<double> original_az;
    for (const auto& [id, cam] : cams_by_id)
        original_az.push_back(camera_azimuth_deg(cam, ring));
    std::vector<double> test_az;
    for (const std::string& id : test_camera_ids) {
        auto it = cams_by_id.find(id);
        if (it == cams_by_id.end())
            throw UnknownCamera("augment: unknown test camera " + id);
        test_az.push_back(camera_azimuth_deg(it->second, ring));
    }

    const Camera& proto = cams_by_id.begin()->second;
    std::vector<double> azimuths = synthetic_azimuths(original_az, test_az, cfg);
    std::vector<Camera> synth_cams;
    for (double a : azimuths) {
        double rad = a * 3.14159265358979323846 / 180.0;
        Vec3 center(ring.target.x() + ring.radius * std::sin(rad), ring.height,
                    ring.target.z() + ring.radius * std::cos(rad));
        std::ostringstream name;
        name << "synth_" << a;
        synth_cams.push_back(look_at_camera(center, ring.target, proto.focal,
                                            proto.principal, name.str()));
    }

    Dataset out;
    out.ring = ds.ring;
    out.records = ds.records;
    RngStream root(cfg.seed);

    std::set<std::tuple<int, std::string, int>> seen;
    for (const FrameRecord& r : ds.records) {
        if (r.synthetic_cam) continue;
        auto key = std::make_tuple(r.subject, r.action, r.frame);
        if (!seen.insert(key).second) continue;
        if (!r.pose3d_world)
            throw GeometryUnknown("augment: record lacks world-frame pose");
        const Pose3& world = *r.pose3d_world;
        for (std::size_t c = 0; c < synth_cams.size(); ++c) {
            FrameRecord s;
            s.subject = r.subject;
            s.action = r.action;
            s.frame = r.frame;
            s.camera = synth_cams[c];
            Pose2 det = project(synth_cams[c], world);
            if (cfg.noise_enabled && cfg.noise_sigma_px > 0) {
                std::uint64_t k = (static_cast<std::uint64_t>(r.subject) << 40) ^
                                  (static_cast<std::uint64_t>(r.frame) << 16) ^
                                  (static_cast<std::uint64_t>(c) << 52) ^
                                  std::hash<std::string>{}(r.action);
                RngStream noise_rng = root.substream(k);
                det = simulate_detector_noise(det, cfg.noise_sigma_px, noise_rng);
            }
            s.pose2d_det = det;
            s.pose3d_cam = to_camera_hip_centered(synth_cams[c], world);
            s.pose3d_world = world;
            s.synthetic_cam = true;
            out.records.push_back(std::move(s));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subsampling and protocol splits.

inline std::vector<FrameRecord> subsample_10fps(const std::vector<FrameRecord>& records,
                                                int source_fps) {
    if (source_fps < 10) throw BadFps("subsample: source fps must be >= 10");
    const int stride = source_fps / 10;
    std::vector<FrameRecord> out;
    for (const FrameRecord& r : records)
        if (r.frame % stride == 0) out.push_back(r);
    return out;
}

struct SplitConfig {
    std::vector<int> train_subjects;
    std::vector<int> test_subjects;
};

// Default analog of the H36M subject split: last quarter (at least one) of
// the subject ids goes to test.
inline SplitConfig default_split(const std::vector<FrameRecord>& records) {
    std::set<int> subjects;
    for (const FrameRecord& r : records) subjects.insert(r.subject);
    std::vector<int> all(subjects.begin(), subjects.end());
    if (all.size() < 2) throw EmptySplit("split: need at least two subjects");
    std::size_t n_test = std::max<std::size_t>(1, all.size() / 4);
    SplitConfig cfg;
    cfg.train_subjects.assign(all.begin(), all.end() - static_cast<long>(n_test));
    cfg.test_subjects.assign(all.end() - static_cast<long>(n_test), all.end());
    return cfg;
}

struct Split {
    std::vector<FrameRecord> train;
    std::vector<FrameRecord> test;
};

// Protocols 1 & 2 split by subject with all cameras on both sides; protocol 3
// additionally restricts the test side to the held-out camera and removes it
// from training.
inline Split split_protocol(const std::vector<FrameRecord>& records, int protocol,
                            const std::string& test_camera, const SplitConfig& cfg) {
    if (protocol < 1 || protocol > 3)
        throw ConfigInvalid("split: protocol must be 1, 2 or 3");
    auto in = [](const std::vector<int>& v, int s) {
        return std::find(v.begin(), v.end(), s) != v.end();
    };
    if (protocol == 3) {
        bool known = false;
        for (const FrameRecord& r : records)
            if (r.camera.id == test_camera) known = true;
        if (!known) throw UnknownCamera("split: test camera " + test_camera +
                                        " not present in dataset");
    }
    Split out;
    for (const FrameRecord& r : records) {
        if (in(cfg.train_subjects, r.subject)) {
            if (protocol != 3 || r.camera.id != test_camera) out.train.push_back(r);
        } else if (in(cfg.test_subjects, r.subject)) {
            if (protocol != 3) {
                out.test.push_back(r);
            } else if (r.camera.id == test_camera) {
                out.test.push_back(r);
            }
        }
    }
    if (out.train.empty()) throw EmptySplit("split: empty training set");
    if (out.test.empty()) throw EmptySplit("split: empty test set");
    return out;
}

// ---------------------------------------------------------------------------
// Pair sampling for siamese training.

struct PairBatch {
    Mat x1, x2;  // batch x 32, normalized
    Mat y1, y2;  // batch x 48, normalized
    std::vector<SiameseTarget> targets;
    std::vector<bool> same_pose;
};

// Index over a training split; a configurable fraction of each batch is the
// same frame instant seen from two different cameras, the rest is independent
// random records.
class PairSampler {
  public:
    PairSampler(const std::vector<FrameRecord>& records, const NormStats& stats,
                bool same_pose_pairs = true, double same_pose_fraction = 0.5)
        : records_(&records),
          stats_(&stats),
          same_pose_pairs_(same_pose_pairs),
          same_pose_fraction_(same_pose_fraction) {
        if (same_pose_fraction_ < 0.0 || same_pose_fraction_ > 1.0)
            throw ConfigInvalid("pair sampler: same_pose_fraction must be in [0, 1]");
        if (records.empty()) throw EmptySplit("pair sampler: no records");
        std::map<std::tuple<int, std::string, int>, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < records.size(); ++i) {
            const FrameRecord& r = records[i];
            groups[std::make_tuple(r.subject, r.action, r.frame)].push_back(i);
        }
        for (auto& [key, idx] : groups)
            if (idx.size() >= 2) multi_view_groups_.push_back(std::move(idx));
        if (same_pose_pairs_ && multi_view_groups_.empty())
            throw InsufficientViews(
                "pair sampler: no frame is visible from two or more cameras");
    }

    PairBatch sample(int batch_size, RngStream& rng) const {
        const std::vector<FrameRecord>& recs = *records_;
        PairBatch b;
        b.x1.resize(batch_size, 2 * kJoints);
        b.x2.resize(batch_size, 2 * kJoints);
        b.y1.resize(batch_size, 3 * kJoints);
        b.y2.resize(batch_size, 3 * kJoints);
        b.targets.resize(static_cast<std::size_t>(batch_size));
        b.same_pose.resize(static_cast<std::size_t>(batch_size));
        const int n_same =
            same_pose_pairs_
                ? static_cast<int>(same_pose_fraction_ * batch_size + 0.5)
                : 0;
        for (int i = 0; i < batch_size; ++i) {
            std::size_t ia, ib;
            if (i < n_same) {
                const auto& group = multi_view_groups_[static_cast<std::size_t>(
                    rng.below(multi_view_groups_.size()))];
                std::size_t a = static_cast<std::size_t>(rng.below(group.size()));
                std::size_t off = 1 + static_cast<std::size_t>(rng.below(group.size() - 1));
                ia = group[a];
                ib = group[(a + off) % group.size()];
            } else {
                ia = static_cast<std::size_t>(rng.below(recs.size()));
                ib = static_cast<std::size_t>(rng.below(recs.size()));
            }
            const FrameRecord& ra = recs[ia];
            const FrameRecord& rb = recs[ib];
            b.x1.row(i) = stats_->normalize2d(record_input(ra)).transpose();
            b.x2.row(i) = stats_->normalize2d(record_input(rb)).transpose();
            b.y1.row(i) = stats_->normalize3d(record_target(ra)).transpose();
            b.y2.row(i) = stats_->normalize3d(record_target(rb)).transpose();
            b.targets[static_cast<std::size_t>(i)] = build_siamese_target(
                ra.camera, ra.pose3d_cam, rb.camera, rb.pose3d_cam);
            b.same_pose[static_cast<std::size_t>(i)] = i < n_same;
        }
        return b;
    }

    std::size_t size() const { return records_->size(); }

  private:
    const std::vector<FrameRecord>* records_;
    const NormStats* stats_;
    bool same_pose_pairs_;
    double same_pose_fraction_;
    std::vector<std::vector<std::size_t>> multi_view_groups_;
};

}  // namespace eqlift
