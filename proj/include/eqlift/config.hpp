#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqlift/data.hpp"
#include "eqlift/errors.hpp"
#include "eqlift/trainer.hpp"

namespace eqlift {

using Json = nlohmann::json;

// Single JSON document with every key defaulted; unknown keys are rejected
// so typos cannot silently fall back to defaults.
inline Json default_config() {
    Json c;
    c["data"] = {
        {"dataset", ""},
        {"source_fps", 50},
        {"subsample_10fps", false},
    };
    SynthConfig synth;
    c["synth"] = {
        {"n_subjects", synth.n_subjects},
        {"n_actions", synth.n_actions},
        {"frames_per_action", synth.frames_per_action},
        {"bone_lengths", synth.bone_lengths},
        {"joint_angle_max_deg", synth.joint_angle_max_deg},
        {"root_yaw_max_deg", synth.root_yaw_max_deg},
        {"cam_radius_mm", synth.cam_radius_mm},
        {"cam_height_mm", synth.cam_height_mm},
        {"cam_target_height_mm", synth.cam_target_height_mm},
        {"n_cameras", synth.n_cameras},
        {"focal_px", synth.focal_px},
        {"principal_px", synth.principal_px},
        {"detector_noise_px", synth.detector_noise_px},
        {"seed", synth.seed},
    };
    AugmentationConfig aug;
    c["augmentation"] = {
        {"enabled", false},
        {"step_deg", aug.step_deg},
        {"drop_nearest", aug.drop_nearest},
        {"noise_sigma_px", aug.noise_sigma_px},
        {"noise_enabled", aug.noise_enabled},
        {"coincident_tol_deg", aug.coincident_tol_deg},
        {"seed", aug.seed},
    };
    ModelConfig model;
    c["model"] = {
        {"m", model.embedding.m},
        {"hidden", model.hidden},
        {"norm_epsilon", model.embedding.norm_epsilon},
        {"lrelu_slope", model.lrelu_slope},
    };
    TrainConfig train;
    c["train"] = {
        {"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"lr0", train.lr0},
        {"decay", train.decay},
        {"dropout", train.dropout},
        {"lambda1", train.lambda1},
        {"lambda2", train.lambda2},
        {"seed", train.seed},
        {"siamese_enabled", train.siamese_enabled},
        {"same_pose_fraction", train.same_pose_fraction},
        {"verbose", false},
    };
    c["eval"] = {
        {"protocol", 3},
        {"test_camera", "cam0"},
        {"with_scale", false},
        {"train_subjects", Json::array()},
        {"test_subjects", Json::array()},
        {"angles_deg", Json::array()},  // empty -> 0, +-15 ... +-180
        {"distances_deg", {7.5, 15.0, 30.0, 45.0, 60.0, 90.0}},
        {"sweep_seeds", {0, 1, 2}},
    };
    c["output"] = {
        {"dir", "out"},
    };
    return c;
}

namespace config_detail {

inline void check_unknown_keys(const Json& user, const Json& defaults,
                               const std::string& prefix) {
    for (auto it = user.begin(); it != user.end(); ++it) {
        std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!defaults.contains(it.key()))
            throw ConfigInvalid("config: unknown key " + path);
        if (it->is_object() && defaults[it.key()].is_object())
            check_unknown_keys(*it, defaults[it.key()], path);
    }
}

inline void merge(Json& base, const Json& user) {
    for (auto it = user.begin(); it != user.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object())
            merge(base[it.key()], *it);
        else
            base[it.key()] = *it;
    }
}

}  // namespace config_detail

// Loads a config file (empty path = pure defaults), fills defaults, and
// rejects unknown keys.
inline Json load_config(const std::string& path) {
    Json cfg = default_config();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigInvalid("config: cannot open " + path);
        Json user;
        try {
            in >> user;
        } catch (const Json::exception& e) {
            throw ConfigInvalid("config: " + path + ": " + e.what());
        }
        if (!user.is_object()) throw ConfigInvalid("config: root must be an object");
        config_detail::check_unknown_keys(user, cfg, "");
        config_detail::merge(cfg, user);
    }
    return cfg;
}

// Applies a `--set section.key=value` override; the value is parsed as JSON
// when possible, otherwise taken as a string.
inline void apply_override(Json& cfg, const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
        throw ConfigInvalid("--set expects key=value, got: " + kv);
    std::string key = kv.substr(0, eq);
    std::string raw = kv.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(raw);
    } catch (const Json::exception&) {
        value = raw;
    }
    Json* node = &cfg;
    const Json* defaults = &cfg;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigInvalid("--set: empty key");
    Json defaults_doc = default_config();
    const Json* dnode = &defaults_doc;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!dnode->contains(parts[i]))
            throw ConfigInvalid("config: unknown key " + key);
        dnode = &(*dnode)[parts[i]];
        if (i + 1 < parts.size()) {
            node = &(*node)[parts[i]];
        } else {
            (*node)[parts[i]] = value;
        }
    }
    (void)defaults;
}

// FNV-1a over the canonical (sorted-key) serialization.
inline std::uint64_t config_hash(const Json& cfg) {
    std::string dump = cfg.dump();
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : dump) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string config_hash_hex(const Json& cfg) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << config_hash(cfg);
    return ss.str();
}

// ---------------------------------------------------------------------------
// Typed views of the sections.

inline SynthConfig synth_config(const Json& cfg) {
    const Json& s = cfg.at("synth");
    SynthConfig out;
    out.n_subjects = s.at("n_subjects").get<int>();
    out.n_actions = s.at("n_actions").get<int>();
    out.frames_per_action = s.at("frames_per_action").get<int>();
    out.bone_lengths = s.at("bone_lengths").get<std::vector<double>>();
    out.joint_angle_max_deg = s.at("joint_angle_max_deg").get<double>();
    out.root_yaw_max_deg = s.at("root_yaw_max_deg").get<double>();
    out.cam_radius_mm = s.at("cam_radius_mm").get<double>();
    out.cam_height_mm = s.at("cam_height_mm").get<double>();
    out.cam_target_height_mm = s.at("cam_target_height_mm").get<double>();
    out.n_cameras = s.at("n_cameras").get<int>();
    out.focal_px = s.at("focal_px").get<double>();
    out.principal_px = s.at("principal_px").get<double>();
    out.detector_noise_px = s.at("detector_noise_px").get<double>();
    out.seed = s.at("seed").get<std::uint64_t>();
    return out;
}

inline AugmentationConfig augmentation_config(const Json& cfg) {
    const Json& a = cfg.at("augmentation");
    AugmentationConfig out;
    out.step_deg = a.at("step_deg").get<double>();
    out.drop_nearest = a.at("drop_nearest").get<int>();
    out.noise_sigma_px = a.at("noise_sigma_px").get<double>();
    out.noise_enabled = a.at("noise_enabled").get<bool>();
    out.coincident_tol_deg = a.at("coincident_tol_deg").get<double>();
    out.seed = a.at("seed").get<std::uint64_t>();
    return out;
}

inline TrainConfig train_config(const Json& cfg) {
    const Json& t = cfg.at("train");
    const Json& m = cfg.at("model");
    TrainConfig out;
    out.epochs = t.at("epochs").get<int>();
    out.batch_size = t.at("batch_size").get<int>();
    out.lr0 = t.at("lr0").get<double>();
    out.decay = t.at("decay").get<double>();
    out.dropout = t.at("dropout").get<double>();
    out.lambda1 = t.at("lambda1").get<double>();
    out.lambda2 = t.at("lambda2").get<double>();
    out.seed = t.at("seed").get<std::uint64_t>();
    out.siamese_enabled = t.at("siamese_enabled").get<bool>();
    out.same_pose_fraction = t.at("same_pose_fraction").get<double>();
    out.verbose = t.at("verbose").get<bool>();
    out.m = m.at("m").get<int>();
    out.hidden = m.at("hidden").get<int>();
    out.lrelu_slope = m.at("lrelu_slope").get<double>();
    return out;
}

inline ModelConfig model_config(const Json& cfg) {
    const Json& m = cfg.at("model");
    ModelConfig out;
    out.embedding.m = m.at("m").get<int>();
    out.embedding.norm_epsilon = m.at("norm_epsilon").get<double>();
    out.hidden = m.at("hidden").get<int>();
    out.lrelu_slope = m.at("lrelu_slope").get<double>();
    out.dropout = cfg.at("train").at("dropout").get<double>();
    return out;
}

inline SplitConfig split_config(const Json& cfg, const std::vector<FrameRecord>& records) {
    const Json& e = cfg.at("eval");
    SplitConfig out;
    out.train_subjects = e.at("train_subjects").get<std::vector<int>>();
    out.test_subjects = e.at("test_subjects").get<std::vector<int>>();
    if (out.train_subjects.empty() && out.test_subjects.empty())
        return default_split(records);
    if (out.train_subjects.empty() || out.test_subjects.empty())
        throw ConfigInvalid("config: set both train_subjects and test_subjects or neither");
    return out;
}

}  // namespace eqlift
