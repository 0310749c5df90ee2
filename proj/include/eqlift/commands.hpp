#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "eqlift/checkpoint.hpp"
#include "eqlift/config.hpp"
#include "eqlift/report.hpp"
#include "eqlift/trainer.hpp"

namespace eqlift {

namespace cmd_detail {

inline std::vector<double> default_rotation_angles() {
    std::vector<double> angles{0.0};
    for (int a = 15; a <= 180; a += 15) {
        angles.push_back(a);
        angles.push_back(-a);
    }
    std::sort(angles.begin(), angles.end());
    return angles;
}

inline std::string out_path(const Json& cfg, const std::string& name) {
    namespace fs = std::filesystem;
    fs::path dir(cfg.at("output").at("dir").get<std::string>());
    fs::create_directories(dir);
    return (dir / name).string();
}

// Dataset from the config: read from data.dataset when set, otherwise
// generate synthetically. Subsampling applies either way.
inline Dataset load_dataset(const Json& cfg) {
    Dataset ds;
    std::string path = cfg.at("data").at("dataset").get<std::string>();
    if (!path.empty())
        ds = read_dataset(path);
    else
        ds = generate_synthetic(synth_config(cfg));
    if (cfg.at("data").at("subsample_10fps").get<bool>())
        ds.records = subsample_10fps(ds.records, cfg.at("data").at("source_fps").get<int>());
    return ds;
}

// Augments (protocol 3 only, when enabled) and splits.
inline Split prepare_split(const Json& cfg, Dataset& ds) {
    const int protocol = cfg.at("eval").at("protocol").get<int>();
    const std::string test_camera = cfg.at("eval").at("test_camera").get<std::string>();
    if (cfg.at("augmentation").at("enabled").get<bool>() && protocol == 3)
        ds = augment_cameras(ds, augmentation_config(cfg), {test_camera});
    return split_protocol(ds.records, protocol, test_camera, split_config(cfg, ds.records));
}

inline LiftingModel load_model(const Json& cfg, const std::string& checkpoint_path,
                               NormStats& stats) {
    LiftingModel model(model_config(cfg));
    tensors_to_model(read_checkpoint(checkpoint_path), model, stats);
    return model;
}

}  // namespace cmd_detail

// generate-synth: write the synthetic dataset as JSONL.
inline void cmd_generate_synth(const Json& cfg, const std::string& out_file) {
    Dataset ds = generate_synthetic(synth_config(cfg));
    write_dataset(ds, out_file);
    std::cout << "wrote " << ds.records.size() << " records to " << out_file
              << " (config_hash=" << config_hash_hex(cfg) << ")\n";
}

// train: checkpoints (best + final), TrainLog CSV, loss-curve SVG.
inline TrainResult cmd_train(const Json& cfg) {
    Dataset ds = cmd_detail::load_dataset(cfg);
    Split split = cmd_detail::prepare_split(cfg, ds);
    TrainConfig tc = train_config(cfg);

    TrainResult res = train(tc, split.train, split.test);

    const std::string hash = config_hash_hex(cfg);
    CsvTable log;
    log.comments = {"config_hash=" + hash, "seed=" + std::to_string(tc.seed),
                    "best_epoch=" + std::to_string(res.best_epoch)};
    log.header = {"epoch", "l2_a", "l2_b", "l_s", "total", "test_mpjpe", "lr"};
    for (const EpochLog& e : res.log)
        log.rows.push_back({std::to_string(e.epoch), fmt_num(e.l2_a), fmt_num(e.l2_b),
                            fmt_num(e.l_s), fmt_num(e.total), fmt_num(e.test_mpjpe),
                            fmt_num(e.lr)});
    log.write(cmd_detail::out_path(cfg, "trainlog.csv"));

    std::vector<PlotSeries> series(2);
    series[0].name = "train total loss";
    series[1].name = "test MPJPE (mm)";
    for (const EpochLog& e : res.log) {
        series[0].points.emplace_back(e.epoch, e.total);
        series[1].points.emplace_back(e.epoch, e.test_mpjpe);
    }
    write_file_atomic(cmd_detail::out_path(cfg, "loss_curve.svg"),
                      svg_line_plot(series, "Training curves", "epoch", "value",
                                    "config_hash=" + hash));

    write_checkpoint(cmd_detail::out_path(cfg, "final.eqlf"),
                     model_to_tensors(res.final_model, res.stats, &res.state));
    write_checkpoint(cmd_detail::out_path(cfg, "best.eqlf"),
                     model_to_tensors(res.best_model, res.stats, &res.state));
    std::cout << "trained " << res.log.size() << " epochs; best test MPJPE "
              << res.best_test_mpjpe << " mm at epoch " << res.best_epoch
              << " (config_hash=" << hash << ")\n";
    return res;
}

// eval: EvalReport JSON plus a per-action text table.
inline EvalReport cmd_eval(const Json& cfg, const std::string& checkpoint_path) {
    Dataset ds = cmd_detail::load_dataset(cfg);
    NormStats stats;
    LiftingModel model = cmd_detail::load_model(cfg, checkpoint_path, stats);
    const int protocol = cfg.at("eval").at("protocol").get<int>();
    const std::string test_camera = cfg.at("eval").at("test_camera").get<std::string>();
    EvalReport rep = run_protocol(model, stats, ds.records, protocol, test_camera,
                                  split_config(cfg, ds.records),
                                  cfg.at("eval").at("with_scale").get<bool>());
    rep.seed = cfg.at("train").at("seed").get<std::uint64_t>();

    Json j;
    j["protocol"] = rep.protocol;
    j["average_mpjpe_mm"] = rep.average;
    j["n_frames"] = rep.n_frames;
    j["per_action"] = rep.per_action;
    {
        std::ostringstream fp;
        fp << std::hex << rep.model_fp;
        j["model_fingerprint"] = fp.str();
    }
    j["config_hash"] = config_hash_hex(cfg);
    j["seed"] = rep.seed;
    write_file_atomic(cmd_detail::out_path(cfg, "eval_report.json"), j.dump(2) + "\n");
    std::string table = eval_report_table(rep);
    write_file_atomic(cmd_detail::out_path(cfg, "eval_report.txt"), table);
    std::cout << table;
    return rep;
}

// embed-rotate: MPJPE of g(R f(P2D)) vs R P3D over a sweep of angles.
inline std::vector<EmbedRotationRow> cmd_embed_rotate(const Json& cfg,
                                                      const std::string& checkpoint_path) {
    Dataset ds = cmd_detail::load_dataset(cfg);
    NormStats stats;
    LiftingModel model = cmd_detail::load_model(cfg, checkpoint_path, stats);
    Split split = split_protocol(ds.records, 3,
                                 cfg.at("eval").at("test_camera").get<std::string>(),
                                 split_config(cfg, ds.records));
    std::vector<double> angles =
        cfg.at("eval").at("angles_deg").get<std::vector<double>>();
    if (angles.empty()) angles = cmd_detail::default_rotation_angles();

    auto rows = embedding_rotation_experiment(model, stats, split.test, angles);
    const std::string hash = config_hash_hex(cfg);
    CsvTable csv;
    csv.comments = {"config_hash=" + hash,
                    "seed=" + std::to_string(cfg.at("train").at("seed").get<std::uint64_t>())};
    csv.header = {"angle_deg", "mpjpe_mm", "median_mm"};
    PlotSeries series{"MPJPE (mm)", {}};
    for (const auto& r : rows) {
        csv.rows.push_back({fmt_num(r.angle_deg), fmt_num(r.mpjpe_mm), fmt_num(r.median_mm)});
        series.points.emplace_back(r.angle_deg, r.mpjpe_mm);
    }
    csv.write(cmd_detail::out_path(cfg, "embed_rotation.csv"));
    write_file_atomic(cmd_detail::out_path(cfg, "embed_rotation.svg"),
                      svg_line_plot({series}, "Embedding rotation", "angle (deg)",
                                    "MPJPE (mm)", "config_hash=" + hash));
    return rows;
}

// Training closure used by the sweep and available to tests.
inline TrainEvalFn make_train_eval(const TrainConfig& base_cfg) {
    return [base_cfg](const std::vector<FrameRecord>& train_records,
                      const std::vector<FrameRecord>& test_records, bool siamese,
                      std::uint64_t seed) {
        TrainConfig cfg = base_cfg;
        cfg.siamese_enabled = siamese;
        if (!siamese) cfg.lambda2 = 0.0;
        cfg.seed = seed;
        TrainResult res = train(cfg, train_records, test_records);
        return res.best_test_mpjpe;
    };
}

// sweep-aug: test MPJPE as a function of nearest-training-camera distance.
inline std::vector<SweepRow> cmd_sweep_aug(const Json& cfg) {
    Dataset ds = cmd_detail::load_dataset(cfg);
    const std::string test_camera = cfg.at("eval").at("test_camera").get<std::string>();
    std::vector<double> distances =
        cfg.at("eval").at("distances_deg").get<std::vector<double>>();
    std::vector<std::uint64_t> seeds =
        cfg.at("eval").at("sweep_seeds").get<std::vector<std::uint64_t>>();

    auto rows = aug_distance_sweep(ds, augmentation_config(cfg),
                                   split_config(cfg, ds.records), test_camera, distances,
                                   seeds, make_train_eval(train_config(cfg)));

    const std::string hash = config_hash_hex(cfg);
    CsvTable csv;
    csv.comments = {"config_hash=" + hash};
    csv.header = {"distance_deg", "variant", "seed", "mpjpe_mm"};
    std::map<std::string, std::map<double, std::vector<double>>> grouped;
    for (const SweepRow& r : rows) {
        csv.rows.push_back({fmt_num(r.distance_deg), r.variant, std::to_string(r.seed),
                            fmt_num(r.mpjpe_mm)});
        grouped[r.variant][r.distance_deg].push_back(r.mpjpe_mm);
    }
    csv.write(cmd_detail::out_path(cfg, "aug_sweep.csv"));

    std::vector<PlotSeries> series;
    for (auto& [variant, by_dist] : grouped) {
        PlotSeries s{variant + " (median)", {}};
        for (auto& [d, vals] : by_dist) {
            std::sort(vals.begin(), vals.end());
            s.points.emplace_back(d, vals[vals.size() / 2]);
        }
        series.push_back(std::move(s));
    }
    write_file_atomic(cmd_detail::out_path(cfg, "aug_sweep.svg"),
                      svg_line_plot(series, "Synthetic camera distance sweep",
                                    "closest training camera distance (deg)",
                                    "test MPJPE (mm)", "config_hash=" + hash));
    return rows;
}

// ablate: ablation report with the published full-scale reference column.
inline std::vector<AblationRow> cmd_ablate(const Json& cfg) {
    AblationSetup setup;
    setup.base = cmd_detail::load_dataset(cfg);
    setup.aug = augmentation_config(cfg);
    setup.split = split_config(cfg, setup.base.records);
    setup.test_camera = cfg.at("eval").at("test_camera").get<std::string>();
    setup.train_cfg = train_config(cfg);
    setup.seeds = cfg.at("eval").at("sweep_seeds").get<std::vector<std::uint64_t>>();

    auto rows = ablation_suite(setup);
    const std::string hash = config_hash_hex(cfg);
    CsvTable csv;
    csv.comments = {"config_hash=" + hash};
    csv.header = {"variant", "seed", "mpjpe_mm", "reference_mm"};
    for (const AblationRow& r : rows)
        csv.rows.push_back({r.variant, std::to_string(r.seed), fmt_num(r.mpjpe_mm),
                            fmt_num(r.reference_mm)});
    csv.write(cmd_detail::out_path(cfg, "ablation.csv"));

    std::map<std::string, std::pair<std::vector<double>, double>> grouped;
    for (const AblationRow& r : rows) {
        grouped[r.variant].first.push_back(r.mpjpe_mm);
        grouped[r.variant].second = r.reference_mm;
    }
    std::ostringstream table;
    table << "variant            median_mpjpe_mm  reference_mm\n";
    for (auto& [name, entry] : grouped) {
        std::sort(entry.first.begin(), entry.first.end());
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-18s %15.2f %13.1f\n", name.c_str(),
                      entry.first[entry.first.size() / 2], entry.second);
        table << buf;
    }
    write_file_atomic(cmd_detail::out_path(cfg, "ablation.txt"), table.str());
    std::cout << table.str();
    return rows;
}

}  // namespace eqlift
