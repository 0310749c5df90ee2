#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eqlift/commands.hpp"

namespace {

void handle_sigint(int) { eqlift::stop_requested().store(true); }

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::int64_t seed = -1;
};

void add_common(CLI::App* sub, CommonOpts& opts) {
    sub->add_option("--config", opts.config_path, "JSON config file");
    sub->add_option("--set", opts.overrides, "override, e.g. --set train.epochs=10");
    sub->add_option("--out", opts.out_dir, "output directory");
    sub->add_option("--seed", opts.seed, "training seed (shorthand for train.seed)");
}

eqlift::Json resolve_config(const CommonOpts& opts) {
    eqlift::Json cfg = eqlift::load_config(opts.config_path);
    for (const std::string& kv : opts.overrides) eqlift::apply_override(cfg, kv);
    if (!opts.out_dir.empty()) cfg["output"]["dir"] = opts.out_dir;
    if (opts.seed >= 0) cfg["train"]["seed"] = static_cast<std::uint64_t>(opts.seed);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, handle_sigint);

    CLI::App app{"2D-to-3D pose lifting with a rotation-equivariant embedding"};
    app.require_subcommand(1);

    CommonOpts gen_opts, train_opts, eval_opts, rot_opts, sweep_opts, abl_opts;
    std::string gen_out = "dataset.jsonl";
    std::string eval_ckpt, rot_ckpt;
    bool sweep_confirm = false, abl_confirm = false;

    CLI::App* gen = app.add_subcommand("generate-synth", "write a synthetic dataset");
    add_common(gen, gen_opts);
    gen->add_option("--output", gen_out, "output JSONL path");

    CLI::App* tr = app.add_subcommand("train", "train a lifting model");
    add_common(tr, train_opts);

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(ev, eval_opts);
    ev->add_option("--checkpoint", eval_ckpt, "EQLF checkpoint")->required();

    CLI::App* rot = app.add_subcommand("embed-rotate",
                                       "rotate embeddings and measure decode error");
    add_common(rot, rot_opts);
    rot->add_option("--checkpoint", rot_ckpt, "EQLF checkpoint")->required();

    CLI::App* sw = app.add_subcommand("sweep-aug",
                                      "camera-distance sweep (trains many models)");
    add_common(sw, sweep_opts);
    sw->add_flag("--confirm-long", sweep_confirm, "acknowledge the long runtime");

    CLI::App* ab = app.add_subcommand("ablate", "ablation table (trains many models)");
    add_common(ab, abl_opts);
    ab->add_flag("--confirm-long", abl_confirm, "acknowledge the long runtime");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            eqlift::cmd_generate_synth(resolve_config(gen_opts), gen_out);
        } else if (tr->parsed()) {
            eqlift::cmd_train(resolve_config(train_opts));
            if (eqlift::stop_requested().load()) {
                std::cerr << "interrupted; checkpoint flushed\n";
                return 130;
            }
        } else if (ev->parsed()) {
            eqlift::cmd_eval(resolve_config(eval_opts), eval_ckpt);
        } else if (rot->parsed()) {
            eqlift::cmd_embed_rotate(resolve_config(rot_opts), rot_ckpt);
        } else if (sw->parsed()) {
            if (!sweep_confirm) {
                std::cerr << "sweep-aug trains many models; pass --confirm-long\n";
                return 2;
            }
            eqlift::cmd_sweep_aug(resolve_config(sweep_opts));
            if (eqlift::stop_requested().load()) return 130;
        } else if (ab->parsed()) {
            if (!abl_confirm) {
                std::cerr << "ablate trains many models; pass --confirm-long\n";
                return 2;
            }
            eqlift::cmd_ablate(resolve_config(abl_opts));
            if (eqlift::stop_requested().load()) return 130;
        }
    } catch (const eqlift::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const eqlift::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const eqlift::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const eqlift::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
