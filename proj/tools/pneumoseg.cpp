#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pneumoseg/checkpoint.hpp"
#include "pneumoseg/dataset.hpp"
#include "pneumoseg/errors.hpp"
#include "pneumoseg/gradcheck.hpp"
#include "pneumoseg/inference.hpp"
#include "pneumoseg/synthetic.hpp"
#include "pneumoseg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pneumoseg;

namespace {

// Overrides an experiment from a JSON config: top-level scalars plus an
// optional per-stage array of partial objects. Unknown keys are errors so
// typos cannot silently fall back to defaults.
void apply_config_file(ExperimentConfig& exp, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");

    for (auto& [key, value] : j.items()) {
        try {
            if (key == "preset") {
                auto name = value.get<std::string>();
                const auto seed = exp.seed;
                exp = experiment_preset(name);
                exp.seed = seed;
            } else if (key == "seed") {
                exp.seed = value.get<std::uint64_t>();
            } else if (key == "train_fraction") {
                exp.train_fraction = value.get<double>();
            } else if (key == "binarization_threshold") {
                exp.binarization_threshold = value.get<double>();
            } else if (key == "removal_threshold") {
                exp.removal_threshold = value.get<std::int64_t>();
            } else if (key == "augment") {
                exp.augment = AugmentParams::ablation(value.get<std::string>());
            } else if (key == "width_multiplier") {
                exp.model.width_multiplier = value.get<double>();
            } else if (key == "single_stage") {
                if (value.get<bool>() && exp.stages.size() > 1) exp.stages.resize(1);
            } else if (key == "desk_scale") {
                if (value.get<bool>()) apply_desk_scale(exp);
            } else if (key == "stages") {
                if (!value.is_array() || value.size() > exp.stages.size()) {
                    throw ConfigError("config: stages must be an array of at most " +
                                      std::to_string(exp.stages.size()) + " objects");
                }
                for (std::size_t i = 0; i < value.size(); ++i) {
                    auto& sj = value[i];
                    auto& s = exp.stages[i];
                    for (auto& [sk, sv] : sj.items()) {
                        if (sk == "resolution") s.resolution = sv.get<int>();
                        else if (sk == "batch_size") s.batch_size = sv.get<int>();
                        else if (sk == "epochs") s.epochs = sv.get<int>();
                        else if (sk == "use_swa") s.use_swa = sv.get<bool>();
                        else if (sk == "swa_last_epochs") s.swa_last_epochs = sv.get<int>();
                        else if (sk == "lr_max") s.lr_max = sv.get<double>();
                        else if (sk == "lr_min") s.lr_min = sv.get<double>();
                        else if (sk == "plateau_factor") s.plateau_factor = sv.get<double>();
                        else if (sk == "plateau_patience") s.plateau_patience = sv.get<int>();
                        else if (sk == "lr_policy") {
                            const auto p = sv.get<std::string>();
                            if (p == "cosine") s.lr_policy = LrPolicy::kCosine;
                            else if (p == "plateau") s.lr_policy = LrPolicy::kPlateau;
                            else throw ConfigError("config: lr_policy must be cosine or plateau");
                        } else {
                            throw ConfigError("config: unknown stage key '" + sk + "'");
                        }
                    }
                }
            } else {
                throw ConfigError("config: unknown key '" + key + "'");
            }
        } catch (const json::exception& e) {
            throw ConfigError("config: bad value for '" + key + "': " + e.what());
        }
    }
}

BinaryMask mask_from_pgm(const std::string& path) {
    const DicomLite d = load_pgm(path);
    BinaryMask m(d.rows, d.columns);
    for (std::size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = d.pixel_data[i] ? 1 : 0;
    return m;
}

struct PredictArgs {
    std::string data;
    std::string checkpoint;
    std::string out;
    std::string preset = "exp2";
    bool desk_scale = false;
    double b_th = 0.75;
    std::int64_t r_th = 2048;
    bool no_tta = false;
    std::string removal = "whole";
    int connectivity = 4;
    int resolution = 0;   // 0 = from preset
    int output_size = 0;  // 0 = 1024, or 64 under --desk-scale
    int batch_size = 4;
    std::uint64_t seed = 42;
};

void add_predict_options(CLI::App* cmd, PredictArgs& a, bool needs_out) {
    cmd->add_option("--data", a.data, "dataset directory")->required();
    cmd->add_option("--checkpoint", a.checkpoint, "trained model checkpoint")->required();
    if (needs_out) cmd->add_option("--out", a.out, "submission CSV path")->required();
    cmd->add_option("--preset", a.preset, "architecture preset the checkpoint was trained with")
        ->check(CLI::IsMember({"exp1", "exp2", "exp3", "exp4", "exp5"}));
    cmd->add_flag("--desk-scale", a.desk_scale, "quarter-width model at desk-scale resolutions");
    cmd->add_option("--b-th", a.b_th, "binarization threshold (default 0.75)");
    cmd->add_option("--r-th", a.r_th, "minimum mask area in pixels (default 2048; 8 desk-scale)");
    cmd->add_flag("--no-tta", a.no_tta, "disable horizontal-flip test-time augmentation");
    cmd->add_option("--removal", a.removal, "small-prediction removal: whole or components")
        ->check(CLI::IsMember({"whole", "components"}));
    cmd->add_option("--connectivity", a.connectivity, "component connectivity (4 or 8)")
        ->check(CLI::IsMember({4, 8}));
    cmd->add_option("--resolution", a.resolution, "model input resolution override");
    cmd->add_option("--output-size", a.output_size, "output mask resolution (default 1024)");
    cmd->add_option("--batch-size", a.batch_size, "inference batch size");
}

// Architecture comes from the preset; thresholds come from the flags.
std::pair<ModelConfig, PredictConfig> resolve_predict(const PredictArgs& a, CLI::App* cmd) {
    ExperimentConfig exp = experiment_preset(a.preset);
    if (a.desk_scale) apply_desk_scale(exp);
    PredictConfig p = inference_config(exp);
    p.binarization_threshold = a.b_th;
    p.removal_threshold = a.r_th;
    if (a.desk_scale && cmd->count("--r-th") == 0) p.removal_threshold = 8;
    p.tta = !a.no_tta;
    p.removal = a.removal == "whole" ? Removal::kWholeMask : Removal::kConnectedComponents;
    p.connectivity = a.connectivity;
    p.batch_size = a.batch_size;
    if (a.resolution > 0) p.resolution = a.resolution;
    p.output_size = a.desk_scale ? 64 : 1024;
    if (a.output_size > 0) p.output_size = a.output_size;
    return {exp.model, p};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"2-stage pneumothorax segmentation toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker thread cap (default: all cores)");

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "dataset composition table");
    std::string stats_data;
    bool stats_csv = false;
    stats_cmd->add_option("--data", stats_data, "dataset directory")->required();
    stats_cmd->add_flag("--csv", stats_csv, "machine-readable output");

    // rle-encode / rle-decode
    auto* enc_cmd = app.add_subcommand("rle-encode", "encode a PGM mask (non-zero = on)");
    std::string enc_mask, enc_id = "mask", enc_order = "column";
    enc_cmd->add_option("--mask", enc_mask, "binary mask as PGM")->required();
    enc_cmd->add_option("--image-id", enc_id, "id for the CSV row");
    enc_cmd->add_option("--order", enc_order, "pixel traversal order")
        ->check(CLI::IsMember({"column", "row"}));

    auto* dec_cmd = app.add_subcommand("rle-decode", "decode a payload to a PGM mask");
    std::string dec_payload, dec_out, dec_order = "column";
    int dec_h = 0, dec_w = 0;
    dec_cmd->add_option("--payload", dec_payload, "\"offset length ...\" or -1")->required();
    dec_cmd->add_option("--height", dec_h, "mask height")->required();
    dec_cmd->add_option("--width", dec_w, "mask width")->required();
    dec_cmd->add_option("--out", dec_out, "output PGM path (omit to only report area)");
    dec_cmd->add_option("--order", dec_order, "pixel traversal order")
        ->check(CLI::IsMember({"column", "row"}));

    // train
    auto* train_cmd = app.add_subcommand("train", "train an experiment preset");
    std::string train_data, train_out, train_preset = "exp2", train_augment, train_config;
    std::uint64_t train_seed = 42;
    bool train_desk = false, train_single = false, train_quiet = false;
    train_cmd->add_option("--data", train_data, "dataset directory")->required();
    train_cmd->add_option("--out", train_out, "output directory for checkpoints and metrics")
        ->required();
    train_cmd->add_option("--preset", train_preset, "exp1..exp5")
        ->check(CLI::IsMember({"exp1", "exp2", "exp3", "exp4", "exp5"}));
    train_cmd->add_option("--config", train_config, "JSON overrides applied on top of the preset");
    train_cmd->add_option("--seed", train_seed, "global seed (default 42)");
    train_cmd->add_option("--augment", train_augment,
                          "augmentation preset: none, a1, a2, a1+a2, a3, a4, all")
        ->check(CLI::IsMember({"none", "a1", "a2", "a1+a2", "a3", "a4", "all"}));
    train_cmd->add_flag("--single-stage", train_single, "drop every stage after the first");
    train_cmd->add_flag("--desk-scale", train_desk, "quarter-width model, tiny resolutions/epochs");
    train_cmd->add_flag("--quiet", train_quiet, "suppress per-epoch progress");

    // predict / evaluate
    auto* predict_cmd = app.add_subcommand("predict", "write a submission CSV for a directory");
    PredictArgs pa;
    add_predict_options(predict_cmd, pa, /*needs_out=*/true);
    bool predict_quiet = false;
    predict_cmd->add_flag("--quiet", predict_quiet, "suppress per-image latency lines");

    auto* eval_cmd = app.add_subcommand("evaluate", "mean DSC/IoU against the annotations");
    PredictArgs ea;
    add_predict_options(eval_cmd, ea, /*needs_out=*/false);

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every backward rule");

    // fixtures
    auto* fix_cmd = app.add_subcommand("fixtures", "generate a synthetic dataset");
    SyntheticSpec spec;
    std::string fix_out;
    fix_cmd->add_option("--out", fix_out, "output directory")->required();
    fix_cmd->add_option("--count", spec.count, "number of images (default 200)");
    fix_cmd->add_option("--size", spec.size, "image side in pixels (default 64)");
    fix_cmd->add_option("--seed", spec.seed, "generator seed (default 1234)");
    fix_cmd->add_option("--positive-fraction", spec.positive_fraction,
                        "fraction with a target region (default 0.5)");
    fix_cmd->add_flag("--pgm", spec.as_pgm, "write PGM files instead of DICOM");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (threads > 0) {
        setenv("PNEUMOSEG_THREADS", std::to_string(threads).c_str(), 1);
    }

    try {
        if (stats_cmd->parsed()) {
            const Dataset ds = load_dataset(stats_data);
            const StatsReport report = dataset_stats(collect_stats(ds));
            std::cout << (stats_csv ? render_stats_csv(report) : render_stats_table(report));
        } else if (enc_cmd->parsed()) {
            const BinaryMask mask = mask_from_pgm(enc_mask);
            const PixelOrder order =
                enc_order == "column" ? PixelOrder::kColumnMajor : PixelOrder::kRowMajor;
            std::cout << format_rle_payload(rle_encode(mask, enc_id, order)) << "\n";
        } else if (dec_cmd->parsed()) {
            const PixelOrder order =
                dec_order == "column" ? PixelOrder::kColumnMajor : PixelOrder::kRowMajor;
            const BinaryMask mask =
                rle_decode(parse_rle_payload("cli", dec_payload), dec_h, dec_w, order);
            std::cout << "pixels set: " << mask.popcount() << "\n";
            if (!dec_out.empty()) {
                std::vector<std::uint8_t> bytes(mask.pixels.size());
                for (std::size_t i = 0; i < bytes.size(); ++i) {
                    bytes[i] = mask.pixels[i] ? 255 : 0;
                }
                save_pgm(bytes, mask.height, mask.width, dec_out);
            }
        } else if (train_cmd->parsed()) {
            ExperimentConfig exp = experiment_preset(train_preset);
            if (train_single && exp.stages.size() > 1) exp.stages.resize(1);
            if (train_desk) apply_desk_scale(exp);
            // Config runs after the profile flags so its values always win.
            if (!train_config.empty()) apply_config_file(exp, train_config);
            if (train_cmd->count("--seed")) exp.seed = train_seed;
            if (!train_augment.empty()) exp.augment = AugmentParams::ablation(train_augment);

            const Dataset ds = load_dataset(train_data);
            const TrainResult result =
                run_experiment(exp, ds, train_out, train_quiet ? nullptr : &std::cout);
            std::cout << "final checkpoint: " << result.final_checkpoint << "\n"
                      << "metrics: " << result.metrics_csv << "\n";
        } else if (predict_cmd->parsed()) {
            auto [model_cfg, pred_cfg] = resolve_predict(pa, predict_cmd);
            ResNet34UNet<float> model(model_cfg, pa.seed);
            load_checkpoint_into(pa.checkpoint, model);
            const Dataset ds = load_dataset(pa.data);
            predict_dataset(model, ds, pred_cfg, pa.out, predict_quiet ? nullptr : &std::cout);
            std::cout << "submission: " << pa.out << "\n";
        } else if (eval_cmd->parsed()) {
            auto [model_cfg, pred_cfg] = resolve_predict(ea, eval_cmd);
            ResNet34UNet<float> model(model_cfg, ea.seed);
            load_checkpoint_into(ea.checkpoint, model);
            const Dataset ds = load_dataset(ea.data);
            std::vector<int> all(ds.entries.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
            const EvalResult r = evaluate_dataset(model, ds, all, pred_cfg);
            std::printf("mean DSC %.4f  mean IoU %.4f  (%d images)\n", r.mean_dsc, r.mean_iou,
                        r.images);
        } else if (grad_cmd->parsed()) {
            const auto results = run_gradcheck(&std::cout);
            if (!all_passed(results)) {
                std::cerr << "gradcheck failed\n";
                return 1;
            }
        } else if (fix_cmd->parsed()) {
            generate_synthetic_dataset(spec, fix_out);
            std::cout << "wrote " << spec.count << " images to " << fix_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
