#include "pneumoseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>

#include "pneumoseg/checkpoint.hpp"
#include "pneumoseg/errors.hpp"
#include "pneumoseg/losses.hpp"
#include "pneumoseg/optim.hpp"
#include "pneumoseg/rng.hpp"

namespace fs = std::filesystem;

namespace pneumoseg {

void ExperimentConfig::validate() const {
    model.validate();
    if (stages.empty()) throw ConfigError("experiment: at least one stage required");
    for (const auto& s : stages) {
        if (s.resolution < 32 || s.resolution % 32 != 0) {
            throw ConfigError("experiment: stage resolution must be a positive multiple of 32");
        }
        if (s.batch_size < 1) throw ConfigError("experiment: batch size must be positive");
        if (s.epochs < 1) throw ConfigError("experiment: epochs must be positive");
        if (s.use_swa && s.swa_last_epochs < 1) {
            throw ConfigError("experiment: swa_last_epochs must be positive");
        }
        if (s.lr_policy == LrPolicy::kCosine && s.epochs < 2) {
            throw ConfigError("experiment: cosine schedule needs at least 2 epochs");
        }
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("experiment: train fraction must be in (0, 1)");
    }
    if (!(binarization_threshold > 0.0 && binarization_threshold < 1.0)) {
        throw ConfigError("experiment: binarization threshold must be in (0, 1)");
    }
}

ExperimentConfig experiment_preset(const std::string& name) {
    ExperimentConfig c;
    c.name = name;
    c.augment = AugmentParams::ablation("all");
    if (name == "exp1") {
        c.model.in_channels = 1;
        c.model.include_channel_adapter = true;
        c.train_fraction = 0.8;
        c.binarization_threshold = 0.5;
        StageConfig s;
        s.resolution = 256;
        s.batch_size = 40;
        s.epochs = 50;
        s.lr_policy = LrPolicy::kPlateau;
        s.use_swa = false;
        c.stages = {s};
        return c;
    }

    c.model.in_channels = 3;
    c.train_fraction = 0.9;
    StageConfig s1;
    s1.resolution = 256;
    s1.batch_size = 40;
    s1.epochs = 35;
    s1.use_swa = true;
    s1.swa_last_epochs = 5;
    StageConfig s2;
    s2.resolution = 512;
    s2.batch_size = 14;
    s2.epochs = 10;
    s2.use_swa = true;
    s2.swa_last_epochs = 3;

    if (name == "exp2") {
        c.binarization_threshold = 0.55;
        c.stages = {s1};
    } else if (name == "exp3") {
        c.binarization_threshold = 0.55;
        c.stages = {s1, s2};
    } else if (name == "exp4") {
        c.binarization_threshold = 0.75;
        s1.epochs = 60;
        s2.epochs = 29;
        c.stages = {s1, s2};
    } else if (name == "exp5") {
        c.binarization_threshold = 0.75;
        s1.batch_size = 64;
        s1.epochs = 100;
        s2.batch_size = 16;
        s2.epochs = 70;
        c.stages = {s1, s2};
    } else {
        throw ConfigError("unknown experiment preset '" + name + "' (expected exp1..exp5)");
    }
    return c;
}

void apply_desk_scale(ExperimentConfig& config) {
    config.model.width_multiplier = 0.25;
    // Area shrinks 1024^2 -> 64^2, so the pixel-count threshold shrinks with it.
    config.removal_threshold = 8;
    // Small batches and a hotter peak rate converge much faster at this
    // scale. The second stage is a warm refinement at double resolution;
    // its batch halves so both stages fit the same activation memory,
    // matching the full-scale batch drop from 40 to 14.
    const int resolutions[2] = {64, 128};
    const int batches[2] = {4, 2};
    const int epochs[2] = {10, 4};
    const double lr_max[2] = {3e-3, 1.5e-3};
    for (std::size_t i = 0; i < config.stages.size() && i < 2; ++i) {
        auto& s = config.stages[i];
        s.resolution = resolutions[i];
        s.batch_size = batches[i];
        s.epochs = epochs[i];
        s.lr_max = lr_max[i];
        if (s.use_swa) s.swa_last_epochs = 2;
    }
}

PredictConfig inference_config(const ExperimentConfig& config) {
    PredictConfig p;
    p.resolution = config.stages.back().resolution;
    p.channels = config.model.in_channels;
    p.binarization_threshold = config.binarization_threshold;
    p.removal_threshold = config.removal_threshold;
    p.tta = true;
    return p;
}

std::string format_metrics_csv(const std::vector<EpochStats>& history) {
    std::string out = "epoch,stage,lr,train_loss,val_loss,val_iou\n";
    char line[192];
    for (const auto& e : history) {
        std::snprintf(line, sizeof(line), "%d,%d,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.stage, e.lr,
                      e.train_loss, e.val_loss, e.val_iou);
        out += line;
    }
    return out;
}

namespace {

// Stage-resolution view over selected dataset entries, optionally cached.
class SampleSource {
public:
    SampleSource(const Dataset& dataset, std::vector<int> indices, int resolution, int channels,
                 bool preload)
        : dataset_(&dataset),
          indices_(std::move(indices)),
          resolution_(resolution),
          channels_(channels) {
        if (preload) {
            cache_.reserve(indices_.size());
            for (int idx : indices_) {
                cache_.push_back(
                    load_sample(dataset_->entries[static_cast<std::size_t>(idx)], resolution_,
                                channels_));
            }
        }
    }

    std::size_t size() const { return indices_.size(); }
    int dataset_index(std::size_t i) const { return indices_[i]; }

    Sample get(std::size_t i) const {
        if (!cache_.empty()) return cache_[i];
        return load_sample(dataset_->entries[static_cast<std::size_t>(indices_[i])], resolution_,
                           channels_);
    }

private:
    const Dataset* dataset_;
    std::vector<int> indices_;
    int resolution_;
    int channels_;
    std::vector<Sample> cache_;
};

struct ValScore {
    double loss = 0.0;
    double iou = 0.0;
};

ValScore validate_epoch(ResNet34UNet<float>& model, const SampleSource& val, int batch_size) {
    ValScore score;
    double loss_sum = 0.0;
    int batches = 0;
    double iou_sum = 0.0;
    std::size_t i = 0;
    while (i < val.size()) {
        std::vector<Sample> items;
        while (i < val.size() && static_cast<int>(items.size()) < batch_size) {
            items.push_back(val.get(i++));
        }
        const Tensor<float> x = stack_images(items);
        const Tensor<float> t = stack_masks(items);
        Tensor<float> y = model.forward(nullptr, x, Mode::kEval);
        loss_sum += bce_dice_loss<float>(nullptr, y, t).item();
        ++batches;

        const int h = y.dim(2);
        const int w = y.dim(3);
        for (std::size_t k = 0; k < items.size(); ++k) {
            // Monitoring metric: IoU at a fixed 0.5 cut, independent of the
            // submission-time binarization threshold.
            const BinaryMask pred =
                binarize_plane(y.data() + k * static_cast<std::size_t>(h) * w, h, w, 0.5);
            iou_sum += mask_iou(pred, items[k].mask);
        }
    }
    score.loss = loss_sum / std::max(1, batches);
    score.iou = iou_sum / std::max<std::size_t>(1, val.size());
    return score;
}

// Cumulative-average pass that rebuilds BatchNorm running statistics for the
// current (averaged) weights.
void reestimate_bn(ResNet34UNet<float>& model, const SampleSource& train, int batch_size) {
    auto bns = model.batchnorm_modules();
    for (auto* bn : bns) bn->reset_running_stats();
    int batch_index = 0;
    std::size_t i = 0;
    while (i < train.size()) {
        std::vector<Sample> items;
        while (i < train.size() && static_cast<int>(items.size()) < batch_size) {
            items.push_back(train.get(i++));
        }
        ++batch_index;
        for (auto* bn : bns) bn->momentum = 1.0f / static_cast<float>(batch_index);
        model.forward(nullptr, stack_images(items), Mode::kTrain);
    }
    for (auto* bn : bns) bn->momentum = 0.1f;
}

std::vector<NamedTensor<float>> snapshot(ResNet34UNet<float>& model) {
    std::vector<NamedTensor<float>> copy;
    for (auto& nt : model.named_tensors()) {
        copy.push_back({nt.name, nt.tensor.clone(), nt.is_buffer});
    }
    return copy;
}

void train_stage(ResNet34UNet<float>& model, const ExperimentConfig& exp, const StageConfig& stage,
                 int stage_number, int epoch_offset, const SampleSource& train,
                 const SampleSource& val, const std::string& out_dir,
                 std::vector<EpochStats>& history, std::ostream* log) {
    std::vector<Tensor<float>> params = model.parameters();
    Adam<float> opt(params, {static_cast<float>(stage.lr_max)});
    PlateauScheduler plateau(stage.plateau_factor, stage.plateau_patience);
    SwaAccumulator<float> swa;
    AugmentPipeline augment(exp.augment, exp.seed ^ 0xA46AD1E5ull);

    const std::string best_path =
        (fs::path(out_dir) / (exp.name + "_stage" + std::to_string(stage_number) + "_best.ckpt"))
            .string();
    double best_val = std::numeric_limits<double>::infinity();
    Tape<float> tape;

    for (int epoch = 0; epoch < stage.epochs; ++epoch) {
        const int global_epoch = epoch_offset + epoch;
        const double lr = stage.lr_policy == LrPolicy::kCosine
                              ? cosine_lr(epoch, stage.epochs, stage.lr_max, stage.lr_min)
                              : stage.lr_max * plateau.scale();
        opt.set_lr(static_cast<float>(lr));

        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle = Rng::stream(exp.seed, 0x73687566, static_cast<std::uint64_t>(global_epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle.below(i)]);
        }

        double loss_sum = 0.0;
        int batches = 0;
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            std::vector<Sample> items;
            while (cursor < order.size() && static_cast<int>(items.size()) < stage.batch_size) {
                const std::size_t i = order[cursor++];
                Sample s = train.get(i);
                items.push_back(augment.apply(s, global_epoch, train.dataset_index(i)));
            }
            const Tensor<float> x = stack_images(items);
            const Tensor<float> t = stack_masks(items);

            Tensor<float> y = model.forward(&tape, x, Mode::kTrain);
            Tensor<float> loss = bce_dice_loss(&tape, y, t);
            const double loss_value = loss.item();
            if (!std::isfinite(loss_value)) {
                throw DivergenceError("training diverged: non-finite loss in stage " +
                                      std::to_string(stage_number) + " epoch " +
                                      std::to_string(epoch + 1));
            }
            opt.zero_grad();
            tape.backward(loss);
            tape.clear();
            opt.step();
            loss_sum += loss_value;
            ++batches;
        }

        const ValScore score = validate_epoch(model, val, stage.batch_size);
        if (stage.lr_policy == LrPolicy::kPlateau) plateau.observe(score.loss);
        if (stage.use_swa && epoch >= stage.epochs - stage.swa_last_epochs) {
            swa.accumulate(params);
        }
        if (score.loss < best_val) {
            best_val = score.loss;
            save_checkpoint(best_path, snapshot(model));
        }

        EpochStats row;
        row.stage = stage_number;
        row.epoch = epoch + 1;
        row.lr = lr;
        row.train_loss = loss_sum / std::max(1, batches);
        row.val_loss = score.loss;
        row.val_iou = score.iou;
        history.push_back(row);
        if (log) {
            char line[192];
            std::snprintf(line, sizeof(line),
                          "stage %d epoch %d/%d  lr %.3g  train %.4f  val %.4f  iou %.4f\n",
                          stage_number, epoch + 1, stage.epochs, lr, row.train_loss, row.val_loss,
                          row.val_iou);
            *log << line << std::flush;
        }
    }

    // Stage result: the SWA average with refreshed BN statistics, or the
    // best-validation weights.
    if (stage.use_swa && swa.count() > 0) {
        swa.install(params);
        reestimate_bn(model, train, stage.batch_size);
    } else {
        load_checkpoint_into(best_path, model);
    }
    const std::string stage_path =
        (fs::path(out_dir) / (exp.name + "_stage" + std::to_string(stage_number) + ".ckpt"))
            .string();
    save_checkpoint(stage_path, snapshot(model));
}

}  // namespace

TrainResult run_experiment(const ExperimentConfig& config, const Dataset& dataset,
                           const std::string& out_dir, std::ostream* log) {
    config.validate();
    fs::create_directories(out_dir);

    bool any_positive = false;
    for (const auto& e : dataset.entries) any_positive |= e.positive();
    if (!any_positive) {
        throw ConfigError("experiment: dataset has no positive annotations to learn from");
    }

    const auto [train_idx, val_idx] = stratified_split(dataset, config.train_fraction, config.seed);
    const bool preload = config.preload_images && dataset.entries.size() <= 2000;

    ResNet34UNet<float> model(config.model, config.seed);
    if (log) {
        *log << config.name << ": " << model.parameter_count() << " parameters, "
             << train_idx.size() << " train / " << val_idx.size() << " val images\n";
    }

    TrainResult result;
    int epoch_offset = 0;
    for (std::size_t k = 0; k < config.stages.size(); ++k) {
        const StageConfig& stage = config.stages[k];
        SampleSource train(dataset, train_idx, stage.resolution, config.model.in_channels, preload);
        SampleSource val(dataset, val_idx, stage.resolution, config.model.in_channels, preload);
        train_stage(model, config, stage, static_cast<int>(k) + 1, epoch_offset, train, val,
                    out_dir, result.history, log);
        epoch_offset += stage.epochs;
    }

    result.final_checkpoint = (fs::path(out_dir) / (config.name + "_final.ckpt")).string();
    save_checkpoint(result.final_checkpoint, snapshot(model));

    result.metrics_csv = (fs::path(out_dir) / (config.name + "_metrics.csv")).string();
    {
        std::string text = format_metrics_csv(result.history);
        std::ofstream f(result.metrics_csv, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + result.metrics_csv);
        f.write(text.data(), static_cast<std::streamsize>(text.size()));
    }
    return result;
}

}  // namespace pneumoseg
