#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pneumoseg/augment.hpp"
#include "pneumoseg/dataset.hpp"
#include "pneumoseg/inference.hpp"
#include "pneumoseg/model.hpp"

namespace pneumoseg {

enum class LrPolicy { kCosine, kPlateau };

struct StageConfig {
    int resolution = 256;
    int batch_size = 40;
    int epochs = 50;
    LrPolicy lr_policy = LrPolicy::kCosine;
    double lr_max = 1e-3;
    double lr_min = 1e-6;
    double plateau_factor = 0.2;  // kPlateau only
    int plateau_patience = 5;
    bool use_swa = false;
    int swa_last_epochs = 5;  // snapshots averaged from the tail of the stage
};

struct ExperimentConfig {
    std::string name = "exp2";
    ModelConfig model;
    AugmentParams augment;
    double train_fraction = 0.9;
    double binarization_threshold = 0.55;
    std::int64_t removal_threshold = 2048;
    std::uint64_t seed = 42;
    std::vector<StageConfig> stages;
    // Keep decoded samples in memory for the whole stage. Switched off
    // automatically for datasets past a few thousand images.
    bool preload_images = true;

    void validate() const;
};

// The five training recipes: exp1 (single stage, 1-channel input behind a
// learnable adapter, plateau schedule), exp2 (SWA + cosine), exp3/exp4/exp5
// (two stages, the second at 512).
ExperimentConfig experiment_preset(const std::string& name);

// Shrinks any preset to laptop size: quarter-width model, 64/128-pixel
// stages, few epochs, removal threshold rescaled to the small masks.
void apply_desk_scale(ExperimentConfig& config);

// Inference settings matching how the experiment was trained.
PredictConfig inference_config(const ExperimentConfig& config);

struct EpochStats {
    int stage = 1;  // 1-based
    int epoch = 1;  // 1-based within the stage
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_iou = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::string final_checkpoint;
    std::string metrics_csv;
};

// `epoch,stage,lr,train_loss,val_loss,val_iou` rows in training order.
std::string format_metrics_csv(const std::vector<EpochStats>& history);

// Runs every stage in sequence on a stratified split of `dataset`. Each
// stage ends in its "result" weights — the SWA average (with BatchNorm
// statistics re-estimated) when SWA is on, otherwise the best-validation-
// loss epoch — and the next stage continues from them. Writes per-stage and
// final checkpoints plus the metrics CSV into `out_dir`.
TrainResult run_experiment(const ExperimentConfig& config, const Dataset& dataset,
                           const std::string& out_dir, std::ostream* log);

}  // namespace pneumoseg
