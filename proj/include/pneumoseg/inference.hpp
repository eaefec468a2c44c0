#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pneumoseg/dataset.hpp"
#include "pneumoseg/model.hpp"

namespace pneumoseg {

// How sub-threshold predictions are discarded: kWholeMask zeroes the whole
// mask when its total area is below the threshold; kConnectedComponents
// removes only the individual components that are too small.
enum class Removal { kWholeMask, kConnectedComponents };

struct PredictConfig {
    int resolution = 256;
    int channels = 3;
    double binarization_threshold = 0.75;
    std::int64_t removal_threshold = 2048;  // pixels at output scale
    bool tta = true;                        // average with the horizontal-flip pass
    Removal removal = Removal::kWholeMask;
    int connectivity = 4;    // 4 or 8, used by kConnectedComponents
    int output_size = 1024;  // submission mask resolution
    int batch_size = 4;
};

// Eval-mode probabilities for an NCHW batch. With tta the result is the
// pixel mean of f(x) and hflip(f(hflip(x))), which makes the output exactly
// equivariant under horizontal flips.
Tensor<float> predict_proba(ResNet34UNet<float>& model, const Tensor<float>& batch, bool tta);

Tensor<float> hflip_images(const Tensor<float>& batch);

// p > threshold. `plane` is one H x W probability map.
BinaryMask binarize_plane(const float* plane, int height, int width, double threshold);

void remove_small_regions(BinaryMask& mask, std::int64_t removal_threshold, Removal mode,
                          int connectivity = 4);

// Full pipeline over a dataset: preprocess, predict, binarize, upscale to
// output_size (nearest), size-filter, RLE-encode. Returns the records in
// dataset order and writes them as a submission CSV when `csv_path` is
// non-empty. Logs per-image latency to `log` when given.
std::vector<RleRecord> predict_dataset(ResNet34UNet<float>& model, const Dataset& dataset,
                                       const PredictConfig& config, const std::string& csv_path,
                                       std::ostream* log);

struct EvalResult {
    double mean_dsc = 0.0;
    double mean_iou = 0.0;
    int images = 0;
};

// Mean per-image DSC/IoU of the pipeline's final masks against the native-
// resolution ground truth (masks compared at each image's own size).
EvalResult evaluate_dataset(ResNet34UNet<float>& model, const Dataset& dataset,
                            const std::vector<int>& indices, const PredictConfig& config);

}  // namespace pneumoseg
