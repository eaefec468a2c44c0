#pragma once

#include <cstdint>
#include <string>

#include "pneumoseg/image_ops.hpp"
#include "pneumoseg/rng.hpp"

namespace pneumoseg {

// Magnitude ranges for the four augmentation groups. Elastic alpha/sigma are
// given in pixels at 256 resolution and scale linearly with image size.
struct AugmentParams {
    bool enable_flip = true;         // A1
    bool enable_photometric = true;  // A2: one of contrast / gamma / brightness
    bool enable_distort = true;      // A3: one of elastic / grid / optical
    bool enable_crop = true;         // A4

    double prob_flip = 0.5;
    double prob_photometric = 0.5;
    double prob_distort = 0.5;
    double prob_crop = 0.5;

    double contrast_limit = 0.2;
    double gamma_low = 0.8;
    double gamma_high = 1.2;
    double brightness_limit = 0.2;

    double elastic_alpha = 34.0;
    double elastic_sigma = 4.0;
    int grid_steps = 5;
    double grid_limit = 0.3;
    double optical_distort_limit = 0.25;
    double optical_shift_limit = 0.05;

    double crop_min_scale = 0.8;

    // Ablation-grid presets: "none", "a1", "a2", "a1+a2", "a3", "a4", "all".
    static AugmentParams ablation(const std::string& name);
};

enum class Photometric { kContrast, kGamma, kBrightness };
enum class Distortion { kElastic, kGrid, kOptical };

// Individual transforms. Geometric ones move image and mask through the same
// coordinate field: the image samples bilinearly with reflection padding,
// the mask takes the same bilinear value rounded at 0.5, which keeps it
// binary and pixel-consistent with the image path.
Sample horizontal_flip(const Sample& s);
Sample apply_photometric(const Sample& s, Photometric which, Rng& rng, const AugmentParams& p);
Sample geometric_distort(const Sample& s, Distortion which, Rng& rng, const AugmentParams& p);
Sample random_sized_crop(const Sample& s, Rng& rng, const AugmentParams& p);

// Applies the four groups in A1..A4 order. Randomness is a pure function of
// (base_seed, epoch, sample_index), so concurrent loaders cannot reorder it.
class AugmentPipeline {
public:
    AugmentPipeline(AugmentParams params, std::uint64_t base_seed)
        : params_(params), base_seed_(base_seed) {}

    Sample apply(const Sample& s, std::int64_t epoch, std::int64_t sample_index) const;

    const AugmentParams& params() const { return params_; }

private:
    AugmentParams params_;
    std::uint64_t base_seed_;
};

}  // namespace pneumoseg
