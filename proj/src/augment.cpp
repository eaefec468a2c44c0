#include "pneumoseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pneumoseg/errors.hpp"

namespace pneumoseg {

namespace {

// Mirrors a pixel-index coordinate into [0, n-1] without repeating the edge
// sample (…, 2, 1, 0, 1, 2, …).
double reflect_coord(double v, int n) {
    if (n == 1) return 0.0;
    const double period = 2.0 * (n - 1);
    v = std::fabs(std::fmod(v, period));
    if (v > n - 1) v = period - v;
    return v;
}

double bilinear_at(const float* plane, int height, int width, double sy, double sx) {
    sy = reflect_coord(sy, height);
    sx = reflect_coord(sx, width);
    const int y0 = std::min(static_cast<int>(sy), height - 1);
    const int x0 = std::min(static_cast<int>(sx), width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const int x1 = std::min(x0 + 1, width - 1);
    const double fy = sy - y0;
    const double fx = sx - x0;
    const double top = plane[y0 * width + x0] * (1.0 - fx) + plane[y0 * width + x1] * fx;
    const double bot = plane[y1 * width + x0] * (1.0 - fx) + plane[y1 * width + x1] * fx;
    return top * (1.0 - fy) + bot * fy;
}

// Resamples image and mask through one (map_y, map_x) source-coordinate
// field. The mask follows the image's bilinear value, rounded at 0.5, so a
// float copy of the mask pushed through the image path binarizes to exactly
// the warped mask.
Sample warp(const Sample& s, const std::vector<double>& map_y, const std::vector<double>& map_x) {
    const int channels = static_cast<int>(s.image.dim(0));
    const int height = static_cast<int>(s.image.dim(1));
    const int width = static_cast<int>(s.image.dim(2));

    Sample out;
    out.id = s.id;
    out.image = Tensor<float>::zeros({s.image.dim(0), s.image.dim(1), s.image.dim(2)});
    out.mask = BinaryMask(height, width);

    float* dst = out.image.data();
    const float* src = s.image.data();
    for (int c = 0; c < channels; ++c) {
        const float* plane = src + static_cast<std::size_t>(c) * height * width;
        float* outp = dst + static_cast<std::size_t>(c) * height * width;
        for (int i = 0; i < height * width; ++i) {
            outp[i] = static_cast<float>(bilinear_at(plane, height, width, map_y[i], map_x[i]));
        }
    }

    std::vector<float> mask_f(static_cast<std::size_t>(height) * width);
    for (std::size_t i = 0; i < mask_f.size(); ++i) mask_f[i] = s.mask.pixels[i];
    for (int i = 0; i < height * width; ++i) {
        const double v = bilinear_at(mask_f.data(), height, width, map_y[i], map_x[i]);
        out.mask.pixels[i] = v >= 0.5 ? 1 : 0;
    }
    return out;
}

// Separable Gaussian blur with reflected borders; kernel radius 3*sigma.
void gaussian_blur(std::vector<double>& field, int height, int width, double sigma) {
    if (sigma <= 0.0) return;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    std::vector<double> tmp(field.size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int sx = static_cast<int>(reflect_coord(x + i, width));
                acc += kernel[i + radius] * field[y * width + sx];
            }
            tmp[y * width + x] = acc;
        }
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int sy = static_cast<int>(reflect_coord(y + i, height));
                acc += kernel[i + radius] * tmp[sy * width + x];
            }
            field[y * width + x] = acc;
        }
    }
}

void check_sample(const Sample& s, const char* op) {
    if (s.image.rank() != 3) {
        throw ShapeError(std::string(op) + ": expected a [C,H,W] image, got " + shape_string(s.image.shape()));
    }
    if (s.mask.height != s.image.dim(1) || s.mask.width != s.image.dim(2)) {
        throw ShapeError(std::string(op) + ": mask size does not match image");
    }
}

}  // namespace

AugmentParams AugmentParams::ablation(const std::string& name) {
    AugmentParams p;
    p.enable_flip = p.enable_photometric = p.enable_distort = p.enable_crop = false;
    if (name == "none") {
        return p;
    }
    if (name == "a1") {
        p.enable_flip = true;
    } else if (name == "a2") {
        p.enable_photometric = true;
    } else if (name == "a1+a2") {
        p.enable_flip = p.enable_photometric = true;
    } else if (name == "a3") {
        p.enable_distort = true;
    } else if (name == "a4") {
        p.enable_crop = true;
    } else if (name == "all") {
        p.enable_flip = p.enable_photometric = p.enable_distort = p.enable_crop = true;
    } else {
        throw ConfigError("unknown augmentation preset '" + name +
                          "' (expected none, a1, a2, a1+a2, a3, a4, all)");
    }
    return p;
}

Sample horizontal_flip(const Sample& s) {
    check_sample(s, "horizontal_flip");
    const int channels = static_cast<int>(s.image.dim(0));
    const int height = static_cast<int>(s.image.dim(1));
    const int width = static_cast<int>(s.image.dim(2));

    Sample out;
    out.id = s.id;
    out.image = Tensor<float>::zeros({s.image.dim(0), s.image.dim(1), s.image.dim(2)});
    out.mask = BinaryMask(height, width);

    const float* src = s.image.data();
    float* dst = out.image.data();
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < height; ++y) {
            const std::size_t row = (static_cast<std::size_t>(c) * height + y) * width;
            for (int x = 0; x < width; ++x) dst[row + x] = src[row + (width - 1 - x)];
        }
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            out.mask.pixels[y * width + x] = s.mask.pixels[y * width + (width - 1 - x)];
        }
    }
    return out;
}

Sample apply_photometric(const Sample& s, Photometric which, Rng& rng, const AugmentParams& p) {
    check_sample(s, "apply_photometric");
    Sample out;
    out.id = s.id;
    out.mask = s.mask;
    out.image = s.image.clone();

    float* data = out.image.data();
    const std::int64_t n = out.image.numel();
    switch (which) {
        case Photometric::kContrast: {
            const double factor = 1.0 + rng.uniform(-p.contrast_limit, p.contrast_limit);
            for (std::int64_t i = 0; i < n; ++i) {
                const double v = (data[i] - 0.5) * factor + 0.5;
                data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
            break;
        }
        case Photometric::kGamma: {
            const double gamma = rng.uniform(p.gamma_low, p.gamma_high);
            for (std::int64_t i = 0; i < n; ++i) {
                data[i] = static_cast<float>(std::pow(std::clamp<double>(data[i], 0.0, 1.0), gamma));
            }
            break;
        }
        case Photometric::kBrightness: {
            const double delta = rng.uniform(-p.brightness_limit, p.brightness_limit);
            for (std::int64_t i = 0; i < n; ++i) {
                data[i] = static_cast<float>(std::clamp<double>(data[i] + delta, 0.0, 1.0));
            }
            break;
        }
    }
    return out;
}

Sample geometric_distort(const Sample& s, Distortion which, Rng& rng, const AugmentParams& p) {
    check_sample(s, "geometric_distort");
    const int height = static_cast<int>(s.image.dim(1));
    const int width = static_cast<int>(s.image.dim(2));
    const std::size_t n = static_cast<std::size_t>(height) * width;
    std::vector<double> map_y(n);
    std::vector<double> map_x(n);

    switch (which) {
        case Distortion::kElastic: {
            // alpha/sigma are calibrated for 256px inputs; scale with size.
            const double scale = std::min(height, width) / 256.0;
            const double alpha = p.elastic_alpha * scale;
            const double sigma = p.elastic_sigma * scale;
            std::vector<double> dx(n);
            std::vector<double> dy(n);
            for (std::size_t i = 0; i < n; ++i) dx[i] = rng.uniform(-1.0, 1.0);
            for (std::size_t i = 0; i < n; ++i) dy[i] = rng.uniform(-1.0, 1.0);
            gaussian_blur(dx, height, width, sigma);
            gaussian_blur(dy, height, width, sigma);
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * width + x;
                    map_y[i] = y + alpha * dy[i];
                    map_x[i] = x + alpha * dx[i];
                }
            }
            break;
        }
        case Distortion::kGrid: {
            // Per-axis piecewise-linear remap: each of grid_steps cells is
            // stretched by 1+u, then the axis is renormalized to full size.
            const int steps = std::max(1, p.grid_steps);
            auto axis_map = [&](int size) {
                std::vector<double> q(steps + 1, 0.0);
                const double cell = static_cast<double>(size) / steps;
                for (int i = 0; i < steps; ++i) {
                    q[i + 1] = q[i] + cell * (1.0 + rng.uniform(-p.grid_limit, p.grid_limit));
                }
                const double norm = size / q[steps];
                for (double& v : q) v *= norm;
                std::vector<double> coords(size);
                for (int t = 0; t < size; ++t) {
                    const double pos = t + 0.5;
                    const int i = std::min(steps - 1, static_cast<int>(pos / cell));
                    coords[t] = q[i] + (pos - i * cell) * (q[i + 1] - q[i]) / cell - 0.5;
                }
                return coords;
            };
            const std::vector<double> sx = axis_map(width);
            const std::vector<double> sy = axis_map(height);
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * width + x;
                    map_y[i] = sy[y];
                    map_x[i] = sx[x];
                }
            }
            break;
        }
        case Distortion::kOptical: {
            // Barrel/pincushion term k*r^2 around a randomly shifted center.
            const double k = rng.uniform(-p.optical_distort_limit, p.optical_distort_limit);
            const double cx = 0.5 * width + rng.uniform(-p.optical_shift_limit, p.optical_shift_limit) * width;
            const double cy = 0.5 * height + rng.uniform(-p.optical_shift_limit, p.optical_shift_limit) * height;
            const double radius = 0.5 * std::min(height, width);
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const double u = (x + 0.5 - cx) / radius;
                    const double v = (y + 0.5 - cy) / radius;
                    const double factor = 1.0 + k * (u * u + v * v);
                    const std::size_t i = static_cast<std::size_t>(y) * width + x;
                    map_x[i] = cx + u * factor * radius - 0.5;
                    map_y[i] = cy + v * factor * radius - 0.5;
                }
            }
            break;
        }
    }
    return warp(s, map_y, map_x);
}

Sample random_sized_crop(const Sample& s, Rng& rng, const AugmentParams& p) {
    check_sample(s, "random_sized_crop");
    const int height = static_cast<int>(s.image.dim(1));
    const int width = static_cast<int>(s.image.dim(2));

    const double scale = rng.uniform(p.crop_min_scale, 1.0);
    const int crop_h = std::max(1, static_cast<int>(std::lround(height * scale)));
    const int crop_w = std::max(1, static_cast<int>(std::lround(width * scale)));
    const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(height - crop_h + 1)));
    const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(width - crop_w + 1)));

    // Center-aligned resize of the crop window back to full size; source
    // coordinates are clamped inside the window, never sampling past it.
    const std::size_t n = static_cast<std::size_t>(height) * width;
    std::vector<double> map_y(n);
    std::vector<double> map_x(n);
    for (int y = 0; y < height; ++y) {
        double sy = (y + 0.5) * crop_h / height - 0.5;
        sy = std::clamp(sy, 0.0, crop_h - 1.0) + top;
        for (int x = 0; x < width; ++x) {
            double sx = (x + 0.5) * crop_w / width - 0.5;
            sx = std::clamp(sx, 0.0, crop_w - 1.0) + left;
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            map_y[i] = sy;
            map_x[i] = sx;
        }
    }
    return warp(s, map_y, map_x);
}

Sample AugmentPipeline::apply(const Sample& s, std::int64_t epoch, std::int64_t sample_index) const {
    Rng rng = Rng::stream(base_seed_, static_cast<std::uint64_t>(epoch),
                          static_cast<std::uint64_t>(sample_index));
    Sample out = s;
    if (params_.enable_flip && rng.bernoulli(params_.prob_flip)) {
        out = horizontal_flip(out);
    }
    if (params_.enable_photometric && rng.bernoulli(params_.prob_photometric)) {
        const auto which = static_cast<Photometric>(rng.below(3));
        out = apply_photometric(out, which, rng, params_);
    }
    if (params_.enable_distort && rng.bernoulli(params_.prob_distort)) {
        const auto which = static_cast<Distortion>(rng.below(3));
        out = geometric_distort(out, which, rng, params_);
    }
    if (params_.enable_crop && rng.bernoulli(params_.prob_crop)) {
        out = random_sized_crop(out, rng, params_);
    }
    return out;
}

}  // namespace pneumoseg
