#include "pneumoseg/inference.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <ostream>
#include <queue>

#include "pneumoseg/errors.hpp"
#include "pneumoseg/losses.hpp"

namespace pneumoseg {

Tensor<float> hflip_images(const Tensor<float>& batch) {
    if (batch.rank() != 4) {
        throw ShapeError("hflip_images: expected NCHW, got " + shape_string(batch.shape()));
    }
    Tensor<float> out = Tensor<float>::zeros(batch.shape());
    const int planes = batch.dim(0) * batch.dim(1);
    const int h = batch.dim(2);
    const int w = batch.dim(3);
    const float* src = batch.data();
    float* dst = out.data();
    for (int p = 0; p < planes; ++p) {
        for (int y = 0; y < h; ++y) {
            const std::size_t row = (static_cast<std::size_t>(p) * h + y) * w;
            for (int x = 0; x < w; ++x) dst[row + x] = src[row + (w - 1 - x)];
        }
    }
    return out;
}

Tensor<float> predict_proba(ResNet34UNet<float>& model, const Tensor<float>& batch, bool tta) {
    Tensor<float> direct = model.forward(nullptr, batch, Mode::kEval);
    if (!tta) return direct;
    Tensor<float> flipped = hflip_images(model.forward(nullptr, hflip_images(batch), Mode::kEval));
    Tensor<float> out = Tensor<float>::zeros(direct.shape());
    const float* a = direct.data();
    const float* b = flipped.data();
    float* o = out.data();
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) o[i] = 0.5f * (a[i] + b[i]);
    return out;
}

BinaryMask binarize_plane(const float* plane, int height, int width, double threshold) {
    BinaryMask mask(height, width);
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
        mask.pixels[i] = plane[i] > threshold ? 1 : 0;
    }
    return mask;
}

namespace {

void remove_small_components(BinaryMask& mask, std::int64_t threshold, int connectivity) {
    if (connectivity != 4 && connectivity != 8) {
        throw ConfigError("remove_small_regions: connectivity must be 4 or 8");
    }
    const int h = mask.height;
    const int w = mask.width;
    std::vector<std::uint8_t> seen(mask.pixels.size(), 0);
    std::vector<int> component;
    std::vector<int> frontier;
    for (int start = 0; start < h * w; ++start) {
        if (!mask.pixels[start] || seen[start]) continue;
        component.clear();
        frontier.assign(1, start);
        seen[start] = 1;
        while (!frontier.empty()) {
            const int cur = frontier.back();
            frontier.pop_back();
            component.push_back(cur);
            const int y = cur / w;
            const int x = cur % w;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    if (connectivity == 4 && dy != 0 && dx != 0) continue;
                    const int ny = y + dy;
                    const int nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    const int ni = ny * w + nx;
                    if (mask.pixels[ni] && !seen[ni]) {
                        seen[ni] = 1;
                        frontier.push_back(ni);
                    }
                }
            }
        }
        if (static_cast<std::int64_t>(component.size()) < threshold) {
            for (int i : component) mask.pixels[i] = 0;
        }
    }
}

}  // namespace

void remove_small_regions(BinaryMask& mask, std::int64_t removal_threshold, Removal mode,
                          int connectivity) {
    if (removal_threshold <= 0) return;
    if (mode == Removal::kWholeMask) {
        if (mask.popcount() < removal_threshold) {
            std::fill(mask.pixels.begin(), mask.pixels.end(), std::uint8_t(0));
        }
        return;
    }
    remove_small_components(mask, removal_threshold, connectivity);
}

namespace {

// Shared batch loop: binarized + size-filtered mask at `out_size` for every
// requested entry, in the order of `indices`.
template <typename Consume>
void predict_masks(ResNet34UNet<float>& model, const Dataset& dataset,
                   const std::vector<int>& indices, const PredictConfig& config, Consume&& consume) {
    const int bs = std::max(1, config.batch_size);
    std::vector<Sample> batch;
    std::vector<int> batch_indices;
    auto flush = [&]() {
        if (batch.empty()) return;
        const Tensor<float> images = stack_images(batch);
        const auto t0 = std::chrono::steady_clock::now();
        const Tensor<float> proba = predict_proba(model, images, config.tta);
        const auto t1 = std::chrono::steady_clock::now();
        const double ms_each =
            std::chrono::duration<double, std::milli>(t1 - t0).count() / batch.size();
        const int h = proba.dim(2);
        const int w = proba.dim(3);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            BinaryMask mask = binarize_plane(proba.data() + i * static_cast<std::size_t>(h) * w, h,
                                             w, config.binarization_threshold);
            consume(batch_indices[i], std::move(mask), ms_each);
        }
        batch.clear();
        batch_indices.clear();
    };
    for (int idx : indices) {
        batch.push_back(load_sample(dataset.entries[static_cast<std::size_t>(idx)],
                                   config.resolution, config.channels));
        batch_indices.push_back(idx);
        if (static_cast<int>(batch.size()) == bs) flush();
    }
    flush();
}

}  // namespace

std::vector<RleRecord> predict_dataset(ResNet34UNet<float>& model, const Dataset& dataset,
                                       const PredictConfig& config, const std::string& csv_path,
                                       std::ostream* log) {
    std::vector<int> indices(dataset.entries.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);

    std::vector<RleRecord> records(dataset.entries.size());
    double total_ms = 0.0;
    predict_masks(model, dataset, indices, config,
                  [&](int idx, BinaryMask mask, double ms) {
                      mask = resize_mask(mask, config.output_size, config.output_size);
                      remove_small_regions(mask, config.removal_threshold, config.removal,
                                           config.connectivity);
                      const auto& id = dataset.entries[static_cast<std::size_t>(idx)].image_id;
                      records[static_cast<std::size_t>(idx)] = rle_encode(mask, id);
                      total_ms += ms;
                      if (log) {
                          *log << id << ": " << ms << " ms\n";
                      }
                  });
    if (log && !records.empty()) {
        *log << "mean latency: " << total_ms / static_cast<double>(records.size()) << " ms over "
             << records.size() << " images\n";
    }
    if (!csv_path.empty()) {
        write_submission_csv(records, csv_path);
    }
    return records;
}

EvalResult evaluate_dataset(ResNet34UNet<float>& model, const Dataset& dataset,
                            const std::vector<int>& indices, const PredictConfig& config) {
    EvalResult result;
    double dsc_acc = 0.0;
    double iou_acc = 0.0;
    predict_masks(model, dataset, indices, config,
                  [&](int idx, BinaryMask mask, double) {
                      const auto& entry = dataset.entries[static_cast<std::size_t>(idx)];
                      const DicomLite image = load_entry_image(entry);
                      const BinaryMask truth =
                          entry.annotations.empty()
                              ? BinaryMask(image.rows, image.columns)
                              : union_masks(entry.annotations, image.rows, image.columns);
                      mask = resize_mask(mask, image.rows, image.columns);
                      remove_small_regions(mask, config.removal_threshold, config.removal,
                                           config.connectivity);
                      dsc_acc += mask_dsc(mask, truth);
                      iou_acc += mask_iou(mask, truth);
                      ++result.images;
                  });
    if (result.images > 0) {
        result.mean_dsc = dsc_acc / result.images;
        result.mean_iou = iou_acc / result.images;
    }
    return result;
}

}  // namespace pneumoseg
