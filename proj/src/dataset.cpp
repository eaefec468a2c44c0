#include "pneumoseg/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <unordered_map>

#include "pneumoseg/errors.hpp"
#include "pneumoseg/rng.hpp"

namespace fs = std::filesystem;

namespace pneumoseg {

Dataset load_dataset(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        throw Error("dataset: " + dir + " is not a directory");
    }
    Dataset ds;
    ds.root = dir;
    for (const auto& de : fs::directory_iterator(dir)) {
        if (!de.is_regular_file()) continue;
        const fs::path& p = de.path();
        const std::string ext = p.extension().string();
        if (ext != ".dcm" && ext != ".pgm") continue;
        DatasetEntry e;
        e.image_id = p.stem().string();
        e.path = p.string();
        e.is_dicom = ext == ".dcm";
        ds.entries.push_back(std::move(e));
    }
    std::sort(ds.entries.begin(), ds.entries.end(),
              [](const DatasetEntry& a, const DatasetEntry& b) { return a.image_id < b.image_id; });
    for (std::size_t i = 1; i < ds.entries.size(); ++i) {
        if (ds.entries[i].image_id == ds.entries[i - 1].image_id) {
            throw Error("dataset: duplicate image id " + ds.entries[i].image_id +
                        " (one .dcm and one .pgm with the same stem?)");
        }
    }
    if (ds.entries.empty()) {
        throw Error("dataset: no .dcm or .pgm images in " + dir);
    }

    const fs::path csv = fs::path(dir) / "annotations.csv";
    if (fs::exists(csv)) {
        std::unordered_map<std::string, DatasetEntry*> by_id;
        for (auto& e : ds.entries) by_id[e.image_id] = &e;
        for (auto& rec : parse_annotation_csv(csv.string())) {
            auto it = by_id.find(rec.image_id);
            if (it == by_id.end()) {
                throw Error("dataset: annotation for unknown image " + rec.image_id);
            }
            if (!rec.empty()) {
                it->second->annotations.push_back(std::move(rec));
            }
        }
    }
    return ds;
}

DicomLite load_entry_image(const DatasetEntry& entry) {
    if (entry.is_dicom) {
        DicomLite d = parse_dicom_file(entry.path);
        d.image_id = entry.image_id;
        return d;
    }
    DicomLite d = load_pgm(entry.path);
    d.image_id = entry.image_id;
    return d;
}

Sample load_sample(const DatasetEntry& entry, int resolution, int channels) {
    const DicomLite d = load_entry_image(entry);
    BinaryMask native = entry.annotations.empty()
                            ? BinaryMask(d.rows, d.columns)
                            : union_masks(entry.annotations, d.rows, d.columns);
    return make_sample(d, native, resolution, channels, entry.image_id);
}

std::vector<StatsRecord> collect_stats(const Dataset& dataset) {
    std::vector<StatsRecord> out;
    out.reserve(dataset.entries.size());
    for (const auto& e : dataset.entries) {
        StatsRecord r;
        if (e.is_dicom) {
            const DicomLite d = parse_dicom_file(e.path);
            r.sex = d.patient_sex;
            r.view = d.view_position;
        } else {
            r.sex = Sex::kUnknown;
            r.view = ViewPosition::kUnknown;
        }
        r.has_pneumothorax = e.positive();
        r.annotation_count = static_cast<int>(e.annotations.size());
        out.push_back(r);
    }
    return out;
}

std::pair<std::vector<int>, std::vector<int>> stratified_split(const Dataset& dataset,
                                                               double train_fraction,
                                                               std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("split: train fraction must be in (0, 1)");
    }
    std::vector<int> positives;
    std::vector<int> negatives;
    for (std::size_t i = 0; i < dataset.entries.size(); ++i) {
        (dataset.entries[i].positive() ? positives : negatives).push_back(static_cast<int>(i));
    }

    Rng rng = Rng::stream(seed, 0x73706c6974, 0);  // "split"
    auto shuffle = [&rng](std::vector<int>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[rng.below(i)]);
        }
    };
    shuffle(positives);
    shuffle(negatives);

    std::vector<int> train;
    std::vector<int> val;
    auto cut = [&](std::vector<int>& group) {
        const auto n_train = static_cast<std::size_t>(
            std::min<double>(group.size(), std::llround(train_fraction * group.size())));
        train.insert(train.end(), group.begin(), group.begin() + n_train);
        val.insert(val.end(), group.begin() + n_train, group.end());
    };
    cut(positives);
    cut(negatives);
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
    if (train.empty() || val.empty()) {
        throw ConfigError("split: a side of the split came out empty");
    }
    return {train, val};
}

Tensor<float> stack_images(const std::vector<Sample>& samples) {
    if (samples.empty()) throw ShapeError("stack_images: empty batch");
    const auto& first = samples.front().image;
    Tensor<float> out = Tensor<float>::zeros(
        {static_cast<int>(samples.size()), first.dim(0), first.dim(1), first.dim(2)});
    const std::size_t stride = static_cast<std::size_t>(first.numel());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].image.shape() != first.shape()) {
            throw ShapeError("stack_images: mixed sample shapes in batch");
        }
        std::memcpy(out.data() + i * stride, samples[i].image.data(), stride * sizeof(float));
    }
    return out;
}

Tensor<float> stack_masks(const std::vector<Sample>& samples) {
    if (samples.empty()) throw ShapeError("stack_masks: empty batch");
    const int h = samples.front().mask.height;
    const int w = samples.front().mask.width;
    Tensor<float> out = Tensor<float>::zeros({static_cast<int>(samples.size()), 1, h, w});
    float* dst = out.data();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& m = samples[i].mask;
        if (m.height != h || m.width != w) {
            throw ShapeError("stack_masks: mixed mask shapes in batch");
        }
        const std::size_t base = i * static_cast<std::size_t>(h) * w;
        for (std::size_t k = 0; k < m.pixels.size(); ++k) dst[base + k] = m.pixels[k];
    }
    return out;
}

}  // namespace pneumoseg
