#include "pneumoseg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <vector>

#include "pneumoseg/errors.hpp"
#include "pneumoseg/rng.hpp"

namespace fs = std::filesystem;

namespace pneumoseg {

namespace {

struct Ellipse {
    double cx, cy, rx, ry, angle;

    bool contains(double x, double y) const {
        const double dx = x - cx;
        const double dy = y - cy;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double u = (dx * c + dy * s) / rx;
        const double v = (-dx * s + dy * c) / ry;
        return u * u + v * v <= 1.0;
    }
};

}  // namespace

SyntheticItem synthesize_item(std::uint64_t seed, int index, int size, bool positive) {
    Rng rng = Rng::stream(seed, 0x73796e7468, static_cast<std::uint64_t>(index));  // "synth"
    const double s = size;

    // Low-frequency texture so the background is not constant.
    const double fx = rng.uniform(0.5, 2.0) / s;
    const double fy = rng.uniform(0.5, 2.0) / s;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    // Two dark lung fields; one of them hosts the collapse region.
    Ellipse lungs[2];
    for (int i = 0; i < 2; ++i) {
        const double cx = (i == 0 ? 0.30 : 0.70) * s + rng.uniform(-0.03, 0.03) * s;
        lungs[i] = {cx, 0.52 * s + rng.uniform(-0.04, 0.04) * s, rng.uniform(0.13, 0.17) * s,
                    rng.uniform(0.26, 0.34) * s, rng.uniform(-0.15, 0.15)};
    }

    // The targets: one to three bright ellipses, each clipped to its host
    // lung; the mask is their union.
    struct Lesion {
        Ellipse shape;
        int host;
        double contrast;
    };
    Lesion lesions[3];
    const int lesion_count = positive ? 1 + static_cast<int>(rng.below(3)) : 0;
    for (int i = 0; i < lesion_count; ++i) {
        const int host = static_cast<int>(rng.below(2));
        const Ellipse& lung = lungs[host];
        const double tx = lung.cx + rng.uniform(-0.5, 0.5) * lung.rx;
        const double ty = lung.cy + rng.uniform(-0.6, 0.6) * lung.ry;
        lesions[i] = {{tx, ty, rng.uniform(0.22, 0.50) * lung.rx, rng.uniform(0.22, 0.45) * lung.ry,
                       rng.uniform(-0.4, 0.4)},
                      host,
                      rng.uniform(35.0, 70.0)};
    }

    // Bright blobs in the strips above and below the lung fields: the same
    // intensity bump as a lesion, but never part of the mask. Dark blobs may
    // fall anywhere.
    const double lung_top = std::min(lungs[0].cy - lungs[0].ry, lungs[1].cy - lungs[1].ry);
    const double lung_bottom = std::max(lungs[0].cy + lungs[0].ry, lungs[1].cy + lungs[1].ry);
    struct Blob {
        Ellipse shape;
        double delta;
    };
    Blob blobs[3];
    int blob_count = 0;
    const int bright_blobs = static_cast<int>(rng.below(3));  // 0..2
    for (int i = 0; i < bright_blobs; ++i) {
        const double r = rng.uniform(0.03, 0.07) * s;
        const bool top = rng.bernoulli(0.5);
        const double ymin = top ? r + 1.0 : lung_bottom + r + 2.0;
        const double ymax = top ? lung_top - r - 2.0 : s - r - 1.0;
        if (ymax <= ymin) continue;
        blobs[blob_count++] = {{rng.uniform(0.1, 0.9) * s, rng.uniform(ymin, ymax),
                                r, rng.uniform(0.03, 0.07) * s, rng.uniform(-0.4, 0.4)},
                               rng.uniform(35.0, 70.0)};
    }
    if (rng.bernoulli(0.3)) {
        blobs[blob_count++] = {{rng.uniform(0.1, 0.9) * s, rng.uniform(0.1, 0.9) * s,
                                rng.uniform(0.04, 0.08) * s, rng.uniform(0.04, 0.08) * s, 0.0},
                               -35.0};
    }

    SyntheticItem item;
    item.image.rows = size;
    item.image.columns = size;
    item.image.bits_allocated = 8;
    item.image.patient_sex = rng.bernoulli(0.05) ? Sex::kUnknown
                             : rng.bernoulli(0.5) ? Sex::kFemale
                                                  : Sex::kMale;
    item.image.view_position = rng.bernoulli(0.05)  ? ViewPosition::kUnknown
                               : rng.bernoulli(0.5) ? ViewPosition::kAP
                                                    : ViewPosition::kPA;
    item.image.pixel_data.resize(static_cast<std::size_t>(size) * size);
    item.mask = BinaryMask(size, size);

    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double v = 150.0 + 25.0 * std::sin(2.0 * std::numbers::pi * (x * fx + y * fy) + phase);
            v += rng.uniform(-6.0, 6.0);
            const double px = x + 0.5;
            const double py = y + 0.5;
            for (const auto& l : lungs) {
                if (l.contains(px, py)) v -= 55.0;
            }
            for (int i = 0; i < blob_count; ++i) {
                if (blobs[i].shape.contains(px, py)) v += blobs[i].delta;
            }
            for (int i = 0; i < lesion_count; ++i) {
                const Lesion& t = lesions[i];
                if (t.shape.contains(px, py) && lungs[t.host].contains(px, py)) {
                    v += t.contrast;
                    item.mask.at(y, x) = 1;
                }
            }
            item.image.pixel_data[static_cast<std::size_t>(y) * size + x] =
                static_cast<std::uint16_t>(std::clamp(v, 0.0, 255.0));
        }
    }
    return item;
}

void generate_synthetic_dataset(const SyntheticSpec& spec, const std::string& dir) {
    if (spec.count <= 0 || spec.size < 8) {
        throw ConfigError("synthetic: count must be positive and size at least 8");
    }
    fs::create_directories(dir);

    Rng layout = Rng::stream(spec.seed, 0x6c61796f7574, 0);  // "layout"
    std::vector<RleRecord> rows;
    for (int i = 0; i < spec.count; ++i) {
        const bool positive = layout.bernoulli(spec.positive_fraction);
        SyntheticItem item = synthesize_item(spec.seed, i, spec.size, positive);

        char name[32];
        std::snprintf(name, sizeof(name), "synth%04d", i);
        item.image.image_id = name;

        const fs::path path = fs::path(dir) / (std::string(name) + (spec.as_pgm ? ".pgm" : ".dcm"));
        if (spec.as_pgm) {
            std::vector<std::uint8_t> bytes(item.image.pixel_data.begin(),
                                            item.image.pixel_data.end());
            save_pgm(bytes, spec.size, spec.size, path.string());
        } else {
            write_dicom_file(item.image, path.string());
        }

        RleRecord rec = rle_encode(item.mask, name);
        // Occasionally split a positive across two rows; the union must
        // reassemble the original mask.
        if (!rec.empty() && rec.runs.size() >= 2 && layout.bernoulli(0.2)) {
            const std::size_t half = rec.runs.size() / 2;
            RleRecord first{rec.image_id, {rec.runs.begin(), rec.runs.begin() + half}};
            RleRecord second{rec.image_id, {rec.runs.begin() + half, rec.runs.end()}};
            // Second row's first offset is relative to the start of the
            // image again, so fold the skipped prefix into it.
            std::int64_t consumed = 0;
            for (const auto& run : first.runs) consumed += run.offset + run.length;
            second.runs.front().offset += consumed;
            rows.push_back(std::move(first));
            rows.push_back(std::move(second));
        } else {
            rows.push_back(std::move(rec));
        }
    }
    write_submission_csv(rows, (fs::path(dir) / "annotations.csv").string());
}

}  // namespace pneumoseg
