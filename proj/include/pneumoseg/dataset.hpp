#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pneumoseg/image_ops.hpp"
#include "pneumoseg/rle.hpp"
#include "pneumoseg/stats.hpp"

namespace pneumoseg {

// One image on disk plus its annotation rows. The image id is the file stem;
// annotation rows are matched against it.
struct DatasetEntry {
    std::string image_id;
    std::string path;
    bool is_dicom = false;
    std::vector<RleRecord> annotations;  // only rows with runs; negatives keep none

    bool positive() const { return !annotations.empty(); }
};

struct Dataset {
    std::string root;
    std::vector<DatasetEntry> entries;  // sorted by image_id

    std::size_t size() const { return entries.size(); }
};

// Scans `dir` for *.dcm / *.pgm and joins them with annotations.csv (header
// ImageId,EncodedPixels). Images without a row are treated as negative;
// annotation rows without an image are an error. A missing annotations.csv
// is allowed (prediction-only directory): every entry is unannotated.
Dataset load_dataset(const std::string& dir);

// Reads the entry's pixels (DICOM or PGM) with image_id filled from the stem.
DicomLite load_entry_image(const DatasetEntry& entry);

// Reads the image, reconstitutes the native-resolution mask from all of the
// entry's annotation rows, and preprocesses both to `resolution`.
Sample load_sample(const DatasetEntry& entry, int resolution, int channels);

// Parses each DICOM header for the metadata columns (PGM entries count as
// unknown sex/view).
std::vector<StatsRecord> collect_stats(const Dataset& dataset);

// Deterministic stratified split: positives and negatives are shuffled and
// cut separately so both sides keep the dataset's class balance. Returns
// (train, validation) entry indices, each sorted ascending.
std::pair<std::vector<int>, std::vector<int>> stratified_split(const Dataset& dataset,
                                                               double train_fraction,
                                                               std::uint64_t seed);

// [N,C,S,S] batch tensor / [N,1,S,S] {0,1} target tensor.
Tensor<float> stack_images(const std::vector<Sample>& samples);
Tensor<float> stack_masks(const std::vector<Sample>& samples);

}  // namespace pneumoseg
