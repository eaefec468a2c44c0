#pragma once

#include <string>
#include <vector>

#include "pneumoseg/dicom.hpp"

namespace pneumoseg {

// One study's worth of metadata for the dataset breakdown.
struct StatsRecord {
    Sex sex = Sex::kUnknown;
    ViewPosition view = ViewPosition::kUnknown;
    bool has_pneumothorax = false;
    int annotation_count = 0;  // non-empty RLE rows for this image
};

struct StatsCell {
    int positive = 0;
    int negative = 0;
    int total() const { return positive + negative; }
};

struct StatsReport {
    StatsCell female, male, unknown_sex;
    StatsCell ap, pa, unknown_view;
    int positives = 0;
    int negatives = 0;
    int single_mask = 0;  // positives with exactly one annotation
    int multi_mask = 0;   // positives with more than one
    int total = 0;
};

StatsReport dataset_stats(const std::vector<StatsRecord>& records);

// Aligned human-readable table / machine-readable CSV.
std::string render_stats_table(const StatsReport& r);
std::string render_stats_csv(const StatsReport& r);

}  // namespace pneumoseg
