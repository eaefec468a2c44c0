#pragma once

#include <cstdint>
#include <string>

#include "pneumoseg/dicom.hpp"
#include "pneumoseg/rle.hpp"

namespace pneumoseg {

// Procedural chest-like fixtures: textured background, two dark lung fields,
// and (for positives) a bright elliptical collapse region that doubles as
// the ground-truth mask. Small enough to train on in minutes, structured
// enough that blind guessing scores poorly.
struct SyntheticSpec {
    int count = 200;
    int size = 64;
    double positive_fraction = 0.5;
    std::uint64_t seed = 1234;
    bool as_pgm = false;  // write .pgm files instead of .dcm
};

struct SyntheticItem {
    DicomLite image;
    BinaryMask mask;
};

// Deterministic in (seed, index, size); `positive` selects whether a target
// region is drawn.
SyntheticItem synthesize_item(std::uint64_t seed, int index, int size, bool positive);

// Writes images plus annotations.csv into `dir` (created if needed). Some
// positive annotations are split across two CSV rows to exercise the
// multi-annotation path.
void generate_synthetic_dataset(const SyntheticSpec& spec, const std::string& dir);

}  // namespace pneumoseg
