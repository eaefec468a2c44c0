#pragma once

#include <string>
#include <vector>

#include "pneumoseg/dicom.hpp"
#include "pneumoseg/rle.hpp"
#include "pneumoseg/tensor.hpp"

namespace pneumoseg {

// One training/inference unit: [C,S,S] image in [0,1] plus its SxS mask.
// Channels are identical copies when the source is grayscale.
struct Sample {
    Tensor<float> image;
    BinaryMask mask;
    std::string id;
};

// Bilinear resample, center-aligned sampling (the align-corners-off
// convention): src = (dst + 0.5) * scale - 0.5, clamped at the borders.
std::vector<float> resize_bilinear(const std::vector<float>& src, int src_h, int src_w,
                                   int dst_h, int dst_w);

// Nearest-neighbour mask resample; output stays strictly {0,1}.
BinaryMask resize_mask(const BinaryMask& mask, int dst_h, int dst_w);

// Min-max window arbitrary-depth pixels to 0..255 floats. 8-bit data passes
// through untouched.
std::vector<float> window_to_8bit(const DicomLite& d);

// 0..255 grayscale plane -> [channels,S,S] tensor in [0,1], channel-replicated.
Tensor<float> normalize_to_tensor(const std::vector<float>& gray8, int h, int w, int channels);

// Full preprocessing: window, resize to size x size, normalize, resize mask.
Sample make_sample(const DicomLite& d, const BinaryMask& native_mask, int size, int channels,
                   const std::string& id);

}  // namespace pneumoseg
