#pragma once

#include "pneumoseg/tensor.hpp"

namespace pneumoseg {

struct Stride {
    int h = 1;
    int w = 1;
};

struct Padding {
    int h = 0;
    int w = 0;
};

enum class Mode { kTrain, kEval };

// Learnable per-channel normalization state. running_* are buffers, not
// parameters; in kEval the output is a pure function of input and buffers.
template <typename T>
struct BatchNorm2d {
    Tensor<T> gamma;         // [C]
    Tensor<T> beta;          // [C]
    Tensor<T> running_mean;  // [C]
    Tensor<T> running_var;   // [C], kept strictly positive
    T momentum = T(0.1);
    T eps = T(1e-5);

    explicit BatchNorm2d(int channels);
    BatchNorm2d() = default;
    int channels() const { return gamma.dim(0); }
    void reset_running_stats();
};

// 2-D cross-correlation, NCHW. weight is [Cout,Cin,kh,kw], bias optional
// [Cout]. H' = floor((H + 2*pad.h - kh) / stride.h) + 1, same for width.
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>* bias, Stride stride, Padding pad);

// Per-window maximum; out-of-bounds padding cells never win. Backward routes
// the gradient to the argmax, first element in row-major window order on ties.
template <typename T>
Tensor<T> maxpool2d(Tape<T>* tape, const Tensor<T>& input, int kernel_h, int kernel_w,
                    Stride stride, Padding pad);

// kTrain normalizes by batch statistics and updates running stats with
// bn.momentum (biased variance in the normalizer, unbiased in the running
// update); kEval uses the stored statistics.
template <typename T>
Tensor<T> batchnorm2d(Tape<T>* tape, const Tensor<T>& input, BatchNorm2d<T>& bn, Mode mode);

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& input);

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& input);

// Each pixel replicated into a 2x2 block; backward sums the four gradients.
template <typename T>
Tensor<T> upsample_nearest_2x(Tape<T>* tape, const Tensor<T>& input);

// Channels of a then b. N, H, W must match exactly (no implicit cropping).
template <typename T>
Tensor<T> concat_channels(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

}  // namespace pneumoseg
