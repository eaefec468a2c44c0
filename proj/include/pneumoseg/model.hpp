#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pneumoseg/nn_ops.hpp"
#include "pneumoseg/tensor.hpp"

namespace pneumoseg {

struct ModelConfig {
    int in_channels = 3;
    // Scales every channel count; 1.0 is the full network, 0.25 the desk-
    // scale profile. Extents never drop below 1.
    double width_multiplier = 1.0;
    // Learnable 1x1 conv lifting 1-channel input to 3 before the stem.
    bool include_channel_adapter = false;

    int scaled(int channels) const;
    void validate() const;
};

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
    bool is_buffer = false;  // running statistics rather than a parameter
};

struct TraceEntry {
    std::string name;
    std::vector<int> shape;
};
using ForwardTrace = std::vector<TraceEntry>;

namespace detail {

template <typename T>
struct ConvBn {
    Tensor<T> weight;
    BatchNorm2d<T> bn;
    Stride stride;
    Padding pad;

    Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x, Mode mode);
};

// Two 3x3 conv+BN with a residual connection; the skip is identity unless a
// 1x1 projection is present (channel or stride change, and the first block
// of every encoder stage).
template <typename T>
struct BasicBlock {
    ConvBn<T> conv1;  // stride = block stride
    ConvBn<T> conv2;  // stride 1
    bool has_projection = false;
    ConvBn<T> projection;  // 1x1, stride = block stride

    Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x, Mode mode);
};

// Upsample 2x, concatenate the skip (when present), then two conv+BN+ReLU.
template <typename T>
struct DecoderBlock {
    ConvBn<T> conv1;
    ConvBn<T> conv2;

    Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>* skip, Mode mode);
};

}  // namespace detail

// ResNet-34 encoder / U-Net decoder with a sigmoid head. Input is NCHW with
// H and W multiples of 32 (five halvings must invert exactly).
template <typename T>
class ResNet34UNet {
public:
    explicit ResNet34UNet(const ModelConfig& config, std::uint64_t init_seed = 0);

    // Non-const: kTrain updates BatchNorm running statistics. When trace is
    // given, every stage appends its output shape.
    Tensor<T> forward(Tape<T>* tape, const Tensor<T>& input, Mode mode,
                      ForwardTrace* trace = nullptr);

    std::vector<Tensor<T>> parameters();             // trainable, stable order
    std::vector<NamedTensor<T>> named_tensors();     // parameters + buffers
    std::vector<BatchNorm2d<T>*> batchnorm_modules();
    std::int64_t parameter_count();

    const ModelConfig& config() const { return config_; }

private:
    void init_weights(std::uint64_t seed);

    ModelConfig config_;
    Tensor<T> adapter_weight_;  // defined only with include_channel_adapter
    Tensor<T> adapter_bias_;
    detail::ConvBn<T> stem_;
    std::vector<detail::BasicBlock<T>> encoders_[4];
    detail::DecoderBlock<T> decoders_[5];
    Tensor<T> head_weight_;
    Tensor<T> head_bias_;
};

}  // namespace pneumoseg
