#include "pneumoseg/model.hpp"

#include <algorithm>
#include <cmath>

#include "pneumoseg/errors.hpp"
#include "pneumoseg/rng.hpp"

namespace pneumoseg {

int ModelConfig::scaled(int channels) const {
    return std::max(1, static_cast<int>(std::lround(channels * width_multiplier)));
}

void ModelConfig::validate() const {
    if (in_channels != 1 && in_channels != 3) {
        throw ConfigError("model: in_channels must be 1 or 3");
    }
    if (include_channel_adapter && in_channels != 1) {
        throw ConfigError("model: the channel adapter requires 1-channel input");
    }
    if (!(width_multiplier > 0.0)) {
        throw ConfigError("model: width_multiplier must be positive");
    }
}

namespace detail {

template <typename T>
Tensor<T> ConvBn<T>::forward(Tape<T>* tape, const Tensor<T>& x, Mode mode) {
    Tensor<T> y = conv2d<T>(tape, x, weight, nullptr, stride, pad);
    return batchnorm2d(tape, y, bn, mode);
}

template <typename T>
Tensor<T> BasicBlock<T>::forward(Tape<T>* tape, const Tensor<T>& x, Mode mode) {
    Tensor<T> y = relu(tape, conv1.forward(tape, x, mode));
    y = conv2.forward(tape, y, mode);
    Tensor<T> skip = has_projection ? projection.forward(tape, x, mode) : x;
    return relu(tape, add(tape, y, skip));
}

template <typename T>
Tensor<T> DecoderBlock<T>::forward(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>* skip,
                                   Mode mode) {
    Tensor<T> y = upsample_nearest_2x(tape, x);
    if (skip) y = concat_channels(tape, y, *skip);
    y = relu(tape, conv1.forward(tape, y, mode));
    return relu(tape, conv2.forward(tape, y, mode));
}

template struct ConvBn<float>;
template struct ConvBn<double>;
template struct BasicBlock<float>;
template struct BasicBlock<double>;
template struct DecoderBlock<float>;
template struct DecoderBlock<double>;

}  // namespace detail

namespace {

template <typename T>
detail::ConvBn<T> make_conv_bn(int in_ch, int out_ch, int kernel, int stride, int pad) {
    detail::ConvBn<T> m;
    m.weight = Tensor<T>::zeros({out_ch, in_ch, kernel, kernel}, /*requires_grad=*/true);
    m.bn = BatchNorm2d<T>(out_ch);
    m.stride = {stride, stride};
    m.pad = {pad, pad};
    return m;
}

template <typename T>
detail::BasicBlock<T> make_block(int in_ch, int out_ch, int stride, bool projection) {
    detail::BasicBlock<T> b;
    b.conv1 = make_conv_bn<T>(in_ch, out_ch, 3, stride, 1);
    b.conv2 = make_conv_bn<T>(out_ch, out_ch, 3, 1, 1);
    b.has_projection = projection;
    if (projection) {
        b.projection = make_conv_bn<T>(in_ch, out_ch, 1, stride, 0);
    }
    return b;
}

template <typename T>
detail::DecoderBlock<T> make_decoder(int in_ch, int out_ch) {
    detail::DecoderBlock<T> d;
    d.conv1 = make_conv_bn<T>(in_ch, out_ch, 3, 1, 1);
    d.conv2 = make_conv_bn<T>(out_ch, out_ch, 3, 1, 1);
    return d;
}

}  // namespace

template <typename T>
ResNet34UNet<T>::ResNet34UNet(const ModelConfig& config, std::uint64_t init_seed)
    : config_(config) {
    config_.validate();

    const int c64 = config_.scaled(64);
    const int c128 = config_.scaled(128);
    const int c256 = config_.scaled(256);
    const int c512 = config_.scaled(512);

    if (config_.include_channel_adapter) {
        adapter_weight_ = Tensor<T>::zeros({3, 1, 1, 1}, true);
        adapter_bias_ = Tensor<T>::zeros({3}, true);
    }
    const int stem_in = config_.include_channel_adapter ? 3 : config_.in_channels;
    stem_ = make_conv_bn<T>(stem_in, c64, 7, 2, 3);

    const int stage_channels[4] = {c64, c128, c256, c512};
    const int stage_blocks[4] = {3, 4, 6, 3};
    int in_ch = c64;
    for (int s = 0; s < 4; ++s) {
        const int out_ch = stage_channels[s];
        // Stage 1 keeps stride 1 (the maxpool already halved); later stages
        // downsample in their first block. Every first block projects.
        const int first_stride = s == 0 ? 1 : 2;
        for (int b = 0; b < stage_blocks[s]; ++b) {
            const bool first = b == 0;
            encoders_[s].push_back(
                make_block<T>(first ? in_ch : out_ch, out_ch, first ? first_stride : 1, first));
        }
        in_ch = out_ch;
    }

    const int d1 = config_.scaled(256);
    const int d2 = config_.scaled(128);
    const int d3 = config_.scaled(64);
    const int d4 = config_.scaled(32);
    const int d5 = config_.scaled(16);
    decoders_[0] = make_decoder<T>(c512 + c256, d1);
    decoders_[1] = make_decoder<T>(d1 + c128, d2);
    decoders_[2] = make_decoder<T>(d2 + c64, d3);
    decoders_[3] = make_decoder<T>(d3 + c64, d4);  // skip = stem output, pre-maxpool
    decoders_[4] = make_decoder<T>(d4, d5);        // no skip at full resolution

    head_weight_ = Tensor<T>::zeros({1, d5, 3, 3}, true);
    head_bias_ = Tensor<T>::zeros({1}, true);

    init_weights(init_seed);
}

template <typename T>
Tensor<T> ResNet34UNet<T>::forward(Tape<T>* tape, const Tensor<T>& input, Mode mode,
                                   ForwardTrace* trace) {
    if (input.rank() != 4) {
        throw ShapeError("model: expected NCHW input, got " + shape_string(input.shape()));
    }
    if (input.dim(1) != config_.in_channels) {
        throw ShapeError("model: expected " + std::to_string(config_.in_channels) +
                         " input channels, got " + std::to_string(input.dim(1)));
    }
    if (input.dim(2) % 32 != 0 || input.dim(3) % 32 != 0 || input.dim(2) < 32 || input.dim(3) < 32) {
        throw ShapeError("model: input height and width must be multiples of 32");
    }
    auto tap = [trace](const char* name, const Tensor<T>& t) {
        if (trace) trace->push_back({name, t.shape()});
    };

    Tensor<T> x = input;
    if (config_.include_channel_adapter) {
        x = conv2d(tape, x, adapter_weight_, &adapter_bias_, Stride{1, 1}, Padding{0, 0});
        tap("adapter", x);
    }
    Tensor<T> stem = relu(tape, stem_.forward(tape, x, mode));
    tap("conv1", stem);
    Tensor<T> pooled = maxpool2d(tape, stem, 3, 3, Stride{2, 2}, Padding{1, 1});
    tap("maxpool", pooled);

    Tensor<T> enc[4];
    Tensor<T> cur = pooled;
    for (int s = 0; s < 4; ++s) {
        for (auto& block : encoders_[s]) cur = block.forward(tape, cur, mode);
        enc[s] = cur;
        tap(("encoder" + std::to_string(s + 1)).c_str(), cur);
    }

    Tensor<T> y = decoders_[0].forward(tape, enc[3], &enc[2], mode);
    tap("decoder1", y);
    y = decoders_[1].forward(tape, y, &enc[1], mode);
    tap("decoder2", y);
    y = decoders_[2].forward(tape, y, &enc[0], mode);
    tap("decoder3", y);
    y = decoders_[3].forward(tape, y, &stem, mode);
    tap("decoder4", y);
    y = decoders_[4].forward(tape, y, nullptr, mode);
    tap("decoder5", y);

    y = conv2d(tape, y, head_weight_, &head_bias_, Stride{1, 1}, Padding{1, 1});
    y = sigmoid(tape, y);
    tap("output", y);
    return y;
}

template <typename T>
std::vector<NamedTensor<T>> ResNet34UNet<T>::named_tensors() {
    std::vector<NamedTensor<T>> out;
    auto add_bn = [&out](const std::string& prefix, BatchNorm2d<T>& bn) {
        out.push_back({prefix + ".gamma", bn.gamma, false});
        out.push_back({prefix + ".beta", bn.beta, false});
        out.push_back({prefix + ".running_mean", bn.running_mean, true});
        out.push_back({prefix + ".running_var", bn.running_var, true});
    };
    auto add_conv_bn = [&](const std::string& prefix, detail::ConvBn<T>& m) {
        out.push_back({prefix + ".weight", m.weight, false});
        add_bn(prefix + ".bn", m.bn);
    };

    if (config_.include_channel_adapter) {
        out.push_back({"adapter.weight", adapter_weight_, false});
        out.push_back({"adapter.bias", adapter_bias_, false});
    }
    add_conv_bn("stem", stem_);
    for (int s = 0; s < 4; ++s) {
        for (std::size_t b = 0; b < encoders_[s].size(); ++b) {
            const std::string prefix =
                "encoder" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
            auto& block = encoders_[s][b];
            add_conv_bn(prefix + ".conv1", block.conv1);
            add_conv_bn(prefix + ".conv2", block.conv2);
            if (block.has_projection) add_conv_bn(prefix + ".proj", block.projection);
        }
    }
    for (int d = 0; d < 5; ++d) {
        const std::string prefix = "decoder" + std::to_string(d + 1);
        add_conv_bn(prefix + ".conv1", decoders_[d].conv1);
        add_conv_bn(prefix + ".conv2", decoders_[d].conv2);
    }
    out.push_back({"head.weight", head_weight_, false});
    out.push_back({"head.bias", head_bias_, false});
    return out;
}

template <typename T>
std::vector<Tensor<T>> ResNet34UNet<T>::parameters() {
    std::vector<Tensor<T>> out;
    for (auto& nt : named_tensors()) {
        if (!nt.is_buffer) out.push_back(nt.tensor);
    }
    return out;
}

template <typename T>
std::vector<BatchNorm2d<T>*> ResNet34UNet<T>::batchnorm_modules() {
    std::vector<BatchNorm2d<T>*> out;
    out.push_back(&stem_.bn);
    for (int s = 0; s < 4; ++s) {
        for (auto& block : encoders_[s]) {
            out.push_back(&block.conv1.bn);
            out.push_back(&block.conv2.bn);
            if (block.has_projection) out.push_back(&block.projection.bn);
        }
    }
    for (int d = 0; d < 5; ++d) {
        out.push_back(&decoders_[d].conv1.bn);
        out.push_back(&decoders_[d].conv2.bn);
    }
    return out;
}

template <typename T>
std::int64_t ResNet34UNet<T>::parameter_count() {
    std::int64_t n = 0;
    for (auto& p : parameters()) n += p.numel();
    return n;
}

template <typename T>
void ResNet34UNet<T>::init_weights(std::uint64_t seed) {
    Rng rng = Rng::stream(seed, 0x6d6f64656c, 0);  // "model"
    auto he_fill = [&rng](Tensor<T>& w) {
        // Kaiming-normal over fan-in = Cin * kh * kw.
        const double fan_in = static_cast<double>(w.dim(1)) * w.dim(2) * w.dim(3);
        const double stddev = std::sqrt(2.0 / fan_in);
        for (T& v : w.values()) v = static_cast<T>(rng.normal() * stddev);
    };
    for (auto& nt : named_tensors()) {
        if (nt.tensor.rank() == 4) {
            he_fill(nt.tensor);
        }
    }
    // BN affine and running stats get identity values; biases stay zero.
    for (auto* bn : batchnorm_modules()) {
        std::fill(bn->gamma.values().begin(), bn->gamma.values().end(), T(1));
        std::fill(bn->beta.values().begin(), bn->beta.values().end(), T(0));
        bn->reset_running_stats();
    }
}

template class ResNet34UNet<float>;
template class ResNet34UNet<double>;

}  // namespace pneumoseg
