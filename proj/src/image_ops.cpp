#include "pneumoseg/image_ops.hpp"

#include <algorithm>
#include <cmath>

#include "pneumoseg/errors.hpp"

namespace pneumoseg {

std::vector<float> resize_bilinear(const std::vector<float>& src, int src_h, int src_w,
                                   int dst_h, int dst_w) {
    if (dst_h <= 0 || dst_w <= 0) throw ShapeError("resize_bilinear: target must be positive");
    if (static_cast<std::size_t>(src_h) * src_w != src.size()) {
        throw ShapeError("resize_bilinear: source size mismatch");
    }
    if (src_h == dst_h && src_w == dst_w) return src;

    std::vector<float> dst(static_cast<std::size_t>(dst_h) * dst_w);
    const float scale_y = static_cast<float>(src_h) / static_cast<float>(dst_h);
    const float scale_x = static_cast<float>(src_w) / static_cast<float>(dst_w);
    for (int y = 0; y < dst_h; ++y) {
        float sy = (static_cast<float>(y) + 0.5f) * scale_y - 0.5f;
        sy = std::clamp(sy, 0.0f, static_cast<float>(src_h - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, src_h - 1);
        const float fy = sy - static_cast<float>(y0);
        for (int x = 0; x < dst_w; ++x) {
            float sx = (static_cast<float>(x) + 0.5f) * scale_x - 0.5f;
            sx = std::clamp(sx, 0.0f, static_cast<float>(src_w - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, src_w - 1);
            const float fx = sx - static_cast<float>(x0);
            const float top = src[static_cast<std::size_t>(y0) * src_w + x0] * (1.0f - fx) +
                              src[static_cast<std::size_t>(y0) * src_w + x1] * fx;
            const float bot = src[static_cast<std::size_t>(y1) * src_w + x0] * (1.0f - fx) +
                              src[static_cast<std::size_t>(y1) * src_w + x1] * fx;
            dst[static_cast<std::size_t>(y) * dst_w + x] = top * (1.0f - fy) + bot * fy;
        }
    }
    return dst;
}

BinaryMask resize_mask(const BinaryMask& mask, int dst_h, int dst_w) {
    if (dst_h <= 0 || dst_w <= 0) throw ShapeError("resize_mask: target must be positive");
    if (mask.height == dst_h && mask.width == dst_w) return mask;

    BinaryMask out(dst_h, dst_w);
    const float scale_y = static_cast<float>(mask.height) / static_cast<float>(dst_h);
    const float scale_x = static_cast<float>(mask.width) / static_cast<float>(dst_w);
    for (int y = 0; y < dst_h; ++y) {
        int sy = static_cast<int>((static_cast<float>(y) + 0.5f) * scale_y);
        sy = std::min(sy, mask.height - 1);
        for (int x = 0; x < dst_w; ++x) {
            int sx = static_cast<int>((static_cast<float>(x) + 0.5f) * scale_x);
            sx = std::min(sx, mask.width - 1);
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

std::vector<float> window_to_8bit(const DicomLite& d) {
    std::vector<float> out(d.pixel_data.size());
    if (d.bits_allocated == 8) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(d.pixel_data[i]);
        return out;
    }
    std::uint16_t lo = 0xFFFF, hi = 0;
    for (std::uint16_t p : d.pixel_data) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    const float span = (hi > lo) ? static_cast<float>(hi - lo) : 1.0f;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = 255.0f * (static_cast<float>(d.pixel_data[i]) - static_cast<float>(lo)) / span;
    }
    return out;
}

Tensor<float> normalize_to_tensor(const std::vector<float>& gray8, int h, int w, int channels) {
    if (channels != 1 && channels != 3) throw ShapeError("normalize: channels must be 1 or 3");
    Tensor<float> img = Tensor<float>::zeros({channels, h, w});
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (std::int64_t i = 0; i < plane; ++i) {
        const float v = gray8[static_cast<std::size_t>(i)] / 255.0f;
        for (int c = 0; c < channels; ++c) img.data()[c * plane + i] = v;
    }
    return img;
}

Sample make_sample(const DicomLite& d, const BinaryMask& native_mask, int size, int channels,
                   const std::string& id) {
    std::vector<float> gray = window_to_8bit(d);
    gray = resize_bilinear(gray, d.rows, d.columns, size, size);
    Sample s;
    s.image = normalize_to_tensor(gray, size, size, channels);
    s.mask = resize_mask(native_mask, size, size);
    s.id = id;
    return s;
}

}  // namespace pneumoseg
