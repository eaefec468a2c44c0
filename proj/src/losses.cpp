#include "pneumoseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "pneumoseg/errors.hpp"

namespace pneumoseg {

namespace {

template <typename T>
void check_pair(const Tensor<T>& pred, const Tensor<T>& target, const char* op) {
    if (pred.shape() != target.shape()) {
        throw ShapeError(std::string(op) + ": prediction " + shape_string(pred.shape()) +
                         " vs target " + shape_string(target.shape()));
    }
    if (pred.numel() == 0) {
        throw ShapeError(std::string(op) + ": empty tensors");
    }
}

}  // namespace

template <typename T>
Tensor<T> bce_loss(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target, T eps) {
    check_pair(pred, target, "bce_loss");
    const std::int64_t n = pred.numel();
    const T* p = pred.data();
    const T* t = target.data();

    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double pc = std::clamp<double>(p[i], eps, 1.0 - static_cast<double>(eps));
        acc -= t[i] * std::log(pc) + (1.0 - t[i]) * std::log1p(-pc);
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / n));

    if (tape && pred.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> pred_h = pred;
        Tensor<T> target_h = target;
        tape->record([pred_h, target_h, out, eps, n]() mutable {
            const T go = out.grad()[0];
            const T* pv = pred_h.data();
            const T* tv = target_h.data();
            T* pg = pred_h.grad().data();
            for (std::int64_t i = 0; i < n; ++i) {
                const double pc = std::clamp<double>(pv[i], eps, 1.0 - static_cast<double>(eps));
                pg[i] += static_cast<T>(go * (pc - tv[i]) / (pc * (1.0 - pc) * n));
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> dice_loss(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target, T smooth) {
    check_pair(pred, target, "dice_loss");
    const std::int64_t n = pred.numel();
    const T* p = pred.data();
    const T* t = target.data();

    double inter = 0.0;
    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        inter += static_cast<double>(p[i]) * t[i];
        total += static_cast<double>(p[i]) + t[i];
    }
    const double denom = total + smooth;
    const double numer = 2.0 * inter + smooth;
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(1.0 - numer / denom));

    if (tape && pred.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> pred_h = pred;
        Tensor<T> target_h = target;
        tape->record([pred_h, target_h, out, numer, denom, n]() mutable {
            const T go = out.grad()[0];
            const T* tv = target_h.data();
            T* pg = pred_h.grad().data();
            const double inv2 = 1.0 / (denom * denom);
            for (std::int64_t i = 0; i < n; ++i) {
                // loss = 1 - numer/denom with d numer/dp_i = 2*t_i, d denom/dp_i = 1.
                pg[i] += static_cast<T>(-go * (2.0 * tv[i] * denom - numer) * inv2);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> bce_dice_loss(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target) {
    Tensor<T> b = bce_loss(tape, pred, target);
    Tensor<T> d = dice_loss(tape, pred, target);
    return add(tape, b, d);
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("mask_iou: mask sizes differ");
    }
    std::int64_t inter = 0;
    std::int64_t uni = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const bool pa = a.pixels[i] != 0;
        const bool pb = b.pixels[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double mask_dsc(const BinaryMask& a, const BinaryMask& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("mask_dsc: mask sizes differ");
    }
    std::int64_t inter = 0;
    std::int64_t total = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const bool pa = a.pixels[i] != 0;
        const bool pb = b.pixels[i] != 0;
        inter += pa && pb;
        total += pa;
        total += pb;
    }
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double mean_dsc(const std::vector<BinaryMask>& predictions, const std::vector<BinaryMask>& targets) {
    if (predictions.size() != targets.size()) {
        throw ShapeError("mean_dsc: prediction/target count mismatch");
    }
    if (predictions.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        acc += mask_dsc(predictions[i], targets[i]);
    }
    return acc / static_cast<double>(predictions.size());
}

template Tensor<float> bce_loss(Tape<float>*, const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> bce_loss(Tape<double>*, const Tensor<double>&, const Tensor<double>&, double);
template Tensor<float> dice_loss(Tape<float>*, const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> dice_loss(Tape<double>*, const Tensor<double>&, const Tensor<double>&, double);
template Tensor<float> bce_dice_loss(Tape<float>*, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> bce_dice_loss(Tape<double>*, const Tensor<double>&, const Tensor<double>&);

}  // namespace pneumoseg
