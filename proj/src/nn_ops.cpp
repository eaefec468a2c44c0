#include "pneumoseg/nn_ops.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "pneumoseg/errors.hpp"
#include "pneumoseg/gemm.hpp"
#include "pneumoseg/parallel.hpp"

namespace pneumoseg {

namespace {

template <typename T>
void require_rank4(const Tensor<T>& t, const char* op) {
    if (t.rank() != 4) {
        throw ShapeError(std::string(op) + ": expected NCHW input, got shape " +
                         shape_string(t.shape()));
    }
}

inline int out_extent(int in, int pad, int k, int stride) {
    return (in + 2 * pad - k) / stride + 1;
}

// Gathers one image into a [Cin*kh*kw, Hout*Wout] matrix, zero-filling the
// out-of-bounds taps.
template <typename T>
void im2col(const T* img, int C, int H, int W, int kh, int kw,
            Stride stride, Padding pad, int Hout, int Wout, T* col) {
    const std::int64_t plane = static_cast<std::int64_t>(Hout) * Wout;
    for (int c = 0; c < C; ++c) {
        const T* src = img + static_cast<std::int64_t>(c) * H * W;
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                T* dst = col + ((static_cast<std::int64_t>(c) * kh + i) * kw + j) * plane;
                for (int y = 0; y < Hout; ++y) {
                    const int sy = y * stride.h + i - pad.h;
                    T* row = dst + static_cast<std::int64_t>(y) * Wout;
                    if (sy < 0 || sy >= H) {
                        std::memset(row, 0, sizeof(T) * static_cast<std::size_t>(Wout));
                        continue;
                    }
                    const T* srow = src + static_cast<std::int64_t>(sy) * W;
                    for (int x = 0; x < Wout; ++x) {
                        const int sx = x * stride.w + j - pad.w;
                        row[x] = (sx >= 0 && sx < W) ? srow[sx] : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-adds a column matrix back into image layout (adjoint of im2col).
template <typename T>
void col2im(const T* col, int C, int H, int W, int kh, int kw,
            Stride stride, Padding pad, int Hout, int Wout, T* img) {
    const std::int64_t plane = static_cast<std::int64_t>(Hout) * Wout;
    for (int c = 0; c < C; ++c) {
        T* dst = img + static_cast<std::int64_t>(c) * H * W;
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const T* src = col + ((static_cast<std::int64_t>(c) * kh + i) * kw + j) * plane;
                for (int y = 0; y < Hout; ++y) {
                    const int sy = y * stride.h + i - pad.h;
                    if (sy < 0 || sy >= H) continue;
                    const T* srow = src + static_cast<std::int64_t>(y) * Wout;
                    T* drow = dst + static_cast<std::int64_t>(sy) * W;
                    for (int x = 0; x < Wout; ++x) {
                        const int sx = x * stride.w + j - pad.w;
                        if (sx >= 0 && sx < W) drow[sx] += srow[x];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels) {
    gamma = Tensor<T>::full({channels}, T(1), true);
    beta = Tensor<T>::zeros({channels}, true);
    running_mean = Tensor<T>::zeros({channels});
    running_var = Tensor<T>::full({channels}, T(1));
}

template <typename T>
void BatchNorm2d<T>::reset_running_stats() {
    std::fill(running_mean.values().begin(), running_mean.values().end(), T(0));
    std::fill(running_var.values().begin(), running_var.values().end(), T(1));
}

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>* bias, Stride stride, Padding pad) {
    require_rank4(input, "conv2d");
    if (weight.rank() != 4) {
        throw ShapeError("conv2d: weight must be [Cout,Cin,kh,kw], got " +
                         shape_string(weight.shape()));
    }
    const int N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != Cin) {
        throw ShapeError("conv2d: input has " + std::to_string(Cin) +
                         " channels but weight expects " + std::to_string(weight.dim(1)));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != Cout)) {
        throw ShapeError("conv2d: bias must be [Cout]");
    }
    if (stride.h < 1 || stride.w < 1 || pad.h < 0 || pad.w < 0) {
        throw ShapeError("conv2d: stride must be positive and padding non-negative");
    }
    if (H + 2 * pad.h < kh || W + 2 * pad.w < kw) {
        throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than padded input " + shape_string(input.shape()));
    }
    const int Hout = out_extent(H, pad.h, kh, stride.h);
    const int Wout = out_extent(W, pad.w, kw, stride.w);
    const std::int64_t K = static_cast<std::int64_t>(Cin) * kh * kw;
    const std::int64_t plane = static_cast<std::int64_t>(Hout) * Wout;

    Tensor<T> out = Tensor<T>::zeros({N, Cout, Hout, Wout});
    std::vector<T> col(static_cast<std::size_t>(K * plane));
    for (int n = 0; n < N; ++n) {
        const T* img = input.data() + static_cast<std::int64_t>(n) * Cin * H * W;
        T* dst = out.data() + static_cast<std::int64_t>(n) * Cout * plane;
        im2col(img, Cin, H, W, kh, kw, stride, pad, Hout, Wout, col.data());
        if (bias) {
            for (int c = 0; c < Cout; ++c) {
                T* row = dst + static_cast<std::int64_t>(c) * plane;
                const T b = bias->data()[c];
                for (std::int64_t i = 0; i < plane; ++i) row[i] = b;
            }
        }
        detail::gemm_nn(Cout, plane, K, weight.data(), col.data(), dst);
    }

    const bool needs_grad = input.requires_grad() || weight.requires_grad() ||
                            (bias && bias->requires_grad());
    if (tape && needs_grad) {
        out.set_requires_grad(true);
        Tensor<T> in_c = input, w_c = weight, out_c = out;
        Tensor<T> b_c = bias ? *bias : Tensor<T>();
        tape->record([in_c, w_c, b_c, out_c, stride, pad, kh, kw, Hout, Wout]() mutable {
            const int N = in_c.dim(0), Cin = in_c.dim(1), H = in_c.dim(2), W = in_c.dim(3);
            const int Cout = w_c.dim(0);
            const std::int64_t K = static_cast<std::int64_t>(Cin) * kh * kw;
            const std::int64_t plane = static_cast<std::int64_t>(Hout) * Wout;
            const T* gout = out_c.grad().data();
            std::vector<T> col(static_cast<std::size_t>(K * plane));
            std::vector<T> gcol;
            if (in_c.requires_grad()) gcol.resize(static_cast<std::size_t>(K * plane));
            for (int n = 0; n < N; ++n) {
                const T* go = gout + static_cast<std::int64_t>(n) * Cout * plane;
                if (w_c.requires_grad()) {
                    // dW += dOut * col^T  (col recomputed; cheaper than caching)
                    im2col(in_c.data() + static_cast<std::int64_t>(n) * Cin * H * W,
                           Cin, H, W, kh, kw, stride, pad, Hout, Wout, col.data());
                    detail::gemm_nt(Cout, K, plane, go, col.data(), w_c.grad().data());
                }
                if (in_c.requires_grad()) {
                    std::fill(gcol.begin(), gcol.end(), T(0));
                    detail::gemm_tn(K, plane, Cout, w_c.data(), go, gcol.data());
                    col2im(gcol.data(), Cin, H, W, kh, kw, stride, pad, Hout, Wout,
                           in_c.grad().data() + static_cast<std::int64_t>(n) * Cin * H * W);
                }
            }
            if (b_c.defined() && b_c.requires_grad()) {
                auto& gb = b_c.grad();
                for (int n = 0; n < N; ++n) {
                    for (int c = 0; c < Cout; ++c) {
                        const T* go = gout + (static_cast<std::int64_t>(n) * Cout + c) * plane;
                        T acc = T(0);
                        for (std::int64_t i = 0; i < plane; ++i) acc += go[i];
                        gb[static_cast<std::size_t>(c)] += acc;
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> maxpool2d(Tape<T>* tape, const Tensor<T>& input, int kernel_h, int kernel_w,
                    Stride stride, Padding pad) {
    require_rank4(input, "maxpool2d");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (H + 2 * pad.h < kernel_h || W + 2 * pad.w < kernel_w) {
        throw ShapeError("maxpool2d: kernel larger than padded input");
    }
    if (pad.h >= kernel_h || pad.w >= kernel_w) {
        throw ShapeError("maxpool2d: padding must be smaller than the kernel");
    }
    const int Hout = out_extent(H, pad.h, kernel_h, stride.h);
    const int Wout = out_extent(W, pad.w, kernel_w, stride.w);

    Tensor<T> out = Tensor<T>::zeros({N, C, Hout, Wout});
    const std::int64_t n_out = out.numel();
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n_out));

    const std::int64_t planes = static_cast<std::int64_t>(N) * C;
    parallel_for(0, planes, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t p = lo; p < hi; ++p) {
            const T* src = input.data() + p * H * W;
            T* dst = out.data() + p * Hout * Wout;
            std::int64_t* amax = argmax->data() + p * Hout * Wout;
            for (int y = 0; y < Hout; ++y) {
                for (int x = 0; x < Wout; ++x) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::int64_t best_idx = -1;
                    for (int i = 0; i < kernel_h; ++i) {
                        const int sy = y * stride.h + i - pad.h;
                        if (sy < 0 || sy >= H) continue;
                        for (int j = 0; j < kernel_w; ++j) {
                            const int sx = x * stride.w + j - pad.w;
                            if (sx < 0 || sx >= W) continue;
                            const T v = src[static_cast<std::int64_t>(sy) * W + sx];
                            if (v > best) {  // strict: first occurrence wins ties
                                best = v;
                                best_idx = static_cast<std::int64_t>(sy) * W + sx;
                            }
                        }
                    }
                    dst[static_cast<std::int64_t>(y) * Wout + x] = best;
                    amax[static_cast<std::int64_t>(y) * Wout + x] = p * H * W + best_idx;
                }
            }
        }
    });

    if (tape && input.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> in_c = input, out_c = out;
        tape->record([in_c, out_c, argmax]() mutable {
            const auto& go = out_c.grad();
            auto& gi = in_c.grad();
            for (std::size_t i = 0; i < go.size(); ++i) {
                gi[static_cast<std::size_t>((*argmax)[i])] += go[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> batchnorm2d(Tape<T>* tape, const Tensor<T>& input, BatchNorm2d<T>& bn, Mode mode) {
    require_rank4(input, "batchnorm2d");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (C != bn.channels()) {
        throw ShapeError("batchnorm2d: input has " + std::to_string(C) +
                         " channels, state has " + std::to_string(bn.channels()));
    }
    const std::int64_t m = static_cast<std::int64_t>(N) * H * W;  // elements per channel
    if (mode == Mode::kTrain && m < 2) {
        throw ShapeError("batchnorm2d: train mode needs at least 2 elements per channel");
    }

    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    Tensor<T> out = Tensor<T>::zeros(input.shape());

    std::vector<T> mean(static_cast<std::size_t>(C)), var(static_cast<std::size_t>(C));
    if (mode == Mode::kTrain) {
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* src = input.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) acc += static_cast<double>(src[i]);
            }
            const double mu = acc / static_cast<double>(m);
            double vacc = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* src = input.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const double d = static_cast<double>(src[i]) - mu;
                    vacc += d * d;
                }
            }
            mean[static_cast<std::size_t>(c)] = static_cast<T>(mu);
            var[static_cast<std::size_t>(c)] = static_cast<T>(vacc / static_cast<double>(m));
        }
        // Exponential running update; unbiased variance, PyTorch convention.
        const T mom = bn.momentum;
        for (int c = 0; c < C; ++c) {
            T& rm = bn.running_mean.values()[static_cast<std::size_t>(c)];
            T& rv = bn.running_var.values()[static_cast<std::size_t>(c)];
            rm = (T(1) - mom) * rm + mom * mean[static_cast<std::size_t>(c)];
            const T unbiased = var[static_cast<std::size_t>(c)] *
                               static_cast<T>(static_cast<double>(m) / static_cast<double>(m - 1));
            rv = (T(1) - mom) * rv + mom * unbiased;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[static_cast<std::size_t>(c)] = bn.running_mean.values()[static_cast<std::size_t>(c)];
            var[static_cast<std::size_t>(c)] = bn.running_var.values()[static_cast<std::size_t>(c)];
        }
    }

    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T inv_std = T(1) / std::sqrt(var[static_cast<std::size_t>(c)] + bn.eps);
            const T g = bn.gamma.values()[static_cast<std::size_t>(c)];
            const T b = bn.beta.values()[static_cast<std::size_t>(c)];
            const T mu = mean[static_cast<std::size_t>(c)];
            const T* src = input.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
            T* dst = out.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) dst[i] = (src[i] - mu) * inv_std * g + b;
        }
    }

    const bool needs_grad =
        input.requires_grad() || bn.gamma.requires_grad() || bn.beta.requires_grad();
    if (tape && needs_grad) {
        out.set_requires_grad(true);
        Tensor<T> in_c = input, out_c = out, gamma_c = bn.gamma, beta_c = bn.beta;
        auto mean_c = std::make_shared<std::vector<T>>(std::move(mean));
        auto var_c = std::make_shared<std::vector<T>>(std::move(var));
        const T eps = bn.eps;
        const bool train = (mode == Mode::kTrain);
        tape->record([in_c, out_c, gamma_c, beta_c, mean_c, var_c, eps, train]() mutable {
            const int N = in_c.dim(0), C = in_c.dim(1), H = in_c.dim(2), W = in_c.dim(3);
            const std::int64_t plane = static_cast<std::int64_t>(H) * W;
            const std::int64_t m = static_cast<std::int64_t>(N) * plane;
            const auto& go = out_c.grad();
            for (int c = 0; c < C; ++c) {
                const T mu = (*mean_c)[static_cast<std::size_t>(c)];
                const T inv_std = T(1) / std::sqrt((*var_c)[static_cast<std::size_t>(c)] + eps);
                const T g = gamma_c.values()[static_cast<std::size_t>(c)];
                // Channel reductions: sum(dy), sum(dy * xhat).
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int n = 0; n < N; ++n) {
                    const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * plane;
                    const T* x = in_c.data() + base;
                    const T* dy = go.data() + base;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        const double xhat = (static_cast<double>(x[i]) - mu) * inv_std;
                        sum_dy += static_cast<double>(dy[i]);
                        sum_dy_xhat += static_cast<double>(dy[i]) * xhat;
                    }
                }
                if (gamma_c.requires_grad()) {
                    gamma_c.grad()[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy_xhat);
                }
                if (beta_c.requires_grad()) {
                    beta_c.grad()[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy);
                }
                if (in_c.requires_grad()) {
                    auto& gi = in_c.grad();
                    const double mean_dy = sum_dy / static_cast<double>(m);
                    const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(m);
                    for (int n = 0; n < N; ++n) {
                        const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * plane;
                        const T* x = in_c.data() + base;
                        const T* dy = go.data() + base;
                        T* dx = gi.data() + base;
                        if (train) {
                            for (std::int64_t i = 0; i < plane; ++i) {
                                const double xhat = (static_cast<double>(x[i]) - mu) * inv_std;
                                dx[i] += static_cast<T>(
                                    static_cast<double>(g) * static_cast<double>(inv_std) *
                                    (static_cast<double>(dy[i]) - mean_dy - xhat * mean_dy_xhat));
                            }
                        } else {
                            // Eval stats are constants: plain per-channel affine.
                            for (std::int64_t i = 0; i < plane; ++i) dx[i] += dy[i] * g * inv_std;
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& input) {
    const std::int64_t n = input.numel();
    Tensor<T> out = Tensor<T>::zeros(input.shape());
    const T* pi = input.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pi[i] > T(0) ? pi[i] : T(0);
    if (tape && input.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> in_c = input, out_c = out;
        tape->record([in_c, out_c]() mutable {
            const auto& go = out_c.grad();
            auto& gi = in_c.grad();
            const T* x = in_c.data();
            for (std::size_t i = 0; i < go.size(); ++i) {
                if (x[i] > T(0)) gi[i] += go[i];  // subgradient at 0 is 0
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& input) {
    const std::int64_t n = input.numel();
    Tensor<T> out = Tensor<T>::zeros(input.shape());
    const T* pi = input.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = T(1) / (T(1) + std::exp(-pi[i]));
    if (tape && input.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> in_c = input, out_c = out;
        tape->record([in_c, out_c]() mutable {
            const auto& go = out_c.grad();
            auto& gi = in_c.grad();
            const T* s = out_c.data();
            for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * s[i] * (T(1) - s[i]);
        });
    }
    return out;
}

template <typename T>
Tensor<T> upsample_nearest_2x(Tape<T>* tape, const Tensor<T>& input) {
    require_rank4(input, "upsample_nearest_2x");
    const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    Tensor<T> out = Tensor<T>::zeros({N, C, 2 * H, 2 * W});
    const std::int64_t planes = static_cast<std::int64_t>(N) * C;
    for (std::int64_t p = 0; p < planes; ++p) {
        const T* src = input.data() + p * H * W;
        T* dst = out.data() + p * 4 * H * W;
        for (int y = 0; y < H; ++y) {
            T* r0 = dst + static_cast<std::int64_t>(2 * y) * 2 * W;
            T* r1 = r0 + 2 * W;
            const T* s = src + static_cast<std::int64_t>(y) * W;
            for (int x = 0; x < W; ++x) {
                r0[2 * x] = r0[2 * x + 1] = r1[2 * x] = r1[2 * x + 1] = s[x];
            }
        }
    }
    if (tape && input.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> in_c = input, out_c = out;
        tape->record([in_c, out_c]() mutable {
            const int N = in_c.dim(0), C = in_c.dim(1), H = in_c.dim(2), W = in_c.dim(3);
            const auto& go = out_c.grad();
            auto& gi = in_c.grad();
            const std::int64_t planes = static_cast<std::int64_t>(N) * C;
            for (std::int64_t p = 0; p < planes; ++p) {
                const T* g = go.data() + p * 4 * H * W;
                T* d = gi.data() + p * H * W;
                for (int y = 0; y < H; ++y) {
                    const T* r0 = g + static_cast<std::int64_t>(2 * y) * 2 * W;
                    const T* r1 = r0 + 2 * W;
                    T* s = d + static_cast<std::int64_t>(y) * W;
                    for (int x = 0; x < W; ++x) {
                        s[x] += r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_rank4(a, "concat_channels");
    require_rank4(b, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw ShapeError("concat_channels: N/H/W mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
    }
    const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    Tensor<T> out = Tensor<T>::zeros({N, Ca + Cb, H, W});
    for (int n = 0; n < N; ++n) {
        std::memcpy(out.data() + static_cast<std::int64_t>(n) * (Ca + Cb) * plane,
                    a.data() + static_cast<std::int64_t>(n) * Ca * plane,
                    sizeof(T) * static_cast<std::size_t>(Ca * plane));
        std::memcpy(out.data() + (static_cast<std::int64_t>(n) * (Ca + Cb) + Ca) * plane,
                    b.data() + static_cast<std::int64_t>(n) * Cb * plane,
                    sizeof(T) * static_cast<std::size_t>(Cb * plane));
    }
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> a_c = a, b_c = b, out_c = out;
        tape->record([a_c, b_c, out_c]() mutable {
            const int N = a_c.dim(0), Ca = a_c.dim(1), Cb = b_c.dim(1);
            const int H = a_c.dim(2), W = a_c.dim(3);
            const std::int64_t plane = static_cast<std::int64_t>(H) * W;
            const auto& go = out_c.grad();
            for (int n = 0; n < N; ++n) {
                const T* g = go.data() + static_cast<std::int64_t>(n) * (Ca + Cb) * plane;
                if (a_c.requires_grad()) {
                    auto& ga = a_c.grad();
                    T* d = ga.data() + static_cast<std::int64_t>(n) * Ca * plane;
                    for (std::int64_t i = 0; i < Ca * plane; ++i) d[i] += g[i];
                }
                if (b_c.requires_grad()) {
                    auto& gb = b_c.grad();
                    T* d = gb.data() + static_cast<std::int64_t>(n) * Cb * plane;
                    const T* gsrc = g + Ca * plane;
                    for (std::int64_t i = 0; i < Cb * plane; ++i) d[i] += gsrc[i];
                }
            }
        });
    }
    return out;
}

template struct BatchNorm2d<float>;
template struct BatchNorm2d<double>;

#define PNEUMOSEG_INSTANTIATE_OPS(T)                                                         \
    template Tensor<T> conv2d(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, \
                              Stride, Padding);                                              \
    template Tensor<T> maxpool2d(Tape<T>*, const Tensor<T>&, int, int, Stride, Padding);     \
    template Tensor<T> batchnorm2d(Tape<T>*, const Tensor<T>&, BatchNorm2d<T>&, Mode);       \
    template Tensor<T> relu(Tape<T>*, const Tensor<T>&);                                     \
    template Tensor<T> sigmoid(Tape<T>*, const Tensor<T>&);                                  \
    template Tensor<T> upsample_nearest_2x(Tape<T>*, const Tensor<T>&);                      \
    template Tensor<T> concat_channels(Tape<T>*, const Tensor<T>&, const Tensor<T>&);

PNEUMOSEG_INSTANTIATE_OPS(float)
PNEUMOSEG_INSTANTIATE_OPS(double)
#undef PNEUMOSEG_INSTANTIATE_OPS

}  // namespace pneumoseg
