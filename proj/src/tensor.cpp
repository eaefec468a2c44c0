#include "pneumoseg/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "pneumoseg/errors.hpp"

namespace pneumoseg {

namespace {

std::int64_t checked_numel(const std::vector<int>& shape) {
    if (shape.empty() || shape.size() > 4) {
        throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
    }
    std::int64_t n = 1;
    for (int d : shape) {
        // Zero extents are legal so that a 0-channel tensor can act as the
        // concat neutral element; negative never are.
        if (d < 0) throw ShapeError("tensor extents must be non-negative, got " + shape_string(shape));
        n *= d;
    }
    return n;
}

}  // namespace

std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(std::vector<int> shape, bool requires_grad) {
    std::int64_t n = checked_numel(shape);
    Tensor t;
    t.s_ = std::make_shared<detail::TensorStorage<T>>();
    t.s_->shape = std::move(shape);
    t.s_->data.assign(static_cast<std::size_t>(n), T(0));
    t.s_->requires_grad = requires_grad;
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::full(std::vector<int> shape, T value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.s_->data.begin(), t.s_->data.end(), value);
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::from_data(std::vector<int> shape, std::vector<T> values, bool requires_grad) {
    std::int64_t n = checked_numel(shape);
    if (n != static_cast<std::int64_t>(values.size())) {
        throw ShapeError("data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_string(shape));
    }
    Tensor t;
    t.s_ = std::make_shared<detail::TensorStorage<T>>();
    t.s_->shape = std::move(shape);
    t.s_->data = std::move(values);
    t.s_->requires_grad = requires_grad;
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() requires a scalar tensor, shape is " + shape_string(shape()));
    return s_->data[0];
}

template <typename T>
std::vector<T>& Tensor<T>::grad() {
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
    return s_->grad;
}

template <typename T>
const std::vector<T>& Tensor<T>::grad() const {
    if (s_->grad.empty()) throw Error("gradient not populated");
    return s_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::accumulate_grad(const T* g, std::int64_t n) {
    if (n != numel()) throw ShapeError("gradient length mismatch");
    auto& dst = grad();
    for (std::int64_t i = 0; i < n; ++i) dst[static_cast<std::size_t>(i)] += g[i];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    Tensor t;
    t.s_ = std::make_shared<detail::TensorStorage<T>>();
    t.s_->shape = s_->shape;
    t.s_->data = s_->data;
    t.s_->requires_grad = s_->requires_grad;
    return t;
}

template <typename T>
void Tape<T>::backward(Tensor<T>& loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward() requires a scalar loss, shape is " + shape_string(loss.shape()));
    }
    loss.grad()[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

namespace {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
    }
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    const std::int64_t n = a.numel();
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc]() mutable {
            const auto& go = oc.grad();
            if (ac.requires_grad()) ac.accumulate_grad(go.data(), oc.numel());
            if (bc.requires_grad()) bc.accumulate_grad(go.data(), oc.numel());
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    const std::int64_t n = a.numel();
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc]() mutable {
            const auto& go = oc.grad();
            const std::int64_t m = oc.numel();
            if (ac.requires_grad()) {
                auto& ga = ac.grad();
                const T* pbv = bc.data();
                for (std::int64_t i = 0; i < m; ++i) ga[static_cast<std::size_t>(i)] += go[static_cast<std::size_t>(i)] * pbv[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad();
                const T* pav = ac.data();
                for (std::int64_t i = 0; i < m; ++i) gb[static_cast<std::size_t>(i)] += go[static_cast<std::size_t>(i)] * pav[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, T factor) {
    const std::int64_t n = a.numel();
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * factor;
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, oc = out;
        tape->record([ac, oc, factor]() mutable {
            const auto& go = oc.grad();
            auto& ga = ac.grad();
            const std::int64_t m = oc.numel();
            for (std::int64_t i = 0; i < m; ++i) ga[static_cast<std::size_t>(i)] += go[static_cast<std::size_t>(i)] * factor;
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& a) {
    const std::int64_t n = a.numel();
    const T* pa = a.data();
    T acc = T(0);
    for (std::int64_t i = 0; i < n; ++i) acc += pa[i];
    Tensor<T> out = Tensor<T>::scalar(acc);
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, oc = out;
        tape->record([ac, oc]() mutable {
            const T g = oc.grad()[0];
            auto& ga = ac.grad();
            for (auto& v : ga) v += g;
        });
    }
    return out;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    const T* p = t.data();
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(static_cast<double>(p[i]))) return false;
    }
    return true;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

template Tensor<float> add(Tape<float>*, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> add(Tape<double>*, const Tensor<double>&, const Tensor<double>&);
template Tensor<float> mul(Tape<float>*, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mul(Tape<double>*, const Tensor<double>&, const Tensor<double>&);
template Tensor<float> scale(Tape<float>*, const Tensor<float>&, float);
template Tensor<double> scale(Tape<double>*, const Tensor<double>&, double);
template Tensor<float> sum(Tape<float>*, const Tensor<float>&);
template Tensor<double> sum(Tape<double>*, const Tensor<double>&);
template bool all_finite(const Tensor<float>&);
template bool all_finite(const Tensor<double>&);

}  // namespace pneumoseg
