#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pneumoseg {

namespace detail {

template <typename T>
struct TensorStorage {
    std::vector<int> shape;   // up to 4 extents, NCHW convention for rank 4
    std::vector<T> data;      // contiguous row-major
    std::vector<T> grad;      // empty until first accumulation
    bool requires_grad = false;
};

}  // namespace detail

// Dense rank-<=4 tensor. Value-semantic handle onto shared storage: copies
// alias the same buffer, which is what lets the tape hold cheap references
// to every operand it will need during the backward sweep.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, T value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<T> values,
                            bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return s_ != nullptr; }

    const std::vector<int>& shape() const { return s_->shape; }
    int rank() const { return static_cast<int>(s_->shape.size()); }
    int dim(int i) const { return s_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(s_->data.size()); }

    T* data() { return s_->data.data(); }
    const T* data() const { return s_->data.data(); }
    std::vector<T>& values() { return s_->data; }
    const std::vector<T>& values() const { return s_->data; }

    T item() const;  // scalar tensors only

    bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool v) { s_->requires_grad = v; }

    bool has_grad() const { return !s_->grad.empty(); }
    std::vector<T>& grad();              // allocates zeros on first use
    const std::vector<T>& grad() const;  // throws if absent
    void zero_grad();
    void accumulate_grad(const T* g, std::int64_t n);

    // Storage identity, used by optimizers and the tape to dedupe operands.
    const void* storage_id() const { return s_.get(); }

    // Deep copy with fresh storage (gradient state not copied).
    Tensor clone() const;

private:
    std::shared_ptr<detail::TensorStorage<T>> s_;
};

// Linear record of backward rules in execution order. One tape per training
// step; ops append themselves during the forward pass and backward() replays
// them in reverse exactly once.
template <typename T>
class Tape {
public:
    void record(std::function<void()> backward_rule) {
        ops_.push_back(std::move(backward_rule));
    }
    std::size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
    void backward(Tensor<T>& loss);

private:
    std::vector<std::function<void()>> ops_;
};

// Elementwise / reduction ops. `tape` may be null (inference): no rule is
// recorded and outputs do not require grad.
template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& a);  // full reduction to scalar

template <typename T>
bool all_finite(const Tensor<T>& t);

std::string shape_string(const std::vector<int>& shape);

}  // namespace pneumoseg
