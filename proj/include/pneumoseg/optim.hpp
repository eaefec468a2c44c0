#pragma once

#include <cstdint>
#include <vector>

#include "pneumoseg/tensor.hpp"

namespace pneumoseg {

// Adam with bias correction. Parameters that have no gradient buffer when
// step() runs are skipped (their moment state and step count do not advance).
template <typename T>
class Adam {
public:
    struct Hyper {
        T lr = static_cast<T>(1e-3);
        T beta1 = static_cast<T>(0.9);
        T beta2 = static_cast<T>(0.999);
        T eps = static_cast<T>(1e-8);
    };

    explicit Adam(std::vector<Tensor<T>> params, Hyper hyper = {});

    T lr() const { return hyper_.lr; }
    void set_lr(T lr) { hyper_.lr = lr; }

    // Applies one update. Throws DivergenceError if any gradient is not
    // finite, leaving the parameters untouched.
    void step();
    void zero_grad();

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    std::vector<std::int64_t> steps_;
    Hyper hyper_;
};

// Half-cosine decay over `total_epochs` epochs: lr(0) = lr_max and
// lr(total-1) = lr_min. total_epochs must be at least 2.
double cosine_lr(int epoch, int total_epochs, double lr_max, double lr_min);

// Multiplies the learning rate by `factor` after `patience` + 1 consecutive
// epochs without improvement of the observed value.
class PlateauScheduler {
public:
    PlateauScheduler(double factor, int patience) : factor_(factor), patience_(patience) {}

    // Call once per epoch with the validation loss; returns the cumulative
    // scale to apply to the base learning rate.
    double observe(double value);
    double scale() const { return scale_; }

private:
    double factor_;
    int patience_;
    double best_ = 0.0;
    bool has_best_ = false;
    int bad_epochs_ = 0;
    double scale_ = 1.0;
};

// Running equal-weight average of parameter snapshots.
template <typename T>
class SwaAccumulator {
public:
    void accumulate(const std::vector<Tensor<T>>& params);
    int count() const { return count_; }
    // Copies the averaged values into the given parameters (must match the
    // accumulated layout). Requires at least one accumulated snapshot.
    void install(std::vector<Tensor<T>>& params) const;

private:
    std::vector<std::vector<T>> mean_;
    int count_ = 0;
};

}  // namespace pneumoseg
