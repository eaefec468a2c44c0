#include "pneumoseg/optim.hpp"

#include <cmath>
#include <numbers>

#include "pneumoseg/errors.hpp"

namespace pneumoseg {

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, Hyper hyper)
    : params_(std::move(params)), hyper_(hyper) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    steps_.assign(params_.size(), 0);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(static_cast<std::size_t>(params_[i].numel()), T(0));
        v_[i].assign(static_cast<std::size_t>(params_[i].numel()), T(0));
    }
}

template <typename T>
void Adam<T>::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].has_grad()) continue;
        for (const T g : params_[i].grad()) {
            if (!std::isfinite(static_cast<double>(g))) {
                throw DivergenceError("adam: non-finite gradient in parameter " + std::to_string(i));
            }
        }
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].has_grad()) continue;
        const std::int64_t t = ++steps_[i];
        const T bc1 = static_cast<T>(1.0 - std::pow(static_cast<double>(hyper_.beta1), t));
        const T bc2 = static_cast<T>(1.0 - std::pow(static_cast<double>(hyper_.beta2), t));
        const std::vector<T>& grad = params_[i].grad();
        T* w = params_[i].data();
        T* m = m_[i].data();
        T* v = v_[i].data();
        const std::int64_t n = params_[i].numel();
        for (std::int64_t k = 0; k < n; ++k) {
            const T g = grad[static_cast<std::size_t>(k)];
            m[k] = hyper_.beta1 * m[k] + (T(1) - hyper_.beta1) * g;
            v[k] = hyper_.beta2 * v[k] + (T(1) - hyper_.beta2) * g * g;
            const T m_hat = m[k] / bc1;
            const T v_hat = v[k] / bc2;
            w[k] -= hyper_.lr * m_hat / (std::sqrt(v_hat) + hyper_.eps);
        }
    }
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double cosine_lr(int epoch, int total_epochs, double lr_max, double lr_min) {
    if (total_epochs < 2) {
        throw ConfigError("cosine_lr: schedule needs at least 2 epochs");
    }
    if (epoch < 0 || epoch >= total_epochs) {
        throw ConfigError("cosine_lr: epoch out of range");
    }
    const double phase = std::numbers::pi * epoch / (total_epochs - 1);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

double PlateauScheduler::observe(double value) {
    if (!has_best_ || value < best_) {
        best_ = value;
        has_best_ = true;
        bad_epochs_ = 0;
        return scale_;
    }
    ++bad_epochs_;
    if (bad_epochs_ > patience_) {
        scale_ *= factor_;
        bad_epochs_ = 0;
    }
    return scale_;
}

template <typename T>
void SwaAccumulator<T>::accumulate(const std::vector<Tensor<T>>& params) {
    if (mean_.empty()) {
        mean_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            mean_[i].assign(static_cast<std::size_t>(params[i].numel()), T(0));
        }
    }
    if (mean_.size() != params.size()) {
        throw ShapeError("swa: parameter count changed between snapshots");
    }
    ++count_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (mean_[i].size() != params[i].values().size()) {
            throw ShapeError("swa: parameter size changed between snapshots");
        }
        const T* w = params[i].data();
        T* m = mean_[i].data();
        for (std::size_t k = 0; k < mean_[i].size(); ++k) {
            m[k] += (w[k] - m[k]) / static_cast<T>(count_);
        }
    }
}

template <typename T>
void SwaAccumulator<T>::install(std::vector<Tensor<T>>& params) const {
    if (count_ == 0) {
        throw Error("swa: no snapshots accumulated");
    }
    if (mean_.size() != params.size()) {
        throw ShapeError("swa: parameter count does not match accumulator");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].values() = mean_[i];
    }
}

template class Adam<float>;
template class Adam<double>;
template class SwaAccumulator<float>;
template class SwaAccumulator<double>;

}  // namespace pneumoseg
