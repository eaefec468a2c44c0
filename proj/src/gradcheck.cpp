#include "pneumoseg/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>

#include "pneumoseg/losses.hpp"
#include "pneumoseg/model.hpp"
#include "pneumoseg/nn_ops.hpp"
#include "pneumoseg/rng.hpp"
#include "pneumoseg/tensor.hpp"

namespace pneumoseg {

namespace {

constexpr double kStep = 1e-5;

using Leaf = Tensor<double>;
using LossFn = std::function<Tensor<double>(Tape<double>*)>;

// Index subset of one leaf to probe; empty = all entries.
struct Probe {
    Leaf leaf;
    std::vector<std::int64_t> indices;
};

double relative_error(double analytic, double numeric) {
    const double scale = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    return std::fabs(analytic - numeric) / scale;
}

// Runs the loss once with a tape for analytic gradients, then perturbs each
// probed entry for a central difference.
double max_rel_error(const LossFn& fn, std::vector<Probe> probes) {
    for (auto& p : probes) {
        p.leaf.set_requires_grad(true);
        p.leaf.zero_grad();
    }
    Tape<double> tape;
    Tensor<double> loss = fn(&tape);
    tape.backward(loss);

    std::vector<std::vector<double>> analytic;
    for (auto& p : probes) analytic.push_back(p.leaf.grad());

    double worst = 0.0;
    for (std::size_t pi = 0; pi < probes.size(); ++pi) {
        auto& leaf = probes[pi].leaf;
        std::vector<std::int64_t> indices = probes[pi].indices;
        if (indices.empty()) {
            indices.resize(static_cast<std::size_t>(leaf.numel()));
            for (std::size_t i = 0; i < indices.size(); ++i) {
                indices[i] = static_cast<std::int64_t>(i);
            }
        }
        for (std::int64_t idx : indices) {
            double* slot = leaf.data() + idx;
            const double original = *slot;
            *slot = original + kStep;
            const double up = fn(nullptr).item();
            *slot = original - kStep;
            const double down = fn(nullptr).item();
            *slot = original;
            const double numeric = (up - down) / (2.0 * kStep);
            worst = std::max(worst,
                             relative_error(analytic[pi][static_cast<std::size_t>(idx)], numeric));
        }
    }
    return worst;
}

Leaf random_leaf(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Leaf t = Tensor<double>::zeros(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// Sum-of-elements readout so every op under test feeds a scalar loss; a
// fixed random weighting keeps the gradient nondegenerate.
Tensor<double> weighted_sum(Tape<double>* tape, const Tensor<double>& x, Rng& weight_rng) {
    Tensor<double> w = Tensor<double>::zeros(x.shape());
    for (double& v : w.values()) v = weight_rng.uniform(0.5, 1.5);
    return sum(tape, mul(tape, x, w));
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(std::ostream* log) {
    std::vector<GradCheckResult> results;
    auto record = [&](const std::string& name, double err, double tol) {
        GradCheckResult r{name, err, tol, err <= tol};
        if (log) {
            char line[160];
            std::snprintf(line, sizeof(line), "%-22s max rel err %.3e  (tol %.0e)  %s\n",
                          name.c_str(), err, tol, r.passed ? "ok" : "FAIL");
            *log << line << std::flush;
        }
        results.push_back(std::move(r));
    };
    constexpr double kOpTol = 1e-6;

    {
        Rng rng(101);
        Leaf x = random_leaf({2, 3, 6, 7}, rng);
        Leaf w = random_leaf({4, 3, 3, 3}, rng);
        Leaf b = random_leaf({4}, rng);
        Rng wr(7);
        auto fn = [&](Tape<double>* tape) {
            Rng local = wr;
            return weighted_sum(tape, conv2d(tape, x, w, &b, Stride{2, 1}, Padding{1, 2}), local);
        };
        record("conv2d", max_rel_error(fn, {{x, {}}, {w, {}}, {b, {}}}), kOpTol);
    }
    {
        Rng rng(102);
        Leaf x = random_leaf({2, 2, 7, 6}, rng);
        // Spread values so no window has near-ties (finite differences across
        // an argmax switch would be meaningless).
        for (std::size_t i = 0; i < x.values().size(); ++i) x.values()[i] += 1e-3 * i;
        Rng wr(8);
        auto fn = [&](Tape<double>* tape) {
            Rng local = wr;
            return weighted_sum(tape, maxpool2d(tape, x, 3, 3, Stride{2, 2}, Padding{1, 1}), local);
        };
        record("maxpool2d", max_rel_error(fn, {{x, {}}}), kOpTol);
    }
    {
        Rng rng(103);
        Leaf x = random_leaf({3, 2, 4, 5}, rng);
        BatchNorm2d<double> bn(2);
        Rng wr(9);
        auto fn = [&](Tape<double>* tape) {
            Rng local = wr;
            return weighted_sum(tape, batchnorm2d(tape, x, bn, Mode::kTrain), local);
        };
        record("batchnorm2d train", max_rel_error(fn, {{x, {}}, {bn.gamma, {}}, {bn.beta, {}}}),
               kOpTol);
    }
    {
        Rng rng(104);
        Leaf x = random_leaf({2, 2, 3, 4}, rng);
        BatchNorm2d<double> bn(2);
        for (double& v : bn.running_mean.values()) v = rng.uniform(-0.5, 0.5);
        for (double& v : bn.running_var.values()) v = rng.uniform(0.5, 1.5);
        Rng wr(10);
        auto fn = [&](Tape<double>* tape) {
            Rng local = wr;
            return weighted_sum(tape, batchnorm2d(tape, x, bn, Mode::kEval), local);
        };
        record("batchnorm2d eval", max_rel_error(fn, {{x, {}}, {bn.gamma, {}}, {bn.beta, {}}}),
               kOpTol);
    }
    {
        Rng rng(105);
        Leaf x = random_leaf({2, 3, 4, 5}, rng);
        // Keep inputs away from the kink at zero.
        for (double& v : x.values()) {
            if (std::fabs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
        }
        Rng wr(11);
        auto fn = [&](Tape<double>* tape) {
            Rng local = wr;
            return weighted_sum(tape, relu(tape, x), local);
        };
        record("relu", max_rel_error(fn, {{x, {}}}), kOpTol);
    }
    {
        Rng rng(106);
        Leaf x = random_leaf({2, 3, 4, 5}, rng, -3.0, 3.0);
        Rng wr(12);
        auto fn = [&](Tape<double>* tape) {
            Rng local = wr;
            return weighted_sum(tape, sigmoid(tape, x), local);
        };
        record("sigmoid", max_rel_error(fn, {{x, {}}}), kOpTol);
    }
    {
        Rng rng(107);
        Leaf x = random_leaf({2, 3, 5, 6}, rng);
        Rng wr(13);
        auto fn = [&](Tape<double>* tape) {
            Rng local = wr;
            return weighted_sum(tape, upsample_nearest_2x(tape, x), local);
        };
        record("upsample_nearest_2x", max_rel_error(fn, {{x, {}}}), kOpTol);
    }
    {
        Rng rng(108);
        Leaf a = random_leaf({2, 3, 4, 4}, rng);
        Leaf b = random_leaf({2, 2, 4, 4}, rng);
        Rng wr(14);
        auto fn = [&](Tape<double>* tape) {
            Rng local = wr;
            return weighted_sum(tape, concat_channels(tape, a, b), local);
        };
        record("concat_channels", max_rel_error(fn, {{a, {}}, {b, {}}}), kOpTol);
    }
    {
        Rng rng(109);
        Leaf a = random_leaf({3, 4}, rng);
        Leaf b = random_leaf({3, 4}, rng);
        Rng wr(15);
        auto fn = [&](Tape<double>* tape) {
            Rng local = wr;
            Tensor<double> y = add(tape, mul(tape, a, b), scale(tape, a, 0.7));
            return weighted_sum(tape, y, local);
        };
        record("add/mul/scale/sum", max_rel_error(fn, {{a, {}}, {b, {}}}), kOpTol);
    }
    {
        Rng rng(110);
        Leaf pred = random_leaf({2, 1, 4, 5}, rng, 0.05, 0.95);
        Leaf target = Tensor<double>::zeros({2, 1, 4, 5});
        for (double& v : target.values()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
        auto bce_fn = [&](Tape<double>* tape) { return bce_loss(tape, pred, target); };
        record("bce_loss", max_rel_error(bce_fn, {{pred, {}}}), kOpTol);
        auto dice_fn = [&](Tape<double>* tape) { return dice_loss(tape, pred, target); };
        record("dice_loss", max_rel_error(dice_fn, {{pred, {}}}), kOpTol);
        auto both_fn = [&](Tape<double>* tape) { return bce_dice_loss(tape, pred, target); };
        record("bce_dice_loss", max_rel_error(both_fn, {{pred, {}}}), kOpTol);
    }
    {
        // End-to-end through a 1/16-width network at 32x32: sampled entries
        // of the input and of parameters from every depth of the net.
        ModelConfig cfg;
        cfg.in_channels = 3;
        cfg.width_multiplier = 0.0625;
        ResNet34UNet<double> model(cfg, 2024);
        Rng rng(111);
        // Batch of two: the deepest stage is 1x1 spatial, and train-mode
        // BatchNorm needs at least two elements per channel.
        Leaf x = random_leaf({2, 3, 32, 32}, rng, 0.0, 1.0);
        Leaf target = Tensor<double>::zeros({2, 1, 32, 32});
        for (double& v : target.values()) v = rng.bernoulli(0.3) ? 1.0 : 0.0;

        auto fn = [&](Tape<double>* tape) {
            return bce_dice_loss(tape, model.forward(tape, x, Mode::kTrain), target);
        };

        std::vector<Probe> probes;
        auto pick = [&rng](const Leaf& leaf, int count) {
            std::vector<std::int64_t> idx;
            for (int i = 0; i < count; ++i) {
                idx.push_back(static_cast<std::int64_t>(
                    rng.below(static_cast<std::uint64_t>(leaf.numel()))));
            }
            return Probe{leaf, std::move(idx)};
        };
        probes.push_back(pick(x, 6));
        auto named = model.named_tensors();
        for (const auto& name : {"stem.weight", "encoder2.block1.conv1.weight",
                                 "encoder4.block3.conv2.weight", "encoder3.block1.proj.weight",
                                 "decoder1.conv1.weight", "decoder5.conv2.weight", "head.weight",
                                 "head.bias", "decoder3.conv1.bn.gamma", "encoder1.block2.conv2.bn.beta"}) {
            bool found = false;
            for (auto& nt : named) {
                if (nt.name == name) {
                    probes.push_back(pick(nt.tensor, 4));
                    found = true;
                    break;
                }
            }
            if (!found) {
                record(std::string("end-to-end probe missing: ") + name, 1.0, 0.0);
            }
        }
        record("network end-to-end", max_rel_error(fn, std::move(probes)), 1e-4);
    }
    return results;
}

bool all_passed(const std::vector<GradCheckResult>& results) {
    for (const auto& r : results) {
        if (!r.passed) return false;
    }
    return true;
}

}  // namespace pneumoseg
