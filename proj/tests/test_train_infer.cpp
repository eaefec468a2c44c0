#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pneumoseg/checkpoint.hpp"
#include "pneumoseg/dataset.hpp"
#include "pneumoseg/errors.hpp"
#include "pneumoseg/inference.hpp"
#include "pneumoseg/losses.hpp"
#include "pneumoseg/optim.hpp"
#include "pneumoseg/rng.hpp"
#include "pneumoseg/synthetic.hpp"
#include "pneumoseg/trainer.hpp"

using namespace pneumoseg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Tensor<float> random_batch(int n, int c, int size, std::uint64_t seed) {
    Tensor<float> x = Tensor<float>::zeros({n, c, size, size});
    Rng rng(seed);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        x.data()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    }
    return x;
}

// In-memory dataset skeleton; only positive()/size() matter for splitting.
Dataset fake_dataset(int positives, int negatives) {
    Dataset d;
    for (int i = 0; i < positives + negatives; ++i) {
        DatasetEntry e;
        e.image_id = "img" + std::to_string(i);
        if (i < positives) e.annotations.push_back({e.image_id, {{0, 1}}});
        d.entries.push_back(e);
    }
    return d;
}

}  // namespace

TEST_CASE("adam: constant gradients give the closed-form bias-corrected step") {
    // With g held constant, m_hat = g and v_hat = g*g on every step, so each
    // update is exactly lr * g / (|g| + eps).
    const double lr = 0.01;
    const double eps = 1e-8;
    auto p = Tensor<double>::from_data({3}, {1.0, -2.0, 0.5}, true);
    Adam<double>::Hyper hyper;
    hyper.lr = lr;
    Adam<double> adam({p}, hyper);

    const std::vector<double> g = {0.5, -1.0, 0.0};
    auto push_grads = [&] {
        auto& grad = p.grad();
        for (std::size_t i = 0; i < 3; ++i) grad[i] = g[i];
    };

    push_grads();
    adam.step();
    CHECK(p.data()[0] == doctest::Approx(1.0 - lr * 0.5 / (0.5 + eps)).epsilon(1e-14));
    CHECK(p.data()[1] == doctest::Approx(-2.0 + lr * 1.0 / (1.0 + eps)).epsilon(1e-14));
    CHECK(p.data()[2] == 0.5);  // zero gradient: exactly no movement

    adam.zero_grad();
    push_grads();
    adam.step();
    CHECK(p.data()[0] == doctest::Approx(1.0 - 2 * lr * 0.5 / (0.5 + eps)).epsilon(1e-14));
    CHECK(p.data()[1] == doctest::Approx(-2.0 + 2 * lr * 1.0 / (1.0 + eps)).epsilon(1e-14));
}

TEST_CASE("adam: non-finite gradients abort the step atomically") {
    auto p = Tensor<double>::from_data({2}, {3.0, 4.0}, true);
    Adam<double> adam({p});

    for (double poison :
         {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::infinity()}) {
        p.grad()[0] = poison;
        p.grad()[1] = 1.0;
        CHECK_THROWS_AS(adam.step(), DivergenceError);
        CHECK(p.data()[0] == 3.0);
        CHECK(p.data()[1] == 4.0);
    }

    // The failed attempts left no trace: the next good step matches a fresh
    // optimizer's first step bit for bit.
    auto q = Tensor<double>::from_data({2}, {3.0, 4.0}, true);
    Adam<double> fresh({q});
    p.zero_grad();
    p.grad()[0] = 0.25;
    p.grad()[1] = -0.5;
    q.grad()[0] = 0.25;
    q.grad()[1] = -0.5;
    adam.step();
    fresh.step();
    CHECK(p.data()[0] == q.data()[0]);
    CHECK(p.data()[1] == q.data()[1]);
}

TEST_CASE("adam: parameters without gradients are skipped entirely") {
    auto a = Tensor<double>::from_data({1}, {1.0}, true);
    auto b = Tensor<double>::from_data({1}, {5.0}, true);
    Adam<double>::Hyper hyper;
    hyper.lr = 0.1;
    Adam<double> adam({a, b}, hyper);

    a.grad()[0] = 1.0;  // b never touched, no grad buffer allocated
    adam.step();
    CHECK(b.data()[0] == 5.0);
    CHECK(a.data()[0] < 1.0);

    // b's first real step must use t = 1 bias correction, i.e. the same
    // closed-form delta as any first step — proof its clock did not tick.
    b.grad()[0] = 2.0;
    a.zero_grad();
    adam.step();
    CHECK(b.data()[0] == doctest::Approx(5.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("cosine schedule hits both endpoints exactly") {
    const double lr_max = 1e-3;
    const double lr_min = 1e-6;
    CHECK(cosine_lr(0, 35, lr_max, lr_min) == lr_max);
    CHECK(cosine_lr(34, 35, lr_max, lr_min) == lr_min);
    CHECK(cosine_lr(0, 2, lr_max, lr_min) == lr_max);
    CHECK(cosine_lr(1, 2, lr_max, lr_min) == lr_min);

    // Symmetric midpoint for an odd-length schedule.
    CHECK(cosine_lr(5, 11, lr_max, lr_min) ==
          doctest::Approx((lr_max + lr_min) / 2).epsilon(1e-12));

    // Monotone non-increasing and always inside [lr_min, lr_max].
    double prev = lr_max;
    for (int e = 0; e < 50; ++e) {
        const double lr = cosine_lr(e, 50, lr_max, lr_min);
        CHECK(lr <= prev + 1e-18);
        CHECK(lr >= lr_min);
        CHECK(lr <= lr_max);
        prev = lr;
    }

    CHECK_THROWS_AS(cosine_lr(0, 1, lr_max, lr_min), ConfigError);
    CHECK_THROWS_AS(cosine_lr(0, 0, lr_max, lr_min), ConfigError);
    CHECK_THROWS_AS(cosine_lr(-1, 10, lr_max, lr_min), ConfigError);
    CHECK_THROWS_AS(cosine_lr(10, 10, lr_max, lr_min), ConfigError);
}

TEST_CASE("plateau scheduler: factor 0.2, patience 5 trace") {
    PlateauScheduler sched(0.2, 5);
    CHECK(sched.observe(1.0) == 1.0);  // first value becomes best

    // Five stagnant epochs are tolerated, the sixth drops the rate.
    for (int i = 0; i < 5; ++i) CHECK(sched.observe(1.0) == 1.0);
    CHECK(sched.observe(1.0) == 0.2);

    // Equal-to-best never counts as improvement; a genuine improvement
    // resets the counter without restoring the scale.
    CHECK(sched.observe(0.9) == 0.2);
    for (int i = 0; i < 5; ++i) CHECK(sched.observe(0.95) == 0.2);
    CHECK(sched.observe(0.95) == 0.2 * 0.2);
    CHECK(sched.scale() == 0.2 * 0.2);

    // The best does not reset after a drop: beating it resets the counter.
    PlateauScheduler s2(0.5, 0);           // patience 0: second bad epoch drops
    CHECK(s2.observe(2.0) == 1.0);
    CHECK(s2.observe(2.0) == 0.5);         // bad #1 > patience already
    CHECK(s2.observe(1.9) == 0.5);         // improvement
    CHECK(s2.observe(1.95) == 0.25);
}

TEST_CASE("swa accumulator equals the brute-force snapshot mean") {
    const int snapshots = 7;
    const int n = 5;
    auto p = Tensor<double>::zeros({n}, true);
    std::vector<Tensor<double>> params = {p};

    SwaAccumulator<double> swa;
    std::vector<double> sums(n, 0.0);
    Rng rng(99);
    for (int s = 0; s < snapshots; ++s) {
        for (int i = 0; i < n; ++i) {
            p.data()[i] = rng.uniform(-3.0, 3.0);
            sums[static_cast<std::size_t>(i)] += p.data()[i];
        }
        swa.accumulate(params);
    }
    CHECK(swa.count() == snapshots);

    swa.install(params);
    for (int i = 0; i < n; ++i) {
        const double expected = sums[static_cast<std::size_t>(i)] / snapshots;
        CHECK(p.data()[i] == doctest::Approx(expected).epsilon(1e-12));
    }

    // Averaging identical snapshots is exactly the identity.
    SwaAccumulator<double> same;
    auto q = Tensor<double>::from_data({2}, {0.1, -0.7}, true);
    std::vector<Tensor<double>> qp = {q};
    for (int s = 0; s < 4; ++s) same.accumulate(qp);
    same.install(qp);
    CHECK(q.data()[0] == 0.1);
    CHECK(q.data()[1] == -0.7);

    SwaAccumulator<double> empty;
    CHECK_THROWS_AS(empty.install(qp), Error);
    std::vector<Tensor<double>> wrong = {q, q};
    CHECK_THROWS_AS(same.install(wrong), ShapeError);
}

TEST_CASE("stratified split keeps class balance per side") {
    Dataset d = fake_dataset(4, 6);
    auto [train, val] = stratified_split(d, 0.75, 11);

    // llround per class: 3 of 4 positives, round(4.5) = 5 of 6 negatives.
    CHECK(train.size() == 8);
    CHECK(val.size() == 2);

    int train_pos = 0;
    for (int i : train) train_pos += d.entries[static_cast<std::size_t>(i)].positive();
    CHECK(train_pos == 3);
    int val_pos = 0;
    for (int i : val) val_pos += d.entries[static_cast<std::size_t>(i)].positive();
    CHECK(val_pos == 1);

    // Sorted, disjoint, covering.
    CHECK(std::is_sorted(train.begin(), train.end()));
    CHECK(std::is_sorted(val.begin(), val.end()));
    std::vector<int> all = train;
    all.insert(all.end(), val.begin(), val.end());
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 10; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);

    // Deterministic in the seed; a different seed reshuffles eventually.
    auto [train2, val2] = stratified_split(d, 0.75, 11);
    CHECK(train2 == train);
    CHECK(val2 == val);
    bool any_differs = false;
    for (std::uint64_t s = 12; s < 20 && !any_differs; ++s) {
        any_differs = stratified_split(d, 0.75, s).first != train;
    }
    CHECK(any_differs);

    CHECK_THROWS_AS(stratified_split(d, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(stratified_split(d, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(stratified_split(d, -0.5, 1), ConfigError);
}

TEST_CASE("metrics CSV formatting") {
    std::vector<EpochStats> history;
    history.push_back({1, 1, 1e-3, 1.25, 0.75, 0.5});
    history.push_back({2, 3, 0.0005, 0.5, 0.25, 0.625});
    CHECK(format_metrics_csv(history) ==
          "epoch,stage,lr,train_loss,val_loss,val_iou\n"
          "1,1,0.001,1.25,0.75,0.5\n"
          "3,2,0.0005,0.5,0.25,0.625\n");
}

TEST_CASE("loss values against hand arithmetic") {
    auto pred = Tensor<double>::from_data({1, 1, 1, 2}, {0.8, 0.3});
    auto target = Tensor<double>::from_data({1, 1, 1, 2}, {1.0, 0.0});

    auto bce = bce_loss<double>(nullptr, pred, target);
    CHECK(bce.data()[0] == doctest::Approx(-(std::log(0.8) + std::log(0.7)) / 2).epsilon(1e-12));

    auto dice = dice_loss<double>(nullptr, pred, target);
    CHECK(dice.data()[0] == doctest::Approx(1.0 - (2 * 0.8 + 1) / (0.8 + 0.3 + 1 + 1)).epsilon(1e-12));

    auto both = bce_dice_loss<double>(nullptr, pred, target);
    CHECK(both.data()[0] == doctest::Approx(bce.data()[0] + dice.data()[0]).epsilon(1e-12));

    // Clamping keeps hard 0/1 predictions finite.
    auto hard = Tensor<double>::from_data({2}, {0.0, 1.0});
    auto t2 = Tensor<double>::from_data({2}, {1.0, 0.0});
    auto worst = bce_loss<double>(nullptr, hard, t2);
    CHECK(std::isfinite(worst.data()[0]));
    CHECK(worst.data()[0] == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));

    // Empty prediction and target: zero Dice loss thanks to the smooth term.
    auto z = Tensor<double>::zeros({4});
    CHECK(dice_loss<double>(nullptr, z, z).data()[0] == 0.0);
}

TEST_CASE("mask metrics: hand values and the DSC/IoU identity") {
    BinaryMask a(2, 3), b(2, 3);
    a.at(0, 0) = a.at(0, 1) = a.at(1, 0) = a.at(1, 1) = 1;  // |A| = 4
    b.at(0, 0) = b.at(0, 1) = 1;                            // |B| = 2, inter = 2, union = 4
    CHECK(mask_iou(a, b) == doctest::Approx(0.5));
    CHECK(mask_dsc(a, b) == doctest::Approx(2.0 / 3.0));
    CHECK(mask_dsc(a, a) == 1.0);
    CHECK(mask_iou(a, a) == 1.0);

    BinaryMask empty1(2, 3), empty2(2, 3);
    CHECK(mask_dsc(empty1, empty2) == 1.0);
    CHECK(mask_iou(empty1, empty2) == 1.0);
    CHECK(mask_dsc(a, empty1) == 0.0);

    Rng rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        BinaryMask x(8, 8), y(8, 8);
        for (auto& px : x.pixels) px = rng.bernoulli(0.4) ? 1 : 0;
        for (auto& px : y.pixels) px = rng.bernoulli(0.4) ? 1 : 0;
        const double iou = mask_iou(x, y);
        const double dsc = mask_dsc(x, y);
        CHECK(dsc == doctest::Approx(2 * iou / (1 + iou)).epsilon(1e-12));
    }

    std::vector<BinaryMask> preds = {a, empty1};
    std::vector<BinaryMask> targets = {b, empty2};
    CHECK(mean_dsc(preds, targets) == doctest::Approx((2.0 / 3.0 + 1.0) / 2).epsilon(1e-12));
}

TEST_CASE("binarize_plane uses a strict greater-than") {
    const float plane[4] = {0.2f, 0.5f, 0.500001f, 0.8f};
    BinaryMask m = binarize_plane(plane, 2, 2, 0.5);
    CHECK(m.pixels == std::vector<std::uint8_t>{0, 0, 1, 1});

    // Raising the threshold can only shrink the mask.
    Rng rng(17);
    std::vector<float> noise(64);
    for (auto& v : noise) v = static_cast<float>(rng.uniform(0.0, 1.0));
    BinaryMask low = binarize_plane(noise.data(), 8, 8, 0.3);
    BinaryMask high = binarize_plane(noise.data(), 8, 8, 0.6);
    for (std::size_t i = 0; i < low.pixels.size(); ++i) {
        CHECK(high.pixels[i] <= low.pixels[i]);
    }
}

TEST_CASE("small-region removal: whole-mask and per-component modes") {
    BinaryMask m(4, 4);
    m.at(0, 0) = m.at(0, 1) = m.at(1, 0) = m.at(1, 1) = 1;  // area 4

    SUBCASE("whole mask: strictly smaller than the threshold is dropped") {
        BinaryMask kept = m;
        remove_small_regions(kept, 4, Removal::kWholeMask);
        CHECK(kept.popcount() == 4);  // area == threshold survives
        BinaryMask gone = m;
        remove_small_regions(gone, 5, Removal::kWholeMask);
        CHECK(gone.popcount() == 0);
    }

    SUBCASE("connectivity decides whether diagonals merge") {
        BinaryMask diag(3, 3);
        diag.at(0, 0) = diag.at(1, 1) = 1;
        BinaryMask four = diag;
        remove_small_regions(four, 2, Removal::kConnectedComponents, 4);
        CHECK(four.popcount() == 0);  // two size-1 components
        BinaryMask eight = diag;
        remove_small_regions(eight, 2, Removal::kConnectedComponents, 8);
        CHECK(eight.popcount() == 2);  // one size-2 component
    }

    SUBCASE("per-component keeps big blobs while pruning specks") {
        BinaryMask mixed = m;
        mixed.at(3, 3) = 1;  // isolated pixel far from the blob
        remove_small_regions(mixed, 2, Removal::kConnectedComponents, 4);
        CHECK(mixed.popcount() == 4);
        CHECK(mixed.at(3, 3) == 0);
        CHECK(mixed.at(0, 0) == 1);

        // Whole-mask mode judges the total area instead.
        BinaryMask whole = m;
        whole.at(3, 3) = 1;
        remove_small_regions(whole, 2, Removal::kWholeMask);
        CHECK(whole.popcount() == 5);
    }
}

TEST_CASE("tta prediction is exactly flip-equivariant and leaves BN alone") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.25;
    ResNet34UNet<float> model(cfg, 13);
    Tensor<float> x = random_batch(2, 3, 32, 3);

    // hflip is an involution.
    Tensor<float> back = hflip_images(hflip_images(x));
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(back.data()[i] == x.data()[i]);

    auto* bn = model.batchnorm_modules().front();
    std::vector<float> stats(bn->running_mean.data(),
                             bn->running_mean.data() + bn->running_mean.numel());

    Tensor<float> p = predict_proba(model, x, true);
    Tensor<float> p_flip = hflip_images(predict_proba(model, hflip_images(x), true));
    REQUIRE(p.shape() == std::vector<int>{2, 1, 32, 32});
    for (std::int64_t i = 0; i < p.numel(); ++i) {
        CHECK(p.data()[i] == p_flip.data()[i]);  // bitwise
    }

    for (std::int64_t i = 0; i < bn->running_mean.numel(); ++i) {
        CHECK(bn->running_mean.data()[i] == stats[static_cast<std::size_t>(i)]);
    }

    // Plain prediction differs from TTA on an asymmetric input (sanity that
    // the flag means something).
    Tensor<float> plain = predict_proba(model, x, false);
    bool differs = false;
    for (std::int64_t i = 0; i < p.numel() && !differs; ++i) {
        differs = plain.data()[i] != p.data()[i];
    }
    CHECK(differs);
}

TEST_CASE("experiment presets are valid and desk scale shrinks them") {
    for (const char* name : {"exp1", "exp2", "exp3", "exp4", "exp5"}) {
        ExperimentConfig cfg = experiment_preset(name);
        CHECK(cfg.name == name);
        CHECK_NOTHROW(cfg.validate());
    }
    CHECK_THROWS_AS(experiment_preset("exp9"), ConfigError);

    ExperimentConfig exp1 = experiment_preset("exp1");
    CHECK(exp1.model.in_channels == 1);
    CHECK(exp1.model.include_channel_adapter);
    CHECK(exp1.stages.size() == 1);
    CHECK(exp1.stages[0].lr_policy == LrPolicy::kPlateau);
    CHECK(exp1.stages[0].plateau_factor == 0.2);
    CHECK(exp1.stages[0].plateau_patience == 5);
    CHECK(exp1.train_fraction == 0.8);
    CHECK(exp1.binarization_threshold == 0.5);

    ExperimentConfig exp3 = experiment_preset("exp3");
    CHECK(exp3.model.in_channels == 3);
    CHECK(exp3.stages.size() == 2);
    CHECK(exp3.stages[0].resolution == 256);
    CHECK(exp3.stages[1].resolution == 512);
    CHECK(exp3.stages[1].batch_size == 14);
    CHECK(exp3.stages[0].use_swa);
    CHECK(exp3.binarization_threshold == 0.55);

    apply_desk_scale(exp3);
    CHECK_NOTHROW(exp3.validate());
    CHECK(exp3.model.width_multiplier == 0.25);
    CHECK(exp3.stages[0].resolution == 64);
    CHECK(exp3.stages[1].resolution == 128);
    CHECK(exp3.stages[1].batch_size < 14);
    CHECK(exp3.removal_threshold < 2048);

    ExperimentConfig single = experiment_preset("exp1");
    apply_desk_scale(single);
    CHECK(single.stages.size() == 1);
    CHECK_NOTHROW(single.validate());
}

TEST_CASE("two identical training runs are byte-identical") {
    const fs::path root = fs::temp_directory_path() / "pneumoseg_train_determinism";
    fs::remove_all(root);
    const std::string data_dir = (root / "data").string();

    SyntheticSpec spec;
    spec.count = 16;
    spec.size = 32;
    spec.seed = 5;
    spec.as_pgm = true;
    generate_synthetic_dataset(spec, data_dir);
    Dataset dataset = load_dataset(data_dir);
    REQUIRE(dataset.size() == 16);

    ExperimentConfig cfg;
    cfg.name = "tiny";
    cfg.model.width_multiplier = 0.125;
    cfg.train_fraction = 0.75;
    cfg.binarization_threshold = 0.5;
    cfg.removal_threshold = 2;
    cfg.seed = 3;
    StageConfig stage;
    stage.resolution = 32;
    stage.batch_size = 4;
    stage.epochs = 2;
    stage.lr_max = 1e-3;
    cfg.stages = {stage};

    TrainResult r1 = run_experiment(cfg, dataset, (root / "run1").string(), nullptr);
    TrainResult r2 = run_experiment(cfg, dataset, (root / "run2").string(), nullptr);

    REQUIRE(r1.history.size() == 2);
    CHECK(r1.history[0].epoch == 1);
    CHECK(r1.history[0].stage == 1);
    CHECK(r1.history[0].lr == 1e-3);  // cosine starts at lr_max
    CHECK(std::isfinite(r1.history[0].train_loss));
    CHECK(r1.history[1].val_iou >= 0.0);
    CHECK(r1.history[1].val_iou <= 1.0);

    CHECK(slurp(r1.metrics_csv) == slurp(r2.metrics_csv));
    CHECK(slurp(r1.final_checkpoint) == slurp(r2.final_checkpoint));

    // Inference over the dataset is just as reproducible end to end.
    ResNet34UNet<float> model(cfg.model, 0);
    load_checkpoint_into(r1.final_checkpoint, model);
    PredictConfig pc = inference_config(cfg);
    pc.output_size = 32;
    const std::string sub1 = (root / "sub1.csv").string();
    const std::string sub2 = (root / "sub2.csv").string();
    auto recs = predict_dataset(model, dataset, pc, sub1, nullptr);
    predict_dataset(model, dataset, pc, sub2, nullptr);
    CHECK(recs.size() == dataset.size());
    CHECK(slurp(sub1) == slurp(sub2));

    // The CSV reparses to the records just returned.
    auto reparsed = parse_annotation_csv(sub1);
    REQUIRE(reparsed.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(reparsed[i].image_id == recs[i].image_id);
        CHECK(reparsed[i].runs == recs[i].runs);
    }

    // evaluate_dataset scores only the requested indices.
    EvalResult ev = evaluate_dataset(model, dataset, {0, 1, 2}, pc);
    CHECK(ev.images == 3);
    CHECK(ev.mean_dsc >= 0.0);
    CHECK(ev.mean_dsc <= 1.0);
    CHECK(ev.mean_iou <= ev.mean_dsc + 1e-12);

    fs::remove_all(root);
}
