#include <doctest.h>

#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pneumoseg/checkpoint.hpp"
#include "pneumoseg/errors.hpp"
#include "pneumoseg/model.hpp"
#include "pneumoseg/rng.hpp"

using namespace pneumoseg;

namespace {

Tensor<float> random_input(int n, int c, int size, std::uint64_t seed) {
    Tensor<float> x = Tensor<float>::zeros({n, c, size, size});
    Rng rng(seed);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        x.data()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    }
    return x;
}

std::map<std::string, std::vector<int>> trace_map(const ForwardTrace& trace) {
    std::map<std::string, std::vector<int>> m;
    for (const auto& e : trace) m[e.name] = e.shape;
    return m;
}

std::string temp_path(const char* stem) {
    return std::string("/tmp/pneumoseg_model_test_") + stem + ".ckpt";
}

}  // namespace

TEST_CASE("stage outputs follow the encoder/decoder ladder") {
    ModelConfig cfg;  // 3 channels, full width
    ResNet34UNet<float> model(cfg, 1);
    ForwardTrace trace;
    Tensor<float> out = model.forward(nullptr, random_input(1, 3, 64, 2), Mode::kEval, &trace);

    auto shapes = trace_map(trace);
    // Stem halves, maxpool halves again, each later encoder stage halves;
    // decoders double back up to the input grid.
    CHECK(shapes.at("conv1") == std::vector<int>{1, 64, 32, 32});
    CHECK(shapes.at("maxpool") == std::vector<int>{1, 64, 16, 16});
    CHECK(shapes.at("encoder1") == std::vector<int>{1, 64, 16, 16});
    CHECK(shapes.at("encoder2") == std::vector<int>{1, 128, 8, 8});
    CHECK(shapes.at("encoder3") == std::vector<int>{1, 256, 4, 4});
    CHECK(shapes.at("encoder4") == std::vector<int>{1, 512, 2, 2});
    CHECK(shapes.at("decoder1") == std::vector<int>{1, 256, 4, 4});
    CHECK(shapes.at("decoder2") == std::vector<int>{1, 128, 8, 8});
    CHECK(shapes.at("decoder3") == std::vector<int>{1, 64, 16, 16});
    CHECK(shapes.at("decoder4") == std::vector<int>{1, 32, 32, 32});
    CHECK(shapes.at("decoder5") == std::vector<int>{1, 16, 64, 64});
    CHECK(shapes.at("output") == std::vector<int>{1, 1, 64, 64});
    CHECK(shapes.count("adapter") == 0);
    CHECK(out.shape() == std::vector<int>{1, 1, 64, 64});

    // Probabilities from the sigmoid head (float32 saturates at the ends).
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        CHECK(out.data()[i] >= 0.0f);
        CHECK(out.data()[i] <= 1.0f);
    }
}

TEST_CASE("width multiplier scales every stage; adapter lifts 1->3") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.25;
    ResNet34UNet<float> model(cfg, 1);
    ForwardTrace trace;
    model.forward(nullptr, random_input(2, 3, 64, 3), Mode::kEval, &trace);
    auto shapes = trace_map(trace);
    CHECK(shapes.at("conv1") == std::vector<int>{2, 16, 32, 32});
    CHECK(shapes.at("encoder4") == std::vector<int>{2, 128, 2, 2});
    CHECK(shapes.at("decoder5") == std::vector<int>{2, 4, 64, 64});
    CHECK(shapes.at("output") == std::vector<int>{2, 1, 64, 64});

    ModelConfig mono;
    mono.in_channels = 1;
    mono.include_channel_adapter = true;
    mono.width_multiplier = 0.25;
    ResNet34UNet<float> adapter_model(mono, 1);
    ForwardTrace t2;
    adapter_model.forward(nullptr, random_input(1, 1, 32, 4), Mode::kEval, &t2);
    CHECK(t2.front().name == "adapter");
    CHECK(t2.front().shape == std::vector<int>{1, 3, 32, 32});
}

TEST_CASE("non-square inputs work when both sides divide by 32") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.25;
    ResNet34UNet<float> model(cfg, 5);
    Tensor<float> x = Tensor<float>::zeros({1, 3, 64, 96});
    Tensor<float> out = model.forward(nullptr, x, Mode::kEval);
    CHECK(out.shape() == std::vector<int>{1, 1, 64, 96});
}

TEST_CASE("invalid inputs and configs are rejected") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.25;
    ResNet34UNet<float> model(cfg, 1);
    CHECK_THROWS_AS(model.forward(nullptr, Tensor<float>::zeros({3, 64, 64}), Mode::kEval),
                    ShapeError);
    CHECK_THROWS_AS(model.forward(nullptr, Tensor<float>::zeros({1, 1, 64, 64}), Mode::kEval),
                    ShapeError);
    CHECK_THROWS_AS(model.forward(nullptr, Tensor<float>::zeros({1, 3, 100, 96}), Mode::kEval),
                    ShapeError);
    CHECK_THROWS_AS(model.forward(nullptr, Tensor<float>::zeros({1, 3, 64, 100}), Mode::kEval),
                    ShapeError);
    CHECK_THROWS_AS(model.forward(nullptr, Tensor<float>::zeros({1, 3, 16, 16}), Mode::kEval),
                    ShapeError);

    ModelConfig bad;
    bad.in_channels = 2;
    CHECK_THROWS_AS(ResNet34UNet<float>(bad, 1), ConfigError);
    bad = ModelConfig{};
    bad.include_channel_adapter = true;  // only valid with 1-channel input
    CHECK_THROWS_AS(ResNet34UNet<float>(bad, 1), ConfigError);
    bad = ModelConfig{};
    bad.width_multiplier = 0.0;
    CHECK_THROWS_AS(ResNet34UNet<float>(bad, 1), ConfigError);
}

TEST_CASE("parameter budget") {
    ModelConfig rgb;
    ResNet34UNet<float> model(rgb, 1);
    const std::int64_t count = model.parameter_count();
    CHECK(count == 24440593);

    // Within 3% of the published 24.4M figure.
    CHECK(std::llabs(count - 24400000) <= static_cast<std::int64_t>(24400000 * 0.03));

    // parameter_count agrees with the parameter list and excludes buffers.
    std::int64_t by_hand = 0;
    for (auto& p : model.parameters()) by_hand += p.numel();
    CHECK(by_hand == count);

    ModelConfig mono;
    mono.in_channels = 1;
    mono.include_channel_adapter = true;
    CHECK(ResNet34UNet<float>(mono, 1).parameter_count() == 24440599);  // +3 weights, +3 biases

    ModelConfig quarter;
    quarter.width_multiplier = 0.25;
    CHECK(ResNet34UNet<float>(quarter, 1).parameter_count() == 1532917);
}

TEST_CASE("named tensors: unique names, stable scheme, buffer flags") {
    ModelConfig mono;
    mono.in_channels = 1;
    mono.include_channel_adapter = true;
    mono.width_multiplier = 0.25;
    ResNet34UNet<float> model(mono, 1);
    auto tensors = model.named_tensors();

    std::set<std::string> names;
    std::int64_t buffer_count = 0;
    for (const auto& nt : tensors) {
        names.insert(nt.name);
        if (nt.is_buffer) ++buffer_count;
    }
    CHECK(names.size() == tensors.size());

    CHECK(names.count("adapter.weight") == 1);
    CHECK(names.count("adapter.bias") == 1);
    CHECK(names.count("stem.weight") == 1);
    CHECK(names.count("stem.bn.running_mean") == 1);
    CHECK(names.count("encoder1.block1.conv1.weight") == 1);
    CHECK(names.count("encoder1.block1.proj.weight") == 1);  // every stage's first block projects
    CHECK(names.count("encoder1.block2.proj.weight") == 0);
    CHECK(names.count("encoder3.block6.conv2.bn.beta") == 1);
    CHECK(names.count("encoder3.block7.conv1.weight") == 0);  // 3-4-6-3 layout
    CHECK(names.count("decoder5.conv2.bn.gamma") == 1);
    CHECK(names.count("head.weight") == 1);
    CHECK(names.count("head.bias") == 1);

    // Two running-stat buffers per BatchNorm, nothing else flagged.
    CHECK(buffer_count == 2 * static_cast<std::int64_t>(model.batchnorm_modules().size()));
    for (const auto& nt : tensors) {
        const bool is_stat = nt.name.find("running_") != std::string::npos;
        CHECK(nt.is_buffer == is_stat);
    }
}

TEST_CASE("initialization is a pure function of the seed") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.25;
    ResNet34UNet<float> a(cfg, 7);
    ResNet34UNet<float> b(cfg, 7);
    ResNet34UNet<float> c(cfg, 8);

    auto ta = a.named_tensors();
    auto tb = b.named_tensors();
    auto tc = c.named_tensors();
    REQUIRE(ta.size() == tb.size());

    bool all_equal = true;
    bool seed_differs = false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        for (std::int64_t j = 0; j < ta[i].tensor.numel(); ++j) {
            if (ta[i].tensor.data()[j] != tb[i].tensor.data()[j]) all_equal = false;
            if (ta[i].tensor.data()[j] != tc[i].tensor.data()[j]) seed_differs = true;
        }
    }
    CHECK(all_equal);
    CHECK(seed_differs);
}

TEST_CASE("checkpoint round-trip restores exact bits and keeps storage alive") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.25;
    ResNet34UNet<float> model(cfg, 11);

    // Move the BatchNorm buffers off their init values so they are covered.
    Tape<float> tape;
    model.forward(&tape, random_input(2, 3, 32, 12), Mode::kTrain);

    const std::string path = temp_path("roundtrip");
    save_checkpoint(path, model.named_tensors());

    // Snapshot, perturb everything, then reload into the same objects.
    std::vector<std::vector<float>> saved;
    std::vector<const void*> storages;
    for (auto& nt : model.named_tensors()) {
        saved.emplace_back(nt.tensor.data(), nt.tensor.data() + nt.tensor.numel());
        storages.push_back(nt.tensor.storage_id());
        for (std::int64_t i = 0; i < nt.tensor.numel(); ++i) nt.tensor.data()[i] += 1.25f;
    }
    load_checkpoint_into(path, model);

    auto tensors = model.named_tensors();
    REQUIRE(tensors.size() == saved.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        CHECK(tensors[i].tensor.storage_id() == storages[i]);
        bool exact = true;
        for (std::int64_t j = 0; j < tensors[i].tensor.numel(); ++j) {
            if (tensors[i].tensor.data()[j] != saved[i][static_cast<std::size_t>(j)]) exact = false;
        }
        CHECK(exact);
    }
    std::remove(path.c_str());
}

TEST_CASE("raw checkpoint load preserves names, shapes and payload") {
    std::vector<NamedTensor<float>> tensors;
    tensors.push_back({"alpha", Tensor<float>::from_data({2, 3}, {1, 2, 3, 4, 5, 6}), false});
    tensors.push_back({"beta.bn.running_var", Tensor<float>::full({4}, 0.5f), false});
    const std::string path = temp_path("raw");
    save_checkpoint(path, tensors);

    auto loaded = load_checkpoint(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].name == "alpha");
    CHECK(loaded[0].tensor.shape() == std::vector<int>{2, 3});
    CHECK(loaded[0].tensor.data()[5] == 6.0f);
    CHECK(loaded[1].name == "beta.bn.running_var");
    CHECK(loaded[1].tensor.data()[3] == 0.5f);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint mismatches are loud") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.25;
    ResNet34UNet<float> model(cfg, 3);
    auto tensors = model.named_tensors();

    const std::string path = temp_path("bad");

    SUBCASE("missing tensor") {
        tensors.pop_back();
        save_checkpoint(path, tensors);
        CHECK_THROWS_AS(load_checkpoint_into(path, model), CheckpointFormatError);
    }
    SUBCASE("unexpected tensor") {
        tensors.push_back({"stowaway", Tensor<float>::zeros({1}), false});
        save_checkpoint(path, tensors);
        CHECK_THROWS_AS(load_checkpoint_into(path, model), CheckpointFormatError);
    }
    SUBCASE("shape mismatch") {
        tensors[0].tensor = Tensor<float>::zeros({1, 1, 1, 1});
        save_checkpoint(path, tensors);
        CHECK_THROWS_AS(load_checkpoint_into(path, model), CheckpointFormatError);
    }
    SUBCASE("bad magic") {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        REQUIRE(f != nullptr);
        std::fputs("not a checkpoint at all", f);
        std::fclose(f);
        CHECK_THROWS_AS(load_checkpoint(path), CheckpointFormatError);
    }
    SUBCASE("truncated payload") {
        save_checkpoint(path, tensors);
        std::FILE* f = std::fopen(path.c_str(), "rb");
        REQUIRE(f != nullptr);
        std::fseek(f, 0, SEEK_END);
        const long full = std::ftell(f);
        std::fseek(f, 0, SEEK_SET);
        std::vector<char> bytes(static_cast<std::size_t>(full));
        REQUIRE(std::fread(bytes.data(), 1, bytes.size(), f) == bytes.size());
        std::fclose(f);
        f = std::fopen(path.c_str(), "wb");
        REQUIRE(f != nullptr);
        std::fwrite(bytes.data(), 1, bytes.size() / 2, f);
        std::fclose(f);
        CHECK_THROWS_AS(load_checkpoint(path), CheckpointFormatError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint("/tmp/pneumoseg_no_such_file.ckpt"), Error);
    }
    std::remove(path.c_str());
}

TEST_CASE("train-mode forward moves BatchNorm statistics, eval does not") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.25;
    ResNet34UNet<float> model(cfg, 9);
    auto* bn = model.batchnorm_modules().front();
    std::vector<float> before(bn->running_mean.data(),
                              bn->running_mean.data() + bn->running_mean.numel());

    model.forward(nullptr, random_input(2, 3, 32, 21), Mode::kEval);
    bool moved_eval = false;
    for (std::int64_t i = 0; i < bn->running_mean.numel(); ++i) {
        if (bn->running_mean.data()[i] != before[static_cast<std::size_t>(i)]) moved_eval = true;
    }
    CHECK_FALSE(moved_eval);

    Tape<float> tape;
    model.forward(&tape, random_input(2, 3, 32, 21), Mode::kTrain);
    bool moved_train = false;
    for (std::int64_t i = 0; i < bn->running_mean.numel(); ++i) {
        if (bn->running_mean.data()[i] != before[static_cast<std::size_t>(i)]) moved_train = true;
    }
    CHECK(moved_train);
}
