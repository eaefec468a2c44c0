#include <doctest.h>

#include <cmath>
#include <vector>

#include "pneumoseg/augment.hpp"
#include "pneumoseg/errors.hpp"
#include "pneumoseg/rng.hpp"

using namespace pneumoseg;

namespace {

// Textured image with an off-center blob mask: asymmetric in both axes so
// any unintended transform shows up.
Sample make_fixture(int size, int channels = 1) {
    Sample s;
    s.id = "fixture";
    s.image = Tensor<float>::zeros({channels, size, size});
    s.mask = BinaryMask(size, size);
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                s.image.data()[(c * size + y) * size + x] =
                    0.5f + 0.3f * std::sin(0.7f * x + 0.3f * y) + 0.1f * (c + 1) * (x > size / 2);
            }
        }
    }
    for (int y = size / 4; y < size / 2; ++y) {
        for (int x = size / 3; x < size / 2 + 2; ++x) s.mask.at(y, x) = 1;
    }
    return s;
}

// Replaces channel 0 with the mask itself; thresholding the transformed
// channel must then reproduce the transformed mask exactly (the two ride the
// same interpolation path).
Sample mask_as_image(const Sample& s) {
    Sample out = s;
    out.image = s.image.clone();
    const int size = s.mask.height;
    for (int i = 0; i < size * size; ++i) {
        out.image.data()[i] = static_cast<float>(s.mask.pixels[static_cast<std::size_t>(i)]);
    }
    return out;
}

bool images_equal(const Tensor<float>& a, const Tensor<float>& b) {
    if (a.shape() != b.shape()) return false;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        if (a.data()[i] != b.data()[i]) return false;
    }
    return true;
}

bool images_close(const Tensor<float>& a, const Tensor<float>& b, float tol) {
    if (a.shape() != b.shape()) return false;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        if (std::fabs(a.data()[i] - b.data()[i]) > tol) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("horizontal flip is an exact involution") {
    Sample s = make_fixture(33, 2);  // odd width: center column must not move
    Sample flipped = horizontal_flip(s);
    CHECK_FALSE(images_equal(flipped.image, s.image));
    CHECK(flipped.mask != s.mask);

    Sample back = horizontal_flip(flipped);
    CHECK(images_equal(back.image, s.image));
    CHECK(back.mask == s.mask);
    CHECK(back.id == s.id);

    // Mask pixels travel with their image pixels.
    const int size = 33;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            CHECK(flipped.mask.at(y, x) == s.mask.at(y, size - 1 - x));
        }
    }
    for (int y = 0; y < size; ++y) {
        CHECK(flipped.image.data()[y * size + size / 2] == s.image.data()[y * size + size / 2]);
    }
}

TEST_CASE("photometric ops touch the image only, inside [0,1]") {
    Sample s = make_fixture(24);
    AugmentParams p;
    for (Photometric which : {Photometric::kContrast, Photometric::kGamma, Photometric::kBrightness}) {
        Rng rng = Rng::stream(5, 0, static_cast<std::uint64_t>(which));
        Sample out = apply_photometric(s, which, rng, p);
        CHECK(out.mask == s.mask);
        CHECK(out.image.shape() == s.image.shape());
        for (std::int64_t i = 0; i < out.image.numel(); ++i) {
            CHECK(out.image.data()[i] >= 0.0f);
            CHECK(out.image.data()[i] <= 1.0f);
        }
        // Identical draws give identical results.
        Rng rng2 = Rng::stream(5, 0, static_cast<std::uint64_t>(which));
        CHECK(images_equal(apply_photometric(s, which, rng2, p).image, out.image));
    }
}

TEST_CASE("photometric identities") {
    Sample s = make_fixture(16);
    AugmentParams zero;
    zero.contrast_limit = 0.0;
    zero.brightness_limit = 0.0;
    zero.gamma_low = zero.gamma_high = 1.0;
    for (Photometric which : {Photometric::kContrast, Photometric::kGamma, Photometric::kBrightness}) {
        Rng rng(1);
        Sample out = apply_photometric(s, which, rng, zero);
        CHECK(images_close(out.image, s.image, 1e-6f));
    }

    // Contrast pivots at 0.5: that value is a fixed point of any factor.
    Sample gray = make_fixture(8);
    for (std::int64_t i = 0; i < gray.image.numel(); ++i) gray.image.data()[i] = 0.5f;
    AugmentParams wide;
    wide.contrast_limit = 0.2;
    Rng rng(77);
    Sample out = apply_photometric(gray, Photometric::kContrast, rng, wide);
    for (std::int64_t i = 0; i < out.image.numel(); ++i) {
        CHECK(out.image.data()[i] == doctest::Approx(0.5).epsilon(1e-6));
    }

    // Gamma fixes 0 and 1 regardless of the exponent.
    Sample ends = make_fixture(8);
    ends.image.data()[0] = 0.0f;
    ends.image.data()[1] = 1.0f;
    Rng rng2(78);
    Sample g = apply_photometric(ends, Photometric::kGamma, rng2, AugmentParams{});
    CHECK(g.image.data()[0] == doctest::Approx(0.0));
    CHECK(g.image.data()[1] == doctest::Approx(1.0));

    // Brightness is a uniform shift: pairwise differences survive away from
    // the clamp.
    Sample mid = make_fixture(8);
    for (std::int64_t i = 0; i < mid.image.numel(); ++i) {
        mid.image.data()[i] = 0.3f + 0.01f * static_cast<float>(i % 30);
    }
    Rng rng3(79);
    Sample bshift = apply_photometric(mid, Photometric::kBrightness, rng3, AugmentParams{});
    const float delta = bshift.image.data()[0] - mid.image.data()[0];
    for (std::int64_t i = 1; i < mid.image.numel(); ++i) {
        CHECK(bshift.image.data()[i] - mid.image.data()[i] == doctest::Approx(delta).epsilon(1e-5));
    }
}

TEST_CASE("distortions keep mask and image on the same warp") {
    Sample s = make_fixture(32);
    for (Distortion which : {Distortion::kElastic, Distortion::kGrid, Distortion::kOptical}) {
        for (std::uint64_t draw = 0; draw < 4; ++draw) {
            Rng rng_a = Rng::stream(31, draw, static_cast<std::uint64_t>(which));
            Rng rng_b = Rng::stream(31, draw, static_cast<std::uint64_t>(which));
            Sample out = geometric_distort(s, which, rng_a, AugmentParams{});
            Sample probe = geometric_distort(mask_as_image(s), which, rng_b, AugmentParams{});

            CHECK(out.image.shape() == s.image.shape());
            CHECK(out.mask.height == s.mask.height);
            for (std::uint8_t px : out.mask.pixels) CHECK((px == 0 || px == 1));

            // Channel 0 of the probe carried the mask through the image
            // path; its 0.5-threshold must equal the warped mask bit for bit.
            for (std::size_t i = 0; i < out.mask.pixels.size(); ++i) {
                CHECK((probe.image.data()[i] >= 0.5f ? 1 : 0) == out.mask.pixels[i]);
            }
        }
    }
}

TEST_CASE("zero-magnitude distortions are the identity") {
    Sample s = make_fixture(32);
    AugmentParams p;
    p.elastic_alpha = 0.0;
    p.grid_limit = 0.0;
    p.optical_distort_limit = 0.0;
    p.optical_shift_limit = 0.0;
    for (Distortion which : {Distortion::kElastic, Distortion::kGrid, Distortion::kOptical}) {
        Rng rng(3);
        Sample out = geometric_distort(s, which, rng, p);
        CHECK(images_close(out.image, s.image, 1e-5f));
        CHECK(out.mask == s.mask);
    }
}

TEST_CASE("random crop resamples a window back to full size") {
    Sample s = make_fixture(32);
    AugmentParams p;

    // Full-scale crop is the identity.
    p.crop_min_scale = 1.0;
    Rng rng(9);
    Sample same = random_sized_crop(s, rng, p);
    CHECK(images_close(same.image, s.image, 1e-6f));
    CHECK(same.mask == s.mask);

    p.crop_min_scale = 0.8;
    for (std::uint64_t draw = 0; draw < 6; ++draw) {
        Rng rng_a = Rng::stream(91, draw, 0);
        Rng rng_b = Rng::stream(91, draw, 0);
        Sample out = random_sized_crop(s, rng_a, p);
        Sample probe = random_sized_crop(mask_as_image(s), rng_b, p);
        CHECK(out.image.shape() == s.image.shape());
        for (std::size_t i = 0; i < out.mask.pixels.size(); ++i) {
            CHECK((probe.image.data()[i] >= 0.5f ? 1 : 0) == out.mask.pixels[i]);
        }
        // A crop can only zoom in: the mask area cannot shrink to nothing
        // unless the window missed it entirely, and never exceeds the frame.
        CHECK(out.mask.popcount() <= static_cast<std::int64_t>(out.mask.pixels.size()));
    }
}

TEST_CASE("mismatched sample shapes are rejected") {
    Sample bad = make_fixture(16);
    bad.mask = BinaryMask(8, 8);
    Rng rng(1);
    AugmentParams p;
    CHECK_THROWS_AS(horizontal_flip(bad), ShapeError);
    CHECK_THROWS_AS(apply_photometric(bad, Photometric::kGamma, rng, p), ShapeError);
    CHECK_THROWS_AS(geometric_distort(bad, Distortion::kGrid, rng, p), ShapeError);
    CHECK_THROWS_AS(random_sized_crop(bad, rng, p), ShapeError);
}

TEST_CASE("ablation presets gate the groups") {
    CHECK_THROWS_AS(AugmentParams::ablation("a5"), ConfigError);

    AugmentParams none = AugmentParams::ablation("none");
    CHECK_FALSE(none.enable_flip);
    CHECK_FALSE(none.enable_photometric);
    CHECK_FALSE(none.enable_distort);
    CHECK_FALSE(none.enable_crop);

    AugmentParams a1 = AugmentParams::ablation("a1");
    CHECK(a1.enable_flip);
    CHECK_FALSE(a1.enable_photometric);

    AugmentParams both = AugmentParams::ablation("a1+a2");
    CHECK(both.enable_flip);
    CHECK(both.enable_photometric);
    CHECK_FALSE(both.enable_distort);

    CHECK(AugmentParams::ablation("a3").enable_distort);
    CHECK(AugmentParams::ablation("a4").enable_crop);

    AugmentParams all = AugmentParams::ablation("all");
    CHECK(all.enable_flip);
    CHECK(all.enable_photometric);
    CHECK(all.enable_distort);
    CHECK(all.enable_crop);
}

TEST_CASE("pipeline randomness is a pure function of seed, epoch and index") {
    Sample s = make_fixture(32);
    AugmentPipeline pipe(AugmentParams::ablation("all"), 42);

    Sample a = pipe.apply(s, 3, 17);
    Sample b = pipe.apply(s, 3, 17);
    CHECK(images_equal(a.image, b.image));
    CHECK(a.mask == b.mask);

    // Nearby streams decorrelate: across a handful of (epoch, index) pairs
    // at least one transform fires differently.
    bool any_differs = false;
    for (int idx = 0; idx < 6 && !any_differs; ++idx) {
        Sample c = pipe.apply(s, 4, idx);
        any_differs = !images_equal(c.image, a.image);
    }
    CHECK(any_differs);

    // A different base seed changes the draws somewhere in the first epochs.
    AugmentPipeline other(AugmentParams::ablation("all"), 43);
    bool seed_matters = false;
    for (int idx = 0; idx < 8 && !seed_matters; ++idx) {
        seed_matters = !images_equal(other.apply(s, 3, idx).image, pipe.apply(s, 3, idx).image);
    }
    CHECK(seed_matters);

    // Disabled pipeline is the identity, bit for bit.
    AugmentPipeline off(AugmentParams::ablation("none"), 42);
    for (int idx = 0; idx < 4; ++idx) {
        Sample c = off.apply(s, 0, idx);
        CHECK(images_equal(c.image, s.image));
        CHECK(c.mask == s.mask);
    }

    // Masks stay binary whatever fires.
    for (int idx = 0; idx < 10; ++idx) {
        Sample c = pipe.apply(s, 5, idx);
        for (std::uint8_t px : c.mask.pixels) CHECK((px == 0 || px == 1));
        CHECK(c.image.shape() == s.image.shape());
    }
}
