#include <chrono>
#include <string>

#include "doctest.h"

#include "casr/backbone.hpp"
#include "casr/error.hpp"
#include "casr/parallel.hpp"
#include "helpers.hpp"

using namespace casr;

namespace {

BackboneSpec external(const std::string& flags = "") {
    return BackboneSpec::parse(std::string("external:") + CASR_ECHO_BACKBONE + (flags.empty() ? "" : " " + flags));
}

std::string failure_message(const BackboneSpec& spec, const ImageBuffer& img, double timeout = 10.0) {
    StepContext ctx;
    ctx.timeout_seconds = timeout;
    try {
        upscale_step(img, nullptr, 2.0, spec, ctx);
    } catch (const BackboneFailure& e) {
        return e.what();
    }
    FAIL("expected a backbone failure");
    return {};
}

}  // namespace

TEST_CASE("spec parsing") {
    CHECK(BackboneSpec::parse("bicubic").kind == BackboneKind::bicubic);
    CHECK(BackboneSpec::parse("lanczos3").kind == BackboneKind::lanczos3);
    CHECK(BackboneSpec::parse("superpixel").kind == BackboneKind::superpixel_nearest);
    CHECK(BackboneSpec::parse("superpixel-nearest").name() == "superpixel-nearest");
    CHECK(BackboneSpec::parse("noisy-bicubic").noise_sigma == 0.03);
    CHECK(BackboneSpec::parse("noisy-bicubic:0.1").noise_sigma == 0.1);
    const BackboneSpec e = BackboneSpec::parse("external:\"python3 -m thing --x 1\"");
    CHECK(e.kind == BackboneKind::external);
    CHECK(e.command == "python3 -m thing --x 1");
    CHECK_THROWS_AS(BackboneSpec::parse("external:"), InvalidArgument);
    CHECK_THROWS_AS(BackboneSpec::parse("external:  "), InvalidArgument);
    CHECK_THROWS_AS(BackboneSpec::parse("esrgan"), InvalidArgument);
    CHECK_THROWS_AS(BackboneSpec::parse("noisy-bicubic:-1"), InvalidArgument);
}

TEST_CASE("bicubic and lanczos3 delegate to resample") {
    const ImageBuffer img = testing::random_image(13, 9, 3, 1);
    CHECK(upscale_step(img, nullptr, 2.0, BackboneSpec::parse("bicubic")) ==
          resample(img, 26, 18, ResampleKernel::bicubic));
    CHECK(upscale_step(img, nullptr, 1.5, BackboneSpec::parse("lanczos3")) ==
          resample(img, 20, 14, ResampleKernel::lanczos3));
    CHECK(scaled_dim(13, 1.5) == 20);
    CHECK(scaled_dim(9, 1.5) == 14);
}

TEST_CASE("sub-scale range and structural size are checked") {
    const ImageBuffer img = testing::random_image(8, 8, 1, 2);
    const BackboneSpec spec;
    CHECK_THROWS_AS(upscale_step(img, nullptr, 1.0, spec), InvalidArgument);
    CHECK_THROWS_AS(upscale_step(img, nullptr, 4.5, spec), InvalidArgument);
    CHECK_NOTHROW(upscale_step(img, nullptr, 4.0, spec));
    const sdam::StructuralMap wrong{ImageBuffer(4, 8, 1), sdam::StructuralSource::gradient_proxy};
    CHECK_THROWS_AS(upscale_step(img, &wrong, 2.0, spec), InvalidArgument);
}

TEST_CASE("superpixel-nearest reproduces nearest upscaling of region-constant input") {
    const ImageBuffer colours = testing::random_image(6, 5, 3, 3);
    ImageBuffer blocks(24, 20, 3);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 24; ++x)
            for (int c = 0; c < 3; ++c) blocks.set(x, y, c, colours.at(x / 4, y / 4, c));
    const ImageBuffer out = upscale_step(blocks, nullptr, 2.0, BackboneSpec::parse("superpixel"));
    CHECK(out == resample(blocks, 48, 40, ResampleKernel::nearest));
}

TEST_CASE("noisy bicubic is seeded, clamped and varies with iteration and patch") {
    const ImageBuffer img = testing::texture_image(16, 16, 3, 4);
    BackboneSpec spec = BackboneSpec::parse("noisy-bicubic");
    spec.seed = 7;
    Backbone b(spec);
    StepContext ctx;
    const ImageBuffer a1 = b.upscale(img, nullptr, 2.0, ctx);
    const ImageBuffer a2 = b.upscale(img, nullptr, 2.0, ctx);
    CHECK(a1 == a2);
    for (float v : a1.data()) CHECK((v >= 0.0f && v <= 1.0f));
    ctx.iteration = 1;
    CHECK_FALSE(b.upscale(img, nullptr, 2.0, ctx) == a1);
    ctx.iteration = 0;
    ctx.patch = 3;
    CHECK_FALSE(b.upscale(img, nullptr, 2.0, ctx) == a1);
    const ImageBuffer clean = resample(img, 32, 32, ResampleKernel::bicubic);
    double sq = 0.0;
    for (std::size_t i = 0; i < clean.data().size(); ++i) {
        const double d = a1.data()[i] - clean.data()[i];
        sq += d * d;
    }
    const double rms = std::sqrt(sq / clean.data().size());
    CHECK(rms > 0.015);
    CHECK(rms < 0.04);
}

TEST_CASE("gaussian noise has unit moments") {
    const auto n = gaussian_noise(200000, 99);
    double s = 0, s2 = 0;
    for (float v : n) {
        s += v;
        s2 += double(v) * v;
    }
    CHECK(std::abs(s / n.size()) < 0.01);
    CHECK(std::abs(s2 / n.size() - 1.0) < 0.01);
    CHECK(gaussian_noise(10, 5) == gaussian_noise(10, 5));
    CHECK(noise_seed(1, 2, 3) != noise_seed(1, 3, 2));
}

TEST_CASE("external echo backbone matches bicubic and keeps the process alive") {
    const ImageBuffer img = testing::random_image(11, 7, 3, 5);
    Backbone b(external());
    StepContext ctx;
    const ImageBuffer ref = resample(img, 33, 21, ResampleKernel::bicubic);
    for (int i = 0; i < 3; ++i) {
        ctx.iteration = i;
        const ImageBuffer out = b.upscale(img, nullptr, 3.0, ctx);
        REQUIRE(out.width() == 33);
        REQUIRE(out.height() == 21);
        CHECK(testing::max_abs_diff(out, ref) <= 1e-6);
    }
    const ImageBuffer gray = testing::random_image(9, 9, 1, 6);
    CHECK(testing::max_abs_diff(b.upscale(gray, nullptr, 1.5, ctx), resample(gray, 14, 14, ResampleKernel::bicubic)) <=
          1e-6);
}

TEST_CASE("structural channel is forwarded only when accepted") {
    const ImageBuffer img = testing::texture_image(10, 10, 3, 7);
    const sdam::StructuralMap s = sdam::structural_map(img);
    BackboneSpec spec = external();
    spec.accepts_structural = true;
    CHECK(upscale_step(img, &s, 2.0, spec).width() == 20);
}

TEST_CASE("a hung process is killed after the timeout") {
    const ImageBuffer img = testing::random_image(8, 8, 1, 8);
    const auto t0 = std::chrono::steady_clock::now();
    const std::string msg = failure_message(external("--hang"), img, 0.5);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(msg.find("no response within") != std::string::npos);
    CHECK(msg.find("hanging on request 0") != std::string::npos);
    CHECK(elapsed < 5.0);
}

TEST_CASE("process faults surface as backbone failures with diagnostics") {
    const ImageBuffer img = testing::random_image(8, 8, 1, 9);
    CHECK(failure_message(external("--bad-frame"), img).find("magic") != std::string::npos);
    const std::string exit_msg = failure_message(external("--exit-code 3"), img);
    CHECK(exit_msg.find("exit") != std::string::npos);
    CHECK(exit_msg.find("exiting with 3") != std::string::npos);
    CHECK(failure_message(external("--wrong-dims"), img).find("expected 16x16x1, got 17x16x1") != std::string::npos);
    CHECK(failure_message(external("--error-response"), img).find("model refused the request") != std::string::npos);
    CHECK_FALSE(failure_message(BackboneSpec::parse("external:/nonexistent/upscaler"), img).empty());
}

TEST_CASE("a process is restarted after a failure") {
    const ImageBuffer img = testing::random_image(8, 8, 1, 10);
    Backbone b(external("--error-response --after 1"));
    StepContext ctx;
    CHECK_NOTHROW(b.upscale(img, nullptr, 2.0, ctx));
    CHECK_THROWS_AS(b.upscale(img, nullptr, 2.0, ctx), BackboneFailure);
    // The replacement process counts requests from zero again.
    CHECK_NOTHROW(b.upscale(img, nullptr, 2.0, ctx));
}

TEST_CASE("concurrent slots use independent processes") {
    const ImageBuffer img = testing::random_image(12, 12, 3, 11);
    Backbone b(external(), 4);
    CHECK(b.slots() == 4);
    std::vector<ImageBuffer> outs(4);
    parallel::ScopedWorkers scope(4);
    parallel::parallel_for(4, [&](std::size_t i) {
        StepContext ctx;
        ctx.patch = i;
        outs[i] = b.upscale(img, nullptr, 2.0, ctx, static_cast<int>(i));
    });
    for (const auto& o : outs) CHECK(o == outs[0]);
}
