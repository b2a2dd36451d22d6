#include <cmath>
#include <random>

#include "doctest.h"
#include "json.hpp"

#include "casr/drift.hpp"
#include "casr/error.hpp"
#include "casr/parallel.hpp"
#include "casr/sdam.hpp"
#include "helpers.hpp"

using namespace casr;
using namespace casr::drift;

namespace {

linalg::Matrix random_spd(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    linalg::Matrix b(n);
    for (double& v : b.a) v = g(rng);
    linalg::Matrix s(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += b(i, k) * b(j, k);
            s(i, j) = acc / n;
        }
    for (int i = 0; i < n; ++i) s(i, i) += 0.05;
    return s;
}

std::vector<double> random_mean(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> m(static_cast<std::size_t>(n));
    for (double& v : m) v = g(rng);
    return m;
}

FeatureGaussian gauss1(double mu, double var) {
    linalg::Matrix c(1);
    c(0, 0) = var;
    return make_gaussian({mu}, c);
}

// d^2 for 2-D Gaussians in long double. The eigenvalues of S1 S2 are
// real and non-negative, so Tr (S1 S2)^1/2 = sqrt(tr(S1 S2) + 2 sqrt(det(S1 S2))).
long double frechet_2d(const FeatureGaussian& a, const FeatureGaussian& b) {
    using L = long double;
    const L a00 = a.cov(0, 0), a01 = a.cov(0, 1), a11 = a.cov(1, 1);
    const L b00 = b.cov(0, 0), b01 = b.cov(0, 1), b11 = b.cov(1, 1);
    const L tr_ab = a00 * b00 + 2 * a01 * b01 + a11 * b11;
    const L det_ab = (a00 * a11 - a01 * a01) * (b00 * b11 - b01 * b01);
    const L tr_root = std::sqrt(tr_ab + 2 * std::sqrt(det_ab));
    const L dm0 = L(a.mean[0]) - b.mean[0];
    const L dm1 = L(a.mean[1]) - b.mean[1];
    return dm0 * dm0 + dm1 * dm1 + a00 + a11 + b00 + b11 - 2 * tr_root;
}

// DC gain of the even and odd response of every bank filter, from its taps.
std::vector<double> dc_gains() {
    std::vector<double> gains;
    for (const BankFilter& f : gabor_bank()) {
        double sxr = 0, sxi = 0, syr = 0, syi = 0;
        for (std::size_t t = 0; t < f.x_re.size(); ++t) {
            sxr += f.x_re[t];
            sxi += f.x_im[t];
            syr += f.y_re[t];
            syi += f.y_im[t];
        }
        gains.push_back(syr * sxr - syi * sxi);
        gains.push_back(syr * sxi + syi * sxr);
    }
    return gains;
}

}  // namespace

TEST_CASE("the bank holds 8 complex filters") {
    CHECK(gabor_bank().size() == 8);
    for (const BankFilter& f : gabor_bank()) {
        CHECK(f.x_re.size() == static_cast<std::size_t>(2 * f.radius + 1));
        CHECK(f.y_im.size() == f.x_re.size());
    }
}

TEST_CASE("1-D closed forms") {
    CHECK(std::abs(frechet_distance(gauss1(0, 1), gauss1(1, 1)) - 1.0) < 1e-9);
    CHECK(std::abs(frechet_distance(gauss1(0, 1), gauss1(0, 4)) - 1.0) < 1e-9);
    CHECK(std::abs(frechet_distance(gauss1(0.3, 2.0), gauss1(0.3, 2.0))) < 1e-9);
}

TEST_CASE("2-D Frechet distance agrees with the analytic oracle") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        const FeatureGaussian a = make_gaussian(random_mean(2, rng), random_spd(2, rng));
        const FeatureGaussian b = make_gaussian(random_mean(2, rng), random_spd(2, rng));
        const double d = frechet_distance(a, b);
        CHECK(std::abs(d - static_cast<double>(frechet_2d(a, b))) < 1e-8);
    }
}

TEST_CASE("property: symmetry and non-negativity over dims 1 to 16") {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 1000; ++i) {
        const int n = 1 + i % 16;
        const FeatureGaussian a = make_gaussian(random_mean(n, rng), random_spd(n, rng));
        const FeatureGaussian b = make_gaussian(random_mean(n, rng), random_spd(n, rng));
        const double ab = frechet_distance(a, b);
        const double ba = frechet_distance(b, a);
        CHECK(ab >= 0.0);
        CHECK(std::abs(ab - ba) < 1e-8);
        CHECK(std::abs(frechet_distance(a, a)) < 1e-9);
    }
    CHECK_THROWS_AS(frechet_distance(gauss1(0, 1), make_gaussian({0, 0}, linalg::Matrix::identity(2))),
                    InvalidArgument);
}

TEST_CASE("property: the square root obeys the triangle inequality in 1-D") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> mu(-3, 3), var(0.01, 5);
    for (int i = 0; i < 1000; ++i) {
        const auto a = gauss1(mu(rng), var(rng));
        const auto b = gauss1(mu(rng), var(rng));
        const auto c = gauss1(mu(rng), var(rng));
        const double ab = std::sqrt(frechet_distance(a, b));
        const double ac = std::sqrt(frechet_distance(a, c));
        const double cb = std::sqrt(frechet_distance(c, b));
        CHECK(ab <= ac + cb + 1e-6);
    }
}

TEST_CASE("constant image has shrinkage-only covariance and DC-gain means") {
    const float level = 0.375f;
    const FeatureGaussian g = fit_feature_gaussian(ImageBuffer::filled(24, 20, 1, level));
    CHECK(g.sample_count == 480);
    CHECK_FALSE(g.shrinkage_only);
    for (int i = 0; i < bank_size; ++i)
        for (int j = 0; j < bank_size; ++j) CHECK(g.cov(i, j) == (i == j ? covariance_shrinkage : 0.0));
    const auto gains = dc_gains();
    for (int i = 0; i < bank_size; ++i) CHECK(std::abs(g.mean[i] - level * gains[i]) < 1e-9);
    CHECK_THROWS_AS(fit_feature_gaussian(ImageBuffer(15, 40, 1)), InvalidArgument);
}

TEST_CASE("a global intensity offset moves the means by the DC gains") {
    const double delta = 0.125;
    ImageBuffer base = testing::texture_image(40, 36, 1, 3);
    ImageBuffer shifted = base;
    for (int y = 0; y < base.height(); ++y)
        for (int x = 0; x < base.width(); ++x) {
            const float v = 0.25f + 0.5f * base.at(x, y);
            base.set(x, y, 0, v);
            shifted.set(x, y, 0, v + static_cast<float>(delta));
        }
    const FeatureGaussian a = fit_feature_gaussian(base);
    const FeatureGaussian b = fit_feature_gaussian(shifted);
    const auto gains = dc_gains();
    for (int i = 0; i < bank_size; ++i) {
        CHECK(std::abs((b.mean[i] - a.mean[i]) - delta * gains[i]) < 1e-6);
        for (int j = 0; j < bank_size; ++j) CHECK(std::abs(b.cov(i, j) - a.cov(i, j)) < 1e-6);
    }
}

TEST_CASE("fitted covariances are symmetric and PSD") {
    for (std::uint64_t s = 0; s < 4; ++s) {
        const FeatureGaussian g = fit_feature_gaussian(testing::random_image(33, 70, 3, s));
        for (int i = 0; i < bank_size; ++i)
            for (int j = 0; j < bank_size; ++j) CHECK(std::abs(g.cov(i, j) - g.cov(j, i)) < 1e-9);
        CHECK(linalg::jacobi_eigen(g.cov).values.front() >= -1e-7);
    }
}

TEST_CASE("feature fitting is independent of the worker count") {
    const ImageBuffer img = testing::texture_image(90, 150, 3, 8);
    FeatureGaussian ref;
    {
        parallel::ScopedWorkers one(1);
        ref = fit_feature_gaussian(img);
    }
    parallel::ScopedWorkers many(5);
    const FeatureGaussian g = fit_feature_gaussian(img);
    CHECK(g.mean == ref.mean);
    CHECK(g.cov.a == ref.cov.a);
}

TEST_CASE("drift reports") {
    const ImageBuffer img = testing::texture_image(32, 32, 3, 4);
    ScalePlan one;
    one.requested = 1;
    const DriftReport single = drift_report({img}, one);
    REQUIRE(single.entries.size() == 1);
    CHECK(single.entries[0].frechet == 0.0);
    CHECK(single.entries[0].l_corr == 0.0);

    ScalePlan p;
    p.factors = {2, 2};
    p.requested = 4;
    const DriftReport same = drift_report({img, img, img}, p);
    REQUIRE(same.entries.size() == 3);
    for (const auto& e : same.entries) {
        CHECK(std::abs(e.frechet) < 1e-9);
        CHECK(std::abs(e.l_corr) < 1e-9);
    }
    CHECK(same.entries[2].iteration == 2);
    CHECK(same.entries[1].factor == 2.0);
    CHECK_THROWS_AS(drift_report({img, img}, p), InvalidArgument);

    const ImageBuffer up1 = resample(img, 64, 64, ResampleKernel::bicubic);
    const ImageBuffer up2 = resample(up1, 128, 128, ResampleKernel::bicubic);
    const DriftReport r1 = drift_report({img, up1, up2}, p);
    const DriftReport r2 = drift_report({img, up1, up2}, p);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(r1.entries[k].frechet >= 0.0);
        CHECK(std::isfinite(r1.entries[k].frechet));
        CHECK(r1.entries[k].frechet == r2.entries[k].frechet);
        CHECK(r1.entries[k].l_corr == r2.entries[k].l_corr);
    }
    CHECK(report_to_json(r1) == report_to_json(r2));
}

TEST_CASE("report serialisation") {
    DriftReport r;
    r.entries.push_back({0, 1.0, 16, 16, 0.0, 0.0, 1.5});
    r.entries.push_back({1, 4.0, 64, 64, 0.25, 0.125, 2.5});
    const auto j = nlohmann::json::parse(report_to_json(r));
    CHECK(j["metric"] == "SIFID-lite");
    CHECK(j["measured"] == true);
    CHECK(j["entries"][1]["frechet_distance"] == 0.25);
    CHECK_FALSE(j["entries"][1].contains("elapsed_ms"));
    CHECK(nlohmann::json::parse(report_to_json(r, true))["entries"][1]["elapsed_ms"] == 2.5);
    CHECK(report_to_csv(r) == "iteration,scale,width,height,frechet_distance,l_corr\n0,1,16,16,0,0\n1,4,64,64,0.25,0.125\n");
    r.measured = false;
    CHECK(nlohmann::json::parse(report_to_json(r))["entries"][1]["frechet_distance"].is_null());
    CHECK(report_to_csv(r).find("1,4,64,64,,\n") != std::string::npos);
}

TEST_CASE("loss bookkeeping") {
    const ImageBuffer a = testing::texture_image(32, 32, 3, 1);
    const ImageBuffer b = testing::texture_image(32, 32, 3, 2);
    const auto sa = sdam::structural_map(a);
    const auto sb = sdam::structural_map(b);

    const LossBreakdown zero = compute_losses(a, a, sa, sa);
    CHECK(zero.l1 == 0.0);
    CHECK(zero.l_depth == 0.0);
    CHECK(zero.l_corr == 0.0);
    CHECK(zero.total_stage1 == 0.0);
    CHECK(zero.total_stage2 == 0.0);
    CHECK_FALSE(zero.l_lpips.has_value());
    CHECK_FALSE(zero.l_gan.has_value());

    const ImageBuffer z = ImageBuffer::filled(16, 16, 3, 0.0f);
    const ImageBuffer o = ImageBuffer::filled(16, 16, 3, 1.0f);
    Lambdas only_l1;
    only_l1.values = {1, 0, 0, 0, 0};
    const LossBreakdown unit = compute_losses(z, o, sdam::structural_map(z), sdam::structural_map(o), only_l1);
    CHECK(unit.l1 == 1.0);
    CHECK(unit.total_stage1 == 1.0);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 3);
    for (int i = 0; i < 50; ++i) {
        Lambdas l;
        l.values = {u(rng), u(rng), u(rng), u(rng), u(rng)};
        const LossBreakdown r = compute_losses(a, b, sa, sb, l);
        CHECK(std::abs(r.total_stage1 - (l.l1() * r.l1 + l.depth() * r.l_depth)) <= 1e-12);
        CHECK(std::abs(r.total_stage2 - (r.total_stage1 + l.corr() * r.l_corr)) <= 1e-12);
        Lambdas doubled = l;
        for (double& v : doubled.values) v *= 2.0;
        const LossBreakdown d = compute_losses(a, b, sa, sb, doubled);
        CHECK(d.total_stage1 == 2.0 * r.total_stage1);
        CHECK(d.total_stage2 == 2.0 * r.total_stage2);
        // The LPIPS and GAN weights never contribute.
        Lambdas absent = l;
        absent.values[1] = 100.0;
        absent.values[2] = 100.0;
        CHECK(compute_losses(a, b, sa, sb, absent).total_stage2 == r.total_stage2);
    }
    CHECK_THROWS_AS(compute_losses(a, z, sa, sa), InvalidArgument);

    const auto j = nlohmann::json::parse(losses_to_json(unit));
    CHECK(j["l_lpips"].is_null());
    CHECK(j["absent_terms"] == nlohmann::json({"lpips", "gan"}));
    CHECK(j["total_stage1"] == 1.0);
}
