#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"

#include "casr/error.hpp"
#include "casr/linalg.hpp"
#include "casr/sdam.hpp"
#include "casr/similarity.hpp"
#include "helpers.hpp"

using namespace casr;
using namespace casr::similarity;

namespace {

FeatureGrid random_grid(int gh, int gw, int dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> raw(static_cast<std::size_t>(gh) * gw * dim);
    for (double& v : raw) v = n(rng);
    return make_grid(gh, gw, dim, raw);
}

void check_matrix_invariants(const CorrelationMatrix& r) {
    for (int i = 0; i < r.n; ++i) {
        CHECK(std::abs(r.at(i, i) - 1.0) < 1e-6);
        for (int j = 0; j < r.n; ++j) {
            CHECK(r.at(i, j) == r.at(j, i));
            CHECK(r.at(i, j) >= -1.0 - 1e-6);
            CHECK(r.at(i, j) <= 1.0 + 1e-6);
        }
    }
}

double smallest_eigenvalue(const CorrelationMatrix& r) {
    linalg::Matrix m(r.n);
    m.a = r.entries;
    return linalg::jacobi_eigen(m).values.front();
}

// Ranks with ties averaged.
std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (i + j) / 2.0;
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    return num / std::sqrt(da * db);
}

// A pattern repeating every two cells horizontally. Each cell holds a bump
// well inside its borders on a flat background, so edge clamping of the
// gradient never sees anything but the background.
ImageBuffer two_cell_pattern(int cells_x, int cells_y, int cell, int shift_cells) {
    ImageBuffer img(cells_x * cell, cells_y * cell, 3);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const int type = ((x / cell) + shift_cells) % 2;
            const int lx = x % cell;
            const int ly = y % cell;
            const bool inside = lx >= 3 && lx < cell - 3 && ly >= 3 && ly < cell - 3;
            for (int c = 0; c < 3; ++c) {
                float v = 0.5f;
                if (inside) v = type == 0 ? 0.9f - 0.1f * c : (lx < cell / 2 ? 0.1f : 0.3f + 0.1f * c);
                img.set(x, y, c, v);
            }
        }
    return img;
}

}  // namespace

TEST_CASE("constant image gives identical descriptors and an all-ones matrix") {
    const FeatureGrid g = embed_features(ImageBuffer::filled(32, 32, 3, 0.4f), 4, 4);
    CHECK(g.cells() == 16);
    CHECK(g.dim == descriptor_dim);
    for (std::size_t c = 1; c < g.cells(); ++c)
        for (int k = 0; k < g.dim; ++k) CHECK(g.vector(c)[k] == g.vector(0)[k]);
    const CorrelationMatrix r = self_correlation(g);
    for (double v : r.entries) CHECK(std::abs(v - 1.0) < 1e-12);
    const GlobalDescriptor gd = global_descriptor(g);
    for (int k = 0; k < g.dim; ++k) CHECK(gd.vector[k] == doctest::Approx(g.vector(0)[k]).epsilon(1e-12));
    CHECK_FALSE(gd.fallback);
}

TEST_CASE("black and white halves give two distinct unit vectors") {
    ImageBuffer img(16, 8, 3);
    for (int y = 0; y < 8; ++y)
        for (int x = 8; x < 16; ++x)
            for (int c = 0; c < 3; ++c) img.set(x, y, c, 1.0f);
    const FeatureGrid g = embed_features(img, 2, 2);
    const CorrelationMatrix r = self_correlation(g);
    CHECK(r.at(0, 1) < 1.0 - 1e-3);
    CHECK(r.at(0, 2) == doctest::Approx(1.0));
    CHECK_THROWS_AS(embed_features(img, 16, 2), InvalidArgument);
    CHECK_THROWS_AS(embed_features(img, 1, 2), InvalidArgument);
}

TEST_CASE("embedded descriptors have unit norm") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const FeatureGrid g = embed_features(testing::random_image(50, 40, s % 2 ? 3 : 1, s), 16, 16);
        for (std::size_t c = 0; c < g.cells(); ++c) {
            double sq = 0.0;
            for (int k = 0; k < g.dim; ++k) sq += g.vector(c)[k] * g.vector(c)[k];
            CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("orthogonal injected descriptors give the identity") {
    const FeatureGrid g = make_grid(1, 2, 2, {1, 0, 0, 1});
    const CorrelationMatrix r = self_correlation(g);
    CHECK(r.entries == std::vector<double>{1, 0, 0, 1});
    CHECK(correlation_loss(r, r) == 0.0);
}

TEST_CASE("n = 2 all-ones versus identity gives sqrt(2)/2") {
    CorrelationMatrix ones{2, {1, 1, 1, 1}};
    CorrelationMatrix eye{2, {1, 0, 0, 1}};
    CHECK(correlation_loss(ones, eye) == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-15));
    CHECK(correlation_loss(eye, ones) == correlation_loss(ones, eye));
    CHECK_THROWS_AS(correlation_loss(ones, CorrelationMatrix{1, {1}}), InvalidArgument);
}

TEST_CASE("global descriptor falls back on cancellation") {
    const GlobalDescriptor g = global_descriptor(make_grid(1, 2, 2, {1, 0, -1, 0}));
    CHECK(g.fallback);
    CHECK(g.vector == std::vector<double>{1, 0});
    const FeatureGrid zero = make_grid(1, 2, 3, {0, 0, 0, 0, 2, 0});
    CHECK(zero.fallback[0]);
    CHECK_FALSE(zero.fallback[1]);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const GlobalDescriptor r = global_descriptor(random_grid(3, 4, 14, s));
        double sq = 0.0;
        for (double v : r.vector) sq += v * v;
        CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-6);
    }
}

TEST_CASE("correlation matrices are symmetric, bounded, unit diagonal and PSD") {
    for (int size = 2; size <= 8; ++size) {
        for (std::uint64_t s = 0; s < 3; ++s) {
            const CorrelationMatrix r = self_correlation(random_grid(size, size, 14, size * 10 + s));
            check_matrix_invariants(r);
            CHECK(smallest_eigenvalue(r) >= -1e-5);
        }
        const CorrelationMatrix ri =
            self_correlation(embed_features(testing::texture_image(64, 64, 3, size), size, size));
        check_matrix_invariants(ri);
        CHECK(smallest_eigenvalue(ri) >= -1e-5);
    }
}

TEST_CASE("permuting cells permutes rows and columns exactly") {
    const int gh = 4, gw = 5, dim = 14;
    const FeatureGrid g = random_grid(gh, gw, dim, 77);
    std::vector<std::size_t> perm(g.cells());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
    FeatureGrid p = g;
    for (std::size_t i = 0; i < g.cells(); ++i)
        std::copy(g.vector(perm[i]), g.vector(perm[i]) + dim, p.vectors.begin() + i * dim);
    const CorrelationMatrix r = self_correlation(g);
    const CorrelationMatrix rp = self_correlation(p);
    for (int i = 0; i < r.n; ++i)
        for (int j = 0; j < r.n; ++j) CHECK(rp.at(i, j) == r.at(static_cast<int>(perm[i]), static_cast<int>(perm[j])));
}

TEST_CASE("shifting a two-cell periodic texture by one cell keeps the entry multiset") {
    const int cell = 12;
    const ImageBuffer a = two_cell_pattern(4, 4, cell, 0);
    const ImageBuffer b = two_cell_pattern(4, 4, cell, 1);
    std::vector<double> ea = self_correlation(embed_features(a, 4, 4)).entries;
    std::vector<double> eb = self_correlation(embed_features(b, 4, 4)).entries;
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    REQUIRE(ea.size() == eb.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < ea.size(); ++i) worst = std::max(worst, std::abs(ea[i] - eb[i]));
    CHECK(worst < 1e-6);
    // The two cell types really differ.
    CHECK(ea.front() < 1.0 - 1e-3);
}

TEST_CASE("heatmap maps [-1, 1] onto [0, 1]") {
    const ImageBuffer h = correlation_heatmap(CorrelationMatrix{2, {1, -1, 0, 1}});
    CHECK(h.at(0, 0) == 1.0f);
    CHECK(h.at(1, 0) == 0.0f);
    CHECK(h.at(0, 1) == 0.5f);
}

TEST_CASE("statistical: correlation loss to the aggregate falls with the cell size") {
    const std::vector<int> sizes{8, 5, 4, 3};
    const std::vector<double> position{0, 1, 2, 3};
    int negative = 0;
    const int suite = 20;
    for (int s = 0; s < suite; ++s) {
        const ImageBuffer img = testing::texture_image(96, 96, 3, 500 + s);
        const CorrelationMatrix ref = self_correlation(embed_features(img));
        std::vector<double> loss;
        for (int size : sizes) {
            sdam::SegmentOptions opt;
            opt.cell_size = size;
            const ImageBuffer agg = sdam::aggregate_regions(img, sdam::segment_superpixels(img, opt));
            loss.push_back(correlation_loss(self_correlation(embed_features(agg)), ref));
        }
        if (spearman(position, loss) < 0) ++negative;
    }
    MESSAGE("negative rank correlation on " << negative << " of " << suite);
    CHECK(negative * 10 >= suite * 9);
}
