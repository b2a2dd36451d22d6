#include "casr/similarity.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "casr/error.hpp"
#include "casr/parallel.hpp"

namespace casr::similarity {

namespace {

constexpr double zero_norm = 1e-12;

// Normalises v in place; returns false (and writes e_0) for a zero vector.
bool normalize_or_fallback(double* v, int dim) {
    double sq = 0.0;
    for (int k = 0; k < dim; ++k) sq += v[k] * v[k];
    const double norm = std::sqrt(sq);
    if (norm < zero_norm) {
        for (int k = 0; k < dim; ++k) v[k] = k == 0 ? 1.0 : 0.0;
        return false;
    }
    for (int k = 0; k < dim; ++k) v[k] /= norm;
    return true;
}

}  // namespace

FeatureGrid make_grid(int grid_h, int grid_w, int dim, std::vector<double> raw) {
    if (grid_h < 1 || grid_w < 1 || dim < 1) throw InvalidArgument("feature grid dimensions must be positive");
    FeatureGrid g;
    g.grid_h = grid_h;
    g.grid_w = grid_w;
    g.dim = dim;
    if (raw.size() != g.cells() * static_cast<std::size_t>(dim)) {
        throw InvalidArgument("feature grid expects " + std::to_string(g.cells() * dim) + " values, got " +
                              std::to_string(raw.size()));
    }
    g.vectors = std::move(raw);
    g.fallback.assign(g.cells(), false);
    for (std::size_t c = 0; c < g.cells(); ++c) g.fallback[c] = !normalize_or_fallback(g.vectors.data() + c * dim, dim);
    return g;
}

FeatureGrid embed_features(const ImageBuffer& img, int grid_h, int grid_w) {
    if (grid_h < 2 || grid_w < 2) throw InvalidArgument("feature grid must be at least 2x2");
    if (img.width() < grid_w || img.height() < grid_h) {
        throw InvalidArgument("feature grid " + std::to_string(grid_w) + "x" + std::to_string(grid_h) +
                              " is larger than the " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                              " image");
    }
    const SobelField grad = sobel(img);
    const int w = img.width();
    const int h = img.height();
    const int ch = img.channels();
    const std::size_t cells = static_cast<std::size_t>(grid_h) * grid_w;
    std::vector<double> raw(cells * descriptor_dim, 0.0);

    parallel::parallel_for(cells, [&](std::size_t cell) {
        const int gy = static_cast<int>(cell / static_cast<std::size_t>(grid_w));
        const int gx = static_cast<int>(cell % static_cast<std::size_t>(grid_w));
        const int x0 = gx * w / grid_w;
        const int x1 = (gx + 1) * w / grid_w;
        const int y0 = gy * h / grid_h;
        const int y1 = (gy + 1) * h / grid_h;
        const double n = static_cast<double>(x1 - x0) * (y1 - y0);
        double* d = raw.data() + cell * descriptor_dim;

        double sum[3] = {0, 0, 0};
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
                for (int c = 0; c < 3; ++c) sum[c] += img.at(x, y, ch == 3 ? c : 0);
        double mean[3];
        for (int c = 0; c < 3; ++c) mean[c] = sum[c] / n;
        double var[3] = {0, 0, 0};
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double dv = img.at(x, y, ch == 3 ? c : 0) - mean[c];
                    var[c] += dv * dv;
                }
        for (int c = 0; c < 3; ++c) {
            d[c] = mean[c];
            d[3 + c] = std::sqrt(var[c] / n);
        }

        constexpr double bin_width = 2.0 * std::numbers::pi / 8.0;
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * w + x;
                const double gx_v = grad.gx[p] / 8.0;
                const double gy_v = grad.gy[p] / 8.0;
                const double mag = std::sqrt(gx_v * gx_v + gy_v * gy_v);
                if (mag == 0.0) continue;
                double angle = std::atan2(gy_v, gx_v);
                if (angle < 0.0) angle += 2.0 * std::numbers::pi;
                int bin = static_cast<int>(angle / bin_width);
                if (bin > 7) bin = 7;
                d[6 + bin] += mag / n;
            }
        }
    });

    return make_grid(grid_h, grid_w, descriptor_dim, std::move(raw));
}

CorrelationMatrix self_correlation(const FeatureGrid& grid) {
    CorrelationMatrix r;
    r.n = static_cast<int>(grid.cells());
    const auto n = static_cast<std::size_t>(r.n);
    r.entries.assign(n * n, 0.0);
    parallel::parallel_for(n, [&](std::size_t i) {
        const double* a = grid.vector(i);
        for (std::size_t j = i; j < n; ++j) {
            const double* b = grid.vector(j);
            double dot = 0.0;
            for (int k = 0; k < grid.dim; ++k) dot += a[k] * b[k];
            r.entries[i * n + j] = dot;
        }
    });
    // Mirror the upper triangle so R is exactly symmetric.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) r.entries[i * n + j] = r.entries[j * n + i];
    return r;
}

double correlation_loss(const CorrelationMatrix& a, const CorrelationMatrix& b) {
    if (a.n != b.n) {
        throw InvalidArgument("correlation matrices differ in size: " + std::to_string(a.n) + " vs " + std::to_string(b.n));
    }
    if (a.n == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        const double d = a.entries[i] - b.entries[i];
        sum += d * d;
    }
    return std::sqrt(sum) / a.n;
}

GlobalDescriptor global_descriptor(const FeatureGrid& grid) {
    GlobalDescriptor g;
    g.vector.assign(static_cast<std::size_t>(grid.dim), 0.0);
    for (std::size_t c = 0; c < grid.cells(); ++c) {
        const double* v = grid.vector(c);
        for (int k = 0; k < grid.dim; ++k) g.vector[static_cast<std::size_t>(k)] += v[k];
    }
    const double n = static_cast<double>(grid.cells());
    for (double& v : g.vector) v /= n;
    g.fallback = !normalize_or_fallback(g.vector.data(), grid.dim);
    return g;
}

ImageBuffer correlation_heatmap(const CorrelationMatrix& r) {
    std::vector<float> values(r.entries.size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>((r.entries[i] + 1.0) * 0.5);
    return ImageBuffer(r.n, r.n, 1, values);
}

}  // namespace casr::similarity
