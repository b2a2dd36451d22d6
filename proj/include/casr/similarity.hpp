#pragma once

#include <vector>

#include "casr/image.hpp"

// Self-similarity metrics: a fixed hand-crafted cell descriptor, cosine
// self-correlation matrices over the cell grid, their discrepancy, and a
// global descriptor.
namespace casr::similarity {

inline constexpr int descriptor_dim = 14;

struct FeatureGrid {
    int grid_h = 0;
    int grid_w = 0;
    int dim = descriptor_dim;
    std::vector<double> vectors;      // row-major cells, dim values each, unit norm
    std::vector<bool> fallback;       // cell descriptor was zero and replaced by e_0

    std::size_t cells() const noexcept { return static_cast<std::size_t>(grid_h) * grid_w; }
    const double* vector(std::size_t cell) const noexcept { return vectors.data() + cell * dim; }
};

/// Grid from arbitrary descriptors (each row is normalised; zero rows fall back to e_0).
FeatureGrid make_grid(int grid_h, int grid_w, int dim, std::vector<double> raw);

/// Per cell: channel means (3), channel standard deviations (3) and an
/// 8-bin magnitude-weighted Sobel orientation histogram of the luminance,
/// L2-normalised. Single-channel images repeat the channel.
FeatureGrid embed_features(const ImageBuffer& img, int grid_h = 16, int grid_w = 16);

struct CorrelationMatrix {
    int n = 0;
    std::vector<double> entries;  // n * n, row-major

    double at(int i, int j) const noexcept { return entries[static_cast<std::size_t>(i) * n + j]; }
};

/// entries[i][j] = <e_i, e_j>.
CorrelationMatrix self_correlation(const FeatureGrid& grid);

/// Frobenius norm of the difference divided by n.
double correlation_loss(const CorrelationMatrix& a, const CorrelationMatrix& b);

struct GlobalDescriptor {
    std::vector<double> vector;
    bool fallback = false;  // mean was zero; vector is e_0
};

GlobalDescriptor global_descriptor(const FeatureGrid& grid);

/// Heatmap of R with [-1, 1] mapped affinely onto [0, 1].
ImageBuffer correlation_heatmap(const CorrelationMatrix& r);

}  // namespace casr::similarity
