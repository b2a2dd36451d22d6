#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "casr/image.hpp"

// Superpixel-based distribution alignment: grid-seeded local clustering with
// a soft assignment over the 3x3 neighbouring cells, hard region means, and
// the normalised structural channel that travels with each cascade input.
namespace casr::sdam {

struct Region {
    int id = 0;
    std::size_t count = 0;
    std::array<float, 3> mean{};  // per channel; unused channels are 0
    double cx = 0.0;
    double cy = 0.0;
};

struct Segmentation {
    int width = 0;
    int height = 0;
    int channels = 0;
    int cell_size = 4;
    int grid_w = 0;  // seed cells per row
    int grid_h = 0;
    int source_width = 0;  // resolution the grid was seeded at
    int source_height = 0;
    std::vector<int> label_map;  // cell id per pixel, row-major

    /// Nine probabilities per pixel over the 3x3 cells around the pixel's
    /// seed cell, ordered (dy, dx) from (-1, -1) to (+1, +1). Entries for
    /// cells outside the grid are 0. Empty when absent (upsampled results,
    /// or when not requested).
    std::vector<float> soft_assign;
    bool has_soft_assign() const noexcept { return !soft_assign.empty(); }

    std::vector<Region> regions;  // sorted by id, every id in label_map present

    const Region& region(int id) const;
    /// Seed cell of a pixel at the segmentation's own resolution.
    int seed_cell(int x, int y) const noexcept;
};

struct SegmentOptions {
    int cell_size = 4;
    int iterations = 5;
    double compactness = 0.1;
    double temperature = 0.05;
    /// Accept cell sizes outside {3, 4, 5, 8}.
    bool force = false;
    bool keep_soft_assign = true;
};

/// Throws InvalidArgument when the image is smaller than 2x2 cells, the
/// cell size is not allowed, or iterations < 1.
Segmentation segment_superpixels(const ImageBuffer& img, const SegmentOptions& options = {});

/// Replaces every pixel with its region mean C_r computed from img.
ImageBuffer aggregate_regions(const ImageBuffer& img, const Segmentation& seg);

/// Paints the region means stored in seg (no source image needed).
ImageBuffer render_regions(const Segmentation& seg);

/// Nearest-neighbour label upsampling to round(dims * factor). Region
/// means are carried over, counts and centroids recomputed, soft
/// assignment dropped.
Segmentation upsample_segmentation(const Segmentation& seg, double factor);

/// Label map with region borders drawn at 1.0 over the superpixel image.
ImageBuffer boundary_overlay(const ImageBuffer& img, const Segmentation& seg);

enum class StructuralSource { ingested_depth_file, gradient_proxy };

struct StructuralMap {
    ImageBuffer depth;  // single channel, [0, 1]
    StructuralSource source = StructuralSource::gradient_proxy;
};

/// Min-max normalisation of raw values; a constant input maps to all zeros.
std::vector<float> normalize_min_max(std::span<const float> raw);

/// Normalised map from raw depth values of a w x h image.
StructuralMap structural_from_depth(int width, int height, std::span<const float> raw);

/// Gradient proxy of img, or the normalised depth PNG when a path is given.
/// The depth file must be single channel and match the image size.
StructuralMap structural_map(const ImageBuffer& img, const std::optional<std::filesystem::path>& depth_file = {});

/// ||a - b||_2 / sqrt(pixel count).
double depth_loss(const StructuralMap& a, const StructuralMap& b);

}  // namespace casr::sdam
