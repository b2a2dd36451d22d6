#pragma once

#include <string>
#include <vector>

#include "casr/image.hpp"

namespace casr::tiler {

/// One axis of a tiling: origins, common tile length and the normalised
/// per-tile blend profiles (profiles[i][t] for t in [0, length)).
struct AxisLayout {
    int dim = 0;
    int length = 0;  // min(tile, dim)
    std::vector<int> starts;
    std::vector<std::vector<double>> profiles;
};

/// Overlapping square tiles with separable raised-cosine feathering whose
/// weights form a partition of unity over the image.
struct PatchLayout {
    int image_w = 0;
    int image_h = 0;
    int tile = 0;
    int overlap = 0;
    AxisLayout x;
    AxisLayout y;

    std::size_t tile_count() const noexcept { return x.starts.size() * y.starts.size(); }
    int tile_w() const noexcept { return x.length; }
    int tile_h() const noexcept { return y.length; }

    struct Rect {
        int x, y, w, h;
    };
    /// Tiles are indexed row-major: index = row * columns + column.
    Rect rect(std::size_t index) const;
    double weight(std::size_t index, int px, int py) const;
};

/// Throws InvalidArgument when tile <= 2 * overlap or overlap < 0.
PatchLayout plan_tiles(int width, int height, int tile, int overlap);

/// Axis layout from explicit starts: raw profiles are 1 with a raised-cosine
/// ramp of `ramp` pixels on every edge that abuts another tile, then divided
/// pointwise by the coverage sum.
AxisLayout make_axis(int dim, int length, std::vector<int> starts, int ramp);

std::vector<ImageBuffer> extract_patches(const ImageBuffer& img, const PatchLayout& layout);

/// Layout of the reassembled image after every patch was upscaled by
/// out_scale: starts and lengths scaled with one rounding per axis, the
/// last start pinned to the far edge and gaps closed by pulling starts back.
PatchLayout scale_layout(const PatchLayout& layout, double out_scale);

/// Accumulates patches in index order into the scaled partition of unity.
/// Patches must be added in increasing index order, which fixes the
/// per-pixel summation order regardless of who produced them.
class Blender {
public:
    Blender(const PatchLayout& layout, double out_scale, int channels);

    void add(std::size_t index, const ImageBuffer& patch);
    std::size_t next_index() const noexcept { return next_; }
    const PatchLayout& scaled_layout() const noexcept { return scaled_; }
    ImageBuffer finish();

private:
    PatchLayout scaled_;
    int channels_;
    std::size_t next_ = 0;
    std::vector<float> accum_;
};

ImageBuffer blend_patches(const std::vector<ImageBuffer>& patches, const PatchLayout& layout, double out_scale);

/// One line per tile: "index x y w h".
std::string layout_dump(const PatchLayout& layout);

/// Tile borders drawn at 1.0 over a copy of img (or over black when img is empty).
ImageBuffer layout_overlay(const PatchLayout& layout, const ImageBuffer& img);

}  // namespace casr::tiler
