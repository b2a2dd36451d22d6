#include "casr/tiler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "casr/error.hpp"

namespace casr::tiler {

namespace {

std::vector<int> axis_starts(int dim, int tile, int overlap) {
    if (dim <= tile) return {0};
    const int stride = tile - overlap;
    const int n = (dim - tile + stride - 1) / stride + 1;
    std::vector<int> starts;
    starts.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i + 1 < n; ++i) starts.push_back(i * stride);
    starts.push_back(dim - tile);
    return starts;
}

double ramp_up(int t, int ramp) {
    return 0.5 - 0.5 * std::cos(std::numbers::pi * (t + 0.5) / ramp);
}

}  // namespace

AxisLayout make_axis(int dim, int length, std::vector<int> starts, int ramp) {
    AxisLayout axis;
    axis.dim = dim;
    axis.length = length;
    axis.starts = std::move(starts);
    const std::size_t n = axis.starts.size();
    ramp = std::clamp(ramp, 0, length / 2);
    std::vector<double> coverage(static_cast<std::size_t>(dim), 0.0);
    axis.profiles.assign(n, std::vector<double>(static_cast<std::size_t>(length), 1.0));
    for (std::size_t i = 0; i < n; ++i) {
        auto& p = axis.profiles[i];
        for (int t = 0; t < length; ++t) {
            double w = 1.0;
            if (i > 0 && t < ramp) w *= ramp_up(t, ramp);
            if (i + 1 < n && t >= length - ramp) w *= ramp_up(length - 1 - t, ramp);
            p[static_cast<std::size_t>(t)] = w;
            coverage[static_cast<std::size_t>(axis.starts[i] + t)] += w;
        }
    }
    for (int c = 0; c < dim; ++c) {
        if (!(coverage[static_cast<std::size_t>(c)] > 0.0)) {
            throw InvalidArgument("tiling leaves coordinate " + std::to_string(c) + " uncovered");
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (int t = 0; t < length; ++t) {
            axis.profiles[i][static_cast<std::size_t>(t)] /= coverage[static_cast<std::size_t>(axis.starts[i] + t)];
        }
    }
    return axis;
}

PatchLayout plan_tiles(int width, int height, int tile, int overlap) {
    if (overlap < 0) throw InvalidArgument("tile overlap must be non-negative, got " + std::to_string(overlap));
    if (tile <= 2 * overlap) {
        throw InvalidArgument("tile size " + std::to_string(tile) + " must exceed twice the overlap " +
                              std::to_string(overlap));
    }
    if (width < 1 || height < 1) throw InvalidArgument("cannot tile an empty image");
    PatchLayout layout;
    layout.image_w = width;
    layout.image_h = height;
    layout.tile = tile;
    layout.overlap = overlap;
    layout.x = make_axis(width, std::min(tile, width), axis_starts(width, tile, overlap), overlap);
    layout.y = make_axis(height, std::min(tile, height), axis_starts(height, tile, overlap), overlap);
    return layout;
}

PatchLayout::Rect PatchLayout::rect(std::size_t index) const {
    const std::size_t cols = x.starts.size();
    return {x.starts[index % cols], y.starts[index / cols], x.length, y.length};
}

double PatchLayout::weight(std::size_t index, int px, int py) const {
    const std::size_t cols = x.starts.size();
    const std::size_t cx = index % cols;
    const std::size_t cy = index / cols;
    const int tx = px - x.starts[cx];
    const int ty = py - y.starts[cy];
    if (tx < 0 || ty < 0 || tx >= x.length || ty >= y.length) return 0.0;
    return x.profiles[cx][static_cast<std::size_t>(tx)] * y.profiles[cy][static_cast<std::size_t>(ty)];
}

std::vector<ImageBuffer> extract_patches(const ImageBuffer& img, const PatchLayout& layout) {
    if (img.width() != layout.image_w || img.height() != layout.image_h) {
        throw InvalidArgument("layout for " + std::to_string(layout.image_w) + "x" + std::to_string(layout.image_h) +
                              " applied to a " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                              " image");
    }
    std::vector<ImageBuffer> patches;
    patches.reserve(layout.tile_count());
    for (std::size_t i = 0; i < layout.tile_count(); ++i) {
        const auto r = layout.rect(i);
        patches.push_back(img.crop(r.x, r.y, r.w, r.h));
    }
    return patches;
}

namespace {

AxisLayout scale_axis(const AxisLayout& axis, int overlap, double s) {
    const int dim = static_cast<int>(std::lround(axis.dim * s));
    const int len = std::min(static_cast<int>(std::lround(axis.length * s)), dim);
    const std::size_t n = axis.starts.size();
    std::vector<int> starts(n, 0);
    for (std::size_t i = 1; i < n; ++i) {
        const int v = i + 1 == n ? dim - len : static_cast<int>(std::lround(axis.starts[i] * s));
        starts[i] = std::clamp(std::min(v, starts[i - 1] + len), 0, dim - len);
    }
    if (n > 1) {
        starts[n - 1] = dim - len;
        for (std::size_t i = n - 1; i > 0; --i) starts[i - 1] = std::max(starts[i - 1], starts[i] - len);
    }
    return make_axis(dim, len, std::move(starts), static_cast<int>(std::lround(overlap * s)));
}

}  // namespace

PatchLayout scale_layout(const PatchLayout& layout, double out_scale) {
    if (!(out_scale > 0.0) || !std::isfinite(out_scale)) throw InvalidArgument("blend scale must be positive");
    PatchLayout scaled;
    scaled.x = scale_axis(layout.x, layout.overlap, out_scale);
    scaled.y = scale_axis(layout.y, layout.overlap, out_scale);
    scaled.image_w = scaled.x.dim;
    scaled.image_h = scaled.y.dim;
    scaled.tile = static_cast<int>(std::lround(layout.tile * out_scale));
    scaled.overlap = static_cast<int>(std::lround(layout.overlap * out_scale));
    return scaled;
}

Blender::Blender(const PatchLayout& layout, double out_scale, int channels)
    : scaled_(scale_layout(layout, out_scale)), channels_(channels) {
    if (channels != 1 && channels != 3) throw InvalidArgument("blend channels must be 1 or 3");
    accum_.assign(static_cast<std::size_t>(scaled_.image_w) * scaled_.image_h * channels, 0.0f);
}

void Blender::add(std::size_t index, const ImageBuffer& patch) {
    if (index != next_) {
        throw InvalidArgument("patch " + std::to_string(index) + " added out of order (expected " +
                              std::to_string(next_) + ")");
    }
    if (index >= scaled_.tile_count()) throw InvalidArgument("patch index " + std::to_string(index) + " beyond layout");
    const auto r = scaled_.rect(index);
    if (patch.width() != r.w || patch.height() != r.h || patch.channels() != channels_) {
        throw InvalidArgument("patch " + std::to_string(index) + " is " + std::to_string(patch.width()) + "x" +
                              std::to_string(patch.height()) + "x" + std::to_string(patch.channels()) + ", expected " +
                              std::to_string(r.w) + "x" + std::to_string(r.h) + "x" + std::to_string(channels_));
    }
    const std::size_t cols = scaled_.x.starts.size();
    const auto& px = scaled_.x.profiles[index % cols];
    const auto& py = scaled_.y.profiles[index / cols];
    const auto data = patch.data();
    for (int ty = 0; ty < r.h; ++ty) {
        float* dst = accum_.data() + (static_cast<std::size_t>(r.y + ty) * scaled_.image_w + r.x) * channels_;
        const float* src = data.data() + static_cast<std::size_t>(ty) * r.w * channels_;
        const double wy = py[static_cast<std::size_t>(ty)];
        for (int tx = 0; tx < r.w; ++tx) {
            const double w = wy * px[static_cast<std::size_t>(tx)];
            for (int c = 0; c < channels_; ++c) {
                const std::size_t o = static_cast<std::size_t>(tx) * channels_ + c;
                dst[o] += static_cast<float>(w * src[o]);
            }
        }
    }
    ++next_;
}

ImageBuffer Blender::finish() {
    if (next_ != scaled_.tile_count()) {
        throw InvalidArgument("blend finished with " + std::to_string(next_) + " of " +
                              std::to_string(scaled_.tile_count()) + " patches");
    }
    ImageBuffer out(scaled_.image_w, scaled_.image_h, channels_, accum_);
    accum_.clear();
    accum_.shrink_to_fit();
    return out;
}

ImageBuffer blend_patches(const std::vector<ImageBuffer>& patches, const PatchLayout& layout, double out_scale) {
    if (patches.size() != layout.tile_count()) {
        throw InvalidArgument("got " + std::to_string(patches.size()) + " patches for a layout of " +
                              std::to_string(layout.tile_count()) + " tiles");
    }
    if (patches.empty()) throw InvalidArgument("no patches to blend");
    Blender blender(layout, out_scale, patches.front().channels());
    for (std::size_t i = 0; i < patches.size(); ++i) blender.add(i, patches[i]);
    return blender.finish();
}

std::string layout_dump(const PatchLayout& layout) {
    std::ostringstream os;
    for (std::size_t i = 0; i < layout.tile_count(); ++i) {
        const auto r = layout.rect(i);
        os << i << ' ' << r.x << ' ' << r.y << ' ' << r.w << ' ' << r.h << '\n';
    }
    return os.str();
}

ImageBuffer layout_overlay(const PatchLayout& layout, const ImageBuffer& img) {
    ImageBuffer out = img.empty() ? ImageBuffer(layout.image_w, layout.image_h, 1) : img;
    if (out.width() != layout.image_w || out.height() != layout.image_h) {
        throw InvalidArgument("overlay image does not match the layout size");
    }
    for (std::size_t i = 0; i < layout.tile_count(); ++i) {
        const auto r = layout.rect(i);
        for (int x = r.x; x < r.x + r.w; ++x) {
            for (int c = 0; c < out.channels(); ++c) {
                out.set(x, r.y, c, 1.0f);
                out.set(x, r.y + r.h - 1, c, 1.0f);
            }
        }
        for (int y = r.y; y < r.y + r.h; ++y) {
            for (int c = 0; c < out.channels(); ++c) {
                out.set(r.x, y, c, 1.0f);
                out.set(r.x + r.w - 1, y, c, 1.0f);
            }
        }
    }
    return out;
}

}  // namespace casr::tiler
