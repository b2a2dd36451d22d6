#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace casr {

/// Row-major, channel-interleaved raster of unit-interval intensities.
///
/// Every write goes through clamping, so stored values are always finite
/// and inside [0, 1]; NaN is stored as 0.
class ImageBuffer {
public:
    ImageBuffer() = default;
    /// Zero-filled image. channels must be 1 or 3.
    ImageBuffer(int width, int height, int channels);
    /// Copies and clamps data; data.size() must equal width * height * channels.
    ImageBuffer(int width, int height, int channels, std::span<const float> data);

    static ImageBuffer filled(int width, int height, int channels, float value);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    bool empty() const noexcept { return data_.empty(); }

    float at(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }
    /// Edge-clamped read.
    float clamped_at(int x, int y, int c = 0) const noexcept;
    void set(int x, int y, int c, float value) noexcept { data_[index(x, y, c)] = clamp_unit(value); }

    std::span<const float> data() const noexcept { return data_; }
    const float* row(int y) const noexcept { return data_.data() + index(0, y, 0); }

    /// Adopts raw values, clamping each one.
    void assign(std::span<const float> values);

    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels_) +
               static_cast<std::size_t>(c);
    }

    static float clamp_unit(float v) noexcept;

    /// Exact crop; the rectangle must lie inside the image.
    ImageBuffer crop(int x, int y, int w, int h) const;

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

enum class ResampleKernel { nearest, bilinear, bicubic, lanczos3 };

std::string_view to_string(ResampleKernel kernel) noexcept;
ResampleKernel parse_kernel(std::string_view name);

/// Separable resampling with half-pixel centres and edge-clamp addressing:
/// src = (dst + 0.5) * in / out - 0.5. Bicubic uses Catmull-Rom weights
/// (a = -0.5), lanczos3 a normalised a = 3 window. Output is clamped.
/// Equal in/out sizes return an exact copy.
ImageBuffer resample(const ImageBuffer& img, int out_w, int out_h, ResampleKernel kernel);

/// ITU-R 601 luminance as a plain float plane (single-channel images pass through).
std::vector<float> luminance(const ImageBuffer& img);

struct SobelField {
    int width = 0;
    int height = 0;
    std::vector<float> gx;
    std::vector<float> gy;
};

/// Sobel derivatives of the luminance plane, edge clamped.
SobelField sobel(const ImageBuffer& img);

/// Sobel magnitude of the luminance, divided by its maximum. Constant input
/// gives an all-zero single-channel map.
ImageBuffer gradient_magnitude(const ImageBuffer& img);

/// Throws InvalidArgument unless both dimensions are at least min_side.
void require_min_size(const ImageBuffer& img, int min_side, std::string_view what);

}  // namespace casr
