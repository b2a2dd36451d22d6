#include "casr/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "casr/error.hpp"
#include "casr/parallel.hpp"

namespace casr {

namespace {

void check_shape(int width, int height, int channels) {
    if (width < 1 || height < 1) {
        throw InvalidArgument("image dimensions must be positive, got " + std::to_string(width) + "x" +
                              std::to_string(height));
    }
    if (channels != 1 && channels != 3) {
        throw InvalidArgument("image must have 1 or 3 channels, got " + std::to_string(channels));
    }
}

}  // namespace

ImageBuffer::ImageBuffer(int width, int height, int channels)
    : width_(width), height_(height), channels_(channels) {
    check_shape(width, height, channels);
    data_.assign(pixel_count() * static_cast<std::size_t>(channels), 0.0f);
}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::span<const float> data)
    : ImageBuffer(width, height, channels) {
    assign(data);
}

ImageBuffer ImageBuffer::filled(int width, int height, int channels, float value) {
    ImageBuffer img(width, height, channels);
    std::fill(img.data_.begin(), img.data_.end(), clamp_unit(value));
    return img;
}

float ImageBuffer::clamped_at(int x, int y, int c) const noexcept {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return data_[index(x, y, c)];
}

void ImageBuffer::assign(std::span<const float> values) {
    if (values.size() != data_.size()) {
        throw InvalidArgument("image data length " + std::to_string(values.size()) + " does not match " +
                              std::to_string(width_) + "x" + std::to_string(height_) + "x" +
                              std::to_string(channels_));
    }
    std::transform(values.begin(), values.end(), data_.begin(), clamp_unit);
}

float ImageBuffer::clamp_unit(float v) noexcept {
    if (!(v > 0.0f)) return 0.0f;  // also catches NaN
    return v > 1.0f ? 1.0f : v;
}

ImageBuffer ImageBuffer::crop(int x, int y, int w, int h) const {
    if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > width_ || y + h > height_) {
        throw InvalidArgument("crop rectangle (" + std::to_string(x) + "," + std::to_string(y) + "," +
                              std::to_string(w) + "," + std::to_string(h) + ") outside " +
                              std::to_string(width_) + "x" + std::to_string(height_) + " image");
    }
    ImageBuffer out(w, h, channels_);
    const std::size_t row_len = static_cast<std::size_t>(w) * static_cast<std::size_t>(channels_);
    for (int r = 0; r < h; ++r) {
        const float* src = data_.data() + index(x, y + r, 0);
        std::copy(src, src + row_len, out.data_.data() + out.index(0, r, 0));
    }
    return out;
}

std::string_view to_string(ResampleKernel kernel) noexcept {
    switch (kernel) {
        case ResampleKernel::nearest: return "nearest";
        case ResampleKernel::bilinear: return "bilinear";
        case ResampleKernel::bicubic: return "bicubic";
        case ResampleKernel::lanczos3: return "lanczos3";
    }
    return "unknown";
}

ResampleKernel parse_kernel(std::string_view name) {
    if (name == "nearest") return ResampleKernel::nearest;
    if (name == "bilinear") return ResampleKernel::bilinear;
    if (name == "bicubic") return ResampleKernel::bicubic;
    if (name == "lanczos3") return ResampleKernel::lanczos3;
    throw InvalidArgument("unknown resample kernel '" + std::string(name) + "'");
}

namespace {

// Taps for one output coordinate: clamped source indices and their weights.
struct AxisTaps {
    int taps = 0;
    std::vector<int> index;     // out * taps
    std::vector<double> weight; // out * taps
};

double catmull_rom(double x) {
    x = std::abs(x);
    if (x < 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
    if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
    return 0.0;
}

double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

double lanczos3(double x) {
    if (std::abs(x) >= 3.0) return 0.0;
    return sinc(x) * sinc(x / 3.0);
}

AxisTaps build_taps(int in, int out, ResampleKernel kernel) {
    AxisTaps t;
    switch (kernel) {
        case ResampleKernel::nearest: t.taps = 1; break;
        case ResampleKernel::bilinear: t.taps = 2; break;
        case ResampleKernel::bicubic: t.taps = 4; break;
        case ResampleKernel::lanczos3: t.taps = 6; break;
    }
    t.index.resize(static_cast<std::size_t>(out) * t.taps);
    t.weight.resize(static_cast<std::size_t>(out) * t.taps);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (int d = 0; d < out; ++d) {
        const double src = (d + 0.5) * ratio - 0.5;
        int* idx = &t.index[static_cast<std::size_t>(d) * t.taps];
        double* w = &t.weight[static_cast<std::size_t>(d) * t.taps];
        if (kernel == ResampleKernel::nearest) {
            idx[0] = std::clamp(static_cast<int>(std::floor((d + 0.5) * ratio)), 0, in - 1);
            w[0] = 1.0;
            continue;
        }
        const double base = std::floor(src);
        const double frac = src - base;
        const int first = static_cast<int>(base) - (t.taps / 2 - 1);
        double sum = 0.0;
        for (int k = 0; k < t.taps; ++k) {
            const int j = first + k;
            const double dist = static_cast<double>(j) - src;
            double wk = 0.0;
            switch (kernel) {
                case ResampleKernel::bilinear: wk = k == 0 ? 1.0 - frac : frac; break;
                case ResampleKernel::bicubic: wk = catmull_rom(dist); break;
                case ResampleKernel::lanczos3: wk = lanczos3(dist); break;
                case ResampleKernel::nearest: break;
            }
            idx[k] = std::clamp(j, 0, in - 1);
            w[k] = wk;
            sum += wk;
        }
        if (kernel == ResampleKernel::lanczos3 && sum != 0.0) {
            for (int k = 0; k < t.taps; ++k) w[k] /= sum;
        }
    }
    return t;
}

}  // namespace

ImageBuffer resample(const ImageBuffer& img, int out_w, int out_h, ResampleKernel kernel) {
    if (out_w < 1 || out_h < 1) {
        throw InvalidArgument("resample target must be at least 1x1, got " + std::to_string(out_w) + "x" +
                              std::to_string(out_h));
    }
    if (img.empty()) throw InvalidArgument("resample of an empty image");
    const int in_w = img.width();
    const int in_h = img.height();
    const int ch = img.channels();
    if (in_w == out_w && in_h == out_h) return img;

    // Horizontal pass into an unclamped float plane of in_h rows by out_w.
    std::vector<float> mid;
    int mid_w = in_w;
    if (in_w != out_w) {
        const AxisTaps tx = build_taps(in_w, out_w, kernel);
        mid.resize(static_cast<std::size_t>(out_w) * in_h * ch);
        parallel::parallel_for(static_cast<std::size_t>(in_h), [&](std::size_t y) {
            const float* src = img.row(static_cast<int>(y));
            float* dst = mid.data() + y * static_cast<std::size_t>(out_w) * ch;
            for (int x = 0; x < out_w; ++x) {
                const int* idx = &tx.index[static_cast<std::size_t>(x) * tx.taps];
                const double* w = &tx.weight[static_cast<std::size_t>(x) * tx.taps];
                for (int c = 0; c < ch; ++c) {
                    double acc = 0.0;
                    for (int k = 0; k < tx.taps; ++k) acc += w[k] * src[static_cast<std::size_t>(idx[k]) * ch + c];
                    dst[static_cast<std::size_t>(x) * ch + c] = static_cast<float>(acc);
                }
            }
        });
        mid_w = out_w;
    } else {
        mid.assign(img.data().begin(), img.data().end());
    }

    std::vector<float> out_data;
    if (in_h != out_h) {
        const AxisTaps ty = build_taps(in_h, out_h, kernel);
        const std::size_t row_len = static_cast<std::size_t>(mid_w) * ch;
        out_data.resize(row_len * out_h);
        parallel::parallel_for(static_cast<std::size_t>(out_h), [&](std::size_t y) {
            const int* idx = &ty.index[y * ty.taps];
            const double* w = &ty.weight[y * ty.taps];
            float* dst = out_data.data() + y * row_len;
            for (std::size_t i = 0; i < row_len; ++i) {
                double acc = 0.0;
                for (int k = 0; k < ty.taps; ++k) acc += w[k] * mid[static_cast<std::size_t>(idx[k]) * row_len + i];
                dst[i] = static_cast<float>(acc);
            }
        });
    } else {
        out_data = std::move(mid);
    }
    return ImageBuffer(out_w, out_h, ch, out_data);
}

std::vector<float> luminance(const ImageBuffer& img) {
    const std::size_t n = img.pixel_count();
    std::vector<float> lum(n);
    const auto data = img.data();
    if (img.channels() == 1) {
        std::copy(data.begin(), data.end(), lum.begin());
        return lum;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double v = 0.299 * data[3 * i] + 0.587 * data[3 * i + 1] + 0.114 * data[3 * i + 2];
        lum[i] = static_cast<float>(v);
    }
    return lum;
}

SobelField sobel(const ImageBuffer& img) {
    SobelField f;
    f.width = img.width();
    f.height = img.height();
    const std::vector<float> lum = luminance(img);
    const int w = f.width;
    const int h = f.height;
    f.gx.assign(lum.size(), 0.0f);
    f.gy.assign(lum.size(), 0.0f);
    auto px = [&](int x, int y) {
        x = std::clamp(x, 0, w - 1);
        y = std::clamp(y, 0, h - 1);
        return static_cast<double>(lum[static_cast<std::size_t>(y) * w + x]);
    };
    parallel::parallel_for(static_cast<std::size_t>(h), [&](std::size_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < w; ++x) {
            const double gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            const double gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            f.gx[yy * w + x] = static_cast<float>(gx);
            f.gy[yy * w + x] = static_cast<float>(gy);
        }
    });
    return f;
}

ImageBuffer gradient_magnitude(const ImageBuffer& img) {
    if (img.empty()) throw InvalidArgument("gradient_magnitude of an empty image");
    const SobelField f = sobel(img);
    std::vector<float> mag(f.gx.size());
    float peak = 0.0f;
    for (std::size_t i = 0; i < mag.size(); ++i) {
        mag[i] = std::sqrt(f.gx[i] * f.gx[i] + f.gy[i] * f.gy[i]);
        peak = std::max(peak, mag[i]);
    }
    if (peak > 0.0f) {
        for (float& v : mag) v /= peak;
    }
    return ImageBuffer(f.width, f.height, 1, mag);
}

void require_min_size(const ImageBuffer& img, int min_side, std::string_view what) {
    if (img.width() < min_side || img.height() < min_side) {
        throw InvalidArgument(std::string(what) + " requires at least " + std::to_string(min_side) + "x" +
                              std::to_string(min_side) + " pixels, got " + std::to_string(img.width()) + "x" +
                              std::to_string(img.height()));
    }
}

}  // namespace casr
