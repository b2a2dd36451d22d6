#include "casr/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "casr/error.hpp"

namespace casr {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    return f;
}

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
    auto* message = static_cast<std::string*>(png_get_error_ptr(png));
    if (message) *message = msg;
    png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

// Writes rows of raw bytes; the encoder is told the layout up front.
void write_png_rows(const std::filesystem::path& path, int width, int height, int color_type, int bit_depth,
                    const std::vector<unsigned char>& bytes, std::size_t row_bytes) {
    FilePtr file = open_file(path, "wb");
    std::string message;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * row_bytes);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encode failed for '" + path.string() + "': " + message);
    }
    png_init_io(png, file.get());
    png_set_compression_level(png, 1);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

ImageBuffer load_png(const std::filesystem::path& path) {
    FilePtr file = open_file(path, "rb");
    unsigned char sig[8] = {};
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError("'" + path.string() + "' is not a PNG file");
    }
    std::string message;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }

    std::vector<unsigned char> bytes;
    std::vector<png_bytep> rows;
    int width = 0;
    int height = 0;
    int channels = 0;
    int depth = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("PNG decode failed for '" + path.string() + "': " + message);
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);  // little-endian host order
    png_read_update_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    channels = png_get_channels(png, info);
    depth = png_get_bit_depth(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    bytes.resize(row_bytes * static_cast<std::size_t>(height));
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (channels != 1 && channels != 3) {
        throw IoError("'" + path.string() + "' decodes to " + std::to_string(channels) + " channels");
    }
    const std::size_t count = static_cast<std::size_t>(width) * height * channels;
    std::vector<float> values(count);
    if (depth == 16) {
        for (std::size_t y = 0; y < static_cast<std::size_t>(height); ++y) {
            const auto* src = reinterpret_cast<const unsigned char*>(rows[y]);
            for (std::size_t i = 0; i < static_cast<std::size_t>(width) * channels; ++i) {
                const unsigned v = static_cast<unsigned>(src[2 * i]) | (static_cast<unsigned>(src[2 * i + 1]) << 8);
                values[y * width * channels + i] = static_cast<float>(v / 65535.0);
            }
        }
    } else {
        for (std::size_t y = 0; y < static_cast<std::size_t>(height); ++y) {
            for (std::size_t i = 0; i < static_cast<std::size_t>(width) * channels; ++i) {
                values[y * width * channels + i] = static_cast<float>(rows[y][i] / 255.0);
            }
        }
    }
    return ImageBuffer(width, height, channels, values);
}

void save_png(const std::filesystem::path& path, const ImageBuffer& img, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) throw InvalidArgument("PNG bit depth must be 8 or 16");
    if (img.empty()) throw InvalidArgument("cannot save an empty image");
    const int ch = img.channels();
    const std::size_t samples = static_cast<std::size_t>(img.width()) * ch;
    const std::size_t row_bytes = samples * (bit_depth / 8);
    std::vector<unsigned char> bytes(row_bytes * static_cast<std::size_t>(img.height()));
    const auto data = img.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (bit_depth == 16) {
            const auto v = static_cast<unsigned>(std::lround(static_cast<double>(data[i]) * 65535.0));
            bytes[2 * i] = static_cast<unsigned char>(v >> 8);  // PNG is big-endian
            bytes[2 * i + 1] = static_cast<unsigned char>(v & 0xffu);
        } else {
            bytes[i] = static_cast<unsigned char>(std::lround(static_cast<double>(data[i]) * 255.0));
        }
    }
    write_png_rows(path, img.width(), img.height(), ch == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, bit_depth,
                   bytes, row_bytes);
}

void save_png_u16(const std::filesystem::path& path, int width, int height, std::span<const int> values) {
    if (width < 1 || height < 1 || values.size() != static_cast<std::size_t>(width) * height) {
        throw InvalidArgument("label map size does not match " + std::to_string(width) + "x" + std::to_string(height));
    }
    std::vector<unsigned char> bytes(values.size() * 2);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] < 0 || values[i] > 65535) {
            throw InvalidArgument("label " + std::to_string(values[i]) + " does not fit in 16 bits");
        }
        const auto v = static_cast<unsigned>(values[i]);
        bytes[2 * i] = static_cast<unsigned char>(v >> 8);
        bytes[2 * i + 1] = static_cast<unsigned char>(v & 0xffu);
    }
    write_png_rows(path, width, height, PNG_COLOR_TYPE_GRAY, 16, bytes, static_cast<std::size_t>(width) * 2);
}

}  // namespace casr
