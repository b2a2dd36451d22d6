#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Binary framing shared with external upscaler processes:
//
//   'C' 'A' 'S' 'R' | version 0x01 | u32 LE header length | UTF-8 JSON header | f32 LE payload
//
// Request header {"w","h","c","scale","iter","structural"}; payload is the
// image (row-major, channel-interleaved) followed by w*h structural floats
// when "structural" is true. Response header {"w","h","c"} with the image
// payload, or {"error": text} with no payload.
namespace casr::frame {

inline constexpr std::uint8_t magic[4] = {'C', 'A', 'S', 'R'};
inline constexpr std::uint8_t version = 0x01;
inline constexpr std::size_t prefix_size = 9;

struct Request {
    int width = 0;
    int height = 0;
    int channels = 0;
    double scale = 1.0;
    int iteration = 0;
    std::vector<float> image;
    std::optional<std::vector<float>> structural;

    friend bool operator==(const Request&, const Request&) = default;
};

struct Response {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> image;
    std::optional<std::string> error;

    friend bool operator==(const Response&, const Response&) = default;
};

std::vector<std::uint8_t> encode(const Request& request);
std::vector<std::uint8_t> encode(const Response& response);

/// Both throw FrameError carrying the byte offset of the first bad byte.
/// Trailing bytes after a complete frame are an error.
Request decode_request(std::span<const std::uint8_t> bytes);
Response decode_response(std::span<const std::uint8_t> bytes);

/// Length of the JSON header once the 9-byte prefix is known valid.
std::uint32_t header_length(std::span<const std::uint8_t> prefix);

/// Number of payload bytes implied by a header, validated.
std::size_t request_payload_bytes(std::span<const std::uint8_t> header_text, std::size_t header_offset);
std::size_t response_payload_bytes(std::span<const std::uint8_t> header_text, std::size_t header_offset);

}  // namespace casr::frame
