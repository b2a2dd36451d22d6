#include "casr/frame.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "json.hpp"

#include "casr/error.hpp"

namespace casr::frame {

namespace {

using json = nlohmann::ordered_json;

constexpr std::int64_t max_side = 1 << 20;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_floats(std::vector<std::uint8_t>& out, const std::vector<float>& values) {
    for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

std::vector<std::uint8_t> assemble(const json& header, const std::vector<float>* a, const std::vector<float>* b) {
    const std::string text = header.dump();
    std::vector<std::uint8_t> out;
    const std::size_t floats = (a ? a->size() : 0) + (b ? b->size() : 0);
    out.reserve(prefix_size + text.size() + floats * 4);
    out.insert(out.end(), std::begin(magic), std::end(magic));
    out.push_back(version);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    if (a) put_floats(out, *a);
    if (b) put_floats(out, *b);
    return out;
}

json parse_header(std::span<const std::uint8_t> text, std::size_t offset) {
    json header = json::parse(text.begin(), text.end(), nullptr, false);
    if (header.is_discarded() || !header.is_object()) throw FrameError("frame header is not a JSON object", offset);
    return header;
}

int dimension(const json& header, const char* key, std::size_t offset, std::int64_t lo, std::int64_t hi) {
    const auto it = header.find(key);
    if (it == header.end() || !it->is_number_integer()) {
        throw FrameError(std::string("frame header field \"") + key + "\" missing or not an integer", offset);
    }
    const auto v = it->get<std::int64_t>();
    if (v < lo || v > hi) {
        throw FrameError(std::string("frame header field \"") + key + "\" out of range: " + std::to_string(v), offset);
    }
    return static_cast<int>(v);
}

struct Geometry {
    int w = 0;
    int h = 0;
    int c = 0;
};

Geometry geometry(const json& header, std::size_t offset) {
    Geometry g;
    g.w = dimension(header, "w", offset, 1, max_side);
    g.h = dimension(header, "h", offset, 1, max_side);
    g.c = dimension(header, "c", offset, 1, 3);
    if (g.c == 2) throw FrameError("frame header field \"c\" must be 1 or 3", offset);
    return g;
}

bool request_structural(const json& header, std::size_t offset) {
    const auto it = header.find("structural");
    if (it == header.end()) return false;
    if (!it->is_boolean()) throw FrameError("frame header field \"structural\" must be a boolean", offset);
    return it->get<bool>();
}

std::size_t image_floats(const Geometry& g) {
    return static_cast<std::size_t>(g.w) * static_cast<std::size_t>(g.h) * static_cast<std::size_t>(g.c);
}

// Validates the 9-byte prefix and returns the header length.
std::uint32_t check_prefix(std::span<const std::uint8_t> bytes) {
    for (std::size_t i = 0; i < 4; ++i) {
        if (i >= bytes.size()) throw FrameError("frame truncated inside magic", bytes.size());
        if (bytes[i] != magic[i]) throw FrameError("bad frame magic", i);
    }
    if (bytes.size() < 5) throw FrameError("frame truncated before version", bytes.size());
    if (bytes[4] != version) throw FrameError("unsupported frame version " + std::to_string(bytes[4]), 4);
    if (bytes.size() < prefix_size) throw FrameError("frame truncated inside header length", bytes.size());
    return get_u32(bytes.data() + 5);
}

std::vector<float> read_floats(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t count) {
    std::vector<float> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t at = offset + 4 * i;
        const float f = std::bit_cast<float>(get_u32(bytes.data() + at));
        if (!std::isfinite(f)) throw FrameError("non-finite payload value", at);
        out[i] = f;
    }
    return out;
}

std::span<const std::uint8_t> header_span(std::span<const std::uint8_t> bytes, std::uint32_t len) {
    if (bytes.size() < prefix_size + len) throw FrameError("frame truncated inside header", bytes.size());
    return bytes.subspan(prefix_size, len);
}

void check_payload(std::span<const std::uint8_t> bytes, std::size_t start, std::size_t payload) {
    if (bytes.size() < start + payload) throw FrameError("frame payload truncated", bytes.size());
    if (bytes.size() > start + payload) throw FrameError("trailing bytes after frame payload", start + payload);
}

}  // namespace

std::vector<std::uint8_t> encode(const Request& request) {
    if (request.width < 1 || request.height < 1 || (request.channels != 1 && request.channels != 3)) {
        throw InvalidArgument("cannot encode a request with invalid dimensions");
    }
    const Geometry g{request.width, request.height, request.channels};
    if (request.image.size() != image_floats(g)) throw InvalidArgument("request payload does not match its dimensions");
    if (request.structural && request.structural->size() != static_cast<std::size_t>(g.w) * g.h) {
        throw InvalidArgument("structural payload does not match the request dimensions");
    }
    json header;
    header["w"] = request.width;
    header["h"] = request.height;
    header["c"] = request.channels;
    header["scale"] = request.scale;
    header["iter"] = request.iteration;
    header["structural"] = request.structural.has_value();
    return assemble(header, &request.image, request.structural ? &*request.structural : nullptr);
}

std::vector<std::uint8_t> encode(const Response& response) {
    json header;
    if (response.error) {
        header["error"] = *response.error;
        return assemble(header, nullptr, nullptr);
    }
    const Geometry g{response.width, response.height, response.channels};
    if (g.w < 1 || g.h < 1 || (g.c != 1 && g.c != 3) || response.image.size() != image_floats(g)) {
        throw InvalidArgument("response payload does not match its dimensions");
    }
    header["w"] = response.width;
    header["h"] = response.height;
    header["c"] = response.channels;
    return assemble(header, &response.image, nullptr);
}

std::uint32_t header_length(std::span<const std::uint8_t> prefix) { return check_prefix(prefix); }

std::size_t request_payload_bytes(std::span<const std::uint8_t> header_text, std::size_t header_offset) {
    const json header = parse_header(header_text, header_offset);
    const Geometry g = geometry(header, header_offset);
    std::size_t floats = image_floats(g);
    if (request_structural(header, header_offset)) floats += static_cast<std::size_t>(g.w) * g.h;
    return floats * 4;
}

std::size_t response_payload_bytes(std::span<const std::uint8_t> header_text, std::size_t header_offset) {
    const json header = parse_header(header_text, header_offset);
    if (header.contains("error")) return 0;
    return image_floats(geometry(header, header_offset)) * 4;
}

Request decode_request(std::span<const std::uint8_t> bytes) {
    const std::uint32_t len = check_prefix(bytes);
    const json header = parse_header(header_span(bytes, len), prefix_size);
    const Geometry g = geometry(header, prefix_size);
    const auto scale_it = header.find("scale");
    if (scale_it == header.end() || !scale_it->is_number()) {
        throw FrameError("frame header field \"scale\" missing or not a number", prefix_size);
    }
    Request r;
    r.width = g.w;
    r.height = g.h;
    r.channels = g.c;
    r.scale = scale_it->get<double>();
    if (!std::isfinite(r.scale) || r.scale <= 0.0) throw FrameError("frame scale must be positive", prefix_size);
    r.iteration = dimension(header, "iter", prefix_size, 0, std::numeric_limits<int>::max());
    const bool structural = request_structural(header, prefix_size);

    const std::size_t start = prefix_size + len;
    const std::size_t n_image = image_floats(g);
    const std::size_t n_struct = structural ? static_cast<std::size_t>(g.w) * g.h : 0;
    check_payload(bytes, start, (n_image + n_struct) * 4);
    r.image = read_floats(bytes, start, n_image);
    if (structural) r.structural = read_floats(bytes, start + n_image * 4, n_struct);
    return r;
}

Response decode_response(std::span<const std::uint8_t> bytes) {
    const std::uint32_t len = check_prefix(bytes);
    const json header = parse_header(header_span(bytes, len), prefix_size);
    const std::size_t start = prefix_size + len;
    Response r;
    if (const auto it = header.find("error"); it != header.end()) {
        r.error = it->is_string() ? it->get<std::string>() : it->dump();
        check_payload(bytes, start, 0);
        return r;
    }
    const Geometry g = geometry(header, prefix_size);
    r.width = g.w;
    r.height = g.h;
    r.channels = g.c;
    check_payload(bytes, start, image_floats(g) * 4);
    r.image = read_floats(bytes, start, image_floats(g));
    return r;
}

}  // namespace casr::frame
