#include "casr/sdam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "casr/error.hpp"
#include "casr/parallel.hpp"
#include "casr/png_io.hpp"

namespace casr::sdam {

namespace {

struct Center {
    double color[3] = {0.0, 0.0, 0.0};
    double x = 0.0;
    double y = 0.0;
};

// Partial sums contributed by one band of pixel rows to one center.
struct Accum {
    double w = 0.0;
    double color[3] = {0.0, 0.0, 0.0};
    double x = 0.0;
    double y = 0.0;
};

std::string dims(int w, int h) { return std::to_string(w) + "x" + std::to_string(h); }

void build_regions(Segmentation& seg, const ImageBuffer* img) {
    const std::size_t cells = static_cast<std::size_t>(seg.grid_w) * seg.grid_h;
    std::vector<std::size_t> count(cells, 0);
    std::vector<double> sx(cells, 0.0);
    std::vector<double> sy(cells, 0.0);
    std::vector<double> sc(img ? cells * 3 : 0, 0.0);
    for (int y = 0; y < seg.height; ++y) {
        for (int x = 0; x < seg.width; ++x) {
            const auto id = static_cast<std::size_t>(seg.label_map[static_cast<std::size_t>(y) * seg.width + x]);
            ++count[id];
            sx[id] += x;
            sy[id] += y;
            if (img) {
                for (int c = 0; c < img->channels(); ++c) sc[id * 3 + c] += img->at(x, y, c);
            }
        }
    }
    std::vector<Region> previous = std::move(seg.regions);
    std::vector<int> prev_index(cells, -1);
    for (std::size_t i = 0; i < previous.size(); ++i) prev_index[static_cast<std::size_t>(previous[i].id)] = static_cast<int>(i);

    seg.regions.clear();
    for (std::size_t id = 0; id < cells; ++id) {
        if (count[id] == 0) continue;
        Region r;
        r.id = static_cast<int>(id);
        r.count = count[id];
        r.cx = sx[id] / static_cast<double>(count[id]);
        r.cy = sy[id] / static_cast<double>(count[id]);
        if (img) {
            for (int c = 0; c < seg.channels; ++c) {
                r.mean[static_cast<std::size_t>(c)] = static_cast<float>(sc[id * 3 + c] / static_cast<double>(count[id]));
            }
        } else if (prev_index[id] >= 0) {
            r.mean = previous[static_cast<std::size_t>(prev_index[id])].mean;
        }
        seg.regions.push_back(r);
    }
}

}  // namespace

const Region& Segmentation::region(int id) const {
    auto it = std::lower_bound(regions.begin(), regions.end(), id,
                               [](const Region& r, int v) { return r.id < v; });
    if (it == regions.end() || it->id != id) throw InvalidArgument("no region with id " + std::to_string(id));
    return *it;
}

int Segmentation::seed_cell(int x, int y) const noexcept {
    const int sw = source_width > 0 ? source_width : width;
    const int sh = source_height > 0 ? source_height : height;
    const int sx = std::clamp(static_cast<int>(std::floor((x + 0.5) * sw / width)), 0, sw - 1);
    const int sy = std::clamp(static_cast<int>(std::floor((y + 0.5) * sh / height)), 0, sh - 1);
    const int cx = std::min(sx / cell_size, grid_w - 1);
    const int cy = std::min(sy / cell_size, grid_h - 1);
    return cy * grid_w + cx;
}

Segmentation segment_superpixels(const ImageBuffer& img, const SegmentOptions& options) {
    const int cell = options.cell_size;
    if (cell < 2) throw InvalidArgument("cell size must be at least 2, got " + std::to_string(cell));
    if (!options.force && cell != 3 && cell != 4 && cell != 5 && cell != 8) {
        throw InvalidArgument("cell size " + std::to_string(cell) + " is not one of 3, 4, 5, 8 (pass force to override)");
    }
    if (options.iterations < 1) throw InvalidArgument("segmentation needs at least one iteration");
    if (!(options.temperature > 0.0)) throw InvalidArgument("softmax temperature must be positive");
    if (img.width() < 2 * cell || img.height() < 2 * cell) {
        throw InvalidArgument("image " + dims(img.width(), img.height()) + " is smaller than 2x2 cells of size " +
                              std::to_string(cell));
    }

    Segmentation seg;
    seg.width = img.width();
    seg.height = img.height();
    seg.source_width = seg.width;
    seg.source_height = seg.height;
    seg.channels = img.channels();
    seg.cell_size = cell;
    seg.grid_w = img.width() / cell;
    seg.grid_h = img.height() / cell;
    const int gw = seg.grid_w;
    const int gh = seg.grid_h;
    const int w = seg.width;
    const int ch = seg.channels;
    const std::size_t n_pixels = img.pixel_count();

    // Seed-cell row ranges; the last row and column of cells absorb the remainder.
    auto cell_x0 = [&](int cx) { return cx * cell; };
    auto cell_x1 = [&](int cx) { return cx == gw - 1 ? seg.width : (cx + 1) * cell; };
    auto cell_y0 = [&](int cy) { return cy * cell; };
    auto cell_y1 = [&](int cy) { return cy == gh - 1 ? seg.height : (cy + 1) * cell; };

    std::vector<Center> centers(static_cast<std::size_t>(gw) * gh);
    for (int cy = 0; cy < gh; ++cy) {
        for (int cx = 0; cx < gw; ++cx) {
            Center& c = centers[static_cast<std::size_t>(cy) * gw + cx];
            double n = 0.0;
            for (int y = cell_y0(cy); y < cell_y1(cy); ++y) {
                for (int x = cell_x0(cx); x < cell_x1(cx); ++x) {
                    for (int k = 0; k < ch; ++k) c.color[k] += img.at(x, y, k);
                    c.x += x;
                    c.y += y;
                    n += 1.0;
                }
            }
            for (int k = 0; k < ch; ++k) c.color[k] /= n;
            c.x /= n;
            c.y /= n;
        }
    }

    const double spatial = options.compactness / static_cast<double>(cell);
    const double inv_tau = 1.0 / options.temperature;
    seg.label_map.assign(n_pixels, 0);
    if (options.keep_soft_assign) seg.soft_assign.assign(n_pixels * 9, 0.0f);

    // partials[(band * 3 + d) * gw + cx] collects contributions of seed-cell
    // row `band` to center row band - 1 + d.
    std::vector<Accum> partials(static_cast<std::size_t>(gh) * 3 * gw);

    for (int iter = 0; iter < options.iterations; ++iter) {
        const bool last = iter + 1 == options.iterations;
        if (!last) std::fill(partials.begin(), partials.end(), Accum{});

        parallel::parallel_for(static_cast<std::size_t>(gh), [&](std::size_t band) {
            const int cy = static_cast<int>(band);
            double dist[9];
            double prob[9];
            int ids[9];
            for (int y = cell_y0(cy); y < cell_y1(cy); ++y) {
                for (int x = 0; x < w; ++x) {
                    const int cx = std::min(x / cell, gw - 1);
                    double dmin = std::numeric_limits<double>::infinity();
                    for (int k = 0; k < 9; ++k) {
                        const int nx = cx + k % 3 - 1;
                        const int ny = cy + k / 3 - 1;
                        if (nx < 0 || ny < 0 || nx >= gw || ny >= gh) {
                            ids[k] = -1;
                            continue;
                        }
                        ids[k] = ny * gw + nx;
                        const Center& c = centers[static_cast<std::size_t>(ids[k])];
                        double cd = 0.0;
                        for (int q = 0; q < ch; ++q) {
                            const double d = img.at(x, y, q) - c.color[q];
                            cd += d * d;
                        }
                        const double dx = x - c.x;
                        const double dy = y - c.y;
                        dist[k] = std::sqrt(cd) + spatial * std::sqrt(dx * dx + dy * dy);
                        dmin = std::min(dmin, dist[k]);
                    }
                    double total = 0.0;
                    for (int k = 0; k < 9; ++k) {
                        prob[k] = ids[k] < 0 ? 0.0 : std::exp(-(dist[k] - dmin) * inv_tau);
                        total += prob[k];
                    }
                    for (int k = 0; k < 9; ++k) prob[k] /= total;

                    if (last) {
                        const std::size_t p = static_cast<std::size_t>(y) * w + x;
                        float best = -1.0f;
                        int best_id = -1;
                        for (int k = 0; k < 9; ++k) {
                            if (ids[k] < 0) continue;
                            const auto pf = static_cast<float>(prob[k]);
                            if (options.keep_soft_assign) seg.soft_assign[p * 9 + k] = pf;
                            if (pf > best) {  // ids increase with k, so ties keep the smallest id
                                best = pf;
                                best_id = ids[k];
                            }
                        }
                        seg.label_map[p] = best_id;
                        continue;
                    }
                    for (int k = 0; k < 9; ++k) {
                        if (ids[k] < 0) continue;
                        const int d = k / 3;  // target center row = cy - 1 + d
                        Accum& a = partials[(band * 3 + static_cast<std::size_t>(d)) * gw +
                                            static_cast<std::size_t>(cx + k % 3 - 1)];
                        a.w += prob[k];
                        for (int q = 0; q < ch; ++q) a.color[q] += prob[k] * img.at(x, y, q);
                        a.x += prob[k] * x;
                        a.y += prob[k] * y;
                    }
                }
            }
        });

        if (last) break;
        for (int cy = 0; cy < gh; ++cy) {
            for (int cx = 0; cx < gw; ++cx) {
                Accum sum;
                for (int d = 0; d < 3; ++d) {
                    const int band = cy + 1 - d;  // band - 1 + d == cy
                    if (band < 0 || band >= gh) continue;
                    const Accum& a = partials[(static_cast<std::size_t>(band) * 3 + d) * gw + cx];
                    sum.w += a.w;
                    for (int q = 0; q < 3; ++q) sum.color[q] += a.color[q];
                    sum.x += a.x;
                    sum.y += a.y;
                }
                if (sum.w <= 0.0) continue;
                Center& c = centers[static_cast<std::size_t>(cy) * gw + cx];
                for (int q = 0; q < ch; ++q) c.color[q] = sum.color[q] / sum.w;
                c.x = sum.x / sum.w;
                c.y = sum.y / sum.w;
            }
        }
    }

    build_regions(seg, &img);
    return seg;
}

ImageBuffer aggregate_regions(const ImageBuffer& img, const Segmentation& seg) {
    if (img.width() != seg.width || img.height() != seg.height) {
        throw InvalidArgument("image " + dims(img.width(), img.height()) + " does not match segmentation " +
                              dims(seg.width, seg.height));
    }
    const int ch = img.channels();
    const std::size_t cells = static_cast<std::size_t>(seg.grid_w) * seg.grid_h;
    std::vector<double> sums(cells * ch, 0.0);
    std::vector<std::size_t> counts(cells, 0);
    const auto data = img.data();
    for (std::size_t p = 0; p < seg.label_map.size(); ++p) {
        const auto id = static_cast<std::size_t>(seg.label_map[p]);
        ++counts[id];
        for (int c = 0; c < ch; ++c) sums[id * ch + c] += data[p * ch + c];
    }
    std::vector<float> means(cells * ch, 0.0f);
    for (std::size_t id = 0; id < cells; ++id) {
        if (counts[id] == 0) continue;
        for (int c = 0; c < ch; ++c) means[id * ch + c] = static_cast<float>(sums[id * ch + c] / static_cast<double>(counts[id]));
    }
    std::vector<float> out(data.size());
    for (std::size_t p = 0; p < seg.label_map.size(); ++p) {
        const auto id = static_cast<std::size_t>(seg.label_map[p]);
        for (int c = 0; c < ch; ++c) out[p * ch + c] = means[id * ch + c];
    }
    return ImageBuffer(img.width(), img.height(), ch, out);
}

ImageBuffer render_regions(const Segmentation& seg) {
    const std::size_t cells = static_cast<std::size_t>(seg.grid_w) * seg.grid_h;
    std::vector<const Region*> lookup(cells, nullptr);
    for (const Region& r : seg.regions) lookup[static_cast<std::size_t>(r.id)] = &r;
    const int ch = seg.channels;
    std::vector<float> out(seg.label_map.size() * ch);
    for (std::size_t p = 0; p < seg.label_map.size(); ++p) {
        const Region* r = lookup[static_cast<std::size_t>(seg.label_map[p])];
        for (int c = 0; c < ch; ++c) out[p * ch + c] = r->mean[static_cast<std::size_t>(c)];
    }
    return ImageBuffer(seg.width, seg.height, ch, out);
}

Segmentation upsample_segmentation(const Segmentation& seg, double factor) {
    if (!(factor > 1.0) || !std::isfinite(factor)) {
        throw InvalidArgument("segmentation upsampling factor must be > 1, got " + std::to_string(factor));
    }
    Segmentation up;
    up.width = static_cast<int>(std::lround(seg.width * factor));
    up.height = static_cast<int>(std::lround(seg.height * factor));
    up.source_width = seg.source_width > 0 ? seg.source_width : seg.width;
    up.source_height = seg.source_height > 0 ? seg.source_height : seg.height;
    up.channels = seg.channels;
    up.cell_size = seg.cell_size;
    up.grid_w = seg.grid_w;
    up.grid_h = seg.grid_h;
    up.regions = seg.regions;
    up.label_map.resize(static_cast<std::size_t>(up.width) * up.height);
    const double rx = static_cast<double>(seg.width) / up.width;
    const double ry = static_cast<double>(seg.height) / up.height;
    std::vector<int> src_x(static_cast<std::size_t>(up.width));
    for (int x = 0; x < up.width; ++x) {
        src_x[static_cast<std::size_t>(x)] = std::clamp(static_cast<int>(std::floor((x + 0.5) * rx)), 0, seg.width - 1);
    }
    for (int y = 0; y < up.height; ++y) {
        const int sy = std::clamp(static_cast<int>(std::floor((y + 0.5) * ry)), 0, seg.height - 1);
        for (int x = 0; x < up.width; ++x) {
            up.label_map[static_cast<std::size_t>(y) * up.width + x] =
                seg.label_map[static_cast<std::size_t>(sy) * seg.width + src_x[static_cast<std::size_t>(x)]];
        }
    }
    build_regions(up, nullptr);
    return up;
}

ImageBuffer boundary_overlay(const ImageBuffer& img, const Segmentation& seg) {
    ImageBuffer out = aggregate_regions(img, seg);
    const int w = seg.width;
    for (int y = 0; y < seg.height; ++y) {
        for (int x = 0; x < w; ++x) {
            const int id = seg.label_map[static_cast<std::size_t>(y) * w + x];
            const bool right = x + 1 < w && seg.label_map[static_cast<std::size_t>(y) * w + x + 1] != id;
            const bool down = y + 1 < seg.height && seg.label_map[static_cast<std::size_t>(y + 1) * w + x] != id;
            if (right || down) {
                for (int c = 0; c < out.channels(); ++c) out.set(x, y, c, 1.0f);
            }
        }
    }
    return out;
}

std::vector<float> normalize_min_max(std::span<const float> raw) {
    std::vector<float> out(raw.size(), 0.0f);
    if (raw.empty()) return out;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (float v : raw) {
        if (!std::isfinite(v)) throw InvalidArgument("structural map contains a non-finite value");
        lo = std::min(lo, static_cast<double>(v));
        hi = std::max(hi, static_cast<double>(v));
    }
    if (hi > lo) {
        const double span = hi - lo;
        for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>((raw[i] - lo) / span);
    }
    return out;
}

StructuralMap structural_from_depth(int width, int height, std::span<const float> raw) {
    if (raw.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw InvalidArgument("depth data length " + std::to_string(raw.size()) + " does not match " + dims(width, height));
    }
    return {ImageBuffer(width, height, 1, normalize_min_max(raw)), StructuralSource::ingested_depth_file};
}

StructuralMap structural_map(const ImageBuffer& img, const std::optional<std::filesystem::path>& depth_file) {
    if (depth_file) {
        const ImageBuffer depth = load_png(*depth_file);
        if (depth.channels() != 1) {
            throw InvalidArgument("depth file '" + depth_file->string() + "' must be single channel, has " +
                                  std::to_string(depth.channels()));
        }
        if (depth.width() != img.width() || depth.height() != img.height()) {
            throw InvalidArgument("depth file '" + depth_file->string() + "' is " + dims(depth.width(), depth.height()) +
                                  " but the image is " + dims(img.width(), img.height()));
        }
        return structural_from_depth(depth.width(), depth.height(), depth.data());
    }
    const ImageBuffer grad = gradient_magnitude(img);
    return {ImageBuffer(grad.width(), grad.height(), 1, normalize_min_max(grad.data())), StructuralSource::gradient_proxy};
}

double depth_loss(const StructuralMap& a, const StructuralMap& b) {
    if (a.depth.width() != b.depth.width() || a.depth.height() != b.depth.height()) {
        throw InvalidArgument("structural maps differ in size: " + dims(a.depth.width(), a.depth.height()) + " vs " +
                              dims(b.depth.width(), b.depth.height()));
    }
    const auto da = a.depth.data();
    const auto db = b.depth.data();
    if (da.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = static_cast<double>(da[i]) - db[i];
        sum += d * d;
    }
    return std::sqrt(sum) / std::sqrt(static_cast<double>(da.size()));
}

}  // namespace casr::sdam
