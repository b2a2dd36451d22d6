#include "casr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "casr/parallel.hpp"
#include "casr/sdam.hpp"
#include "casr/tiler.hpp"

namespace casr {

namespace {

using json = nlohmann::json;

std::string where(int iteration, std::optional<std::size_t> patch) {
    std::string s = "iteration " + std::to_string(iteration);
    if (patch) s += ", patch " + std::to_string(*patch);
    return s;
}

template <class T>
T field(const json& doc, const char* key) {
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidArgument(std::string("config field \"") + key + "\" has the wrong type");
    }
}

sdam::SegmentOptions segment_options(const PipelineConfig& cfg) {
    sdam::SegmentOptions o;
    o.cell_size = cfg.cell_size;
    o.iterations = cfg.segment_iterations;
    o.force = true;
    o.keep_soft_assign = false;
    return o;
}

}  // namespace

CascadeError::CascadeError(const std::string& cause, int iteration, std::optional<std::size_t> patch)
    : Error(where(iteration, patch) + ": " + cause), iteration_(iteration), patch_(patch) {}

void PipelineConfig::validate() const {
    if (!(s_max > 1.0) || !std::isfinite(s_max)) throw InvalidArgument("s_max must be greater than 1");
    if (overlap < 0) throw InvalidArgument("overlap must be non-negative");
    if (tile <= 2 * overlap) {
        throw InvalidArgument("tile (" + std::to_string(tile) + ") must exceed twice the overlap (" +
                              std::to_string(overlap) + ")");
    }
    if (cell_size < 2) throw InvalidArgument("cell size must be at least 2");
    if (segment_iterations < 1) throw InvalidArgument("segmentation iterations must be at least 1");
    if (grid_h < 2 || grid_w < 2) throw InvalidArgument("feature grid must be at least 2x2");
    if (!(timeout_seconds > 0.0)) throw InvalidArgument("timeout must be positive");
    if (backbone.kind == BackboneKind::external && backbone.command.empty()) {
        throw InvalidArgument("external backbone needs a command");
    }
}

void apply_config_json(PipelineConfig& cfg, const std::string& json_text) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw InvalidArgument("config is not a JSON object");

    std::optional<std::vector<double>> factors;
    for (const auto& [key, value] : doc.items()) {
        const char* k = key.c_str();
        if (key == "s_max") {
            cfg.s_max = field<double>(doc, k);
        } else if (key == "policy") {
            const auto kind = parse_policy(field<std::string>(doc, k));
            cfg.policy.kind = kind;
        } else if (key == "factors") {
            if (value.is_string()) {
                factors = parse_factors(value.get<std::string>());
            } else {
                factors = field<std::vector<double>>(doc, k);
            }
        } else if (key == "min_final_factor") {
            cfg.policy.min_final_factor = field<double>(doc, k);
        } else if (key == "cell_size") {
            cfg.cell_size = field<int>(doc, k);
        } else if (key == "segment_iterations") {
            cfg.segment_iterations = field<int>(doc, k);
        } else if (key == "tile") {
            cfg.tile = field<int>(doc, k);
        } else if (key == "overlap") {
            cfg.overlap = field<int>(doc, k);
        } else if (key == "backbone") {
            const bool structural = cfg.backbone.accepts_structural;
            const double sigma = cfg.backbone.noise_sigma;
            cfg.backbone = BackboneSpec::parse(field<std::string>(doc, k));
            cfg.backbone.accepts_structural = structural;
            if (field<std::string>(doc, k).find(':') == std::string::npos) cfg.backbone.noise_sigma = sigma;
        } else if (key == "accepts_structural") {
            cfg.backbone.accepts_structural = field<bool>(doc, k);
        } else if (key == "noise_sigma") {
            cfg.backbone.noise_sigma = field<double>(doc, k);
        } else if (key == "sdam") {
            cfg.sdam = field<bool>(doc, k);
        } else if (key == "depth_file") {
            if (value.is_null()) {
                cfg.depth_file.reset();
            } else {
                cfg.depth_file = field<std::string>(doc, k);
            }
        } else if (key == "grid_h") {
            cfg.grid_h = field<int>(doc, k);
        } else if (key == "grid_w") {
            cfg.grid_w = field<int>(doc, k);
        } else if (key == "lambdas") {
            const auto l = field<std::vector<double>>(doc, k);
            if (l.size() != 5) throw InvalidArgument("config field \"lambdas\" needs 5 values");
            std::copy(l.begin(), l.end(), cfg.lambdas.values.begin());
        } else if (key == "workers") {
            cfg.workers = field<int>(doc, k);
        } else if (key == "timeout_seconds") {
            cfg.timeout_seconds = field<double>(doc, k);
        } else if (key == "seed") {
            cfg.seed = field<std::uint64_t>(doc, k);
        } else if (key == "keep_intermediates") {
            cfg.keep_intermediates = field<bool>(doc, k);
        } else {
            throw InvalidArgument("unknown config field \"" + key + "\"");
        }
    }
    if (factors) {
        cfg.policy.kind = PlanPolicyKind::explicit_list;
        cfg.policy.factors = *factors;
    }
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_config_json(base, ss.str());
    return base;
}

std::optional<double> exact_step_factor(int pw, int ph, int tw, int th, double nominal, double s_max) {
    auto lands = [&](double f) { return scaled_dim(pw, f) == tw && scaled_dim(ph, f) == th; };
    auto usable = [&](double f) { return f > 1.0 && f <= s_max && lands(f); };
    if (usable(nominal)) return nominal;

    // round(p * f) == t  <=>  (t - 0.5) / p <= f < (t + 0.5) / p
    const double lo = std::max({(tw - 0.5) / pw, (th - 0.5) / ph, std::nextafter(1.0, 2.0)});
    const double hi = std::min({(tw + 0.5) / pw, (th + 0.5) / ph, std::nextafter(s_max, 0.0)});
    if (!(lo < hi)) return std::nullopt;
    for (double f : {std::clamp(nominal, lo, hi), std::nextafter(lo, hi), std::nextafter(hi, lo), 0.5 * (lo + hi)}) {
        if (usable(f)) return f;
    }
    return std::nullopt;
}

ScalePlan plan_for(double requested_scale, const PipelineConfig& cfg) {
    return plan_scales(requested_scale, cfg.s_max, cfg.policy);
}

ImageBuffer cascade_step(const ImageBuffer& img, int target_w, int target_h, double factor, int iteration,
                         const PipelineConfig& cfg, Backbone& backbone, int workers,
                         const sdam::StructuralMap* ingested) {
    const bool want_structural = cfg.sdam || backbone.spec().accepts_structural;
    std::optional<sdam::StructuralMap> structural;
    if (want_structural) {
        if (ingested) {
            if (ingested->depth.width() == img.width() && ingested->depth.height() == img.height()) {
                structural = *ingested;
            } else {
                const ImageBuffer d = resample(ingested->depth, img.width(), img.height(), ResampleKernel::bilinear);
                structural = sdam::structural_from_depth(img.width(), img.height(), d.data());
                structural->source = ingested->source;
            }
        } else {
            structural = sdam::structural_map(img);
        }
    }

    ImageBuffer input = img;
    if (cfg.sdam) input = sdam::aggregate_regions(img, sdam::segment_superpixels(img, segment_options(cfg)));

    StepContext ctx;
    ctx.s_max = cfg.s_max;
    ctx.iteration = iteration;
    ctx.timeout_seconds = cfg.timeout_seconds;

    ImageBuffer out;
    if (input.width() <= cfg.tile && input.height() <= cfg.tile) {
        try {
            out = backbone.upscale(input, structural ? &*structural : nullptr, factor, ctx, 0);
        } catch (const Error& e) {
            throw CascadeError(e.what(), iteration, 0);
        }
    } else {
        const tiler::PatchLayout layout = tiler::plan_tiles(input.width(), input.height(), cfg.tile, cfg.overlap);
        tiler::Blender blender(layout, factor, input.channels());
        const std::size_t count = layout.tile_count();
        const auto batch = static_cast<std::size_t>(std::max(1, std::min(workers, backbone.slots())));
        for (std::size_t first = 0; first < count; first += batch) {
            const std::size_t n = std::min(batch, count - first);
            std::vector<ImageBuffer> results(n);
            parallel::ScopedWorkers scope(static_cast<int>(n));
            parallel::parallel_for(n, [&](std::size_t j) {
                const std::size_t index = first + j;
                const tiler::PatchLayout::Rect r = layout.rect(index);
                try {
                    const ImageBuffer patch = input.crop(r.x, r.y, r.w, r.h);
                    std::optional<sdam::StructuralMap> patch_structural;
                    if (structural) patch_structural = {structural->depth.crop(r.x, r.y, r.w, r.h), structural->source};
                    StepContext pc = ctx;
                    pc.patch = index;
                    results[j] = backbone.upscale(patch, patch_structural ? &*patch_structural : nullptr, factor, pc,
                                                  static_cast<int>(j));
                } catch (const Error& e) {
                    throw CascadeError(e.what(), iteration, index);
                }
            });
            for (std::size_t j = 0; j < n; ++j) {
                try {
                    blender.add(first + j, results[j]);
                } catch (const Error& e) {
                    throw CascadeError(e.what(), iteration, first + j);
                }
                results[j] = ImageBuffer();
            }
        }
        out = blender.finish();
    }
    if (out.width() != target_w || out.height() != target_h) {
        out = resample(out, target_w, target_h, ResampleKernel::bicubic);
    }
    return out;
}

CascadeResult run_cascade(const ImageBuffer& img, double requested_scale, const PipelineConfig& cfg) {
    cfg.validate();
    require_min_size(img, 8, "cascade input");
    if (!(requested_scale >= 1.0) || !std::isfinite(requested_scale)) {
        throw InvalidArgument("requested scale must be at least 1");
    }
    CascadeResult result;
    result.plan = plan_for(requested_scale, cfg);

    const int workers = parallel::resolve_workers(cfg.workers);
    parallel::ScopedWorkers scope(workers);

    BackboneSpec spec = cfg.backbone;
    spec.seed = cfg.seed;
    spec.segment = segment_options(cfg);
    Backbone backbone(spec, workers);

    std::optional<sdam::StructuralMap> ingested;
    if (cfg.depth_file) ingested = sdam::structural_map(img, cfg.depth_file);

    const bool measured = drift::measurable(img, cfg.grid_h, cfg.grid_w);
    std::optional<drift::DriftTracker> tracker;
    if (measured) tracker.emplace(img, cfg.grid_h, cfg.grid_w);
    result.report.measured = measured;
    if (!measured) result.report.entries.push_back({0, 1.0, img.width(), img.height(), 0.0, 0.0, 0.0});

    if (cfg.keep_intermediates) result.intermediates.push_back(img);

    const auto dims = step_dimensions(result.plan, img.width(), img.height());
    ImageBuffer current = img;
    for (std::size_t k = 0; k < result.plan.steps(); ++k) {
        const int iteration = static_cast<int>(k) + 1;
        const auto start = std::chrono::steady_clock::now();
        const auto [tw, th] = dims[k];
        const double nominal = result.plan.factors[k];
        const double factor =
            exact_step_factor(current.width(), current.height(), tw, th, nominal, cfg.s_max).value_or(nominal);
        result.applied_factors.push_back(factor);
        try {
            current = cascade_step(current, tw, th, factor, iteration, cfg, backbone, workers,
                                   ingested ? &*ingested : nullptr);
        } catch (const CascadeError&) {
            throw;
        } catch (const Error& e) {
            throw CascadeError(e.what(), iteration, std::nullopt);
        }
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (tracker) {
            tracker->add(current, nominal, ms);
        } else {
            result.report.entries.push_back({iteration, nominal, current.width(), current.height(), 0.0, 0.0, ms});
        }
        if (cfg.keep_intermediates) result.intermediates.push_back(current);
    }
    if (tracker) result.report = tracker->report();
    result.report.measured = measured;
    result.output = std::move(current);
    return result;
}

}  // namespace casr
