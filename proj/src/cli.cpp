#include "casr/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "casr/backbone.hpp"
#include "casr/drift.hpp"
#include "casr/error.hpp"
#include "casr/frame.hpp"
#include "casr/parallel.hpp"
#include "casr/pipeline.hpp"
#include "casr/png_io.hpp"
#include "casr/scale_plan.hpp"
#include "casr/sdam.hpp"
#include "casr/similarity.hpp"
#include "casr/tiler.hpp"

namespace casr {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// Raised for semantically invalid flag combinations; maps to exit status 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string number(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("failed writing " + path.string());
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing " + path.string());
}

bool is_csv(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv";
}

std::array<double, 5> parse_lambdas(const std::string& text) {
    const std::vector<double> v = parse_factors(text);
    if (v.size() != 5) throw UsageError("--lambdas needs five comma-separated values");
    std::array<double, 5> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

struct UpscaleArgs {
    std::string input, out, report, config, factors, policy, backbone, depth;
    double scale = 0, smax = 0, timeout = 0, min_final = 0;
    int cell_size = 0, seg_iterations = 0, tile = 0, overlap = 0, workers = 0, grid = 0;
    std::uint64_t seed = 0;
    bool no_sdam = false, keep = false, timings = false, structural = false;
};

int run_upscale(CLI::App& cmd, const UpscaleArgs& a, std::ostream& out, std::ostream& err) {
    PipelineConfig cfg;
    if (!a.config.empty()) cfg = load_config(a.config);
    auto given = [&](const char* name) { return cmd.count(name) > 0; };
    if (given("--smax")) cfg.s_max = a.smax;
    if (given("--policy")) cfg.policy.kind = parse_policy(a.policy);
    if (given("--min-final")) cfg.policy.min_final_factor = a.min_final;
    if (given("--factors")) cfg.policy = PlanPolicy::explicit_factors(parse_factors(a.factors));
    if (given("--cell-size")) cfg.cell_size = a.cell_size;
    if (given("--seg-iterations")) cfg.segment_iterations = a.seg_iterations;
    if (given("--tile")) cfg.tile = a.tile;
    if (given("--overlap")) cfg.overlap = a.overlap;
    if (given("--backbone")) {
        const bool structural = cfg.backbone.accepts_structural;
        cfg.backbone = BackboneSpec::parse(a.backbone);
        cfg.backbone.accepts_structural = structural;
    }
    if (given("--structural")) cfg.backbone.accepts_structural = true;
    if (given("--no-sdam")) cfg.sdam = false;
    if (given("--depth")) cfg.depth_file = a.depth;
    if (given("--grid")) cfg.grid_h = cfg.grid_w = a.grid;
    if (given("--workers")) cfg.workers = a.workers;
    if (given("--timeout")) cfg.timeout_seconds = a.timeout;
    if (given("--seed")) cfg.seed = a.seed;
    if (given("--keep-intermediates")) cfg.keep_intermediates = true;

    double scale = a.scale;
    if (!given("--scale")) {
        if (cfg.policy.kind != PlanPolicyKind::explicit_list) throw UsageError("--scale is required without --factors");
        scale = 1.0;
        for (double f : cfg.policy.factors) scale *= f;
    }

    const ImageBuffer img = load_png(a.input);
    const CascadeResult result = run_cascade(img, scale, cfg);
    save_png(a.out, result.output);
    if (cfg.keep_intermediates) {
        const fs::path o(a.out);
        for (std::size_t k = 0; k < result.intermediates.size(); ++k) {
            fs::path p = o.parent_path() / (o.stem().string() + ".iter" + std::to_string(k) + ".png");
            save_png(p, result.intermediates[k]);
        }
    }
    if (!a.report.empty()) {
        write_text(a.report, is_csv(a.report) ? drift::report_to_csv(result.report, a.timings)
                                              : drift::report_to_json(result.report, a.timings));
    }
    err << "casr: " << img.width() << "x" << img.height() << " -> " << result.output.width() << "x"
        << result.output.height() << " via " << (result.plan.factors.empty() ? "identity" : format_factors(result.plan.factors))
        << '\n';
    (void)out;
    return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cyclic arbitrary-scale upscaling engine", "casr"};
    app.require_subcommand(1);

    // upscale
    UpscaleArgs up;
    CLI::App* upscale = app.add_subcommand("upscale", "Run the cascade on a PNG image");
    upscale->add_option("--input", up.input, "Input PNG")->required();
    upscale->add_option("--out", up.out, "Output PNG (16-bit)")->required();
    upscale->add_option("--scale", up.scale, "Requested magnification")->check(CLI::PositiveNumber);
    upscale->add_option("--smax", up.smax, "Per-step scale bound");
    upscale->add_option("--factors", up.factors, "Explicit plan, e.g. \"4,3,1.5\"");
    upscale->add_option("--policy", up.policy, "greedy | balanced");
    upscale->add_option("--min-final", up.min_final, "Smallest trailing greedy factor");
    upscale->add_option("--backbone", up.backbone, "bicubic | lanczos3 | superpixel | noisy-bicubic[:sigma] | external:\"cmd\"");
    upscale->add_flag("--structural", up.structural, "Send the structural channel to external backbones");
    upscale->add_option("--cell-size", up.cell_size, "Superpixel cell size");
    upscale->add_option("--seg-iterations", up.seg_iterations, "Clustering iterations");
    upscale->add_option("--tile", up.tile, "Tile size in pixels");
    upscale->add_option("--overlap", up.overlap, "Tile overlap in pixels");
    upscale->add_option("--depth", up.depth, "Depth PNG for the structural channel");
    upscale->add_flag("--no-sdam", up.no_sdam, "Disable superpixel alignment");
    upscale->add_option("--report", up.report, "Drift report path (.json or .csv)");
    upscale->add_flag("--timings", up.timings, "Include elapsed_ms in the report");
    upscale->add_option("--grid", up.grid, "Feature grid cells per side");
    upscale->add_option("--workers", up.workers, "Worker threads / backbone processes (default CASR_WORKERS or CPU count)");
    upscale->add_option("--timeout", up.timeout, "External backbone timeout per patch, seconds");
    upscale->add_flag("--keep-intermediates", up.keep, "Also write every intermediate image");
    upscale->add_option("--config", up.config, "JSON config file; flags override it");
    upscale->add_option("--seed", up.seed, "Seed for noise-injecting backbones");

    // plan
    double p_scale = 0, p_smax = 4.0, p_min_final = 1.1;
    std::string p_policy = "greedy", p_factors;
    bool p_json = false;
    CLI::App* plan = app.add_subcommand("plan", "Print the sub-scale plan");
    plan->add_option("--scale", p_scale, "Requested magnification")->required();
    plan->add_option("--smax", p_smax, "Per-step scale bound");
    plan->add_option("--policy", p_policy, "greedy | balanced");
    plan->add_option("--factors", p_factors, "Validate an explicit plan");
    plan->add_option("--min-final", p_min_final, "Smallest trailing greedy factor");
    plan->add_flag("--json", p_json, "Print the validation report as JSON");

    // segment
    std::string s_input, s_out, s_labels, s_boundaries, s_report;
    int s_cell = 4, s_iters = 5;
    bool s_force = false;
    CLI::App* segment = app.add_subcommand("segment", "Superpixel segmentation and aggregation");
    segment->add_option("--input", s_input, "Input PNG")->required();
    segment->add_option("--cell-size", s_cell, "Cell size (3, 4, 5 or 8)");
    segment->add_option("--iterations", s_iters, "Clustering iterations");
    segment->add_flag("--force", s_force, "Allow other cell sizes");
    segment->add_option("--out", s_out, "Superpixel (region mean) image PNG");
    segment->add_option("--labels", s_labels, "16-bit label map PNG");
    segment->add_option("--boundaries", s_boundaries, "Boundary visualisation PNG");
    segment->add_option("--report", s_report, "Region table JSON");

    // drift
    std::string d_a, d_b;
    int d_grid = 16;
    bool d_json = false;
    CLI::App* drift_cmd = app.add_subcommand("drift", "SIFID-lite distance between two images");
    drift_cmd->add_option("--a", d_a, "First PNG")->required();
    drift_cmd->add_option("--b", d_b, "Second PNG")->required();
    drift_cmd->add_option("--grid", d_grid, "Feature grid cells per side (for l_corr)");
    drift_cmd->add_flag("--json", d_json, "Print distance and l_corr as JSON");

    // correlate
    std::string c_input, c_against, c_out, c_dump;
    int c_grid = 16;
    CLI::App* correlate = app.add_subcommand("correlate", "Self-correlation matrix of an image");
    correlate->add_option("--input", c_input, "Input PNG")->required();
    correlate->add_option("--against", c_against, "Second PNG; reports L_corr");
    correlate->add_option("--grid", c_grid, "Feature grid cells per side");
    correlate->add_option("--out", c_out, "Heatmap PNG");
    correlate->add_option("--dump", c_dump, "Raw float dump in the frame format");

    // tile-debug
    std::string t_input, t_out;
    int t_w = 0, t_h = 0, t_tile = 512, t_overlap = 64;
    CLI::App* tile_debug = app.add_subcommand("tile-debug", "Print and draw a tile layout");
    tile_debug->add_option("--input", t_input, "PNG whose size (and content) to use");
    tile_debug->add_option("--width", t_w, "Image width without --input");
    tile_debug->add_option("--height", t_h, "Image height without --input");
    tile_debug->add_option("--tile", t_tile, "Tile size");
    tile_debug->add_option("--overlap", t_overlap, "Overlap");
    tile_debug->add_option("--out", t_out, "Overlay PNG");

    // losses
    std::string l_input, l_gt, l_depth, l_gt_depth, l_lambdas = "1,0,0,1,1";
    int l_grid = 16;
    CLI::App* losses = app.add_subcommand("losses", "Computable loss terms between an output and a reference");
    losses->add_option("--input", l_input, "Output PNG")->required();
    losses->add_option("--gt", l_gt, "Reference PNG")->required();
    losses->add_option("--depth", l_depth, "Depth PNG of the output");
    losses->add_option("--gt-depth", l_gt_depth, "Depth PNG of the reference");
    losses->add_option("--lambdas", l_lambdas, "l1,lpips,gan,depth,corr weights");
    losses->add_option("--grid", l_grid, "Feature grid cells per side");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "casr: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return 1;
    }

    try {
        if (upscale->parsed()) return run_upscale(*upscale, up, out, err);

        if (plan->parsed()) {
            ScalePlan p;
            if (!p_factors.empty()) {
                p = plan_scales(p_scale, p_smax, PlanPolicy::explicit_factors(parse_factors(p_factors)));
            } else {
                PlanPolicy pol = PlanPolicy::greedy(p_min_final);
                pol.kind = parse_policy(p_policy);
                if (pol.kind == PlanPolicyKind::explicit_list) throw UsageError("--policy explicit needs --factors");
                p = plan_scales(p_scale, p_smax, pol);
            }
            const PlanReport r = validate_plan(p);
            if (p_json) {
                ojson j;
                j["factors"] = p.factors;
                j["steps"] = p.steps();
                j["requested"] = p.requested;
                j["s_max"] = p.s_max;
                j["valid"] = r.valid;
                j["product_error"] = r.product_error;
                j["violations"] = ojson::array();
                for (const auto& v : r.violations) {
                    j["violations"].push_back({{"factor", v.factor_index}, {"value", v.value}, {"reason", v.reason}});
                }
                j["warnings"] = r.warnings;
                out << j.dump(2) << '\n';
            } else {
                out << format_factors(p.factors) << '\n';
            }
            for (const auto& w : r.warnings) err << "casr: warning: " << w << '\n';
            return r.valid ? 0 : 2;
        }

        if (segment->parsed()) {
            const ImageBuffer img = load_png(s_input);
            sdam::SegmentOptions o;
            o.cell_size = s_cell;
            o.iterations = s_iters;
            o.force = s_force;
            o.keep_soft_assign = false;
            const sdam::Segmentation seg = sdam::segment_superpixels(img, o);
            if (!s_out.empty()) save_png(s_out, sdam::aggregate_regions(img, seg));
            if (!s_labels.empty()) save_png_u16(s_labels, seg.width, seg.height, seg.label_map);
            if (!s_boundaries.empty()) save_png(s_boundaries, sdam::boundary_overlay(img, seg));
            ojson j;
            j["width"] = seg.width;
            j["height"] = seg.height;
            j["cell_size"] = seg.cell_size;
            j["grid_w"] = seg.grid_w;
            j["grid_h"] = seg.grid_h;
            j["regions"] = ojson::array();
            for (const auto& r : seg.regions) {
                std::vector<float> mean(r.mean.begin(), r.mean.begin() + seg.channels);
                j["regions"].push_back({{"id", r.id}, {"count", r.count}, {"mean", mean}, {"cx", r.cx}, {"cy", r.cy}});
            }
            if (!s_report.empty()) write_text(s_report, j.dump(2) + "\n");
            out << seg.regions.size() << '\n';
            return 0;
        }

        if (drift_cmd->parsed()) {
            const ImageBuffer a = load_png(d_a);
            const ImageBuffer b = load_png(d_b);
            parallel::ScopedWorkers scope(parallel::resolve_workers(0));
            const double d = drift::frechet_distance(drift::fit_feature_gaussian(a), drift::fit_feature_gaussian(b));
            if (d_json) {
                const double lc = similarity::correlation_loss(
                    similarity::self_correlation(similarity::embed_features(a, d_grid, d_grid)),
                    similarity::self_correlation(similarity::embed_features(b, d_grid, d_grid)));
                ojson j;
                j["metric"] = drift::metric_name;
                j["frechet_distance"] = d;
                j["l_corr"] = lc;
                out << j.dump(2) << '\n';
            } else {
                out << number(d) << '\n';
            }
            return 0;
        }

        if (correlate->parsed()) {
            const ImageBuffer img = load_png(c_input);
            const similarity::FeatureGrid grid = similarity::embed_features(img, c_grid, c_grid);
            const similarity::CorrelationMatrix r = similarity::self_correlation(grid);
            if (!c_out.empty()) save_png(c_out, similarity::correlation_heatmap(r));
            if (!c_dump.empty()) {
                frame::Response dump;
                dump.width = dump.height = r.n;
                dump.channels = 1;
                dump.image.assign(r.entries.begin(), r.entries.end());
                write_bytes(c_dump, frame::encode(dump));
            }
            const auto [lo, hi] = std::minmax_element(r.entries.begin(), r.entries.end());
            const similarity::GlobalDescriptor g = similarity::global_descriptor(grid);
            ojson j;
            j["n"] = r.n;
            j["min"] = *lo;
            j["max"] = *hi;
            j["global_descriptor"] = g.vector;
            j["global_fallback"] = g.fallback;
            if (!c_against.empty()) {
                const ImageBuffer other = load_png(c_against);
                j["l_corr"] = similarity::correlation_loss(
                    r, similarity::self_correlation(similarity::embed_features(other, c_grid, c_grid)));
            }
            out << j.dump(2) << '\n';
            return 0;
        }

        if (tile_debug->parsed()) {
            ImageBuffer img;
            if (!t_input.empty()) {
                img = load_png(t_input);
                t_w = img.width();
                t_h = img.height();
            } else if (t_w < 1 || t_h < 1) {
                throw UsageError("tile-debug needs --input or both --width and --height");
            }
            const tiler::PatchLayout layout = tiler::plan_tiles(t_w, t_h, t_tile, t_overlap);
            out << tiler::layout_dump(layout);
            if (!t_out.empty()) save_png(t_out, tiler::layout_overlay(layout, img));
            return 0;
        }

        if (losses->parsed()) {
            const ImageBuffer a = load_png(l_input);
            const ImageBuffer b = load_png(l_gt);
            const auto depth_of = [](const ImageBuffer& img, const std::string& path) {
                return path.empty() ? sdam::structural_map(img) : sdam::structural_map(img, fs::path(path));
            };
            drift::Lambdas lambdas;
            lambdas.values = parse_lambdas(l_lambdas);
            const drift::LossBreakdown r =
                drift::compute_losses(a, b, depth_of(a, l_depth), depth_of(b, l_gt_depth), lambdas, l_grid, l_grid);
            out << drift::losses_to_json(r);
            return 0;
        }
    } catch (const UsageError& e) {
        err << "casr: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "casr: error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

int cli_main(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace casr
