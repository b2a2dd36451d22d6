#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "casr/backbone.hpp"
#include "casr/drift.hpp"
#include "casr/error.hpp"
#include "casr/image.hpp"
#include "casr/scale_plan.hpp"
#include "casr/sdam.hpp"

namespace casr {

struct PipelineConfig {
    double s_max = 4.0;
    PlanPolicy policy = PlanPolicy::greedy();
    int cell_size = 4;
    int segment_iterations = 5;
    int tile = 512;
    int overlap = 64;
    BackboneSpec backbone;
    bool sdam = true;
    std::optional<std::filesystem::path> depth_file;
    int grid_h = 16;
    int grid_w = 16;
    drift::Lambdas lambdas;
    int workers = 0;  // < 1: CASR_WORKERS, then the logical CPU count
    double timeout_seconds = 120.0;
    std::uint64_t seed = 0;
    bool keep_intermediates = false;

    /// Throws InvalidArgument when an invariant is broken.
    void validate() const;
};

/// Applies the fields present in a JSON document (names as in
/// PipelineConfig, plus "factors", "policy" and "backbone" as strings or
/// lists) on top of cfg.
void apply_config_json(PipelineConfig& cfg, const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

/// A module error raised inside the cascade, tagged with where it happened.
class CascadeError : public Error {
public:
    CascadeError(const std::string& cause, int iteration, std::optional<std::size_t> patch);

    int iteration() const noexcept { return iteration_; }
    std::optional<std::size_t> patch() const noexcept { return patch_; }

private:
    int iteration_;
    std::optional<std::size_t> patch_;
};

struct CascadeResult {
    ImageBuffer output;
    ScalePlan plan;
    drift::DriftReport report;
    std::vector<double> applied_factors;  // sub-scale actually given to the backbone per step
    std::vector<ImageBuffer> intermediates;  // input first; only with keep_intermediates
};

/// Factor for a step from (pw, ph) to exactly (tw, th): the nominal factor
/// when it already lands there, otherwise the nearest value in (1, s_max]
/// that does. Returns nullopt when no such factor exists.
std::optional<double> exact_step_factor(int pw, int ph, int tw, int th, double nominal, double s_max);

/// One cascade iteration: SDAM (when enabled), tiling, backbone per patch
/// and blending into an image of exactly (target_w, target_h). ingested is
/// the normalised depth map of the cascade input, resized when needed.
ImageBuffer cascade_step(const ImageBuffer& img, int target_w, int target_h, double factor, int iteration,
                         const PipelineConfig& cfg, Backbone& backbone, int workers,
                         const sdam::StructuralMap* ingested = nullptr);

CascadeResult run_cascade(const ImageBuffer& img, double requested_scale, const PipelineConfig& cfg);

/// Plan the cascade would follow for this config.
ScalePlan plan_for(double requested_scale, const PipelineConfig& cfg);

}  // namespace casr
