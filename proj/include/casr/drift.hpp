#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "casr/image.hpp"
#include "casr/linalg.hpp"
#include "casr/scale_plan.hpp"
#include "casr/sdam.hpp"
#include "casr/similarity.hpp"

namespace casr::drift {

/// Size of the fixed odd/even Gabor bank (4 orientations x 2 scales x 2 phases).
inline constexpr int bank_size = 16;
inline constexpr double covariance_shrinkage = 1e-6;
inline constexpr const char* metric_name = "SIFID-lite";

struct BankFilter {
    int radius;
    std::vector<double> x_re, x_im, y_re, y_im;  // taps -radius..radius
};

/// The 8 complex filters; feature 2k is the even (real) response of filter
/// k, feature 2k + 1 the odd (imaginary) one.
const std::vector<BankFilter>& gabor_bank();

struct FeatureGaussian {
    int dim = bank_size;
    std::vector<double> mean;
    linalg::Matrix cov;
    std::size_t sample_count = 0;
    bool shrinkage_only = false;  // fewer than dim + 1 samples
};

/// Per-pixel bank responses of the luminance (edge clamped), unbiased
/// covariance, plus covariance_shrinkage * I. Needs at least 16x16 pixels.
FeatureGaussian fit_feature_gaussian(const ImageBuffer& img);

/// Squared Frechet distance ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2).
double frechet_distance(const FeatureGaussian& a, const FeatureGaussian& b);

/// Gaussian from explicit moments (tests and external callers).
FeatureGaussian make_gaussian(std::vector<double> mean, linalg::Matrix cov);

struct DriftEntry {
    int iteration = 0;
    double factor = 1.0;  // sub-scale applied to reach this entry; 1 for the input
    int width = 0;
    int height = 0;
    double frechet = 0.0;
    double l_corr = 0.0;
    double elapsed_ms = 0.0;
};

struct DriftReport {
    std::string metric = metric_name;
    std::string reference = "cascade-input";
    /// False when the input was too small to fit the metrics; distances are
    /// then serialised as null.
    bool measured = true;
    std::vector<DriftEntry> entries;
};

/// Whether fit_feature_gaussian and a grid_h x grid_w embedding accept img.
bool measurable(const ImageBuffer& img, int grid_h = 16, int grid_w = 16) noexcept;

/// Accumulates a report one intermediate at a time, so a cascade never has
/// to keep its images around.
class DriftTracker {
public:
    explicit DriftTracker(const ImageBuffer& reference, int grid_h = 16, int grid_w = 16);

    /// Appends the entry for the next intermediate.
    const DriftEntry& add(const ImageBuffer& img, double factor, double elapsed_ms = 0.0);
    const DriftReport& report() const noexcept { return report_; }

private:
    int grid_h_;
    int grid_w_;
    FeatureGaussian ref_gauss_;
    similarity::CorrelationMatrix ref_corr_;
    DriftReport report_;
};

/// intermediates must hold plan.steps() + 1 images, the input first.
DriftReport drift_report(const std::vector<ImageBuffer>& intermediates, const ScalePlan& plan, int grid_h = 16,
                         int grid_w = 16);

std::string report_to_json(const DriftReport& report, bool include_timings = false);
std::string report_to_csv(const DriftReport& report, bool include_timings = false);

struct Lambdas {
    std::array<double, 5> values{1.0, 0.0, 0.0, 1.0, 1.0};
    double l1() const noexcept { return values[0]; }
    double lpips() const noexcept { return values[1]; }
    double gan() const noexcept { return values[2]; }
    double depth() const noexcept { return values[3]; }
    double corr() const noexcept { return values[4]; }
};

struct LossBreakdown {
    double l1 = 0.0;
    double l_depth = 0.0;
    double l_corr = 0.0;
    std::optional<double> l_lpips;  // never computed here
    std::optional<double> l_gan;    // never computed here
    Lambdas lambdas;
    double total_stage1 = 0.0;
    double total_stage2 = 0.0;
};

/// Computable reconstruction bookkeeping. Stage 1 = l1 * L1 + l4 * L_depth,
/// stage 2 adds l5 * L_corr; the LPIPS and GAN slots stay absent.
LossBreakdown compute_losses(const ImageBuffer& out, const ImageBuffer& gt, const sdam::StructuralMap& out_s,
                             const sdam::StructuralMap& gt_s, const Lambdas& lambdas = {}, int grid_h = 16,
                             int grid_w = 16);

std::string losses_to_json(const LossBreakdown& losses);

}  // namespace casr::drift
