#include "casr/drift.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "casr/error.hpp"
#include "casr/parallel.hpp"

namespace casr::drift {

namespace {

constexpr int band_rows = 64;
constexpr int tri_size = bank_size * (bank_size + 1) / 2;

struct BandStats {
    double sum[bank_size] = {};
    double outer[tri_size] = {};
};

// Bank responses for rows [y0, y1) of a luminance plane, bank_size values per pixel.
void band_features(const std::vector<float>& lum, int w, int h, int y0, int y1, std::vector<double>& out) {
    const auto& bank = gabor_bank();
    const int rows = y1 - y0;
    out.assign(static_cast<std::size_t>(rows) * w * bank_size, 0.0);
    std::vector<double> hr;
    std::vector<double> hi;
    for (std::size_t f = 0; f < bank.size(); ++f) {
        const BankFilter& k = bank[f];
        const int r = k.radius;
        const int taps = 2 * r + 1;
        const int hrows = rows + 2 * r;
        hr.assign(static_cast<std::size_t>(hrows) * w, 0.0);
        hi.assign(static_cast<std::size_t>(hrows) * w, 0.0);
        for (int j = 0; j < hrows; ++j) {
            const int sy = std::clamp(y0 - r + j, 0, h - 1);
            const float* src = lum.data() + static_cast<std::size_t>(sy) * w;
            double* dr = hr.data() + static_cast<std::size_t>(j) * w;
            double* di = hi.data() + static_cast<std::size_t>(j) * w;
            for (int x = 0; x < w; ++x) {
                double re = 0.0;
                double im = 0.0;
                for (int t = 0; t < taps; ++t) {
                    const double v = src[std::clamp(x + t - r, 0, w - 1)];
                    re += k.x_re[static_cast<std::size_t>(t)] * v;
                    im += k.x_im[static_cast<std::size_t>(t)] * v;
                }
                dr[x] = re;
                di[x] = im;
            }
        }
        for (int j = 0; j < rows; ++j) {
            for (int x = 0; x < w; ++x) {
                double re = 0.0;
                double im = 0.0;
                for (int t = 0; t < taps; ++t) {
                    const std::size_t o = static_cast<std::size_t>(j + t) * w + x;
                    const double yr = k.y_re[static_cast<std::size_t>(t)];
                    const double yi = k.y_im[static_cast<std::size_t>(t)];
                    re += yr * hr[o] - yi * hi[o];
                    im += yr * hi[o] + yi * hr[o];
                }
                double* dst = out.data() + (static_cast<std::size_t>(j) * w + x) * bank_size;
                dst[2 * f] = re;
                dst[2 * f + 1] = im;
            }
        }
    }
}

}  // namespace

const std::vector<BankFilter>& gabor_bank() {
    static const std::vector<BankFilter> bank = {
#include "gabor_bank.inc"
    };
    return bank;
}

FeatureGaussian make_gaussian(std::vector<double> mean, linalg::Matrix cov) {
    if (mean.size() != static_cast<std::size_t>(cov.n)) throw InvalidArgument("mean and covariance sizes differ");
    FeatureGaussian g;
    g.dim = cov.n;
    g.mean = std::move(mean);
    g.cov = std::move(cov);
    return g;
}

FeatureGaussian fit_feature_gaussian(const ImageBuffer& img) {
    require_min_size(img, 16, "feature fitting");
    const int w = img.width();
    const int h = img.height();
    const std::vector<float> lum = luminance(img);

    // Accumulate around the first pixel's features; a constant image then
    // yields an exactly zero scatter matrix.
    std::vector<double> first;
    band_features(lum, w, h, 0, 1, first);
    const std::vector<double> shift(first.begin(), first.begin() + bank_size);

    const int bands = (h + band_rows - 1) / band_rows;
    std::vector<BandStats> stats(static_cast<std::size_t>(bands));
    parallel::parallel_for(static_cast<std::size_t>(bands), [&](std::size_t b) {
        const int y0 = static_cast<int>(b) * band_rows;
        const int y1 = std::min(h, y0 + band_rows);
        std::vector<double> feats;
        band_features(lum, w, h, y0, y1, feats);
        BandStats& s = stats[b];
        double d[bank_size];
        const std::size_t n = static_cast<std::size_t>(y1 - y0) * w;
        for (std::size_t p = 0; p < n; ++p) {
            const double* f = feats.data() + p * bank_size;
            for (int i = 0; i < bank_size; ++i) {
                d[i] = f[i] - shift[static_cast<std::size_t>(i)];
                s.sum[i] += d[i];
            }
            int t = 0;
            for (int i = 0; i < bank_size; ++i)
                for (int j = i; j < bank_size; ++j) s.outer[t++] += d[i] * d[j];
        }
    });

    BandStats total;
    for (const BandStats& s : stats) {
        for (int i = 0; i < bank_size; ++i) total.sum[i] += s.sum[i];
        for (int t = 0; t < tri_size; ++t) total.outer[t] += s.outer[t];
    }

    FeatureGaussian g;
    g.dim = bank_size;
    g.sample_count = img.pixel_count();
    g.shrinkage_only = g.sample_count < static_cast<std::size_t>(bank_size + 1);
    const double n = static_cast<double>(g.sample_count);
    double centered[bank_size];
    g.mean.resize(bank_size);
    for (int i = 0; i < bank_size; ++i) {
        centered[i] = total.sum[i] / n;
        g.mean[static_cast<std::size_t>(i)] = shift[static_cast<std::size_t>(i)] + centered[i];
    }
    g.cov = linalg::Matrix(bank_size);
    int t = 0;
    for (int i = 0; i < bank_size; ++i) {
        for (int j = i; j < bank_size; ++j, ++t) {
            const double c = g.shrinkage_only ? 0.0 : (total.outer[t] - n * centered[i] * centered[j]) / (n - 1.0);
            g.cov(i, j) = c;
            g.cov(j, i) = c;
        }
    }
    for (int i = 0; i < bank_size; ++i) g.cov(i, i) += covariance_shrinkage;
    return g;
}

double frechet_distance(const FeatureGaussian& a, const FeatureGaussian& b) {
    if (a.dim != b.dim || a.cov.n != b.cov.n || a.mean.size() != b.mean.size()) {
        throw InvalidArgument("Frechet distance between Gaussians of dimension " + std::to_string(a.dim) + " and " +
                              std::to_string(b.dim));
    }
    double mean_term = 0.0;
    for (std::size_t i = 0; i < a.mean.size(); ++i) {
        const double d = a.mean[i] - b.mean[i];
        mean_term += d * d;
    }
    const linalg::Matrix root_a = linalg::sqrt_psd(a.cov);
    linalg::Matrix inner = linalg::multiply(linalg::multiply(root_a, b.cov), root_a);
    for (int i = 0; i < inner.n; ++i)
        for (int j = 0; j < i; ++j) {
            const double avg = 0.5 * (inner(i, j) + inner(j, i));
            inner(i, j) = avg;
            inner(j, i) = avg;
        }
    const linalg::EigenDecomposition e = linalg::jacobi_eigen(inner);
    double tr_root = 0.0;
    for (double v : e.values) tr_root += std::sqrt(std::max(0.0, v));
    const double d2 = mean_term + linalg::trace(a.cov) + linalg::trace(b.cov) - 2.0 * tr_root;
    if (d2 < 0.0) {
        if (d2 < -1e-6) throw NumericFailure("Frechet distance residue " + std::to_string(d2) + " is negative");
        return 0.0;
    }
    return d2;
}

bool measurable(const ImageBuffer& img, int grid_h, int grid_w) noexcept {
    return img.width() >= 16 && img.height() >= 16 && grid_h >= 2 && grid_w >= 2 && img.width() >= grid_w &&
           img.height() >= grid_h;
}

DriftTracker::DriftTracker(const ImageBuffer& reference, int grid_h, int grid_w)
    : grid_h_(grid_h),
      grid_w_(grid_w),
      ref_gauss_(fit_feature_gaussian(reference)),
      ref_corr_(similarity::self_correlation(similarity::embed_features(reference, grid_h, grid_w))) {
    report_.entries.push_back({0, 1.0, reference.width(), reference.height(), 0.0, 0.0, 0.0});
}

const DriftEntry& DriftTracker::add(const ImageBuffer& img, double factor, double elapsed_ms) {
    DriftEntry e;
    e.iteration = static_cast<int>(report_.entries.size());
    e.factor = factor;
    e.width = img.width();
    e.height = img.height();
    e.frechet = frechet_distance(fit_feature_gaussian(img), ref_gauss_);
    e.l_corr = similarity::correlation_loss(
        similarity::self_correlation(similarity::embed_features(img, grid_h_, grid_w_)), ref_corr_);
    e.elapsed_ms = elapsed_ms;
    report_.entries.push_back(e);
    return report_.entries.back();
}

DriftReport drift_report(const std::vector<ImageBuffer>& intermediates, const ScalePlan& plan, int grid_h, int grid_w) {
    if (intermediates.size() != plan.steps() + 1) {
        throw InvalidArgument("drift report needs " + std::to_string(plan.steps() + 1) + " images for a " +
                              std::to_string(plan.steps()) + "-step plan, got " + std::to_string(intermediates.size()));
    }
    DriftTracker tracker(intermediates.front(), grid_h, grid_w);
    for (std::size_t k = 1; k < intermediates.size(); ++k) tracker.add(intermediates[k], plan.factors[k - 1]);
    return tracker.report();
}

std::string report_to_json(const DriftReport& report, bool include_timings) {
    nlohmann::ordered_json doc;
    doc["metric"] = report.metric;
    doc["reference"] = report.reference;
    doc["measured"] = report.measured;
    doc["entries"] = nlohmann::ordered_json::array();
    for (const DriftEntry& e : report.entries) {
        nlohmann::ordered_json j;
        j["iteration"] = e.iteration;
        j["scale"] = e.factor;
        j["width"] = e.width;
        j["height"] = e.height;
        if (report.measured) {
            j["frechet_distance"] = e.frechet;
            j["l_corr"] = e.l_corr;
        } else {
            j["frechet_distance"] = nullptr;
            j["l_corr"] = nullptr;
        }
        if (include_timings) j["elapsed_ms"] = e.elapsed_ms;
        doc["entries"].push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
}

std::string report_to_csv(const DriftReport& report, bool include_timings) {
    std::ostringstream os;
    os << "iteration,scale,width,height,frechet_distance,l_corr" << (include_timings ? ",elapsed_ms" : "") << '\n';
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const DriftEntry& e : report.entries) {
        os << e.iteration << ',' << num(e.factor) << ',' << e.width << ',' << e.height << ',';
        if (report.measured) os << num(e.frechet) << ',' << num(e.l_corr);
        else os << ',';
        if (include_timings) os << ',' << num(e.elapsed_ms);
        os << '\n';
    }
    return os.str();
}

LossBreakdown compute_losses(const ImageBuffer& out, const ImageBuffer& gt, const sdam::StructuralMap& out_s,
                             const sdam::StructuralMap& gt_s, const Lambdas& lambdas, int grid_h, int grid_w) {
    if (out.width() != gt.width() || out.height() != gt.height() || out.channels() != gt.channels()) {
        throw InvalidArgument("output and reference images differ in shape");
    }
    if (out_s.depth.width() != out.width() || out_s.depth.height() != out.height() ||
        gt_s.depth.width() != gt.width() || gt_s.depth.height() != gt.height()) {
        throw InvalidArgument("structural maps must match the image size");
    }
    LossBreakdown r;
    r.lambdas = lambdas;
    const auto a = out.data();
    const auto b = gt.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(static_cast<double>(a[i]) - b[i]);
    r.l1 = a.empty() ? 0.0 : sum / static_cast<double>(a.size());
    r.l_depth = sdam::depth_loss(out_s, gt_s);
    r.l_corr = similarity::correlation_loss(similarity::self_correlation(similarity::embed_features(out, grid_h, grid_w)),
                                            similarity::self_correlation(similarity::embed_features(gt, grid_h, grid_w)));
    r.total_stage1 = lambdas.l1() * r.l1 + lambdas.depth() * r.l_depth;
    r.total_stage2 = r.total_stage1 + lambdas.corr() * r.l_corr;
    return r;
}

std::string losses_to_json(const LossBreakdown& losses) {
    nlohmann::ordered_json doc;
    doc["l1"] = losses.l1;
    doc["l_depth"] = losses.l_depth;
    doc["l_corr"] = losses.l_corr;
    doc["l_lpips"] = nullptr;
    doc["l_gan"] = nullptr;
    doc["absent_terms"] = {"lpips", "gan"};
    doc["lambdas"] = losses.lambdas.values;
    doc["total_stage1"] = losses.total_stage1;
    doc["total_stage2"] = losses.total_stage2;
    return doc.dump(2) + "\n";
}

}  // namespace casr::drift
