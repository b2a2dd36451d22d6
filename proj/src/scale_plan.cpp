#include "casr/scale_plan.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "casr/error.hpp"

namespace casr {

namespace {

constexpr double bound_slack = 1e-9;

std::string fmt(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

double ScalePlan::product() const noexcept {
    return std::accumulate(factors.begin(), factors.end(), 1.0, std::multiplies<>());
}

PlanPolicyKind parse_policy(std::string_view name) {
    if (name == "greedy" || name == "greedy-max") return PlanPolicyKind::greedy_max;
    if (name == "balanced") return PlanPolicyKind::balanced;
    if (name == "explicit") return PlanPolicyKind::explicit_list;
    throw InvalidArgument("unknown plan policy '" + std::string(name) + "' (greedy, balanced, explicit)");
}

ScalePlan plan_scales(double requested, double s_max, const PlanPolicy& policy) {
    if (!std::isfinite(requested) || requested < 1.0) {
        throw InvalidArgument("requested scale must be >= 1, got " + fmt(requested));
    }
    if (!std::isfinite(s_max) || s_max <= 1.0) {
        throw InvalidArgument("s_max must be > 1, got " + fmt(s_max));
    }

    ScalePlan plan;
    plan.s_max = s_max;
    plan.requested = requested;

    switch (policy.kind) {
        case PlanPolicyKind::greedy_max: {
            double remaining = requested;
            while (remaining / s_max >= 1.0 - 1e-12) {
                plan.factors.push_back(s_max);
                remaining /= s_max;
            }
            if (remaining > 1.0 + 1e-9) {
                plan.factors.push_back(remaining);
            } else if (!plan.factors.empty()) {
                // Residual within 1e-9 of 1: fold it in so the product stays exact.
                plan.factors.back() *= remaining;
            }
            const std::size_t k = plan.factors.size();
            if (k >= 2 && plan.factors[k - 1] < policy.min_final_factor) {
                const double g = std::sqrt(plan.factors[k - 2] * plan.factors[k - 1]);
                plan.factors[k - 2] = g;
                plan.factors[k - 1] = g;
            }
            break;
        }
        case PlanPolicyKind::balanced: {
            if (requested > 1.0 + 1e-12) {
                const double exact = std::log(requested) / std::log(s_max);
                const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(exact - 1e-9)));
                const double f = std::min(std::pow(requested, 1.0 / static_cast<double>(k)), s_max);
                plan.factors.assign(k, f);
            }
            break;
        }
        case PlanPolicyKind::explicit_list: {
            plan.factors = policy.factors;
            const PlanReport report = validate_plan(plan);
            if (!report.violations.empty()) {
                const auto& v = report.violations.front();
                throw PlanValidationError("plan factor " + std::to_string(v.factor_index) + " (" + fmt(v.value) +
                                              ") " + v.reason,
                                          v.factor_index);
            }
            if (!report.valid) {
                throw PlanValidationError("plan product " + fmt(plan.product()) + " does not match requested scale " +
                                              fmt(requested) + " (relative error " + fmt(report.product_error) + ")",
                                          0);
            }
            break;
        }
    }
    return plan;
}

PlanReport validate_plan(const ScalePlan& plan) {
    PlanReport report;
    const double product = plan.product();
    report.product_error = plan.requested > 0.0 ? std::abs(product - plan.requested) / plan.requested
                                                : std::abs(product - plan.requested);
    for (std::size_t i = 0; i < plan.factors.size(); ++i) {
        const double f = plan.factors[i];
        if (!std::isfinite(f)) {
            report.violations.push_back({i + 1, f, "is not finite"});
        } else if (f <= 1.0) {
            report.violations.push_back({i + 1, f, "must be greater than 1"});
        } else if (f > plan.s_max * (1.0 + bound_slack)) {
            report.violations.push_back({i + 1, f, "exceeds s_max " + fmt(plan.s_max)});
        }
    }
    for (std::size_t i = 1; i < plan.factors.size(); ++i) {
        if (plan.factors[i] > plan.factors[i - 1]) {
            report.warnings.push_back("factors are not in non-increasing order (factor " + std::to_string(i + 1) +
                                      " > factor " + std::to_string(i) + ")");
            break;
        }
    }
    report.valid = report.violations.empty() && report.product_error <= plan_product_tolerance;
    return report;
}

ScalePlan preset_plan(std::string_view name) {
    if (name == "x18") return plan_scales(18.0, 4.0, PlanPolicy::explicit_factors({4.0, 3.0, 1.5}));
    throw InvalidArgument("unknown plan preset '" + std::string(name) + "'");
}

std::string format_factors(const std::vector<double>& factors) {
    std::string out;
    for (std::size_t i = 0; i < factors.size(); ++i) {
        if (i) out += ',';
        out += fmt(factors[i]);
    }
    return out;
}

std::vector<double> parse_factors(std::string_view text) {
    std::vector<double> out;
    std::size_t pos = 0;
    auto trim = [](std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
        return s;
    };
    if (trim(text).empty()) return out;
    while (pos <= text.size()) {
        const std::size_t comma = text.find(',', pos);
        const std::string_view item = trim(text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos));
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
            throw InvalidArgument("cannot parse scale factor '" + std::string(item) + "' in \"" + std::string(text) + "\"");
        }
        out.push_back(v);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::vector<std::pair<int, int>> step_dimensions(const ScalePlan& plan, int w, int h) {
    std::vector<std::pair<int, int>> dims;
    double cw = w;
    double ch = h;
    for (std::size_t k = 0; k < plan.factors.size(); ++k) {
        if (k + 1 == plan.factors.size()) {
            dims.emplace_back(static_cast<int>(std::lround(w * plan.requested)),
                              static_cast<int>(std::lround(h * plan.requested)));
        } else {
            cw = static_cast<double>(std::lround(cw * plan.factors[k]));
            ch = static_cast<double>(std::lround(ch * plan.factors[k]));
            dims.emplace_back(static_cast<int>(cw), static_cast<int>(ch));
        }
    }
    return dims;
}

}  // namespace casr
