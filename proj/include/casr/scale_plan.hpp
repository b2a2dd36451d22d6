#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace casr {

/// Ordered sub-scale factors whose product is the requested magnification.
struct ScalePlan {
    std::vector<double> factors;
    double s_max = 4.0;
    double requested = 1.0;

    std::size_t steps() const noexcept { return factors.size(); }
    double product() const noexcept;
};

enum class PlanPolicyKind { greedy_max, balanced, explicit_list };

struct PlanPolicy {
    PlanPolicyKind kind = PlanPolicyKind::greedy_max;
    std::vector<double> factors;  // explicit_list only
    /// greedy_max: a trailing factor below this is balanced with the step
    /// before it (both become the geometric mean of the pair).
    double min_final_factor = 1.1;

    static PlanPolicy greedy(double min_final = 1.1) { return {PlanPolicyKind::greedy_max, {}, min_final}; }
    static PlanPolicy balanced() { return {PlanPolicyKind::balanced, {}, 1.1}; }
    static PlanPolicy explicit_factors(std::vector<double> f) { return {PlanPolicyKind::explicit_list, std::move(f), 1.1}; }
};

PlanPolicyKind parse_policy(std::string_view name);

struct PlanViolation {
    std::size_t factor_index;  // 1-based
    double value;
    std::string reason;
};

struct PlanReport {
    bool valid = true;
    double product_error = 0.0;  // relative
    std::vector<PlanViolation> violations;
    std::vector<std::string> warnings;
};

inline constexpr double plan_product_tolerance = 1e-9;

/// Throws InvalidArgument for requested < 1 or s_max <= 1, and
/// PlanValidationError when an explicit list fails validation.
ScalePlan plan_scales(double requested, double s_max, const PlanPolicy& policy);

PlanReport validate_plan(const ScalePlan& plan);

/// Named presets; "x18" is 4,3,1.5 (s_max 4).
ScalePlan preset_plan(std::string_view name);

/// "4,3,1.5" <-> {4, 3, 1.5}. Formatting uses the shortest round-trip form.
std::string format_factors(const std::vector<double>& factors);
std::vector<double> parse_factors(std::string_view text);

/// Per-step output sizes for an input of (w, h): round(prev * s_k), except
/// that the last step targets round(input * requested).
std::vector<std::pair<int, int>> step_dimensions(const ScalePlan& plan, int w, int h);

}  // namespace casr
