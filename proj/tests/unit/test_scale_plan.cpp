#include <cmath>

#include "doctest.h"

#include "casr/error.hpp"
#include "casr/scale_plan.hpp"

using namespace casr;

TEST_CASE("explicit x18 plan 4,3,1.5 passes through") {
    const ScalePlan p = plan_scales(18, 4, PlanPolicy::explicit_factors({4, 3, 1.5}));
    CHECK(p.factors == std::vector<double>{4, 3, 1.5});
    const PlanReport r = validate_plan(p);
    CHECK(r.valid);
    CHECK(r.product_error == 0.0);
    CHECK(r.warnings.empty());
    CHECK(preset_plan("x18").factors == p.factors);
}

TEST_CASE("greedy examples") {
    CHECK(plan_scales(4, 4, PlanPolicy::greedy()).factors == std::vector<double>{4});
    CHECK(plan_scales(1, 4, PlanPolicy::greedy()).factors.empty());
    CHECK(plan_scales(30, 4, PlanPolicy::greedy()).factors == std::vector<double>{4, 4, 1.875});
    CHECK(plan_scales(18, 4, PlanPolicy::greedy()).factors == std::vector<double>{4, 4, 1.125});
    CHECK(format_factors(plan_scales(18, 4, PlanPolicy::greedy()).factors) == "4,4,1.125");
}

TEST_CASE("balanced x18 gives three equal cube-root factors") {
    const ScalePlan p = plan_scales(18, 4, PlanPolicy::balanced());
    REQUIRE(p.factors.size() == 3);
    CHECK(p.factors[0] == p.factors[1]);
    CHECK(p.factors[1] == p.factors[2]);
    CHECK(p.factors[0] == doctest::Approx(2.6207413942088964).epsilon(1e-12));
    CHECK(std::abs(p.product() - 18.0) / 18.0 < 1e-9);
}

TEST_CASE("a tiny greedy tail is balanced with the step before it") {
    // 16.16 = 4 * 4 * 1.01; the trailing 1.01 is below the 1.1 threshold.
    const ScalePlan p = plan_scales(16.16, 4, PlanPolicy::greedy());
    REQUIRE(p.factors.size() == 3);
    CHECK(p.factors[0] == 4.0);
    CHECK(p.factors[1] == doctest::Approx(std::sqrt(4.04)));
    CHECK(p.factors[2] == p.factors[1]);
    CHECK(validate_plan(p).valid);
    // Threshold 1 keeps the tail as is.
    CHECK(plan_scales(16.16, 4, PlanPolicy::greedy(1.0)).factors.back() == doctest::Approx(1.01));
}

TEST_CASE("validate_plan reports violations and ordering") {
    ScalePlan p;
    p.factors = {5, 3.6};
    p.requested = 18;
    p.s_max = 4;
    PlanReport r = validate_plan(p);
    CHECK_FALSE(r.valid);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].factor_index == 1);
    CHECK(r.violations[0].value == 5.0);

    p.factors = {4, 4, 1.125};
    CHECK(validate_plan(p).valid);

    p.factors = {1.5, 3, 4};
    r = validate_plan(p);
    CHECK(r.valid);
    CHECK(r.warnings.size() == 1);
}

TEST_CASE("explicit plans are validated before acceptance") {
    try {
        plan_scales(18, 4, PlanPolicy::explicit_factors({5, 3.6}));
        FAIL("expected a plan validation error");
    } catch (const PlanValidationError& e) {
        CHECK(e.factor_index() == 1);
        CHECK(std::string(e.what()).find("plan factor 1") != std::string::npos);
    }
    try {
        plan_scales(18, 4, PlanPolicy::explicit_factors({4, 3, 1.4}));
        FAIL("expected a plan validation error");
    } catch (const PlanValidationError& e) {
        CHECK(e.factor_index() == 0);
    }
    CHECK_THROWS_AS(plan_scales(4, 4, PlanPolicy::explicit_factors({4, 1})), PlanValidationError);
}

TEST_CASE("invalid requests") {
    CHECK_THROWS_AS(plan_scales(0.5, 4, PlanPolicy::greedy()), InvalidArgument);
    CHECK_THROWS_AS(plan_scales(2, 1, PlanPolicy::greedy()), InvalidArgument);
    CHECK_THROWS_AS(plan_scales(std::nan(""), 4, PlanPolicy::balanced()), InvalidArgument);
    CHECK_THROWS_AS(parse_policy("random"), InvalidArgument);
}

TEST_CASE("factor strings round trip") {
    CHECK(parse_factors("4,3,1.5") == std::vector<double>{4, 3, 1.5});
    CHECK(parse_factors(" 4 , 3 ") == std::vector<double>{4, 3});
    CHECK(parse_factors("").empty());
    CHECK_THROWS_AS(parse_factors("4,,3"), InvalidArgument);
    CHECK_THROWS_AS(parse_factors("4,x"), InvalidArgument);
    const std::vector<double> f{2.6207413942088964, 1.875, 4};
    CHECK(parse_factors(format_factors(f)) == f);
}

TEST_CASE("step dimensions absorb rounding in the last step") {
    const ScalePlan p = preset_plan("x18");
    const auto d = step_dimensions(p, 64, 64);
    REQUIRE(d.size() == 3);
    CHECK(d[0] == std::pair{256, 256});
    CHECK(d[1] == std::pair{768, 768});
    CHECK(d[2] == std::pair{1152, 1152});

    const ScalePlan b = plan_scales(18, 4, PlanPolicy::balanced());
    const auto e = step_dimensions(b, 37, 23);
    CHECK(e.back() == std::pair{666, 414});
}

TEST_CASE("property: plan sweep over [1, 64] for all policies") {
    const double s_max = 4.0;
    int checked = 0;
    for (int i = 100; i <= 6400; ++i) {
        const double s = i / 100.0;
        for (auto kind : {PlanPolicyKind::greedy_max, PlanPolicyKind::balanced, PlanPolicyKind::explicit_list}) {
            PlanPolicy pol;
            if (kind == PlanPolicyKind::balanced) pol = PlanPolicy::balanced();
            if (kind == PlanPolicyKind::explicit_list) {
                pol = PlanPolicy::explicit_factors(plan_scales(s, s_max, PlanPolicy::greedy()).factors);
            }
            const ScalePlan p = plan_scales(s, s_max, pol);
            const PlanReport r = validate_plan(p);
            REQUIRE_MESSAGE(r.valid, "s = " << s << " policy " << static_cast<int>(kind));
            CHECK(r.product_error <= 1e-9);
            for (double f : p.factors) {
                CHECK(f > 1.0);
                CHECK(f <= s_max * (1 + 1e-9));
            }
            const double logk = std::log(s) / std::log(s_max);
            const double nearest = std::round(logk);
            const bool near_power = std::abs(std::pow(s_max, nearest) - s) <= 1e-9 * s;
            const auto expected_k = static_cast<std::size_t>(near_power ? nearest : std::ceil(logk));
            if (kind != PlanPolicyKind::explicit_list) CHECK(p.steps() == expected_k);
            CHECK(plan_scales(s, s_max, pol).factors == p.factors);
            ++checked;
        }
    }
    CHECK(checked == 6301 * 3);
}
