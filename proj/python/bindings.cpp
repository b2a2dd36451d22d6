#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "casr/drift.hpp"
#include "casr/error.hpp"
#include "casr/frame.hpp"
#include "casr/image.hpp"
#include "casr/pipeline.hpp"
#include "casr/scale_plan.hpp"
#include "casr/sdam.hpp"
#include "casr/similarity.hpp"

namespace py = pybind11;
using namespace casr;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

ImageBuffer to_image(const FloatArray& arr) {
    const py::buffer_info info = arr.request();
    if (info.ndim != 2 && info.ndim != 3) throw InvalidArgument("image must be an HxW or HxWxC array");
    const int h = static_cast<int>(info.shape[0]);
    const int w = static_cast<int>(info.shape[1]);
    const int c = info.ndim == 3 ? static_cast<int>(info.shape[2]) : 1;
    const auto* p = static_cast<const float*>(info.ptr);
    return ImageBuffer(w, h, c, std::span<const float>(p, static_cast<std::size_t>(w) * h * c));
}

py::array_t<float> to_array(const ImageBuffer& img) {
    std::vector<py::ssize_t> shape{img.height(), img.width()};
    if (img.channels() > 1) shape.push_back(img.channels());
    py::array_t<float> out(shape);
    std::copy(img.data().begin(), img.data().end(), out.mutable_data());
    return out;
}

PlanPolicy make_policy(const std::string& policy, const std::optional<std::vector<double>>& factors) {
    if (factors) return PlanPolicy::explicit_factors(*factors);
    switch (parse_policy(policy)) {
        case PlanPolicyKind::balanced: return PlanPolicy::balanced();
        case PlanPolicyKind::explicit_list: throw InvalidArgument("explicit policy needs factors");
        default: return PlanPolicy::greedy();
    }
}

sdam::SegmentOptions segment_options(int cell_size, int iterations, bool force) {
    sdam::SegmentOptions o;
    o.cell_size = cell_size;
    o.iterations = iterations;
    o.force = force;
    return o;
}

}  // namespace

PYBIND11_MODULE(_casr, m) {
    auto base = py::register_exception<Error>(m, "CasrError", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
    py::register_exception<PlanValidationError>(m, "PlanValidationError", base.ptr());
    py::register_exception<FrameError>(m, "FrameError", base.ptr());
    py::register_exception<BackboneFailure>(m, "BackboneFailure", base.ptr());
    py::register_exception<NumericFailure>(m, "NumericFailure", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<CascadeError>(m, "CascadeError", base.ptr());

    m.def(
        "plan_scales",
        [](double scale, double s_max, const std::string& policy, std::optional<std::vector<double>> factors) {
            return plan_scales(scale, s_max, make_policy(policy, factors)).factors;
        },
        py::arg("scale"), py::arg("s_max") = 4.0, py::arg("policy") = "greedy", py::arg("factors") = py::none());

    m.def(
        "validate_plan",
        [](std::vector<double> factors, double scale, double s_max) {
            ScalePlan p;
            p.factors = std::move(factors);
            p.requested = scale;
            p.s_max = s_max;
            const PlanReport r = validate_plan(p);
            py::list violations;
            for (const auto& v : r.violations) violations.append(py::make_tuple(v.factor_index, v.value, v.reason));
            py::dict d;
            d["valid"] = r.valid;
            d["product_error"] = r.product_error;
            d["violations"] = violations;
            d["warnings"] = r.warnings;
            return d;
        },
        py::arg("factors"), py::arg("scale"), py::arg("s_max") = 4.0);

    m.def(
        "resample",
        [](const FloatArray& img, int width, int height, const std::string& kernel) {
            return to_array(resample(to_image(img), width, height, parse_kernel(kernel)));
        },
        py::arg("image"), py::arg("width"), py::arg("height"), py::arg("kernel") = "bicubic");

    m.def(
        "segment",
        [](const FloatArray& img, int cell_size, int iterations, bool force) {
            const sdam::Segmentation seg =
                sdam::segment_superpixels(to_image(img), segment_options(cell_size, iterations, force));
            py::array_t<std::int32_t> labels({seg.height, seg.width});
            std::copy(seg.label_map.begin(), seg.label_map.end(), labels.mutable_data());
            return py::make_tuple(labels, seg.regions.size());
        },
        py::arg("image"), py::arg("cell_size") = 4, py::arg("iterations") = 5, py::arg("force") = false);

    m.def(
        "aggregate",
        [](const FloatArray& img, int cell_size, int iterations, bool force) {
            const ImageBuffer in = to_image(img);
            const sdam::Segmentation seg = sdam::segment_superpixels(in, segment_options(cell_size, iterations, force));
            return to_array(sdam::aggregate_regions(in, seg));
        },
        py::arg("image"), py::arg("cell_size") = 4, py::arg("iterations") = 5, py::arg("force") = false);

    m.def(
        "frechet",
        [](const FloatArray& a, const FloatArray& b) {
            return drift::frechet_distance(drift::fit_feature_gaussian(to_image(a)),
                                           drift::fit_feature_gaussian(to_image(b)));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "self_correlation",
        [](const FloatArray& img, int grid) {
            const auto r = similarity::self_correlation(similarity::embed_features(to_image(img), grid, grid));
            py::array_t<double> out({r.n, r.n});
            std::copy(r.entries.begin(), r.entries.end(), out.mutable_data());
            return out;
        },
        py::arg("image"), py::arg("grid") = 16);

    m.def(
        "correlation_loss",
        [](const FloatArray& a, const FloatArray& b, int grid) {
            return similarity::correlation_loss(
                similarity::self_correlation(similarity::embed_features(to_image(a), grid, grid)),
                similarity::self_correlation(similarity::embed_features(to_image(b), grid, grid)));
        },
        py::arg("a"), py::arg("b"), py::arg("grid") = 16);

    m.def(
        "upscale",
        [](const FloatArray& img, double scale, std::optional<std::vector<double>> factors, const std::string& policy,
           bool sdam, const std::string& backbone, int cell_size, int tile, int overlap, int workers,
           std::uint64_t seed, double s_max) {
            PipelineConfig cfg;
            cfg.s_max = s_max;
            cfg.policy = make_policy(policy, factors);
            cfg.sdam = sdam;
            cfg.backbone = BackboneSpec::parse(backbone);
            cfg.cell_size = cell_size;
            cfg.tile = tile;
            cfg.overlap = overlap;
            cfg.workers = workers;
            cfg.seed = seed;
            cfg.validate();
            const ImageBuffer in = to_image(img);
            CascadeResult r;
            {
                py::gil_scoped_release release;
                r = run_cascade(in, scale, cfg);
            }
            return py::make_tuple(to_array(r.output), drift::report_to_json(r.report));
        },
        py::arg("image"), py::arg("scale"), py::arg("factors") = py::none(), py::arg("policy") = "greedy",
        py::arg("sdam") = true, py::arg("backbone") = "bicubic", py::arg("cell_size") = 4, py::arg("tile") = 512,
        py::arg("overlap") = 64, py::arg("workers") = 0, py::arg("seed") = 0, py::arg("s_max") = 4.0);

    m.def(
        "encode_request",
        [](const FloatArray& img, double scale, int iteration, std::optional<FloatArray> structural) {
            const ImageBuffer in = to_image(img);
            frame::Request req;
            req.width = in.width();
            req.height = in.height();
            req.channels = in.channels();
            req.scale = scale;
            req.iteration = iteration;
            req.image.assign(in.data().begin(), in.data().end());
            if (structural) {
                const ImageBuffer s = to_image(*structural);
                req.structural = std::vector<float>(s.data().begin(), s.data().end());
            }
            const auto bytes = frame::encode(req);
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("image"), py::arg("scale"), py::arg("iteration") = 0, py::arg("structural") = py::none());

    m.def("decode_request", [](const py::bytes& data) {
        const std::string_view v = data;
        const frame::Request req =
            frame::decode_request({reinterpret_cast<const std::uint8_t*>(v.data()), v.size()});
        py::dict d;
        d["scale"] = req.scale;
        d["iter"] = req.iteration;
        d["image"] = to_array(ImageBuffer(req.width, req.height, req.channels, req.image));
        if (req.structural) d["structural"] = to_array(ImageBuffer(req.width, req.height, 1, *req.structural));
        return d;
    });

    m.def("encode_response", [](const FloatArray& img) {
        const ImageBuffer in = to_image(img);
        frame::Response resp;
        resp.width = in.width();
        resp.height = in.height();
        resp.channels = in.channels();
        resp.image.assign(in.data().begin(), in.data().end());
        const auto bytes = frame::encode(resp);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    });

    m.def("decode_response", [](const py::bytes& data) -> py::object {
        const std::string_view v = data;
        const frame::Response resp =
            frame::decode_response({reinterpret_cast<const std::uint8_t*>(v.data()), v.size()});
        if (resp.error) throw BackboneFailure(*resp.error);
        return to_array(ImageBuffer(resp.width, resp.height, resp.channels, resp.image));
    });
}
