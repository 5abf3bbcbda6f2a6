// Python bindings for the core registration operations.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sreg/bounds.hpp"
#include "sreg/io.hpp"
#include "sreg/metrics.hpp"
#include "sreg/registrator.hpp"
#include "sreg/synth.hpp"

namespace py = pybind11;
using namespace sreg;

namespace {

GridShape shape_from(const std::vector<int64_t>& dims) { return GridShape(dims); }

ImageVolume image_from_array(const py::array_t<double, py::array::c_style>& arr) {
    std::vector<int64_t> dims(arr.shape(), arr.shape() + arr.ndim());
    ImageVolume img(shape_from(dims));
    std::copy(arr.data(), arr.data() + arr.size(), img.values.begin());
    return img;
}

py::array_t<double> image_to_array(const ImageVolume& img) {
    py::array_t<double> arr(img.shape.dims());
    std::copy(img.values.begin(), img.values.end(), arr.mutable_data());
    return arr;
}

// Fields cross the boundary as [n, d0, d1(, d2)] arrays to match the
// component-planar layout.
DisplacementField field_from_array(const py::array_t<double, py::array::c_style>& arr) {
    if (arr.ndim() < 3)
        throw ValueError("field array must be [n, d0, d1(, d2)]");
    std::vector<int64_t> dims(arr.shape() + 1, arr.shape() + arr.ndim());
    if (arr.shape(0) != arr.ndim() - 1)
        throw ValueError("field component count must match spatial rank");
    DisplacementField f(shape_from(dims));
    std::copy(arr.data(), arr.data() + arr.size(), f.components.begin());
    return f;
}

py::array_t<double> field_to_array(const DisplacementField& f) {
    std::vector<int64_t> dims;
    dims.push_back(f.ndim());
    for (int64_t d : f.shape.dims())
        dims.push_back(d);
    py::array_t<double> arr(dims);
    std::copy(f.components.begin(), f.components.end(), arr.mutable_data());
    return arr;
}

LabelVolume labels_from_array(const py::array_t<uint16_t, py::array::c_style>& arr) {
    std::vector<int64_t> dims(arr.shape(), arr.shape() + arr.ndim());
    LabelVolume l(shape_from(dims));
    std::copy(arr.data(), arr.data() + arr.size(), l.labels.begin());
    return l;
}

py::array_t<uint16_t> labels_to_array(const LabelVolume& l) {
    py::array_t<uint16_t> arr(l.shape.dims());
    std::copy(l.labels.begin(), l.labels.end(), arr.mutable_data());
    return arr;
}

SanityConfig config_from_kwargs(double alpha, double beta, double lambda_r, double lambda_s,
                                double lambda_c, int ncc_window) {
    SanityConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.lambda_r = lambda_r;
    cfg.lambda_s = lambda_s;
    cfg.lambda_c = lambda_c;
    cfg.ncc_window = ncc_window;
    cfg.validate();
    return cfg;
}

} // namespace

PYBIND11_MODULE(_sreg, m) {
    m.doc() = "sanity-checked deformable registration core";

    py::register_exception<Error>(m, "SregError");

    m.def("warp_image",
          [](const py::array_t<double, py::array::c_style>& img,
             const py::array_t<double, py::array::c_style>& field) {
              return image_to_array(warp_image(image_from_array(img), field_from_array(field)));
          },
          py::arg("image"), py::arg("field"));

    m.def("warp_labels",
          [](const py::array_t<uint16_t, py::array::c_style>& labels,
             const py::array_t<double, py::array::c_style>& field) {
              return labels_to_array(
                  warp_labels(labels_from_array(labels), field_from_array(field)));
          },
          py::arg("labels"), py::arg("field"));

    m.def("back_project",
          [](const py::array_t<double, py::array::c_style>& g_ab,
             const py::array_t<double, py::array::c_style>& g_ba) {
              return field_to_array(back_project(field_from_array(g_ab), field_from_array(g_ba)));
          },
          py::arg("g_ab"), py::arg("g_ba"));

    m.def("jacobian_determinants",
          [](const py::array_t<double, py::array::c_style>& field) {
              return image_to_array(jacobian_determinants(field_from_array(field)));
          },
          py::arg("field"));

    m.def("ncc",
          [](const py::array_t<double, py::array::c_style>& a,
             const py::array_t<double, py::array::c_style>& b, int window) {
              return ncc(image_from_array(a), image_from_array(b), window);
          },
          py::arg("a"), py::arg("b"), py::arg("window") = 9);

    m.def("ssd",
          [](const py::array_t<double, py::array::c_style>& a,
             const py::array_t<double, py::array::c_style>& b) {
              return ssd(image_from_array(a), image_from_array(b));
          },
          py::arg("a"), py::arg("b"));

    m.def("grad_reg",
          [](const py::array_t<double, py::array::c_style>& field) {
              return grad_reg(field_from_array(field));
          },
          py::arg("field"));

    m.def("self_sanity_loss",
          [](const py::array_t<double, py::array::c_style>& g_mm,
             const py::array_t<double, py::array::c_style>& g_ff) {
              return self_sanity_loss(field_from_array(g_mm), field_from_array(g_ff));
          },
          py::arg("g_mm"), py::arg("g_ff"));

    m.def("cross_sanity_mask",
          [](const py::array_t<double, py::array::c_style>& g_ab,
             const py::array_t<double, py::array::c_style>& g_tilde_ba, double alpha,
             double beta) {
              SanityConfig cfg;
              cfg.alpha = alpha;
              cfg.beta = beta;
              const ViolationMask mask =
                  cross_sanity_mask(field_from_array(g_ab), field_from_array(g_tilde_ba), cfg);
              py::array_t<uint8_t> arr(mask.shape.dims());
              std::copy(mask.bits.begin(), mask.bits.end(), arr.mutable_data());
              return arr;
          },
          py::arg("g_ab"), py::arg("g_tilde_ba"), py::arg("alpha") = 0.1,
          py::arg("beta") = 10.0);

    m.def("folding_metrics",
          [](const py::array_t<double, py::array::c_style>& field) {
              const FoldingMetrics f = folding_metrics(field_from_array(field));
              return py::make_tuple(f.fv, f.aj, f.sdlogj);
          },
          py::arg("field"));

    m.def("dice",
          [](const py::array_t<uint16_t, py::array::c_style>& warped,
             const py::array_t<uint16_t, py::array::c_style>& target) {
              return dice(labels_from_array(warped), labels_from_array(target));
          },
          py::arg("warped"), py::arg("target"));

    m.def("cice",
          [](const py::array_t<double, py::array::c_style>& g_mf,
             const py::array_t<double, py::array::c_style>& g_fm) {
              return cice(field_from_array(g_mf), field_from_array(g_fm));
          },
          py::arg("g_mf"), py::arg("g_fm"));

    m.def("sanity_metrics",
          [](const py::array_t<double, py::array::c_style>& g_mf,
             const py::array_t<double, py::array::c_style>& g_fm,
             const py::array_t<double, py::array::c_style>& g_mm,
             const py::array_t<double, py::array::c_style>& g_ff, double alpha, double beta) {
              SanityConfig cfg;
              cfg.alpha = alpha;
              cfg.beta = beta;
              const SanityMetrics s =
                  sanity_metrics(field_from_array(g_mf), field_from_array(g_fm),
                                 field_from_array(g_mm), field_from_array(g_ff), cfg);
              return py::make_tuple(s.sse, s.cse);
          },
          py::arg("g_mf"), py::arg("g_fm"), py::arg("g_mm"), py::arg("g_ff"),
          py::arg("alpha") = 0.1, py::arg("beta") = 10.0);

    m.def("lambda_c_guidance",
          [](double alpha, double beta, double budget) {
              const LambdaCGuidance g = lambda_c_guidance(alpha, beta, budget);
              py::dict d;
              d["per_voxel_factor"] = g.per_voxel_factor;
              d["budget"] = g.budget;
              d["recommended_lambda_c"] = g.recommended_lambda_c;
              return d;
          },
          py::arg("alpha"), py::arg("beta"), py::arg("budget") = 0.01);

    m.def("estimate_alpha_beta",
          [](const std::vector<py::array_t<double, py::array::c_style>>& samples,
             const std::string& kind) {
              std::vector<DisplacementField> fields;
              for (const auto& arr : samples)
                  fields.push_back(field_from_array(arr));
              const AlphaBeta ab = estimate_alpha_beta(
                  fields, kind == "normalized" ? DisplacementKind::kNormalized
                                               : DisplacementKind::kAbsolute);
              return py::make_tuple(ab.alpha, ab.beta);
          },
          py::arg("samples"), py::arg("kind") = "absolute");

    m.def("register_pair_direct",
          [](const py::array_t<double, py::array::c_style>& moving,
             const py::array_t<double, py::array::c_style>& fixed, double alpha, double beta,
             double lambda_r, double lambda_s, double lambda_c, int ncc_window, int steps,
             double learning_rate, const std::string& similarity) {
              const SanityConfig cfg =
                  config_from_kwargs(alpha, beta, lambda_r, lambda_s, lambda_c, ncc_window);
              DirectOptions opt;
              opt.steps = steps;
              opt.learning_rate = learning_rate;
              opt.similarity =
                  similarity == "ssd" ? Similarity::kSsd : Similarity::kNcc;
              const PairResult r = register_pair_direct(image_from_array(moving),
                                                        image_from_array(fixed), cfg, opt);
              py::dict d;
              d["g_mf"] = field_to_array(r.g_mf);
              d["g_fm"] = field_to_array(r.g_fm);
              std::vector<double> totals;
              for (const LossBreakdown& l : r.loss_history)
                  totals.push_back(l.total);
              d["loss_history"] = totals;
              d["mask_history"] = r.mask_history;
              return d;
          },
          py::arg("moving"), py::arg("fixed"), py::arg("alpha") = 0.1, py::arg("beta") = 10.0,
          py::arg("lambda_r") = 1.0, py::arg("lambda_s") = 0.1, py::arg("lambda_c") = 0.001,
          py::arg("ncc_window") = 9, py::arg("steps") = 100, py::arg("learning_rate") = 0.1,
          py::arg("similarity") = "ncc");

    m.def("make_pair",
          [](const std::vector<int64_t>& shape, double magnitude, double smoothness,
             uint64_t seed) {
              const SyntheticPair p = make_pair(shape_from(shape), magnitude, smoothness, seed);
              py::dict d;
              d["moving"] = image_to_array(p.moving);
              d["fixed"] = image_to_array(p.fixed);
              d["moving_labels"] = labels_to_array(p.moving_labels);
              d["fixed_labels"] = labels_to_array(p.fixed_labels);
              d["true_field"] = field_to_array(p.true_field);
              return d;
          },
          py::arg("shape"), py::arg("magnitude") = 2.0, py::arg("smoothness") = 8.0,
          py::arg("seed") = 0);

    m.def("verify_relaxation_bound",
          [](const py::array_t<double, py::array::c_style>& g,
             const py::array_t<double, py::array::c_style>& g_tilde, double alpha, double beta) {
              SanityConfig cfg;
              cfg.alpha = alpha;
              cfg.beta = beta;
              const BoundReport r =
                  verify_relaxation_bound(field_from_array(g), field_from_array(g_tilde), cfg);
              py::dict d;
              d["lhs"] = r.lhs;
              d["rhs"] = r.rhs;
              d["slack"] = r.slack;
              d["satisfied"] = r.satisfied;
              return d;
          },
          py::arg("g"), py::arg("g_tilde"), py::arg("alpha") = 0.1, py::arg("beta") = 10.0);
}
