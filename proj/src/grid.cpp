#include "sreg/grid.hpp"

#include <cmath>
#include <sstream>

#include "sreg/detail/interp.hpp"

namespace sreg {

GridShape::GridShape(std::vector<int64_t> dims) : dims_(std::move(dims)) {
    if (dims_.size() != 2 && dims_.size() != 3)
        throw ValueError("grid must have 2 or 3 axes, got " + std::to_string(dims_.size()));
    count_ = 1;
    for (int64_t d : dims_) {
        if (d < 2)
            throw ValueError("every grid extent must be >= 2, got " + std::to_string(d));
        count_ *= d;
    }
    strides_.assign(dims_.size(), 1);
    for (int a = static_cast<int>(dims_.size()) - 2; a >= 0; --a)
        strides_[static_cast<size_t>(a)] =
            strides_[static_cast<size_t>(a) + 1] * dims_[static_cast<size_t>(a) + 1];
}

int64_t GridShape::flat_index(std::span<const int64_t> idx) const {
    int64_t flat = 0;
    for (int a = 0; a < ndim(); ++a)
        flat += idx[static_cast<size_t>(a)] * strides_[static_cast<size_t>(a)];
    return flat;
}

void GridShape::multi_index(int64_t flat, std::span<int64_t> out) const {
    for (int a = 0; a < ndim(); ++a) {
        out[static_cast<size_t>(a)] = flat / strides_[static_cast<size_t>(a)];
        flat %= strides_[static_cast<size_t>(a)];
    }
}

std::string GridShape::to_string() const {
    std::ostringstream os;
    for (size_t a = 0; a < dims_.size(); ++a) {
        if (a)
            os << "x";
        os << dims_[a];
    }
    return os.str();
}

void require_same_shape(const GridShape& a, const GridShape& b, const char* what) {
    if (a != b)
        throw ShapeError(std::string(what) + ": shape mismatch " + a.to_string() + " vs " +
                         b.to_string());
}

void validate_landmarks(const LandmarkSet& lm, const GridShape& shape) {
    if (lm.moving.size() != lm.fixed.size())
        throw ValueError("landmark lists differ in length");
    auto check = [&](const Vec& p, size_t i) {
        for (int a = 0; a < shape.ndim(); ++a) {
            if (!(p[a] >= 0.0) || !(p[a] <= static_cast<double>(shape.extent(a) - 1)))
                throw ValueError("landmark " + std::to_string(i) + " outside grid bounds");
        }
    };
    for (size_t i = 0; i < lm.moving.size(); ++i) {
        check(lm.moving[i], i);
        check(lm.fixed[i], i);
    }
}

double sample_linear_raw(const double* values, const GridShape& shape,
                         std::span<const double> point) {
    const int n = shape.ndim();
    if (n == 2) {
        const detail::AxisCell a0 = detail::clamp_cell(point[0], shape.extent(0));
        const detail::AxisCell a1 = detail::clamp_cell(point[1], shape.extent(1));
        return detail::lerp2(values, shape.stride(0), a0, a1);
    }
    const detail::AxisCell a0 = detail::clamp_cell(point[0], shape.extent(0));
    const detail::AxisCell a1 = detail::clamp_cell(point[1], shape.extent(1));
    const detail::AxisCell a2 = detail::clamp_cell(point[2], shape.extent(2));
    return detail::lerp3(values, shape.stride(0), shape.stride(1), a0, a1, a2);
}

double sample_linear(const ImageVolume& img, std::span<const double> point) {
    return sample_linear_raw(img.values.data(), img.shape, point);
}

Vec sample_linear(const DisplacementField& field, std::span<const double> point) {
    Vec out;
    for (int c = 0; c < field.ndim(); ++c)
        out[c] = sample_linear_raw(field.plane(c), field.shape, point);
    return out;
}

uint16_t sample_nearest(const LabelVolume& labels, std::span<const double> point) {
    const GridShape& shape = labels.shape;
    int64_t flat = 0;
    for (int a = 0; a < shape.ndim(); ++a) {
        int64_t i = static_cast<int64_t>(std::floor(point[static_cast<size_t>(a)] + 0.5));
        if (i < 0)
            i = 0;
        else if (i > shape.extent(a) - 1)
            i = shape.extent(a) - 1;
        flat += i * shape.stride(a);
    }
    return labels.at(flat);
}

ImageVolume warp_image(const ImageVolume& image, const DisplacementField& field) {
    require_same_shape(image.shape, field.shape, "warp_image");
    const GridShape& shape = image.shape;
    const int n = shape.ndim();
    ImageVolume out(shape);
    std::array<int64_t, 3> idx{};
    std::array<double, 3> point{};
    for (int64_t v = 0; v < shape.voxel_count(); ++v) {
        shape.multi_index(v, std::span<int64_t>(idx.data(), static_cast<size_t>(n)));
        for (int a = 0; a < n; ++a)
            point[static_cast<size_t>(a)] = static_cast<double>(idx[static_cast<size_t>(a)]) +
                                            field.comp(a, v);
        out.at(v) = sample_linear_raw(image.values.data(), shape,
                                      std::span<const double>(point.data(), static_cast<size_t>(n)));
    }
    return out;
}

LabelVolume warp_labels(const LabelVolume& labels, const DisplacementField& field) {
    require_same_shape(labels.shape, field.shape, "warp_labels");
    const GridShape& shape = labels.shape;
    const int n = shape.ndim();
    LabelVolume out(shape);
    std::array<int64_t, 3> idx{};
    std::array<double, 3> point{};
    for (int64_t v = 0; v < shape.voxel_count(); ++v) {
        shape.multi_index(v, std::span<int64_t>(idx.data(), static_cast<size_t>(n)));
        for (int a = 0; a < n; ++a)
            point[static_cast<size_t>(a)] = static_cast<double>(idx[static_cast<size_t>(a)]) +
                                            field.comp(a, v);
        out.at(v) = sample_nearest(labels,
                                   std::span<const double>(point.data(), static_cast<size_t>(n)));
    }
    return out;
}

DisplacementField back_project(const DisplacementField& g_ab, const DisplacementField& g_ba) {
    require_same_shape(g_ab.shape, g_ba.shape, "back_project");
    const GridShape& shape = g_ab.shape;
    const int n = shape.ndim();
    DisplacementField out(shape);
    std::array<int64_t, 3> idx{};
    std::array<double, 3> point{};
    for (int64_t v = 0; v < shape.voxel_count(); ++v) {
        shape.multi_index(v, std::span<int64_t>(idx.data(), static_cast<size_t>(n)));
        for (int a = 0; a < n; ++a)
            point[static_cast<size_t>(a)] = static_cast<double>(idx[static_cast<size_t>(a)]) +
                                            g_ab.comp(a, v);
        for (int c = 0; c < n; ++c)
            out.comp(c, v) = sample_linear_raw(
                g_ba.plane(c), shape,
                std::span<const double>(point.data(), static_cast<size_t>(n)));
    }
    return out;
}

namespace {

// d(u_c)/d(axis) at a voxel: central in the interior, one-sided at the ends.
inline double spatial_derivative(const DisplacementField& u, int c, std::span<const int64_t> idx,
                                 int64_t flat, int axis) {
    const int64_t extent = u.shape.extent(axis);
    const int64_t stride = u.shape.stride(axis);
    const int64_t i = idx[static_cast<size_t>(axis)];
    if (i == 0)
        return u.comp(c, flat + stride) - u.comp(c, flat);
    if (i == extent - 1)
        return u.comp(c, flat) - u.comp(c, flat - stride);
    return 0.5 * (u.comp(c, flat + stride) - u.comp(c, flat - stride));
}

} // namespace

ImageVolume jacobian_determinants(const DisplacementField& field) {
    const GridShape& shape = field.shape;
    const int n = shape.ndim();
    ImageVolume out(shape);
    std::array<int64_t, 3> idx{};
    for (int64_t v = 0; v < shape.voxel_count(); ++v) {
        shape.multi_index(v, std::span<int64_t>(idx.data(), static_cast<size_t>(n)));
        const std::span<const int64_t> id(idx.data(), static_cast<size_t>(n));
        if (n == 2) {
            const double a = 1.0 + spatial_derivative(field, 0, id, v, 0);
            const double b = spatial_derivative(field, 0, id, v, 1);
            const double c = spatial_derivative(field, 1, id, v, 0);
            const double d = 1.0 + spatial_derivative(field, 1, id, v, 1);
            out.at(v) = a * d - b * c;
        } else {
            double jac[3][3];
            for (int r = 0; r < 3; ++r)
                for (int cc = 0; cc < 3; ++cc)
                    jac[r][cc] = (r == cc ? 1.0 : 0.0) + spatial_derivative(field, r, id, v, cc);
            out.at(v) = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1]) -
                        jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0]) +
                        jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
        }
    }
    return out;
}

} // namespace sreg
