#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sreg/errors.hpp"

namespace sreg {

// Small fixed-capacity vector for points and displacements; entries past
// ndim stay zero so 2-D code can ignore the third slot.
struct Vec {
    std::array<double, 3> v{0.0, 0.0, 0.0};

    double& operator[](int i) { return v[static_cast<size_t>(i)]; }
    double operator[](int i) const { return v[static_cast<size_t>(i)]; }
};

inline double squared_norm(const Vec& a, int ndim) {
    double s = 0.0;
    for (int c = 0; c < ndim; ++c)
        s += a[c] * a[c];
    return s;
}

inline double dot(const Vec& a, const Vec& b, int ndim) {
    double s = 0.0;
    for (int c = 0; c < ndim; ++c)
        s += a[c] * b[c];
    return s;
}

// Regular grid with 2 or 3 axes. Voxels are addressed row-major with the
// last axis fastest. Every extent must be at least 2 so that linear
// interpolation always has a neighbor.
class GridShape {
  public:
    GridShape() = default;
    explicit GridShape(std::vector<int64_t> dims);

    int ndim() const { return static_cast<int>(dims_.size()); }
    int64_t extent(int axis) const { return dims_[static_cast<size_t>(axis)]; }
    const std::vector<int64_t>& dims() const { return dims_; }
    int64_t voxel_count() const { return count_; }
    int64_t stride(int axis) const { return strides_[static_cast<size_t>(axis)]; }

    int64_t flat_index(std::span<const int64_t> idx) const;
    void multi_index(int64_t flat, std::span<int64_t> out) const;

    bool operator==(const GridShape& other) const { return dims_ == other.dims_; }
    bool operator!=(const GridShape& other) const { return !(*this == other); }

    std::string to_string() const;

  private:
    std::vector<int64_t> dims_;
    std::vector<int64_t> strides_;
    int64_t count_ = 0;
};

// Scalar intensity raster.
struct ImageVolume {
    GridShape shape;
    std::vector<double> values;

    ImageVolume() = default;
    explicit ImageVolume(const GridShape& s, double fill = 0.0)
        : shape(s), values(static_cast<size_t>(s.voxel_count()), fill) {}

    double at(int64_t flat) const { return values[static_cast<size_t>(flat)]; }
    double& at(int64_t flat) { return values[static_cast<size_t>(flat)]; }
};

// Per-voxel displacement vectors in voxel units, stored as component
// planes: component c of voxel v lives at c*N + v.
struct DisplacementField {
    GridShape shape;
    std::vector<double> components;

    DisplacementField() = default;
    explicit DisplacementField(const GridShape& s)
        : shape(s),
          components(static_cast<size_t>(s.voxel_count()) * static_cast<size_t>(s.ndim()), 0.0) {}

    int ndim() const { return shape.ndim(); }

    double comp(int c, int64_t voxel) const {
        return components[static_cast<size_t>(c) * static_cast<size_t>(shape.voxel_count()) +
                          static_cast<size_t>(voxel)];
    }
    double& comp(int c, int64_t voxel) {
        return components[static_cast<size_t>(c) * static_cast<size_t>(shape.voxel_count()) +
                          static_cast<size_t>(voxel)];
    }

    Vec vector_at(int64_t voxel) const {
        Vec r;
        for (int c = 0; c < ndim(); ++c)
            r[c] = comp(c, voxel);
        return r;
    }

    const double* plane(int c) const {
        return components.data() + static_cast<size_t>(c) * static_cast<size_t>(shape.voxel_count());
    }
    double* plane(int c) {
        return components.data() + static_cast<size_t>(c) * static_cast<size_t>(shape.voxel_count());
    }
};

// Non-negative integer labels, 0 = background.
struct LabelVolume {
    GridShape shape;
    std::vector<uint16_t> labels;

    LabelVolume() = default;
    explicit LabelVolume(const GridShape& s)
        : shape(s), labels(static_cast<size_t>(s.voxel_count()), 0) {}

    uint16_t at(int64_t flat) const { return labels[static_cast<size_t>(flat)]; }
    uint16_t& at(int64_t flat) { return labels[static_cast<size_t>(flat)]; }
};

// Landmarks paired across two volumes by index, in voxel units.
struct LandmarkSet {
    std::vector<Vec> moving;
    std::vector<Vec> fixed;

    size_t size() const { return moving.size(); }
};

// Throws if a landmark coordinate falls outside [0, extent-1] on any axis.
void validate_landmarks(const LandmarkSet& lm, const GridShape& shape);

// Multilinear interpolation of a scalar grid at an arbitrary point.
// Out-of-bounds coordinates are clamped to the boundary first, so the
// function is total.
double sample_linear(const ImageVolume& img, std::span<const double> point);
double sample_linear_raw(const double* values, const GridShape& shape, std::span<const double> point);

// Per-component multilinear interpolation of a displacement field.
Vec sample_linear(const DisplacementField& field, std::span<const double> point);

// Nearest-neighbor lookup; coordinates are clamped, ties round half up.
uint16_t sample_nearest(const LabelVolume& labels, std::span<const double> point);

// output(p) = image(p + field(p)) via multilinear interpolation.
ImageVolume warp_image(const ImageVolume& image, const DisplacementField& field);

// Same with nearest-neighbor sampling, so labels stay discrete.
LabelVolume warp_labels(const LabelVolume& labels, const DisplacementField& field);

// Back-projected reverse field of the forward/backward pair:
// result(p) = g_ba(p + g_ab(p)), each component interpolated linearly.
DisplacementField back_project(const DisplacementField& g_ab, const DisplacementField& g_ba);

// Determinant of d(phi)/dp per voxel, with phi = p + u. Central
// differences in the interior, one-sided on the boundary (exact for
// affine fields on every voxel).
ImageVolume jacobian_determinants(const DisplacementField& field);

void require_same_shape(const GridShape& a, const GridShape& b, const char* what);

} // namespace sreg
