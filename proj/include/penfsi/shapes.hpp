#pragma once

#include <array>
#include <string>
#include <vector>

#include "penfsi/grid.hpp"

namespace penfsi {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 identity3();
/// Rotation by `angle` about the x3 axis (the in-plane rotation in 2D).
Mat3 rotation_2d(double angle);
/// Rodrigues rotation about `axis` (need not be unit) by |axis| radians.
Mat3 rotation_axis_angle(const Vec3& axis_angle);

enum class ShapeKind { disk, ellipse, box, polygon };

/// Signed-distance description of a compact set with nonempty interior,
/// placed by a center and orientation. In 3D disk means ball, ellipse means
/// ellipsoid and box means cuboid; polygons are 2D only.
struct Shape {
    ShapeKind kind = ShapeKind::disk;
    int dim = 2;
    Vec3 center{0.0, 0.0, 0.0};
    Mat3 orientation = identity3();
    double radius = 0.0;
    Vec3 semi_axes{0.0, 0.0, 0.0};    // ellipse
    Vec3 half_extents{0.0, 0.0, 0.0}; // box
    std::vector<std::array<double, 2>> vertices;  // polygon, body frame, counter-clockwise or not

    /// Signed distance from x: negative inside, zero on the boundary.
    /// With `periodic` set, the displacement from the center is the minimal
    /// image on `grid`.
    double sdf(const Vec3& x, const TorusGrid& grid, bool periodic) const;
    double volume() const;
    /// Radius of the largest inscribed ball about the center (polygons: inradius estimate).
    double feature_size() const;
    /// Radius of a ball about the center containing the shape.
    double bounding_radius() const;
    std::string kind_name() const;
    void validate() const;
};

double sdf_ellipse_local(const Vec3& y, const Vec3& semi_axes, int dim);
double sdf_polygon_local(double x, double y, const std::vector<std::array<double, 2>>& verts);

}  // namespace penfsi
