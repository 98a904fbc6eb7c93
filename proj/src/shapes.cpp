#include "penfsi/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace penfsi {

Mat3 identity3() { return {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}}; }

Mat3 rotation_2d(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {{{c, -s, 0.0}, {s, c, 0.0}, {0.0, 0.0, 1.0}}};
}

Mat3 rotation_axis_angle(const Vec3& w) {
    const double th = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    if (th == 0.0) return identity3();
    const Vec3 k{w[0] / th, w[1] / th, w[2] / th};
    const double c = std::cos(th), s = std::sin(th), v = 1.0 - c;
    return {{{c + k[0] * k[0] * v, k[0] * k[1] * v - k[2] * s, k[0] * k[2] * v + k[1] * s},
             {k[1] * k[0] * v + k[2] * s, c + k[1] * k[1] * v, k[1] * k[2] * v - k[0] * s},
             {k[2] * k[0] * v - k[1] * s, k[2] * k[1] * v + k[0] * s, c + k[2] * k[2] * v}}};
}

double sdf_ellipse_local(const Vec3& yin, const Vec3& e, int dim) {
    // Closest point on the ellipse/ellipsoid: x_i = e_i^2 y_i / (t + e_i^2),
    // with t the root of sum (e_i y_i / (t + e_i^2))^2 = 1, by bisection.
    Vec3 y{std::abs(yin[0]), std::abs(yin[1]), dim == 3 ? std::abs(yin[2]) : 0.0};
    double emin = e[0], emax = e[0];
    for (int i = 1; i < dim; ++i) {
        emin = std::min(emin, e[i]);
        emax = std::max(emax, e[i]);
    }
    // Zero coordinates make the root degenerate; nudge them off the axis.
    for (int i = 0; i < dim; ++i) y[i] = std::max(y[i], 1e-13 * emin);
    double level = 0.0;
    for (int i = 0; i < dim; ++i) level += (y[i] / e[i]) * (y[i] / e[i]);
    if (level == 1.0) return 0.0;

    // Bisect in u = t + emin^2 > 0 so the near-degenerate root keeps full
    // relative precision.
    const double e2min = emin * emin;
    auto F = [&](double u) {
        double s = 0.0;
        for (int i = 0; i < dim; ++i) {
            const double r = e[i] * y[i] / (u + (e[i] * e[i] - e2min));
            s += r * r;
        }
        return s - 1.0;
    };
    double ynorm = 0.0;
    for (int i = 0; i < dim; ++i) ynorm += y[i] * y[i];
    ynorm = std::sqrt(ynorm);
    double lo = 0.0;
    double hi = emax * ynorm + emax * emax;
    for (int it = 0; it < 2200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (F(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    const double u = 0.5 * (lo + hi);
    double dist2 = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double den = u + (e[i] * e[i] - e2min);
        const double x = e[i] * e[i] * y[i] / den;
        dist2 += (x - y[i]) * (x - y[i]);
    }
    const double dist = std::sqrt(dist2);
    return level < 1.0 ? -dist : dist;
}

double sdf_polygon_local(double px, double py, const std::vector<std::array<double, 2>>& v) {
    double best = std::numeric_limits<double>::infinity();
    bool inside = false;
    const std::size_t n = v.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double ax = v[j][0], ay = v[j][1], bx = v[i][0], by = v[i][1];
        const double ex = bx - ax, ey = by - ay;
        const double wx = px - ax, wy = py - ay;
        const double t = std::clamp((wx * ex + wy * ey) / (ex * ex + ey * ey), 0.0, 1.0);
        const double dx = wx - t * ex, dy = wy - t * ey;
        best = std::min(best, dx * dx + dy * dy);
        if (((ay > py) != (by > py)) && (px < ax + (py - ay) * ex / ey)) inside = !inside;
    }
    const double d = std::sqrt(best);
    return inside ? -d : d;
}

double Shape::sdf(const Vec3& x, const TorusGrid& grid, bool periodic) const {
    Vec3 r{0.0, 0.0, 0.0};
    for (int a = 0; a < dim; ++a) r[a] = periodic ? grid.periodic_delta(x[a], center[a]) : x[a] - center[a];
    // body frame: y = O^T r
    Vec3 y{0.0, 0.0, 0.0};
    for (int i = 0; i < dim; ++i)
        for (int a = 0; a < dim; ++a) y[i] += orientation[a][i] * r[a];
    switch (kind) {
        case ShapeKind::disk: {
            double s = 0.0;
            for (int i = 0; i < dim; ++i) s += y[i] * y[i];
            return std::sqrt(s) - radius;
        }
        case ShapeKind::ellipse:
            return sdf_ellipse_local(y, semi_axes, dim);
        case ShapeKind::box: {
            double outside = 0.0, inside = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < dim; ++i) {
                const double q = std::abs(y[i]) - half_extents[i];
                outside += std::max(q, 0.0) * std::max(q, 0.0);
                inside = std::max(inside, q);
            }
            return std::sqrt(outside) + std::min(inside, 0.0);
        }
        case ShapeKind::polygon:
            return sdf_polygon_local(y[0], y[1], vertices);
    }
    return 0.0;
}

double Shape::volume() const {
    switch (kind) {
        case ShapeKind::disk:
            return dim == 2 ? M_PI * radius * radius : 4.0 / 3.0 * M_PI * radius * radius * radius;
        case ShapeKind::ellipse:
            return dim == 2 ? M_PI * semi_axes[0] * semi_axes[1]
                            : 4.0 / 3.0 * M_PI * semi_axes[0] * semi_axes[1] * semi_axes[2];
        case ShapeKind::box: {
            double v = 1.0;
            for (int i = 0; i < dim; ++i) v *= 2.0 * half_extents[i];
            return v;
        }
        case ShapeKind::polygon: {
            double a = 0.0;
            const std::size_t n = vertices.size();
            for (std::size_t i = 0, j = n - 1; i < n; j = i++)
                a += vertices[j][0] * vertices[i][1] - vertices[i][0] * vertices[j][1];
            return 0.5 * std::abs(a);
        }
    }
    return 0.0;
}

double Shape::feature_size() const {
    switch (kind) {
        case ShapeKind::disk:
            return radius;
        case ShapeKind::ellipse:
            return *std::min_element(semi_axes.begin(), semi_axes.begin() + dim);
        case ShapeKind::box:
            return *std::min_element(half_extents.begin(), half_extents.begin() + dim);
        case ShapeKind::polygon: {
            double cx = 0.0, cy = 0.0;
            for (const auto& v : vertices) {
                cx += v[0];
                cy += v[1];
            }
            cx /= static_cast<double>(vertices.size());
            cy /= static_cast<double>(vertices.size());
            return std::max(0.0, -sdf_polygon_local(cx, cy, vertices));
        }
    }
    return 0.0;
}

double Shape::bounding_radius() const {
    switch (kind) {
        case ShapeKind::disk:
            return radius;
        case ShapeKind::ellipse:
            return *std::max_element(semi_axes.begin(), semi_axes.begin() + dim);
        case ShapeKind::box: {
            double s = 0.0;
            for (int i = 0; i < dim; ++i) s += half_extents[i] * half_extents[i];
            return std::sqrt(s);
        }
        case ShapeKind::polygon: {
            double r = 0.0;
            for (const auto& v : vertices) r = std::max(r, std::hypot(v[0], v[1]));
            return r;
        }
    }
    return 0.0;
}

std::string Shape::kind_name() const {
    switch (kind) {
        case ShapeKind::disk: return "disk";
        case ShapeKind::ellipse: return "ellipse";
        case ShapeKind::box: return "box";
        case ShapeKind::polygon: return "polygon";
    }
    return "?";
}

void Shape::validate() const {
    switch (kind) {
        case ShapeKind::disk:
            if (!(radius > 0.0)) throw std::invalid_argument("disk radius must be positive");
            break;
        case ShapeKind::ellipse:
            for (int i = 0; i < dim; ++i)
                if (!(semi_axes[i] > 0.0)) throw std::invalid_argument("ellipse semi-axes must be positive");
            break;
        case ShapeKind::box:
            for (int i = 0; i < dim; ++i)
                if (!(half_extents[i] > 0.0)) throw std::invalid_argument("box half-extents must be positive");
            break;
        case ShapeKind::polygon:
            if (dim != 2) throw std::invalid_argument("polygon shapes are 2D only");
            if (vertices.size() < 3) throw std::invalid_argument("polygon needs at least 3 vertices");
            if (volume() <= 0.0) throw std::invalid_argument("polygon has empty interior");
            break;
    }
}

}  // namespace penfsi
