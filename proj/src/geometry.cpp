#include "dtn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dtn/errors.hpp"

namespace dtn {

namespace {

constexpr double kMembershipSlack = 1 + 1e-14;

// b and db/dphi for a boundary function; analytic for the ellipse family.
struct BoundaryDiff {
    std::function<double(double)> b;
    bool is_ellipse;
    double p, ecc;  // semi-latus rectum, eccentricity

    double value(double phi) const {
        return is_ellipse ? p / (1 - ecc * std::cos(phi)) : b(wrap_angle(phi));
    }
    double deriv(double phi) const {
        if (is_ellipse) {
            double denom = 1 - ecc * std::cos(phi);
            return -p * ecc * std::sin(phi) / (denom * denom);
        }
        const double h = 1e-6;
        return (b(wrap_angle(phi + h)) - b(wrap_angle(phi - h))) / (2 * h);
    }
};

BoundaryDiff boundary_diff(const ForwardingRegion& fr) {
    return {fr.boundary, fr.is_ellipse, fr.a * (1 - fr.eccentricity * fr.eccentricity),
            fr.eccentricity};
}

BoundaryDiff boundary_diff(const ThresholdCurve& curve) {
    return {curve.boundary, curve.is_ellipse, curve.a * (1 - curve.eccentricity * curve.eccentricity),
            curve.eccentricity};
}

// Point, outward unit normal and |b'(s)| of the FR boundary at angle phi,
// under the uniform angle parametrization phi = -pi + 2*pi*s.
CurveSample boundary_sample(const BoundaryDiff& bd, double s, double phi) {
    double b = bd.value(phi), db = bd.deriv(phi);
    Eigen::Vector2d e(std::cos(phi), std::sin(phi));
    Eigen::Vector2d e_perp(-std::sin(phi), std::cos(phi));
    Eigen::Vector2d tangent = db * e + b * e_perp;  // d(point)/dphi, counterclockwise
    Eigen::Vector2d normal(tangent.y(), -tangent.x());
    normal.normalize();
    return {s, b * e, normal, 2 * kPi * std::hypot(b, db)};
}

}  // namespace

// ---------------------------------------------------------------------------
// ForwardingRegion
// ---------------------------------------------------------------------------

ForwardingRegion ForwardingRegion::from_rule(const RoutingRule& rule) {
    if (!rule.boundary) throw ValidationError("rule.boundary is not set");
    ForwardingRegion fr;
    fr.boundary = rule.boundary;
    fr.is_ellipse = rule.is_ellipse;
    fr.a = rule.a;
    fr.eccentricity = rule.eccentricity;
    if (rule.is_ellipse) {
        fr.bounding_half_width_B = rule.a * (1 + rule.eccentricity);
        fr.area = kPi * rule.a * rule.a * std::sqrt(1 - rule.eccentricity * rule.eccentricity);
    } else {
        const int n = 1 << 16;
        double best = 0, area2 = 0;
        for (int i = 0; i < n; ++i) {
            double phi = -kPi + 2 * kPi * (i + 0.5) / n;
            double b = rule.boundary(phi);
            if (!(b >= 0) || !std::isfinite(b))
                throw ValidationError("boundary must be finite and >= 0");
            best = std::max(best, b);
            area2 += b * b;
        }
        fr.bounding_half_width_B = best;
        fr.area = 0.5 * area2 * (2 * kPi / n);
    }
    return fr;
}

bool fr_membership(const ForwardingRegion& fr, const Eigen::Vector2d& r) {
    double n = r.norm();
    if (n == 0) return true;
    double phi = std::atan2(r.y(), r.x());
    return n <= fr.boundary(wrap_angle(phi)) * kMembershipSlack;
}

double fr_area(const ForwardingRegion& fr) { return fr.area; }

bool g_region_membership(const ForwardingRegion& fr, const Eigen::Vector2d& r_prime,
                         const Eigen::Vector2d& r) {
    return fr_membership(fr, r_prime) && !fr_membership(fr, Eigen::Vector2d(r_prime + r));
}

// ---------------------------------------------------------------------------
// ThresholdCurve
// ---------------------------------------------------------------------------

double ThresholdCurve::length() const {
    double len = 0;
    for (const auto& c : samples) len += c.speed;
    return len * delta_s;
}

namespace {

// Location-dependent path: extract the zero level set of
// U(theta', x) - U(theta, 0) inside F by marching squares, plus FR boundary
// arcs where the field is positive.
ThresholdCurve contoured_curve(double theta, double theta_prime, const RoutingRule& rule,
                               int resolution, ThresholdCurve curve) {
    ForwardingRegion fr = ForwardingRegion::from_rule(rule);
    const double threshold = rule.potential(theta, Eigen::Vector2d::Zero());
    const double big = fr.bounding_half_width_B;
    const int n = resolution;
    const double h = 2 * big / n;

    auto field = [&](const Eigen::Vector2d& x) {
        return rule.potential(theta_prime, x) - threshold;
    };
    // Field on lattice corners; points outside F are held below threshold so
    // the contour closes along the FR boundary side.
    Eigen::MatrixXd f(n + 1, n + 1);
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> inside(n + 1, n + 1);
    for (int iy = 0; iy <= n; ++iy)
        for (int ix = 0; ix <= n; ++ix) {
            Eigen::Vector2d x(-big + ix * h, -big + iy * h);
            inside(iy, ix) = fr_membership(fr, x);
            f(iy, ix) = inside(iy, ix) ? field(x) : -1.0;
        }

    struct Segment {
        Eigen::Vector2d mid, normal;
        double len;
    };
    std::vector<Segment> segs;
    auto interp = [&](double x0, double y0, double f0, double x1, double y1, double f1) {
        double t = f0 / (f0 - f1);
        return Eigen::Vector2d(x0 + t * (x1 - x0), y0 + t * (y1 - y0));
    };
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            // Corner order: (ix,iy), (ix+1,iy), (ix+1,iy+1), (ix,iy+1).
            double x0 = -big + ix * h, y0 = -big + iy * h;
            double fv[4] = {f(iy, ix), f(iy, ix + 1), f(iy + 1, ix + 1), f(iy + 1, ix)};
            double cx[4] = {x0, x0 + h, x0 + h, x0};
            double cy[4] = {y0, y0, y0 + h, y0 + h};
            bool any_inside = inside(iy, ix) || inside(iy, ix + 1) || inside(iy + 1, ix + 1) ||
                              inside(iy + 1, ix);
            if (!any_inside) continue;
            std::vector<Eigen::Vector2d> pts;
            for (int e = 0; e < 4; ++e) {
                int e2 = (e + 1) % 4;
                if ((fv[e] > 0) != (fv[e2] > 0))
                    pts.push_back(interp(cx[e], cy[e], fv[e], cx[e2], cy[e2], fv[e2]));
            }
            if (pts.size() < 2) continue;
            // Ambiguous (4-crossing) cells are split on the first pairing;
            // adequate at contour-warning fidelity.
            for (size_t q = 0; q + 1 < pts.size(); q += 2) {
                Segment s;
                s.mid = 0.5 * (pts[q] + pts[q + 1]);
                s.len = (pts[q + 1] - pts[q]).norm();
                if (s.len == 0) continue;
                // Normal toward lower potential: downhill gradient of the field.
                double gx = (field(s.mid + Eigen::Vector2d(h / 4, 0)) -
                             field(s.mid - Eigen::Vector2d(h / 4, 0)));
                double gy = (field(s.mid + Eigen::Vector2d(0, h / 4)) -
                             field(s.mid - Eigen::Vector2d(0, h / 4)));
                Eigen::Vector2d g(gx, gy);
                s.normal = g.norm() > 0 ? Eigen::Vector2d(-g.normalized()) : Eigen::Vector2d(1, 0);
                segs.push_back(s);
            }
        }
    // FR boundary arcs where the potential clears the threshold.
    BoundaryDiff bd = boundary_diff(fr);
    for (int i = 0; i < resolution; ++i) {
        double phi = -kPi + 2 * kPi * (i + 0.5) / resolution;
        CurveSample cs = boundary_sample(bd, 0, phi);
        if (field(cs.point) > 0) {
            Segment s;
            s.mid = cs.point;
            s.normal = cs.normal;
            s.len = cs.speed * (1.0 / resolution);
            segs.push_back(s);
        }
    }
    if (segs.empty()) return curve;

    double total = 0;
    for (const auto& s : segs) total += s.len;
    // Arc-length-normalized parametrization over the collected segments.
    curve.param = CurveParam::ArcLength;
    curve.delta_s = 1.0 / static_cast<double>(segs.size());
    double acc = 0;
    for (const auto& s : segs) {
        CurveSample cs;
        cs.s = (acc + s.len / 2) / total;
        cs.point = s.mid;
        cs.normal = s.normal;
        cs.speed = s.len * static_cast<double>(segs.size());  // len / delta_s
        curve.samples.push_back(cs);
        acc += s.len;
    }
    std::sort(curve.samples.begin(), curve.samples.end(),
              [](const CurveSample& l, const CurveSample& r) { return l.s < r.s; });

    // Convexity warning: walk the samples by angle around the centroid and
    // check the turning direction.
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (const auto& s : curve.samples) c += s.point;
    c /= static_cast<double>(curve.samples.size());
    std::vector<Eigen::Vector2d> ordered;
    for (const auto& s : curve.samples) ordered.push_back(s.point);
    std::sort(ordered.begin(), ordered.end(), [&](const Eigen::Vector2d& l, const Eigen::Vector2d& r) {
        return std::atan2(l.y() - c.y(), l.x() - c.x()) < std::atan2(r.y() - c.y(), r.x() - c.x());
    });
    double scale = 0;
    for (size_t i = 0; i < ordered.size(); ++i)
        scale = std::max(scale, (ordered[(i + 1) % ordered.size()] - ordered[i]).squaredNorm());
    for (size_t i = 0; i < ordered.size(); ++i) {
        Eigen::Vector2d e1 = ordered[(i + 1) % ordered.size()] - ordered[i];
        Eigen::Vector2d e2 = ordered[(i + 2) % ordered.size()] - ordered[(i + 1) % ordered.size()];
        if (e1.x() * e2.y() - e1.y() * e2.x() < -1e-6 * scale) {
            curve.convex = false;
            break;
        }
    }
    return curve;
}

}  // namespace

ThresholdCurve threshold_curve(double theta, double theta_prime, const RoutingRule& rule,
                               int resolution, CurveParam param) {
    if (resolution < 8) throw ValidationError("curve resolution must be >= 8");
    ThresholdCurve curve;
    curve.theta = theta;
    curve.theta_prime = theta_prime;
    curve.boundary = rule.boundary;
    curve.is_ellipse = rule.is_ellipse;
    curve.a = rule.a;
    curve.eccentricity = rule.eccentricity;
    curve.param = param;

    if (rule.location_independent) {
        const Eigen::Vector2d origin = Eigen::Vector2d::Zero();
        if (rule.potential(theta_prime, origin) <= rule.potential(theta, origin)) return curve;
        curve.boundary_coincident = true;
        curve.delta_s = 1.0 / resolution;
        ForwardingRegion fr = ForwardingRegion::from_rule(rule);
        BoundaryDiff bd = boundary_diff(fr);
        if (param == CurveParam::UniformAngle) {
            for (int i = 0; i < resolution; ++i) {
                double s = (i + 0.5) / resolution;
                curve.samples.push_back(boundary_sample(bd, s, -kPi + 2 * kPi * s));
            }
        } else {
            // Uniform arc-length spacing: invert the cumulative length of a
            // fine angle sampling, then |b'(s)| is the constant total length.
            const int fine = resolution * 16;
            std::vector<double> cum(fine + 1, 0.0);
            for (int i = 0; i < fine; ++i) {
                double phi = -kPi + 2 * kPi * (i + 0.5) / fine;
                cum[i + 1] = cum[i] + std::hypot(bd.value(phi), bd.deriv(phi)) * (2 * kPi / fine);
            }
            double total = cum[fine];
            for (int i = 0; i < resolution; ++i) {
                double s = (i + 0.5) / resolution;
                double target = s * total;
                auto it = std::upper_bound(cum.begin(), cum.end(), target);
                int j = std::max(1, static_cast<int>(it - cum.begin()));
                double t = (target - cum[j - 1]) / std::max(cum[j] - cum[j - 1], 1e-300);
                double phi = -kPi + 2 * kPi * (j - 1 + t) / fine;
                CurveSample cs = boundary_sample(bd, s, phi);
                cs.speed = total;  // arc-length parametrization
                curve.samples.push_back(cs);
            }
        }
    } else {
        curve = contoured_curve(theta, theta_prime, rule, resolution, std::move(curve));
    }

    for (const auto& s : curve.samples)
        if (s.speed > rule.m_b * (1 + 1e-6) + 1e-12)
            throw ValidationError("threshold curve speed " + std::to_string(s.speed) +
                                  " exceeds the rule bound m_b = " + std::to_string(rule.m_b));
    return curve;
}

std::pair<double, Eigen::Vector2d> curve_speed_and_normal(const ThresholdCurve& curve, double s) {
    if (s < 0 || s > 1) throw std::domain_error("curve parameter outside [0, 1]");
    if (curve.empty()) throw std::domain_error("empty threshold curve");
    if (curve.boundary_coincident && curve.param == CurveParam::UniformAngle) {
        BoundaryDiff bd = boundary_diff(curve);
        CurveSample cs = boundary_sample(bd, s, -kPi + 2 * kPi * s);
        return {cs.speed, cs.normal};
    }
    // Sampled curves answer from the nearest stored sample.
    const CurveSample* best = &curve.samples.front();
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& c : curve.samples) {
        double d = std::abs(c.s - s);
        if (d < gap) {
            gap = d;
            best = &c;
        }
    }
    return {best->speed, best->normal};
}

}  // namespace dtn
