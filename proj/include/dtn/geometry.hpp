#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "dtn/model_config.hpp"

namespace dtn {

// ---------------------------------------------------------------------------
// Forwarding region F = { r : |r| <= b(angle(r)) }, a closed convex region
// containing the origin.
// ---------------------------------------------------------------------------

struct ForwardingRegion {
    std::function<double(double)> boundary;
    double bounding_half_width_B = 0;  // max_phi b(phi); F lies in [-B, B]^2
    double area = 0;                   // closed form for the ellipse family
    bool is_ellipse = false;
    double a = 0;
    double eccentricity = 0;

    static ForwardingRegion from_rule(const RoutingRule& rule);
};

// True iff |r| <= b(angle(r)); boundary-inclusive, origin always inside.
bool fr_membership(const ForwardingRegion& fr, const Eigen::Vector2d& r);

// Ellipse family: pi a^2 sqrt(1-eps^2); otherwise 0.5 * integral of b(phi)^2.
double fr_area(const ForwardingRegion& fr);

// G(r) = F intersect (shifted F)^c: true iff r_prime is in F and
// r_prime + r is outside F.  Precondition: r in F.
bool g_region_membership(const ForwardingRegion& fr, const Eigen::Vector2d& r_prime,
                         const Eigen::Vector2d& r);

// ---------------------------------------------------------------------------
// Threshold curve: the boundary of the eligibility region K(theta, theta'),
// sampled with outward (toward lower potential) unit normals.
// ---------------------------------------------------------------------------

struct CurveSample {
    double s = 0;             // parameter in [0, 1]
    Eigen::Vector2d point;    // b(s)
    Eigen::Vector2d normal;   // unit, toward lower potential
    double speed = 0;         // |b'(s)|
};

enum class CurveParam { UniformAngle, ArcLength };

struct ThresholdCurve {
    double theta = 0;        // carrier direction
    double theta_prime = 0;  // candidate direction
    std::vector<CurveSample> samples;
    bool boundary_coincident = false;  // K == F, curve is the FR boundary
    bool convex = true;
    double delta_s = 0;  // parameter measure per sample (midpoint rule)
    CurveParam param = CurveParam::UniformAngle;

    // Boundary info kept so curve_speed_and_normal can answer at any s.
    std::function<double(double)> boundary;
    bool is_ellipse = false;
    double a = 0;
    double eccentricity = 0;

    bool empty() const { return samples.empty(); }
    // Sum of speed * delta_s, i.e. the polyline length estimate.
    double length() const;
};

// For location-independent rules K is empty or all of F: returns the empty
// curve when U(theta') <= U(theta) and the FR boundary otherwise, with
// s -> phi = -pi + 2*pi*s (or arc-length spacing).  For location-dependent
// rules, extracts the zero level set of U(theta', .) - U(theta, 0) inside F by
// marching squares on a resolution x resolution lattice, plus FR-boundary arcs
// where the potential exceeds U(theta, 0), with normals oriented toward lower
// potential.  A nonconvex extracted region records convex = false (a warning,
// not an error); a sampled |b'(s)| above rule.m_b throws ValidationError.
ThresholdCurve threshold_curve(double theta, double theta_prime, const RoutingRule& rule,
                               int resolution, CurveParam param = CurveParam::UniformAngle);

// |b'(s)| and the outward unit normal at parameter s in [0, 1] (domain error
// outside).  Analytic for the ellipse family, central finite differences
// (delta s = 1e-6) for other boundary-coincident curves; contoured curves
// interpolate their stored samples.
std::pair<double, Eigen::Vector2d> curve_speed_and_normal(const ThresholdCurve& curve, double s);

}  // namespace dtn
