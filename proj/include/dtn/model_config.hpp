#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "dtn/errors.hpp"

namespace dtn {

struct Grid;  // quadrature.hpp

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Wraps an angle into [-pi, pi).
double wrap_angle(double x);

// ---------------------------------------------------------------------------
// Direction density f_D: the distribution that node travel directions are
// resampled from at every turn epoch.
// ---------------------------------------------------------------------------

enum class DensityKind { Uniform, FourWindow, Tabulated };

struct DirectionDensity {
    DensityKind kind = DensityKind::Uniform;
    // FourWindow: windows of width theta_w centered on 0, +-pi/2 and pi
    // (wrapped), density 1/(4*theta_w) inside them and 0 elsewhere.
    double theta_w = kPi / 2;
    // Tabulated: piecewise-constant values on a uniform partition of [-pi, pi).
    Eigen::VectorXd table;
    // Strictly positive lower bound of the density on its support.  Computed
    // analytically for the built-in families, user-overridable for Tabulated.
    double epsilon_d = 1.0 / (2 * kPi);

    static DirectionDensity uniform();
    static DirectionDensity four_window(double theta_w);
    static DirectionDensity tabulated(const Eigen::VectorXd& values, double epsilon_d = -1);

    // Exact integral over [-pi, pi); equals 1 for well-formed densities.
    double integral() const;

    // Exact per-cell integrals of the density over the n-cell uniform
    // partition of [-pi, pi).  Sums to integral() exactly.
    Eigen::VectorXd cell_masses(int n) const;
};

// Pointwise density value at x in [-pi, pi); throws std::domain_error outside.
double direction_density_eval(const DirectionDensity& d, double x);

// Exact cumulative mass of (-pi, x]; 0 at -pi, 1 at pi.
double direction_cdf(const DirectionDensity& d, double x);

// Inverse of direction_cdf on (0, 1): the direction whose cumulative mass is
// u.  Used to sample directions from a uniform variate.
double direction_quantile(const DirectionDensity& d, double u);

// Exact mass of { x : |x| < t } for t in [0, pi] — the direction mass at
// potentials strictly above -t under the built-in potential.
double mass_below_abs(const DirectionDensity& d, double t);

// ---------------------------------------------------------------------------
// Transmission cost C(r), evaluated on displacements inside the forwarding
// region.
// ---------------------------------------------------------------------------

enum class CostKind { Quadratic, Tabulated };

struct CostFunction {
    CostKind kind = CostKind::Quadratic;
    // Tabulated: piecewise-constant values on a uniform table_n x table_n grid
    // over [-half_width, half_width]^2.
    Eigen::MatrixXd table;
    double half_width = 0;

    static CostFunction quadratic();
    static CostFunction tabulated(const Eigen::MatrixXd& values, double half_width);

    double operator()(const Eigen::Vector2d& r) const;
};

// ---------------------------------------------------------------------------
// Routing rule: forwarding-region boundary b(phi) plus the potential U(theta, r)
// that ranks candidate carriers.
// ---------------------------------------------------------------------------

struct RoutingRule {
    // phi in [-pi, pi) -> boundary radius b(phi) >= 0, bounded.
    std::function<double(double)> boundary;
    // (theta, r) -> potential; strictly decreasing in |theta| (Assumption 1).
    std::function<double(double, const Eigen::Vector2d&)> potential;
    // True when the potential depends on theta only.
    bool location_independent = true;
    // True for the built-in U = -|theta|: direction masses then have closed
    // forms through mass_below_abs instead of cell-center indicator sums.
    bool neg_abs_potential = false;
    // Bound on |b'(s)| over the unit-parametrized threshold curve; also bounds
    // every curve's length since the parameter range has measure 1.
    double m_b = 0;
    // The constant value U(-pi, r) (Assumption 4).
    double potential_floor_k = 0;

    // Set for the built-in conic family so geometry can use closed forms.
    bool is_ellipse = false;
    double a = 0;
    double eccentricity = 0;

    // Ellipse with one focus at the origin, b(phi) = a(1-eps^2)/(1-eps*cos phi),
    // paired with the potential U = -|theta|.
    static RoutingRule ellipse(double a, double eccentricity);
};

// ---------------------------------------------------------------------------
// Full parameter set.
// ---------------------------------------------------------------------------

struct ModelParams {
    double lambda = 1;  // node density per unit area
    double v0 = 1;      // node speed
    double r0 = 1;      // direction-change (turn) rate
    DirectionDensity direction_density;
    CostFunction cost;
    RoutingRule rule;

    // Throws ValidationError naming the offending field.
    void validate() const;
};

// lambda=1, v0=1, r0=1, uniform density, quadratic cost, ellipse a=1 eps=0.7
// with U = -|theta|.
ModelParams default_params();

// Parses a JSON configuration document.  Accepted keys: lambda, v0, r0,
// theta_w, a, eccentricity, cost, potential.  Unknown keys are rejected.
ModelParams params_from_json(const std::string& json_text);
ModelParams params_from_json_file(const std::string& path);

// ---------------------------------------------------------------------------
// Rule validation (Assumptions 1-4) by dense sampling.
// ---------------------------------------------------------------------------

struct ValidationReport {
    struct Entry {
        std::string assumption;
        bool pass = false;
        std::string detail;
    };
    std::vector<Entry> entries;
    bool all_pass() const;
};

// Samples 181 angles against all grid cells (Assumptions 1, 4), random
// in-region triples (Assumption 2), and a dense boundary scan (Assumption 3).
ValidationReport validate_rule(const RoutingRule& rule, const Grid& grid);

}  // namespace dtn
