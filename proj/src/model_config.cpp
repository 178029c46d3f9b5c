#include "dtn/model_config.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "dtn/geometry.hpp"
#include "dtn/quadrature.hpp"
#include "json.hpp"

namespace dtn {

double wrap_angle(double x) {
    double y = std::fmod(x + kPi, 2 * kPi);
    if (y < 0) y += 2 * kPi;
    return y - kPi;
}

// ---------------------------------------------------------------------------
// DirectionDensity
// ---------------------------------------------------------------------------

namespace {

// The four-window support intervals on [-pi, pi), in ascending order, as
// (start, end) pairs.  The windows at +-pi each contribute a half window.
std::vector<std::pair<double, double>> window_intervals(double theta_w) {
    const double h = theta_w / 2;
    std::vector<std::pair<double, double>> out;
    for (double c : {-kPi, -kPi / 2, 0.0, kPi / 2, kPi}) {
        double lo = std::max(c - h, -kPi);
        double hi = std::min(c + h, kPi);
        if (hi > lo) out.emplace_back(lo, hi);
    }
    return out;
}

double overlap(double a0, double a1, double b0, double b1) {
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

}  // namespace

DirectionDensity DirectionDensity::uniform() {
    DirectionDensity d;
    d.kind = DensityKind::Uniform;
    d.theta_w = kPi / 2;
    d.epsilon_d = 1.0 / (2 * kPi);
    return d;
}

DirectionDensity DirectionDensity::four_window(double theta_w) {
    if (!(theta_w > 0) || theta_w > kPi / 2)
        throw ValidationError("theta_w must be in (0, pi/2], got " + std::to_string(theta_w));
    DirectionDensity d;
    d.kind = DensityKind::FourWindow;
    d.theta_w = theta_w;
    d.epsilon_d = 1.0 / (4 * theta_w);
    return d;
}

DirectionDensity DirectionDensity::tabulated(const Eigen::VectorXd& values, double epsilon_d) {
    if (values.size() < 1) throw ValidationError("tabulated density needs at least one value");
    if (values.minCoeff() < 0) throw ValidationError("tabulated density values must be >= 0");
    DirectionDensity d;
    d.kind = DensityKind::Tabulated;
    d.table = values;
    if (epsilon_d > 0) {
        d.epsilon_d = epsilon_d;
    } else {
        double min_pos = std::numeric_limits<double>::infinity();
        for (int i = 0; i < values.size(); ++i)
            if (values[i] > 0) min_pos = std::min(min_pos, values[i]);
        d.epsilon_d = std::isfinite(min_pos) ? min_pos : 0.0;
    }
    return d;
}

double DirectionDensity::integral() const {
    switch (kind) {
        case DensityKind::Uniform:
            return 1.0;
        case DensityKind::FourWindow: {
            double len = 0;
            for (auto [lo, hi] : window_intervals(theta_w)) len += hi - lo;
            return len / (4 * theta_w);
        }
        case DensityKind::Tabulated:
            return table.sum() * (2 * kPi / static_cast<double>(table.size()));
    }
    return 0;
}

Eigen::VectorXd DirectionDensity::cell_masses(int n) const {
    if (n < 1) throw ValidationError("cell count must be >= 1");
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(n);
    const double w = 2 * kPi / n;
    switch (kind) {
        case DensityKind::Uniform:
            mass.setConstant(1.0 / n);
            break;
        case DensityKind::FourWindow: {
            auto windows = window_intervals(theta_w);
            for (int i = 0; i < n; ++i) {
                double e0 = -kPi + i * w, e1 = -kPi + (i + 1) * w;
                double len = 0;
                for (auto [lo, hi] : windows) len += overlap(e0, e1, lo, hi);
                mass[i] = len / (4 * theta_w);
            }
            break;
        }
        case DensityKind::Tabulated: {
            const int m = static_cast<int>(table.size());
            const double tw = 2 * kPi / m;
            for (int i = 0; i < n; ++i) {
                double e0 = -kPi + i * w, e1 = -kPi + (i + 1) * w;
                int j0 = std::max(0, static_cast<int>(std::floor((e0 + kPi) / tw)));
                int j1 = std::min(m - 1, static_cast<int>(std::floor((e1 + kPi) / tw)));
                for (int j = j0; j <= j1; ++j)
                    mass[i] += table[j] * overlap(e0, e1, -kPi + j * tw, -kPi + (j + 1) * tw);
            }
            break;
        }
    }
    return mass;
}

double direction_density_eval(const DirectionDensity& d, double x) {
    if (x < -kPi || x >= kPi) throw std::domain_error("direction outside [-pi, pi)");
    switch (d.kind) {
        case DensityKind::Uniform:
            return 1.0 / (2 * kPi);
        case DensityKind::FourWindow: {
            const double h = d.theta_w / 2;
            for (double c : {-kPi, -kPi / 2, 0.0, kPi / 2, kPi})
                if (std::abs(x - c) < h) return 1.0 / (4 * d.theta_w);
            return 0.0;
        }
        case DensityKind::Tabulated: {
            const int m = static_cast<int>(d.table.size());
            int j = static_cast<int>(std::floor((x + kPi) / (2 * kPi / m)));
            return d.table[std::clamp(j, 0, m - 1)];
        }
    }
    return 0;
}

double direction_cdf(const DirectionDensity& d, double x) {
    x = std::clamp(x, -kPi, kPi);
    switch (d.kind) {
        case DensityKind::Uniform:
            return (x + kPi) / (2 * kPi);
        case DensityKind::FourWindow: {
            double m = 0;
            for (auto [lo, hi] : window_intervals(d.theta_w)) m += overlap(lo, hi, -kPi, x);
            return m / (4 * d.theta_w);
        }
        case DensityKind::Tabulated: {
            const int n = static_cast<int>(d.table.size());
            const double w = 2 * kPi / n;
            double m = 0;
            for (int j = 0; j < n; ++j) {
                double lo = -kPi + j * w;
                if (lo >= x) break;
                m += d.table[j] * overlap(lo, lo + w, -kPi, x);
            }
            return m;
        }
    }
    return 0;
}

double direction_quantile(const DirectionDensity& d, double u) {
    u = std::clamp(u, 0.0, 1.0);
    if (d.kind == DensityKind::Uniform) {
        double x = -kPi + u * 2 * kPi;
        return std::min(x, std::nextafter(kPi, 0.0));
    }
    // Walk the support pieces: (start, length, density) with density > 0.
    std::vector<std::array<double, 3>> pieces;
    if (d.kind == DensityKind::FourWindow) {
        for (auto [lo, hi] : window_intervals(d.theta_w))
            pieces.push_back({lo, hi - lo, 1.0 / (4 * d.theta_w)});
    } else {
        const int n = static_cast<int>(d.table.size());
        const double w = 2 * kPi / n;
        for (int j = 0; j < n; ++j)
            if (d.table[j] > 0) pieces.push_back({-kPi + j * w, w, d.table[j]});
    }
    double total = 0;
    for (auto& p : pieces) total += p[1] * p[2];
    double target = u * total;
    for (auto& p : pieces) {
        double m = p[1] * p[2];
        if (target <= m || &p == &pieces.back()) {
            double x = p[0] + std::min(target / p[2], p[1]);
            return std::clamp(x, -kPi, std::nextafter(kPi, 0.0));
        }
        target -= m;
    }
    return -kPi;
}

double mass_below_abs(const DirectionDensity& d, double t) {
    t = std::clamp(t, 0.0, kPi);
    return direction_cdf(d, t) - direction_cdf(d, -t);
}

// ---------------------------------------------------------------------------
// CostFunction
// ---------------------------------------------------------------------------

CostFunction CostFunction::quadratic() {
    CostFunction c;
    c.kind = CostKind::Quadratic;
    return c;
}

CostFunction CostFunction::tabulated(const Eigen::MatrixXd& values, double half_width) {
    if (values.size() == 0) throw ValidationError("tabulated cost needs values");
    if (values.minCoeff() < 0) throw ValidationError("cost values must be >= 0");
    if (!(half_width > 0)) throw ValidationError("cost table half_width must be > 0");
    CostFunction c;
    c.kind = CostKind::Tabulated;
    c.table = values;
    c.half_width = half_width;
    return c;
}

double CostFunction::operator()(const Eigen::Vector2d& r) const {
    if (kind == CostKind::Quadratic) return r.squaredNorm();
    const int rows = static_cast<int>(table.rows()), cols = static_cast<int>(table.cols());
    auto idx = [this](double v, int n) {
        int i = static_cast<int>(std::floor((v + half_width) / (2 * half_width) * n));
        return std::clamp(i, 0, n - 1);
    };
    return table(idx(r.y(), rows), idx(r.x(), cols));
}

// ---------------------------------------------------------------------------
// RoutingRule
// ---------------------------------------------------------------------------

RoutingRule RoutingRule::ellipse(double a, double eccentricity) {
    if (!(a > 0)) throw ValidationError("a must be > 0, got " + std::to_string(a));
    if (eccentricity < 0 || eccentricity >= 1)
        throw ValidationError("eccentricity must be in [0, 1), got " + std::to_string(eccentricity));
    RoutingRule rule;
    const double p = a * (1 - eccentricity * eccentricity);  // semi-latus rectum
    rule.boundary = [p, eccentricity](double phi) { return p / (1 - eccentricity * std::cos(phi)); };
    rule.potential = [](double theta, const Eigen::Vector2d&) { return -std::abs(theta); };
    rule.location_independent = true;
    rule.neg_abs_potential = true;
    rule.potential_floor_k = -kPi;
    rule.is_ellipse = true;
    rule.a = a;
    rule.eccentricity = eccentricity;

    // m_b = max_s |b'(s)| over the unit angle parametrization phi = -pi + 2*pi*s:
    // |b'(s)| = 2*pi*sqrt(b(phi)^2 + (db/dphi)^2).  Dense scan; the maximum sits
    // at phi = 0 for this family but we do not rely on that.
    double best = 0;
    const int n = 20001;
    for (int i = 0; i < n; ++i) {
        double phi = -kPi + 2 * kPi * i / (n - 1.0);
        double b = rule.boundary(phi);
        double denom = 1 - eccentricity * std::cos(phi);
        double db = -p * eccentricity * std::sin(phi) / (denom * denom);
        best = std::max(best, 2 * kPi * std::hypot(b, db));
    }
    rule.m_b = best;
    return rule;
}

// ---------------------------------------------------------------------------
// ModelParams
// ---------------------------------------------------------------------------

void ModelParams::validate() const {
    if (!(lambda >= 0) || !std::isfinite(lambda))
        throw ValidationError("lambda must be >= 0 and finite, got " + std::to_string(lambda));
    if (!(v0 > 0) || !std::isfinite(v0))
        throw ValidationError("v0 must be > 0 and finite, got " + std::to_string(v0));
    if (!(r0 > 0) || !std::isfinite(r0))
        throw ValidationError("r0 must be > 0 and finite, got " + std::to_string(r0));
    if (direction_density.kind == DensityKind::FourWindow &&
        (!(direction_density.theta_w > 0) || direction_density.theta_w > kPi / 2))
        throw ValidationError("theta_w must be in (0, pi/2]");
    if (std::abs(direction_density.integral() - 1.0) > 1e-9)
        throw ValidationError("direction_density must integrate to 1 (got " +
                              std::to_string(direction_density.integral()) + ")");
    if (!(direction_density.epsilon_d > 0))
        throw ValidationError("direction_density epsilon_d must be > 0");
    if (!rule.boundary) throw ValidationError("rule.boundary is not set");
    if (!rule.potential) throw ValidationError("rule.potential is not set");
    if (rule.is_ellipse && (!(rule.a > 0) || rule.eccentricity < 0 || rule.eccentricity >= 1))
        throw ValidationError("ellipse rule needs a > 0 and eccentricity in [0, 1)");
    if (cost.kind == CostKind::Tabulated && cost.table.size() == 0)
        throw ValidationError("cost table is empty");
}

ModelParams default_params() {
    ModelParams p;
    p.lambda = 1;
    p.v0 = 1;
    p.r0 = 1;
    p.direction_density = DirectionDensity::uniform();
    p.cost = CostFunction::quadratic();
    p.rule = RoutingRule::ellipse(1.0, 0.7);
    return p;
}

ModelParams params_from_json(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config parse error: ") + e.what());
    }
    if (!doc.is_object()) throw ValidationError("config must be a JSON object");

    static const std::set<std::string> known = {"lambda", "v0",           "r0",  "theta_w",
                                                "a",      "eccentricity", "cost", "potential"};
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (!known.count(it.key())) throw ValidationError("unknown config key: " + it.key());

    auto number = [&doc](const char* key, double fallback) {
        if (!doc.contains(key)) return fallback;
        if (!doc[key].is_number()) throw ValidationError(std::string(key) + " must be a number");
        return doc[key].get<double>();
    };

    ModelParams p = default_params();
    p.lambda = number("lambda", p.lambda);
    p.v0 = number("v0", p.v0);
    p.r0 = number("r0", p.r0);

    double theta_w = number("theta_w", kPi / 2);
    if (!(theta_w > 0) || theta_w > kPi / 2)
        throw ValidationError("theta_w must be in (0, pi/2], got " + std::to_string(theta_w));
    p.direction_density = theta_w >= kPi / 2 ? DirectionDensity::uniform()
                                             : DirectionDensity::four_window(theta_w);

    double a = number("a", 1.0);
    double ecc = number("eccentricity", 0.7);
    p.rule = RoutingRule::ellipse(a, ecc);

    if (doc.contains("cost")) {
        if (!doc["cost"].is_string() || doc["cost"].get<std::string>() != "quadratic")
            throw ValidationError("cost must be the string \"quadratic\"");
    }
    p.cost = CostFunction::quadratic();

    if (doc.contains("potential")) {
        if (!doc["potential"].is_string() || doc["potential"].get<std::string>() != "neg_abs_theta")
            throw ValidationError("potential must be the string \"neg_abs_theta\"");
    }

    p.validate();
    return p;
}

ModelParams params_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return params_from_json(buf.str());
}

// ---------------------------------------------------------------------------
// Rule validation
// ---------------------------------------------------------------------------

bool ValidationReport::all_pass() const {
    for (const auto& e : entries)
        if (!e.pass) return false;
    return true;
}

ValidationReport validate_rule(const RoutingRule& rule, const Grid& grid) {
    ValidationReport report;
    const int n_angles = 181;
    std::vector<double> angles(n_angles);
    for (int m = 0; m < n_angles; ++m)
        angles[m] = wrap_angle(-kPi + 2 * kPi * m / (n_angles - 1.0));

    std::vector<Eigen::Vector2d> samples;
    samples.emplace_back(0, 0);
    for (int k = 0; k < grid.m; ++k) samples.emplace_back(grid.points.col(k));

    // Assumption 1: strictly lower potential at strictly larger |theta|, at
    // every sampled displacement.  Angles are grouped into |theta| classes and
    // consecutive classes must be strictly separated.
    {
        std::map<double, std::vector<double>> classes;  // |theta| -> angles
        for (double th : angles) {
            bool merged = false;
            for (auto& [key, list] : classes)
                if (std::abs(key - std::abs(th)) < 1e-12) {
                    list.push_back(th);
                    merged = true;
                    break;
                }
            if (!merged) classes[std::abs(th)].push_back(th);
        }
        bool pass = true;
        std::string detail = "strict decrease across 181 angles x " +
                             std::to_string(samples.size()) + " displacements";
        for (const auto& r : samples) {
            double prev_min = std::numeric_limits<double>::infinity();
            for (const auto& [abs_th, list] : classes) {  // ascending |theta|
                double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                for (double th : list) {
                    double u = rule.potential(th, r);
                    lo = std::min(lo, u);
                    hi = std::max(hi, u);
                }
                if (hi >= prev_min) {
                    pass = false;
                    detail = "not strictly decreasing near |theta|=" + std::to_string(abs_th);
                    break;
                }
                prev_min = lo;
            }
            if (!pass) break;
        }
        report.entries.push_back({"A1 potential strictly decreasing in |theta|", pass, detail});
    }

    // Assumption 2: shift invariance of potential comparisons.  For
    // location-independent rules this reduces to U(theta, r) == U(theta, 0).
    {
        bool pass = true;
        std::string detail;
        if (rule.location_independent) {
            detail = "location-independent; U(theta, r) = U(theta, 0) verified";
            for (double th : angles) {
                double base = rule.potential(th, Eigen::Vector2d::Zero());
                for (const auto& r : samples)
                    if (std::abs(rule.potential(th, r) - base) > 1e-12) {
                        pass = false;
                        detail = "U depends on location at theta=" + std::to_string(th);
                        break;
                    }
                if (!pass) break;
            }
        } else {
            detail = "sampled triples preserve comparisons under shifts";
            ForwardingRegion fr = ForwardingRegion::from_rule(rule);
            const int stride = std::max(1, grid.m / 12);
            for (int i1 = 0; i1 < grid.m && pass; i1 += stride)
                for (int i2 = 0; i2 < grid.m && pass; i2 += stride)
                    for (int i3 = 0; i3 < grid.m && pass; i3 += stride) {
                        Eigen::Vector2d r1 = grid.points.col(i1), r2 = grid.points.col(i2);
                        Eigen::Vector2d s1 = r1 - grid.points.col(i3), s2 = r2 - grid.points.col(i3);
                        if (!fr_membership(fr, s1) || !fr_membership(fr, s2)) continue;
                        for (int a1 = 0; a1 < n_angles && pass; a1 += 20)
                            for (int a2 = 0; a2 < n_angles; a2 += 20) {
                                bool before = rule.potential(angles[a1], r1) <
                                              rule.potential(angles[a2], r2);
                                bool after = rule.potential(angles[a1], s1) <
                                             rule.potential(angles[a2], s2);
                                if (before && !after) {
                                    pass = false;
                                    detail = "comparison flipped under a shift";
                                    break;
                                }
                            }
                    }
        }
        report.entries.push_back({"A2 shift-invariant comparisons", pass, detail});
    }

    // Assumption 3: convex FR boundary and |b'(s)| bounded by m_b.
    {
        bool pass = true;
        std::string detail;
        const int n = 4096;
        std::vector<Eigen::Vector2d> poly(n);
        for (int i = 0; i < n; ++i) {
            double phi = -kPi + 2 * kPi * i / n;
            double b = rule.boundary(phi);
            poly[i] = b * Eigen::Vector2d(std::cos(phi), std::sin(phi));
        }
        double min_cross = std::numeric_limits<double>::infinity(), scale = 0;
        for (int i = 0; i < n; ++i) {
            Eigen::Vector2d e1 = poly[(i + 1) % n] - poly[i];
            Eigen::Vector2d e2 = poly[(i + 2) % n] - poly[(i + 1) % n];
            min_cross = std::min(min_cross, e1.x() * e2.y() - e1.y() * e2.x());
            scale = std::max(scale, e1.squaredNorm());
        }
        if (min_cross < -1e-9 * scale) {
            pass = false;
            detail = "boundary polyline is not convex";
        }
        double max_speed = 0;
        const double h = 1e-6;
        for (int i = 0; i < n; ++i) {
            double phi = -kPi + 2 * kPi * i / n;
            double b = rule.boundary(phi);
            double db = (rule.boundary(wrap_angle(phi + h)) - rule.boundary(wrap_angle(phi - h))) /
                        (2 * h);
            max_speed = std::max(max_speed, 2 * kPi * std::hypot(b, db));
        }
        if (pass && max_speed > rule.m_b * (1 + 1e-6) + 1e-12) {
            pass = false;
            detail = "max |b'(s)| = " + std::to_string(max_speed) + " exceeds m_b = " +
                     std::to_string(rule.m_b);
        }
        if (pass)
            detail = "convex boundary; max |b'(s)| = " + std::to_string(max_speed) +
                     " <= m_b = " + std::to_string(rule.m_b);
        report.entries.push_back({"A3 convexity and bounded |b'(s)|", pass, detail});
    }

    // Assumption 4: U(-pi, r) constant and equal to potential_floor_k.
    {
        bool pass = true;
        std::string detail = "U(-pi, r) = " + std::to_string(rule.potential_floor_k);
        for (const auto& r : samples) {
            double u = rule.potential(-kPi, r);
            if (std::abs(u - rule.potential_floor_k) > 1e-9) {
                pass = false;
                detail = "U(-pi, r) = " + std::to_string(u) + " != floor " +
                         std::to_string(rule.potential_floor_k);
                break;
            }
        }
        report.entries.push_back({"A4 constant floor at theta = -pi", pass, detail});
    }

    return report;
}

}  // namespace dtn
