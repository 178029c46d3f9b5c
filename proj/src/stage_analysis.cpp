#include "dtn/stage_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dtn/errors.hpp"

namespace dtn {

namespace {

Eigen::Vector2d unit(double theta) { return {std::cos(theta), std::sin(theta)}; }

// ---------------------------------------------------------------------------
// Direction-mass helpers for location-independent rules: exact for the
// built-in U = -|theta|, fine-partition center sums otherwise.
// ---------------------------------------------------------------------------

constexpr int kFallbackCells = 4096;

double li_mass_better(const ModelParams& p, double theta) {
    if (p.rule.neg_abs_potential) return mass_below_abs(p.direction_density, std::abs(theta));
    const Eigen::VectorXd mass = p.direction_density.cell_masses(kFallbackCells);
    const double u0 = p.rule.potential(theta, Eigen::Vector2d::Zero());
    double out = 0;
    for (int i = 0; i < kFallbackCells; ++i) {
        double c = -kPi + (kPi / kFallbackCells) * (2 * (i + 1) - 1);
        if (p.rule.potential(c, Eigen::Vector2d::Zero()) > u0) out += mass[i];
    }
    return out;
}

// mass{ U(theta'') < U(theta, r) } at a fixed displacement (supports
// location-dependent potentials since only directions are integrated).
double mass_worse_at(const ModelParams& p, double theta, const Eigen::Vector2d& r) {
    if (p.rule.neg_abs_potential)
        return 1.0 - mass_below_abs(p.direction_density, std::abs(theta));
    const Eigen::VectorXd mass = p.direction_density.cell_masses(kFallbackCells);
    const double u0 = p.rule.potential(theta, r);
    double out = 0;
    for (int i = 0; i < kFallbackCells; ++i) {
        double c = -kPi + (kPi / kFallbackCells) * (2 * (i + 1) - 1);
        if (p.rule.potential(c, r) < u0) out += mass[i];
    }
    return out;
}

// Band mass { U(theta_hi, 0) >= U(theta'') > U(theta_lo, 0) }; zero when
// theta_lo is not strictly worse.
double li_band(const ModelParams& p, double theta_hi, double theta_lo) {
    if (p.rule.neg_abs_potential)
        return std::max(0.0, mass_below_abs(p.direction_density, std::abs(theta_lo)) -
                                 mass_below_abs(p.direction_density, std::abs(theta_hi)));
    const Eigen::VectorXd mass = p.direction_density.cell_masses(kFallbackCells);
    const Eigen::Vector2d o = Eigen::Vector2d::Zero();
    const double hi = p.rule.potential(theta_hi, o), lo = p.rule.potential(theta_lo, o);
    if (lo >= hi) return 0;
    double out = 0;
    for (int i = 0; i < kFallbackCells; ++i) {
        double c = -kPi + (kPi / kFallbackCells) * (2 * (i + 1) - 1);
        double u = p.rule.potential(c, o);
        if (u <= hi && u > lo) out += mass[i];
    }
    return out;
}

void require_location_independent(const ModelParams& p, const char* op) {
    if (!p.rule.location_independent)
        throw ValidationError(std::string(op) + " requires a location-independent rule");
}

// Discrete direction sum of f_D over the strictly-better set, evaluated at
// the grid's cell centers — the factor the direct double sum factorizes into.
double grid_mass_better(const ModelParams& p, const Grid& grid, double threshold_potential) {
    double out = 0;
    for (int i = 0; i < grid.n_theta; ++i)
        if (p.rule.potential(grid.theta[i], Eigen::Vector2d::Zero()) > threshold_potential)
            out += direction_density_eval(p.direction_density, grid.theta[i]) * grid.delta_theta;
    return out;
}

// Area of G(r) counted over the grid's spatial cells.
double grid_area_g(const ForwardingRegion& fr, const Grid& grid, const Eigen::Vector2d& r) {
    int count = 0;
    for (int k = 0; k < grid.m; ++k)
        if (!fr_membership(fr, Eigen::Vector2d(grid.points.col(k) + r))) ++count;
    return count * grid.delta_a;
}

// Nearest retained grid cell for a point: the containing lattice cell when it
// is retained, otherwise a scan over all retained centers.
struct NearestCell {
    const Grid& grid;
    std::vector<int> flat_to_idx;

    explicit NearestCell(const Grid& g) : grid(g), flat_to_idx(g.l * g.l, -1) {
        for (int k = 0; k < g.m; ++k) flat_to_idx[g.lattice_k[k]] = k;
    }
    int operator()(const Eigen::Vector2d& x) const {
        const double cell = 2 * grid.b_half / grid.l;
        int ix = std::clamp(static_cast<int>(std::floor((x.x() + grid.b_half) / cell)), 0,
                            grid.l - 1);
        int iy = std::clamp(static_cast<int>(std::floor((x.y() + grid.b_half) / cell)), 0,
                            grid.l - 1);
        int idx = flat_to_idx[iy * grid.l + ix];
        if (idx >= 0) return idx;
        double best = std::numeric_limits<double>::infinity();
        for (int k = 0; k < grid.m; ++k) {
            double d = (grid.points.col(k) - x).squaredNorm();
            if (d < best) {
                best = d;
                idx = k;
            }
        }
        return idx;
    }
};

Eigen::VectorXd relocated_slice(double coeff, double theta, double theta_p,
                                const ThresholdCurve& curve, const Grid& grid,
                                const NearestCell& nearest) {
    Eigen::VectorXd slice = Eigen::VectorXd::Zero(grid.m);
    const Eigen::Vector2d diff = unit(theta) - unit(theta_p);
    for (const auto& s : curve.samples) {
        double dot = diff.dot(s.normal);
        if (dot <= 0) continue;
        slice[nearest(s.point)] += coeff * dot * s.speed * curve.delta_s / grid.delta_a;
    }
    return slice;
}

}  // namespace

// ---------------------------------------------------------------------------
// Point operations
// ---------------------------------------------------------------------------

double expected_better_count(const ModelParams& p, const ForwardingRegion& fr, const Grid& grid,
                             double theta, const Eigen::Vector2d& r) {
    if (!fr_membership(fr, r)) throw std::domain_error("displacement outside F");
    const double threshold = p.rule.potential(theta, Eigen::Vector2d::Zero());
    if (p.rule.location_independent)
        return p.lambda * grid_mass_better(p, grid, threshold) * grid_area_g(fr, grid, r);
    double sum = 0;  // direct double sum over direction x spatial cells
    for (int i = 0; i < grid.n_theta; ++i) {
        double fd = direction_density_eval(p.direction_density, grid.theta[i]);
        if (fd == 0) continue;
        for (int k = 0; k < grid.m; ++k) {
            Eigen::Vector2d rp = grid.points.col(k);
            if (g_region_membership(fr, rp, r) && p.rule.potential(grid.theta[i], rp) > threshold)
                sum += fd;
        }
    }
    return p.lambda * sum * grid.v_d;
}

double escape_probability(const ModelParams& p, const ForwardingRegion& fr, const Grid& grid,
                          double theta, const Eigen::Vector2d& r) {
    return std::exp(-expected_better_count(p, fr, grid, theta, r));
}

double forward_density(const ModelParams& p, const ForwardingRegion& fr, const Grid& grid,
                       double theta_p, const Eigen::Vector2d& r_p, double theta,
                       const Eigen::Vector2d& r) {
    if (!fr_membership(fr, r)) throw std::domain_error("source displacement outside F");
    if (!fr_membership(fr, r_p)) throw std::domain_error("target displacement outside F");
    const double source_u = p.rule.potential(theta, Eigen::Vector2d::Zero());
    const double target_u = p.rule.potential(theta_p, r_p);
    if (!(target_u > source_u) || !g_region_membership(fr, r_p, r)) return 0;

    double exponent;
    if (p.rule.location_independent) {
        exponent = p.lambda * grid_mass_better(p, grid, target_u) * grid_area_g(fr, grid, r);
    } else {
        double sum = 0;
        for (int i = 0; i < grid.n_theta; ++i) {
            double fd = direction_density_eval(p.direction_density, grid.theta[i]);
            if (fd == 0) continue;
            for (int k = 0; k < grid.m; ++k) {
                Eigen::Vector2d rpp = grid.points.col(k);
                if (g_region_membership(fr, rpp, r) &&
                    p.rule.potential(grid.theta[i], rpp) > target_u)
                    sum += fd;
            }
        }
        exponent = p.lambda * sum * grid.v_d;
    }
    return p.lambda * direction_density_eval(p.direction_density, wrap_angle(theta_p)) *
           std::exp(-exponent);
}

double rate_a(const ModelParams& p, const ForwardingRegion& fr, double theta, double theta_p) {
    require_location_independent(p, "rate_a");
    double fd = direction_density_eval(p.direction_density, wrap_angle(theta_p));
    if (fd == 0) return 0;
    return p.r0 * fd * std::exp(-p.lambda * fr.area * li_band(p, theta, theta_p));
}

double rate_b(const ModelParams& p, const ForwardingRegion& fr, double theta, double theta_p,
              const Eigen::Vector2d& r_p) {
    require_location_independent(p, "rate_b");
    if (!fr_membership(fr, r_p)) throw std::domain_error("displacement outside F");
    const Eigen::Vector2d o = Eigen::Vector2d::Zero();
    if (p.rule.potential(theta, o) < p.rule.potential(theta_p, o)) return 0;
    double fd = direction_density_eval(p.direction_density, wrap_angle(theta_p));
    if (fd == 0) return 0;
    return p.r0 * p.lambda * fd * mass_worse_at(p, theta_p, r_p) *
           std::exp(-p.lambda * fr.area * li_band(p, theta, theta_p));
}

double rate_c(const ModelParams& p, const ForwardingRegion& fr, double theta, double theta_p,
              const Eigen::Vector2d& r_p) {
    if (!fr_membership(fr, r_p)) throw std::domain_error("displacement outside F");
    if (!(p.rule.potential(theta_p, r_p) > p.rule.potential(theta, Eigen::Vector2d::Zero())))
        return 0;
    double fd = direction_density_eval(p.direction_density, wrap_angle(theta_p));
    if (fd == 0) return 0;
    return p.lambda * p.r0 * fd * mass_worse_at(p, theta, r_p);
}

double rate_d(const ModelParams& p, double theta, double theta_p, double s,
              const ThresholdCurve& curve) {
    if (curve.empty()) return 0;
    double fd = direction_density_eval(p.direction_density, wrap_angle(theta_p));
    if (fd == 0) return 0;
    auto [speed, normal] = curve_speed_and_normal(curve, s);
    double dot = (unit(theta) - unit(theta_p)).dot(normal);
    return p.lambda * p.v0 * fd * std::max(0.0, dot) * speed;
}

Eigen::VectorXd relocate_rate_d(const ModelParams& p, double theta, double theta_p,
                                const ThresholdCurve& curve, const Grid& grid) {
    NearestCell nearest(grid);
    if (curve.empty()) return Eigen::VectorXd::Zero(grid.m);
    double fd = direction_density_eval(p.direction_density, wrap_angle(theta_p));
    return relocated_slice(p.lambda * p.v0 * fd, theta, theta_p, curve, grid, nearest);
}

// ---------------------------------------------------------------------------
// Aggregates
// ---------------------------------------------------------------------------

RateAggregates aggregate_rates(const RateTables& tables, const Grid& grid, double r0) {
    const int n = grid.n_theta;
    RateAggregates agg;
    agg.r_a = tables.r_a.rowwise().sum() * grid.delta_theta;
    agg.r_b = tables.r_b.rowwise().sum() * grid.delta_theta * grid.area_disc;
    agg.r_c = tables.r_c.rowwise().sum() * grid.delta_theta * grid.area_disc;
    agg.r_d.resize(n);
    for (int i = 0; i < n; ++i)
        agg.r_d[i] = tables.r_dhat[i].sum() * grid.delta_theta * grid.delta_a;
    agg.r_total = agg.r_c + agg.r_d;
    agg.r_total.array() += r0;

    agg.identity_defect = ((agg.r_a + agg.r_b).array() - r0).abs().maxCoeff() / r0;
    Eigen::VectorXd direct = agg.r_a + agg.r_b + agg.r_c + agg.r_d;
    agg.two_form_defect = ((direct - agg.r_total).array() / agg.r_total.array()).abs().maxCoeff();
    if (agg.two_form_defect > 0.05)
        throw NumericGateError("aggregate rate forms disagree by " +
                               std::to_string(agg.two_form_defect * 100) +
                               "% — quadrature grid too coarse");
    return agg;
}

EventSplit conditional_event_probabilities(const RateTables& tables, int i) {
    EventSplit split;
    double r = tables.r_total[i];
    if (!(r > 0)) throw NumericGateError("total rate must be positive");
    split.p_a = tables.r_a_agg[i] / r;
    split.p_b = tables.r_b_agg[i] / r;
    split.p_c = tables.r_c_agg[i] / r;
    split.p_d = tables.r_d_agg[i] / r;
    split.mean_sojourn = 1.0 / r;
    return split;
}

// ---------------------------------------------------------------------------
// Table construction
// ---------------------------------------------------------------------------

StageTables build_stage_tables(const ModelParams& params, int n_theta, int l,
                               int curve_resolution) {
    params.validate();
    require_location_independent(params, "build_stage_tables");

    StageTables t;
    t.params = params;
    t.fr = ForwardingRegion::from_rule(params.rule);
    t.grid = build_grid(t.fr, n_theta, l);

    ValidationReport report = validate_rule(params.rule, t.grid);
    if (!report.all_pass()) {
        std::string what = "routing rule failed validation:";
        for (const auto& e : report.entries)
            if (!e.pass) what += " [" + e.assumption + ": " + e.detail + "]";
        throw ValidationError(what);
    }

    t.levels = build_levels(params.rule, params.direction_density, t.grid);
    t.speed = build_speedup_tables(params.rule, params.direction_density, t.grid);

    const int n = n_theta, m = t.grid.m, nl = t.levels.n_levels;
    const Eigen::VectorXd mass = params.direction_density.cell_masses(n);
    const Eigen::VectorXd w = mass / t.grid.delta_theta;
    const auto& lev = t.levels;

    // Transmission tables: the escape exponent and the per-level strips that
    // generate the forward mass exactly (their telescoped sum is 1 - pe).
    TransmissionTables& tx = t.tx;
    tx.lambda = params.lambda;
    tx.en.resize(n, m);
    tx.pe.resize(n, m);
    tx.full_strip.resize(nl, m);
    tx.half_strip.resize(nl, m);
    tx.level_of.resize(n);
    tx.level_share.resize(n);
    tx.cell_mass = mass;
    for (int i = 0; i < n; ++i) {
        int li = lev.level_of[i];
        tx.level_of[i] = li;
        tx.level_share[i] = lev.level_mass[li] > 0 ? mass[i] / lev.level_mass[li] : 0.0;
        for (int k = 0; k < m; ++k) tx.en(i, k) = params.lambda * lev.i1_eff(li) * t.speed.i2[k];
    }
    tx.pe = (-tx.en.array()).exp();
    for (int lvl = 0; lvl < nl; ++lvl)
        for (int k = 0; k < m; ++k) {
            double c = params.lambda * t.speed.i2[k];
            double lo = lev.cum_better[lvl], ml = lev.level_mass[lvl];
            tx.full_strip(lvl, k) = exp_strip(c, lo, lo + ml);
            tx.half_strip(lvl, k) = exp_strip(c, lo, lo + ml / 2);
        }
    tx.g_cells.resize(m);
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j)
            if (!fr_membership(t.fr, Eigen::Vector2d(t.grid.points.col(j) + t.grid.points.col(k))))
                tx.g_cells[k].push_back(j);

    // Rate tables.  Strip averages per (source level, target level): the band
    // exponent is integrated exactly in cumulative-mass space, with the
    // source's own level split half better / half worse.
    RateTables& rt = t.rates;
    const double c_area = params.lambda * t.grid.area_disc;
    Eigen::MatrixXd avg_g(nl, nl), avg_b(nl, nl);
    for (int s = 0; s < nl; ++s) {
        const double ms = lev.level_mass[s];
        const double w_worse = lev.i3_eff(s);
        for (int lvl = 0; lvl < nl; ++lvl) {
            const double ml = lev.level_mass[lvl];
            if (lvl < s) {
                avg_g(s, lvl) = 1.0;
                avg_b(s, lvl) = 0.0;
            } else if (lvl == s) {
                avg_g(s, lvl) = ms > 0 ? (ms / 2 + exp_strip(c_area, 0, ms / 2)) / ms : 1.0;
                avg_b(s, lvl) = ms > 0 ? lin_exp_strip(c_area, w_worse, 0, ms / 2) / ms : 0.0;
            } else if (ml > 0) {
                double lo = lev.cum_better[lvl] - lev.cum_better[s] - ms / 2;
                avg_g(s, lvl) = exp_strip(c_area, lo, lo + ml) / ml;
                avg_b(s, lvl) = lin_exp_strip(c_area, w_worse, lo, lo + ml) / ml;
            } else {
                avg_g(s, lvl) = 0.0;
                avg_b(s, lvl) = 0.0;
            }
        }
    }
    rt.r_a.resize(n, n);
    rt.r_b.resize(n, n);
    rt.r_c.resize(n, n);
    for (int i = 0; i < n; ++i) {
        int li = lev.level_of[i];
        for (int j = 0; j < n; ++j) {
            int lj = lev.level_of[j];
            rt.r_a(i, j) = params.r0 * w[j] * avg_g(li, lj);
            rt.r_b(i, j) = params.r0 * params.lambda * w[j] * avg_b(li, lj);
            rt.r_c(i, j) = params.lambda * params.r0 * w[j] * t.speed.better(i, j) *
                           lev.i3_eff(li);
        }
    }

    // For a location-independent rule every strictly-better pair shares the
    // same threshold curve — the full region boundary — so one cached curve
    // serves all (theta_i, theta_j).  Ties enter at half weight, matching the
    // cell-averaged convention of every other table.
    NearestCell nearest(t.grid);
    const ThresholdCurve boundary = threshold_curve(-kPi, 0.0, params.rule, curve_resolution);
    rt.r_dhat.assign(n, Eigen::MatrixXd::Zero(n, m));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double bet = t.speed.better(i, j);
            if (w[j] <= 0 || bet <= 0) continue;
            rt.r_dhat[i].row(j) = relocated_slice(params.lambda * params.v0 * w[j] * bet,
                                                  t.grid.theta[i], t.grid.theta[j], boundary,
                                                  t.grid, nearest)
                                      .transpose();
        }
    }

    RateAggregates agg = aggregate_rates(rt, t.grid, params.r0);
    rt.r_a_agg = std::move(agg.r_a);
    rt.r_b_agg = std::move(agg.r_b);
    rt.r_c_agg = std::move(agg.r_c);
    rt.r_d_agg = std::move(agg.r_d);
    rt.r_total = std::move(agg.r_total);
    rt.identity_defect = agg.identity_defect;
    rt.two_form_defect = agg.two_form_defect;
    return t;
}

}  // namespace dtn
