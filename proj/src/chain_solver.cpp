#include "dtn/chain_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

#include "dtn/errors.hpp"

namespace dtn {

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

}  // namespace

KernelMatrix assemble_kernel(const RateTables& rates, const TransmissionTables& tx,
                             const Grid& grid) {
    const int n = grid.n_theta, m = grid.m;
    KernelMatrix kern;
    kern.n_theta = n;
    kern.m = m;
    const int dim = kern.dim();
    kern.k = Eigen::MatrixXd::Zero(dim, dim);
    kern.row_defect = Eigen::VectorXd::Zero(dim);

    for (int i = 0; i < n; ++i)
        if (tx.cell_mass[i] > 0) kern.support.push_back(kern.row_b(i));
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < n; ++i)
            if (tx.cell_mass[i] > 0) kern.support.push_back(kern.row_w(i, k));

    // Buffering rows: carrier keeps (same block) or hands off into a
    // transmission state, split by the four exit families.
    for (int i = 0; i < n; ++i) {
        const int row = kern.row_b(i);
        const double r_i = rates.r_total[i];
        for (int j = 0; j < n; ++j) {
            kern.k(row, kern.row_b(j)) = rates.r_a(i, j) * grid.delta_theta / r_i;
            double bw = (rates.r_b(i, j) + rates.r_c(i, j)) * grid.delta_theta * grid.delta_a /
                        r_i;
            for (int k = 0; k < m; ++k)
                kern.k(row, kern.row_w(j, k)) =
                    bw + rates.r_dhat[i](j, k) * grid.delta_theta * grid.delta_a / r_i;
        }
    }

    // Transmission rows: escape mass back to the same-direction buffering
    // state, forward mass over the eligible cells via the exact level strips.
    for (int k = 0; k < m; ++k) {
        for (int i = 0; i < n; ++i) {
            const int row = kern.row_w(i, k);
            if (tx.cell_mass[i] <= 0) {
                kern.k(row, row) = 1.0;
                continue;
            }
            kern.k(row, kern.row_b(i)) = tx.pe(i, k);
            const int li = tx.level_of[i];
            for (int j = 0; j < n; ++j) {
                if (tx.level_share[j] <= 0) continue;
                const int lj = tx.level_of[j];
                double si;
                if (lj < li)
                    si = tx.full_strip(lj, k);
                else if (lj == li)
                    si = tx.half_strip(li, k);
                else
                    continue;
                if (si <= 0) continue;
                const double mass = tx.lambda * tx.level_share[j] * si * grid.delta_a;
                for (int kp : tx.g_cells[k]) kern.k(row, kern.row_w(j, kp)) = mass;
            }
        }
    }

    for (int row = 0; row < dim; ++row) {
        double sum = kern.k.row(row).sum();
        kern.row_defect[row] = std::abs(sum - 1.0);
        if (kern.row_defect[row] > 0.05)
            throw NumericGateError("kernel row " + std::to_string(row) + " defect " +
                                   fmt(kern.row_defect[row]) + " — grid too coarse");
        kern.k.row(row) /= sum;
    }
    kern.max_row_defect = kern.row_defect.maxCoeff();
    return kern;
}

StationaryDistribution stationary_distribution(const KernelMatrix& kernel) {
    const int dim = kernel.dim();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
    for (int s : kernel.support) x[s] = 1.0 / kernel.support.size();

    StationaryDistribution out;
    Eigen::VectorXd y(dim);
    const int max_iter = 100000;
    int iter = 0;
    double residual = std::numeric_limits<double>::infinity();
    while (iter < max_iter) {
        y.noalias() = kernel.k.transpose() * x;  // left multiplication psi K
        ++iter;
        residual = (y - x).lpNorm<Eigen::Infinity>();
        x = y;
        if (iter % 128 == 0) x /= x.sum();
        if (residual <= 1e-12) break;
    }
    if (residual > 1e-12)
        throw NumericGateError("power iteration stalled at residual " + fmt(residual) +
                               " after " + std::to_string(iter) +
                               " iterations — kernel assembly suspect");
    x /= x.sum();

    out.psi = x;
    out.residual = residual;
    out.iterations = iter;
    out.psi_b = x.head(kernel.n_theta);
    out.psi_w.resize(kernel.n_theta, kernel.m);
    for (int k = 0; k < kernel.m; ++k)
        for (int i = 0; i < kernel.n_theta; ++i) out.psi_w(i, k) = x[kernel.row_w(i, k)];
    return out;
}

Eigen::VectorXd stationary_direct(const KernelMatrix& kernel) {
    const auto& sup = kernel.support;
    const int s = static_cast<int>(sup.size());
    Eigen::MatrixXd a(s, s);
    for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c) a(r, c) = kernel.k(sup[c], sup[r]);
    a.diagonal().array() -= 1.0;
    a.row(s - 1).setOnes();  // replaces one redundant balance equation
    Eigen::VectorXd b = Eigen::VectorXd::Zero(s);
    b[s - 1] = 1.0;
    Eigen::VectorXd sol = a.partialPivLu().solve(b);

    Eigen::VectorXd out = Eigen::VectorXd::Zero(kernel.dim());
    for (int r = 0; r < s; ++r) out[sup[r]] = sol[r];
    return out;
}

double doeblin_mass(const KernelMatrix& kernel) {
    Eigen::VectorXd ind = Eigen::VectorXd::Zero(kernel.dim());
    for (int s : kernel.support)
        if (s < kernel.n_theta) ind[s] = 1.0;
    Eigen::VectorXd one_step = kernel.k * ind;
    Eigen::VectorXd two_step = kernel.k * one_step;
    double out = std::numeric_limits<double>::infinity();
    for (int s : kernel.support) out = std::min(out, two_step[s]);
    return out;
}

Expectations expectations(const StationaryDistribution& psi, const ModelParams& params,
                          const RateTables& rates, const Grid& grid) {
    Expectations e;
    for (int k = 0; k < grid.m; ++k) {
        const Eigen::Vector2d x = grid.points.col(k);
        const double col_mass = psi.psi_w.col(k).sum();
        e.x_w += col_mass * x.x();
        e.cost += col_mass * params.cost(x);
    }
    for (int i = 0; i < grid.n_theta; ++i) {
        const double inv_r = 1.0 / rates.r_total[i];
        e.delta += psi.psi_b[i] * inv_r;
        e.x_b += psi.psi_b[i] * params.v0 * std::cos(grid.theta[i]) * inv_r;
    }
    return e;
}

Metrics performance_metrics(const Expectations& e, const ModelParams& params) {
    if (!(e.delta > 0)) throw NumericGateError("mean buffering sojourn must be positive");
    Metrics m;
    m.parts = e;
    const double progress = e.x_w + e.x_b;
    m.v_p = progress / e.delta;
    m.c_p_defined = std::abs(progress) >= 1e-3 * params.v0 * e.delta;
    m.c_p = m.c_p_defined ? e.cost / progress : std::numeric_limits<double>::quiet_NaN();
    return m;
}

Metrics analyze(const StageTables& tables) {
    KernelMatrix kernel = assemble_kernel(tables.rates, tables.tx, tables.grid);
    StationaryDistribution psi = stationary_distribution(kernel);
    Expectations e = expectations(psi, tables.params, tables.rates, tables.grid);
    return performance_metrics(e, tables.params);
}

void write_stationary_csv(std::ostream& out, const StationaryDistribution& psi,
                          const Grid& grid) {
    out << "kind,theta_index,space_index,theta,x,y,mass\n";
    for (int i = 0; i < grid.n_theta; ++i)
        out << "B," << i << ",-1," << fmt(grid.theta[i]) << ",0,0," << fmt(psi.psi_b[i]) << "\n";
    for (int k = 0; k < grid.m; ++k)
        for (int i = 0; i < grid.n_theta; ++i)
            out << "W," << i << "," << k << "," << fmt(grid.theta[i]) << ","
                << fmt(grid.points(0, k)) << "," << fmt(grid.points(1, k)) << ","
                << fmt(psi.psi_w(i, k)) << "\n";
}

void write_kernel_coordinate(std::ostream& out, const KernelMatrix& kernel) {
    const int dim = kernel.dim();
    out << "# " << dim << " " << dim << "\n";
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c)
            if (kernel.k(r, c) != 0)
                out << r << " " << c << " " << fmt(kernel.k(r, c)) << "\n";
}

}  // namespace dtn
