#include "dtn/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <queue>
#include <utility>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "dtn/errors.hpp"
#include "dtn/geometry.hpp"

namespace dtn {

namespace {

// Counter-based splittable generator: one stream per node plus one for the
// field, so replica results do not depend on scan order.
struct SplitMix64 {
    using result_type = std::uint64_t;
    std::uint64_t state = 0;

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~0ull; }
    result_type operator()() { return next(); }

    std::uint64_t next() {
        state += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }  // [0, 1)
};

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    SplitMix64 s{base ^ (0x9E3779B97F4A7C15ull * (stream + 1))};
    s.next();
    return s.next();
}

double sample_exp(SplitMix64& rng, double rate) { return -std::log1p(-rng.uniform()) / rate; }

double sample_direction(const DirectionDensity& d, SplitMix64& rng) {
    double u = std::clamp(rng.uniform(), 1e-16, 1.0 - 1e-16);
    return direction_quantile(d, u);
}

double wrap_coord(double x, double w) {
    double y = std::fmod(x + w, 2 * w);
    if (y < 0) y += 2 * w;
    return y - w;
}

struct Node {
    Eigen::Vector2d pos0;  // wrapped position at time t0
    double t0 = 0;
    double dir = 0;
    double next_turn = 0;
    SplitMix64 rng;
};

struct World {
    const SimConfig& cfg;
    const ForwardingRegion fr;
    double w;  // torus half-width

    std::vector<Node> nodes;

    explicit World(const SimConfig& c, std::uint64_t seed)
        : cfg(c), fr(ForwardingRegion::from_rule(c.params.rule)), w(c.world_half_width) {
        SplitMix64 field{derive_seed(seed, 0)};
        std::poisson_distribution<long long> pois(cfg.params.lambda * (2 * w) * (2 * w));
        long long count = pois(field);
        nodes.reserve(static_cast<std::size_t>(count) + 1);
        for (long long i = 0; i < count; ++i) {
            Node n;
            n.pos0 = {(field.uniform() - 0.5) * 2 * w, (field.uniform() - 0.5) * 2 * w};
            n.rng = SplitMix64{derive_seed(seed, static_cast<std::uint64_t>(i) + 1)};
            n.dir = sample_direction(cfg.params.direction_density, n.rng);
            n.next_turn = sample_exp(n.rng, cfg.params.r0);
            nodes.push_back(std::move(n));
        }
        if (nodes.empty()) {
            // Degenerate fallback so the packet has a carrier even in an
            // empty field (it then just drifts, with no transmissions).
            Node n;
            n.pos0.setZero();
            n.rng = SplitMix64{derive_seed(seed, 1)};
            n.dir = sample_direction(cfg.params.direction_density, n.rng);
            n.next_turn = sample_exp(n.rng, cfg.params.r0);
            nodes.push_back(std::move(n));
        }
    }

    Eigen::Vector2d position(int idx, double t) const {
        const Node& n = nodes[idx];
        Eigen::Vector2d p = n.pos0 + cfg.params.v0 * (t - n.t0) *
                                          Eigen::Vector2d(std::cos(n.dir), std::sin(n.dir));
        return {wrap_coord(p.x(), w), wrap_coord(p.y(), w)};
    }

    Eigen::Vector2d torus_diff(const Eigen::Vector2d& a, const Eigen::Vector2d& b) const {
        return {wrap_coord(a.x() - b.x(), w), wrap_coord(a.y() - b.y(), w)};
    }
};

// Uniform spatial hash over the torus, rebuilt from (slightly stale) node
// positions; the cell size leaves margin for one step of drift so a 3x3 query
// covers every node within the FR extent of the carrier.
struct BucketGrid {
    int ncell = 0;
    double cell = 0;
    double w = 0;
    std::vector<int> start;  // ncell^2 + 1 offsets
    std::vector<int> items;

    void init(double half_width, double cell_size) {
        w = half_width;
        cell = cell_size;
        ncell = std::max(1, static_cast<int>(std::floor(2 * w / cell)));
        cell = 2 * w / ncell;  // exact tiling of the torus
        start.assign(static_cast<std::size_t>(ncell) * ncell + 1, 0);
    }
    int index_of(const Eigen::Vector2d& p) const {
        int ix = std::clamp(static_cast<int>(std::floor((p.x() + w) / cell)), 0, ncell - 1);
        int iy = std::clamp(static_cast<int>(std::floor((p.y() + w) / cell)), 0, ncell - 1);
        return iy * ncell + ix;
    }
    void rebuild(const World& world, double t) {
        std::fill(start.begin(), start.end(), 0);
        const int n = static_cast<int>(world.nodes.size());
        items.resize(n);
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) {
            idx[i] = index_of(world.position(i, t));
            ++start[idx[i] + 1];
        }
        for (std::size_t c = 1; c < start.size(); ++c) start[c] += start[c - 1];
        std::vector<int> cursor(start.begin(), start.end() - 1);
        for (int i = 0; i < n; ++i) items[cursor[idx[i]]++] = i;
    }
    template <typename F>
    void for_neighbors(const Eigen::Vector2d& p, F&& f) const {
        int ix = std::clamp(static_cast<int>(std::floor((p.x() + w) / cell)), 0, ncell - 1);
        int iy = std::clamp(static_cast<int>(std::floor((p.y() + w) / cell)), 0, ncell - 1);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                int cx = (ix + dx + ncell) % ncell;
                int cy = (iy + dy + ncell) % ncell;
                int c = cy * ncell + cx;
                for (int s = start[c]; s < start[c + 1]; ++s) f(items[s]);
            }
    }
};

struct Replica {
    const SimConfig& cfg;
    World world;
    BucketGrid grid;
    ReplicaTotals totals;

    int carrier = 0;
    double last_accrual = 0;
    std::vector<Eigen::Vector2d> hop_log;  // diagnostics: transmission displacements

    using TurnEvent = std::pair<double, int>;
    std::priority_queue<TurnEvent, std::vector<TurnEvent>, std::greater<>> turns;

    Replica(const SimConfig& c, std::uint64_t seed) : cfg(c), world(c, seed) {
        const double b = world.fr.bounding_half_width_B;
        grid.init(world.w, 1.05 * b);
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < static_cast<int>(world.nodes.size()); ++i) {
            double d = world.nodes[i].pos0.squaredNorm();
            if (d < best) {
                best = d;
                carrier = i;
            }
        }
        for (int i = 0; i < static_cast<int>(world.nodes.size()); ++i)
            turns.emplace(world.nodes[i].next_turn, i);
    }

    void accrue(double t) {
        if (t <= last_accrual) return;
        totals.sum_x += cfg.params.v0 * std::cos(world.nodes[carrier].dir) * (t - last_accrual);
        last_accrual = t;
    }

    void turn_node(int idx, double t) {
        Node& n = world.nodes[idx];
        n.pos0 = world.position(idx, t);
        n.t0 = t;
        n.dir = sample_direction(cfg.params.direction_density, n.rng);
        n.next_turn = t + sample_exp(n.rng, cfg.params.r0);
        turns.emplace(n.next_turn, idx);
    }

    // Cascading best-eligible handoffs at time t; returns hop count.
    int scan(double t) {
        accrue(t);
        const double b2 = world.fr.bounding_half_width_B * world.fr.bounding_half_width_B;
        int hops = 0;
        while (true) {
            const Eigen::Vector2d cpos = world.position(carrier, t);
            const double uc =
                cfg.params.rule.potential(world.nodes[carrier].dir, Eigen::Vector2d::Zero());
            int best = -1;
            double best_u = uc;
            Eigen::Vector2d best_d;
            grid.for_neighbors(cpos, [&](int idx) {
                if (idx == carrier) return;
                Eigen::Vector2d d = world.torus_diff(world.position(idx, t), cpos);
                if (d.squaredNorm() > b2) return;
                if (!fr_membership(world.fr, d)) return;
                double u = cfg.params.rule.potential(world.nodes[idx].dir, d);
                if (u > best_u) {
                    best_u = u;
                    best = idx;
                    best_d = d;
                }
            });
            if (best < 0) break;

            double cost = cfg.params.cost(best_d);
            totals.sum_cost += cost;
            totals.sum_x += best_d.x();
            ++totals.transmissions;
            if (cfg.collect_diagnostics) {
                if (!(best_u > uc)) ++totals.potential_violations;
                if (!fr_membership(world.fr, best_d)) ++totals.displacement_violations;
                hop_log.push_back(best_d);
            }
            if (cfg.trace)
                *cfg.trace << t << " hop " << world.nodes[best].dir << " " << best_d.x() << " "
                           << best_d.y() << " " << cost << "\n";
            carrier = best;
            if (++hops > 1000000)
                throw NumericGateError("handoff cascade exceeded 1e6 hops at t=" +
                                       std::to_string(t));
        }
        if (hops > 0) ++totals.stages;
        return hops;
    }

};

}  // namespace

void SimConfig::finalize() {
    ForwardingRegion fr = ForwardingRegion::from_rule(params.rule);
    const double b = fr.bounding_half_width_B;
    const double a_scale = params.rule.is_ellipse ? params.rule.a : b;
    if (world_half_width == 0) world_half_width = 10 * b;
    if (time_step == 0) time_step = std::min(0.01 / params.r0, 0.01 * a_scale / params.v0);
    if (horizon == 0) horizon = 1e4 / params.r0;
}

void SimConfig::validate() const {
    params.validate();
    ForwardingRegion fr = ForwardingRegion::from_rule(params.rule);
    const double b = fr.bounding_half_width_B;
    if (!(world_half_width >= 10 * b * (1 - 1e-12)))
        throw ValidationError("world_half_width must be at least 10x the FR extent");
    const double a_scale = params.rule.is_ellipse ? params.rule.a : b;
    double max_step = std::min(0.01 / params.r0, 0.01 * a_scale / params.v0);
    if (!(time_step > 0) || time_step > max_step * (1 + 1e-12))
        throw ValidationError("time_step too coarse for the motion scales");
    if (!(horizon > 0)) throw ValidationError("horizon must be positive");
    if (min_stages < 1) throw ValidationError("min_stages must be at least 1");
    if (replicas < 1) throw ValidationError("replicas must be at least 1");
}

ReplicaTotals run_replica(const SimConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Replica rep(cfg, seed);
    ReplicaTotals& totals = rep.totals;
    const SimConfig& c = cfg;
    const double two_b2 =
        4 * rep.world.fr.bounding_half_width_B * rep.world.fr.bounding_half_width_B;

    double t = 0;
    double next_step = c.time_step;
    const double sample_spacing = 2.0 / c.params.r0;
    double next_sample = 0;

    rep.grid.rebuild(rep.world, 0.0);
    rep.scan(0.0);

    while (true) {
        double turn_t = rep.turns.empty() ? std::numeric_limits<double>::infinity()
                                          : rep.turns.top().first;
        double event_t = std::min(turn_t, next_step);
        if (event_t >= c.horizon && totals.stages >= c.min_stages) {
            double t_end = std::max(t, c.horizon);
            rep.accrue(t_end);
            t = t_end;
            break;
        }
        if (turn_t <= next_step) {
            int idx = rep.turns.top().second;
            rep.turns.pop();
            t = turn_t;
            if (idx == rep.carrier) {
                rep.accrue(t);
                rep.turn_node(idx, t);
                ++totals.stages;  // carrier direction change ends a stage
                rep.scan(t);
            } else {
                Eigen::Vector2d d = rep.world.torus_diff(rep.world.position(idx, t),
                                                         rep.world.position(rep.carrier, t));
                rep.turn_node(idx, t);
                if (d.squaredNorm() <= two_b2) rep.scan(t);
            }
        } else {
            t = next_step;
            rep.grid.rebuild(rep.world, t);
            if (c.collect_diagnostics && t >= next_sample &&
                totals.direction_samples.size() < 10000) {
                for (const Node& n : rep.world.nodes) {
                    if (totals.direction_samples.size() >= 10000) break;
                    totals.direction_samples.push_back(n.dir);
                }
                next_sample = t + sample_spacing;
            }
            rep.scan(t);
            next_step += c.time_step;
        }
    }

    totals.sum_delta = t;
    if (c.collect_diagnostics) {
        double recomputed = 0;
        for (const Eigen::Vector2d& d : rep.hop_log) recomputed += c.params.cost(d);
        totals.cost_recompute_gap = std::abs(totals.sum_cost - recomputed);
    }
    return totals;
}

SimEstimate estimate(const SimConfig& cfg) {
    if (cfg.replicas < 2) throw ValidationError("estimate requires at least 2 replicas");
    cfg.validate();

    std::vector<ReplicaTotals> totals(cfg.replicas);
    int workers = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("DTN_THREADS")) {
        int cap = std::atoi(env);
        if (cap > 0) workers = cap;
    }
    workers = std::clamp(workers, 1, cfg.replicas);
    if (cfg.trace) workers = 1;  // keep the event stream ordered

    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    auto work = [&] {
        for (int r; (r = next.fetch_add(1)) < cfg.replicas;)
            totals[r] = run_replica(cfg, derive_seed(cfg.seed, 1000 + r));
    };
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();

    SimEstimate est;
    std::vector<double> v_hat, c_hat;
    for (int r = 0; r < cfg.replicas; ++r) {
        const ReplicaTotals& rt = totals[r];
        est.stages += rt.stages;
        est.transmissions += rt.transmissions;
        v_hat.push_back(rt.sum_x / rt.sum_delta);
        if (std::abs(rt.sum_x) < 1e-12) {
            ++est.zero_progress_replicas;
        } else {
            c_hat.push_back(rt.sum_cost / rt.sum_x);
        }
    }
    auto mean_half = [](const std::vector<double>& xs) {
        double mean = 0;
        for (double x : xs) mean += x;
        mean /= xs.size();
        double var = 0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var = xs.size() > 1 ? var / (xs.size() - 1) : 0;
        return std::pair<double, double>(mean, 1.96 * std::sqrt(var / xs.size()));
    };
    auto [vm, vh] = mean_half(v_hat);
    est.v_p_hat = vm;
    est.v_p_half_width = vh;
    est.cost_replicas = static_cast<int>(c_hat.size());
    if (!c_hat.empty()) {
        auto [cm, ch] = mean_half(c_hat);
        est.c_p_hat = cm;
        est.c_p_half_width = ch;
    } else {
        est.c_p_hat = std::numeric_limits<double>::quiet_NaN();
        est.c_p_half_width = std::numeric_limits<double>::quiet_NaN();
    }
    return est;
}

int sample_node_count(const SimConfig& cfg, std::uint64_t seed) {
    SplitMix64 field{derive_seed(seed, 0)};
    const double w = cfg.world_half_width;
    std::poisson_distribution<long long> pois(cfg.params.lambda * (2 * w) * (2 * w));
    return static_cast<int>(pois(field));
}

}  // namespace dtn
