// Brute-force oracle for the exact solver: enumerate every piece
// selection, solve each selection's unconstrained least squares for
// candidate points, and refine a dense theta-grid down to step 1e-4.
// All candidate values are computed through the train module's task
// loss, independent of the branch-and-bound code path under test.

#pragma once

#include <cstdint>
#include <vector>

#include "endo/core.hpp"
#include "endo/costs.hpp"
#include "endo/exact.hpp"
#include "endo/models.hpp"
#include "endo/train.hpp"
#include "test_helpers.hpp"

namespace endo::testing {

struct MiqpCase {
    Dataset data;
    CostSpec cost_spec;
    ModelSpec model;
    double norm_bound = 1.0;

    MiqpCase() : data(Dims{0, 1, 1}) {}
};

inline MiqpCase make_random_miqp_case(Rng& rng, int max_records = 4) {
    MiqpCase c;
    const int n = rng.uniform_int(1, max_records);
    const bool with_x = rng.uniform() < 0.5;
    c.model.arch = ModelSpec::Arch::linear;
    c.model.d_x = with_x ? 1 : 0;
    c.model.d_v = 1;
    c.model.d_z = 1;
    c.norm_bound = rng.uniform(0.8, 2.5);
    c.model.norm_bound = c.norm_bound;
    c.cost_spec = rng.uniform() < 0.5
                      ? CostSpec::newsvendor_cost(rng.uniform(0.1, 0.9))
                      : CostSpec::scheduling_cost(rng.uniform(0.5, 2.0),
                                                  rng.uniform(0.5, 2.0));
    c.data = Dataset(Dims{c.model.d_x, 1, 1});
    for (int i = 0; i < n; ++i) {
        Record r;
        if (with_x) r.x = {rng.uniform(-1.0, 1.0)};
        r.v = {rng.uniform(0.0, 2.0)};
        r.z = {rng.uniform(-0.5, 2.5)};
        c.data.push(r);
    }
    return c;
}

inline double true_objective(const MiqpCase& c, const Vec& theta) {
    return task_loss_sum(c.model, ModelParams{theta}, c.cost_spec, c.data);
}

inline double miqp_brute_force(const MiqpCase& c, const MIQPInstance& inst) {
    const int dim = inst.theta_dim;
    const double radius = c.norm_bound;
    auto clamp_ball = [&](Vec t) {
        const double n = norm2(t);
        if (n > radius) scale(t, radius / n);
        return t;
    };

    double best = std::numeric_limits<double>::infinity();
    Vec best_theta(dim, 0.0);
    auto consider = [&](Vec t) {
        t = clamp_ball(std::move(t));
        const double val = true_objective(c, t);
        if (val < best) {
            best = val;
            best_theta = std::move(t);
        }
    };
    consider(Vec(dim, 0.0));

    // (1) y-enumeration: per selection the objective is least squares
    std::vector<int> sel(inst.n_records * inst.n_coords, 0);
    const auto total_cells = sel.size();
    while (true) {
        std::vector<Vec> rows;
        Vec target;
        for (int n = 0; n < inst.n_records; ++n) {
            Vec a(dim, 0.0);
            double cst = 0.0;
            for (int k = 0; k < inst.n_coords; ++k) {
                const int j = sel[n * inst.n_coords + k];
                axpy(inst.az[k][j], inst.gradient[n][k], a);
                cst += inst.piece_const[n][k][j];
            }
            rows.push_back(std::move(a));
            target.push_back(inst.r[n] - cst);
        }
        consider(least_squares(rows, target));
        // odometer increment over piece selections
        std::size_t cell = 0;
        for (; cell < total_cells; ++cell) {
            const int k = static_cast<int>(cell) % inst.n_coords;
            if (++sel[cell] < inst.pieces(k)) break;
            sel[cell] = 0;
        }
        if (cell == total_cells) break;
    }

    // (2) multiresolution grid descent to step 1e-4
    Vec center(dim, 0.0);
    double half = radius;
    const int pts = 11;
    while (half / (pts - 1) > 2.5e-5) {
        Vec best_local = center;
        double best_local_val = std::numeric_limits<double>::infinity();
        std::vector<int> idx(dim, 0);
        while (true) {
            Vec t(dim);
            for (int d = 0; d < dim; ++d)
                t[d] = center[d] - half + 2.0 * half * idx[d] / (pts - 1);
            t = clamp_ball(std::move(t));
            const double val = true_objective(c, t);
            if (val < best_local_val) {
                best_local_val = val;
                best_local = t;
            }
            int d = 0;
            for (; d < dim; ++d) {
                if (++idx[d] < pts) break;
                idx[d] = 0;
            }
            if (d == dim) break;
        }
        consider(best_local);
        center = best_local;
        half *= 0.25;
    }
    // final polish around the winner
    center = best_theta;
    half = 5e-4;
    std::vector<int> idx(dim, 0);
    while (true) {
        Vec t(dim);
        for (int d = 0; d < dim; ++d)
            t[d] = center[d] - half + 2.0 * half * idx[d] / 10.0;
        consider(std::move(t));
        int d = 0;
        for (; d < dim; ++d) {
            if (++idx[d] < 11) break;
            idx[d] = 0;
        }
        if (d == dim) break;
    }
    return best;
}

} // namespace endo::testing
