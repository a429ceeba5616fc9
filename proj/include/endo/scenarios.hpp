// Synthetic ground-truth worlds for the three experiment families:
// feature-dependent pricing with price-sensitive demand, assortment
// stocking with cross-product demand effects, and a 24-hour generation
// scheduling problem whose forecast error grows with lead time.
// Each returns a core Scenario plus JSON metadata of every parameter.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "endo/core.hpp"
#include "endo/costs.hpp"
#include "endo/rng.hpp"
#include "endo/vecmath.hpp"

namespace endo {

struct PricingParams {
    int d = 25;            // feature dimension
    int items = 1;         // K
    double lambda = 0.5;   // weight of the feature-driven demand component
    double exponent = 2.0; // p in (1 - v_k)^p
    double noise_sd = 1.0;
    // historical price policy: uniform over [policy_lo, policy_hi]^K.
    // A strict sub-box of [0,1] leaves high prices unobserved, which is
    // what makes the robust comparison meaningful.
    double policy_lo = 0.1;
    double policy_hi = 0.6;
};

struct AssortmentParams {
    int products = 5; // K
    double alpha_lo = 3.0, alpha_hi = 6.0;  // base demand range
    double beta_scale = 0.15;               // cross-product effect scale
    double noise_sd = 0.5;
    double capacity = 0.0;   // 0 -> default 1.2 * sum(alpha)
    double v_max = 0.0;      // 0 -> default 2 * alpha_hi
    double shrink_prob = 0.4;   // chance the store owner under-orders an item
    double shrink_factor = 0.5; // how much smaller that order is
};

struct SchedulingParams {
    int horizon = 24;
    double level_lo = 1.0, level_hi = 2.0; // daily base load range
    double amp_lo = 0.3, amp_hi = 0.8;     // sinusoidal amplitude range
    double noise_step_sd = 0.04; // random-walk innovation: error sd grows as sqrt(hour)
    double policy_noise_sd = 0.1; // historical schedule = mean profile + noise
};

inline Scenario make_pricing_scenario(const PricingParams& prm, std::uint64_t seed) {
    if (prm.d < 1 || prm.items < 1 || prm.lambda < 0.0 || prm.exponent < 1.0 ||
        prm.noise_sd < 0.0 || !(prm.policy_lo <= prm.policy_hi) ||
        prm.policy_lo < 0.0 || prm.policy_hi > 1.0)
        throw std::invalid_argument("make_pricing_scenario: invalid parameters");

    // B is d x K with entries ~ N(0, 1/d); drawn once from the scenario seed.
    Rng rb = Rng(seed).split(0);
    std::vector<Vec> B(prm.items, Vec(prm.d));
    for (int k = 0; k < prm.items; ++k)
        for (int i = 0; i < prm.d; ++i)
            B[k][i] = rb.normal(0.0, 1.0 / std::sqrt(static_cast<double>(prm.d)));

    Scenario sc;
    sc.dims = {prm.d, prm.items, prm.items};
    sc.sample_x = [d = prm.d](Rng& rng) {
        Vec x(d);
        for (auto& xi : x) xi = rng.normal();
        return x;
    };
    sc.sample_v = [prm](const std::vector<Record>&, Rng& rng) {
        Vec v(prm.items);
        for (auto& vk : v) vk = rng.uniform(prm.policy_lo, prm.policy_hi);
        return v;
    };
    sc.mean_z = [B, prm](const Vec& x, const Vec& v) {
        Vec z(prm.items);
        for (int k = 0; k < prm.items; ++k) {
            const double bx = dot(B[k], x);
            z[k] = prm.lambda * bx * bx + std::pow(1.0 - v[k], prm.exponent);
        }
        return z;
    };
    sc.sample_z = [mean = sc.mean_z, sd = prm.noise_sd](const Vec& x, const Vec& v,
                                                        Rng& rng) {
        Vec z = mean(x, v);
        for (auto& zk : z) zk += rng.normal(0.0, sd);
        return z;
    };
    sc.params = {{"kind", "pricing"},       {"d", prm.d},
                 {"items", prm.items},      {"lambda", prm.lambda},
                 {"exponent", prm.exponent},{"noise_sd", prm.noise_sd},
                 {"policy_lo", prm.policy_lo}, {"policy_hi", prm.policy_hi},
                 {"seed", seed}};
    return sc;
}

inline DecisionSpace pricing_decision_space(const PricingParams& prm) {
    return DecisionSpace::box(Vec(prm.items, 0.0), Vec(prm.items, 1.0));
}

inline Scenario make_assortment_scenario(const AssortmentParams& prm,
                                         std::uint64_t seed) {
    if (prm.products < 1 || prm.noise_sd < 0.0 || prm.shrink_prob < 0.0 ||
        prm.shrink_prob > 1.0 || prm.shrink_factor < 0.0 || prm.shrink_factor > 1.0)
        throw std::invalid_argument("make_assortment_scenario: invalid parameters");

    const int K = prm.products;
    Rng rs = Rng(seed).split(0);
    Vec alpha(K);
    for (auto& a : alpha) a = rs.uniform(prm.alpha_lo, prm.alpha_hi);
    // pairwise effects beta[k][j], j != k; uniform in +-beta_scale
    std::vector<Vec> beta(K, Vec(K, 0.0));
    for (int k = 0; k < K; ++k)
        for (int j = 0; j < K; ++j)
            if (j != k) beta[k][j] = rs.uniform(-prm.beta_scale, prm.beta_scale);
    // the store owner's habitual order: base demand, lightly perturbed
    Vec target(K);
    for (int k = 0; k < K; ++k) target[k] = alpha[k] * rs.uniform(0.9, 1.1);

    const double v_max = prm.v_max > 0.0 ? prm.v_max : 2.0 * prm.alpha_hi;
    const double cap = prm.capacity > 0.0
                           ? prm.capacity
                           : 1.2 * std::accumulate(alpha.begin(), alpha.end(), 0.0);

    Scenario sc;
    sc.dims = {0, K, K};
    sc.sample_x = [](Rng&) { return Vec{}; };
    sc.sample_v = [target, prm](const std::vector<Record>&, Rng& rng) {
        Vec v = target;
        for (auto& vk : v)
            if (rng.uniform() < prm.shrink_prob) vk *= prm.shrink_factor;
        return v;
    };
    sc.mean_z = [alpha, beta, K](const Vec&, const Vec& v) {
        Vec z(K);
        for (int k = 0; k < K; ++k) {
            double m = alpha[k];
            for (int j = 0; j < K; ++j) m += beta[k][j] * v[j];
            z[k] = std::max(m, 0.0); // demand cannot be negative
        }
        return z;
    };
    sc.sample_z = [alpha, beta, K, sd = prm.noise_sd](const Vec&, const Vec& v,
                                                      Rng& rng) {
        Vec z(K);
        for (int k = 0; k < K; ++k) {
            double m = alpha[k];
            for (int j = 0; j < K; ++j) m += beta[k][j] * v[j];
            z[k] = std::max(m + rng.normal(0.0, sd), 0.0);
        }
        return z;
    };
    sc.params = {{"kind", "assortment"},   {"products", K},
                 {"alpha", alpha},         {"beta_scale", prm.beta_scale},
                 {"noise_sd", prm.noise_sd},{"capacity", cap},
                 {"v_max", v_max},         {"shrink_prob", prm.shrink_prob},
                 {"shrink_factor", prm.shrink_factor}, {"seed", seed},
                 {"target", target}};
    return sc;
}

/// Note: with truncation at 0 the sampler mean exceeds the untruncated
/// affine mean whenever the noise can cross 0. mean_z matches the sampler
/// only when base demands stay well above noise_sd * a few; the default
/// parameters keep that margin.
inline DecisionSpace assortment_decision_space(const Scenario& sc) {
    const int K = sc.params.at("products").get<int>();
    const double v_max = sc.params.at("v_max").get<double>();
    const double cap = sc.params.at("capacity").get<double>();
    return DecisionSpace::box_with_capacity(Vec(K, 0.0), Vec(K, v_max), cap);
}

inline Scenario make_scheduling_scenario(const SchedulingParams& prm,
                                         std::uint64_t seed) {
    if (prm.horizon < 2 || prm.noise_step_sd < 0.0)
        throw std::invalid_argument("make_scheduling_scenario: invalid parameters");
    const int H = prm.horizon;

    // features: (level, amplitude, phase in hours, weekend flag)
    Scenario sc;
    sc.dims = {4, H, H};
    sc.sample_x = [prm](Rng& rng) {
        return Vec{rng.uniform(prm.level_lo, prm.level_hi),
                   rng.uniform(prm.amp_lo, prm.amp_hi),
                   rng.uniform(0.0, 6.0),
                   rng.uniform() < 2.0 / 7.0 ? 1.0 : 0.0};
    };
    auto profile = [H](const Vec& x) {
        Vec m(H);
        for (int i = 0; i < H; ++i) {
            const double t = 2.0 * 3.14159265358979323846 *
                             (static_cast<double>(i) - x[2]) / static_cast<double>(H);
            m[i] = x[0] + x[1] * std::sin(t) - 0.15 * x[3];
        }
        return m;
    };
    sc.mean_z = [profile](const Vec& x, const Vec&) { return profile(x); };
    sc.sample_z = [profile, sd = prm.noise_step_sd](const Vec& x, const Vec&,
                                                    Rng& rng) {
        Vec z = profile(x);
        double walk = 0.0;
        for (auto& zi : z) {
            walk += rng.normal(0.0, sd); // error variance grows with lead time
            zi += walk;
        }
        return z;
    };
    sc.sample_v = [profile, prm](const std::vector<Record>& history, Rng& rng) {
        // historical schedule: the planner reuses yesterday's profile with
        // noise; depends only on the history per the data-generation model
        const Vec x_prev = history.empty()
                               ? Vec{0.5 * (prm.level_lo + prm.level_hi),
                                     0.5 * (prm.amp_lo + prm.amp_hi), 0.0, 0.0}
                               : history.back().x;
        Vec m = profile(x_prev);
        for (auto& mi : m) mi += rng.normal(0.0, prm.policy_noise_sd);
        return m;
    };
    sc.params = {{"kind", "scheduling"},
                 {"horizon", H},
                 {"level_lo", prm.level_lo},
                 {"level_hi", prm.level_hi},
                 {"amp_lo", prm.amp_lo},
                 {"amp_hi", prm.amp_hi},
                 {"noise_step_sd", prm.noise_step_sd},
                 {"policy_noise_sd", prm.policy_noise_sd},
                 {"seed", seed}};
    return sc;
}

/// Dispatch by kind string with parameters from JSON; unknown keys are
/// rejected-by-omission (defaults apply).
inline Scenario make_scenario(const std::string& kind, const json& params,
                              std::uint64_t seed) {
    if (kind == "pricing") {
        PricingParams p;
        p.d = params.value("d", p.d);
        p.items = params.value("items", p.items);
        p.lambda = params.value("lambda", p.lambda);
        p.exponent = params.value("exponent", p.exponent);
        p.noise_sd = params.value("noise_sd", p.noise_sd);
        p.policy_lo = params.value("policy_lo", p.policy_lo);
        p.policy_hi = params.value("policy_hi", p.policy_hi);
        return make_pricing_scenario(p, seed);
    }
    if (kind == "assortment") {
        AssortmentParams p;
        p.products = params.value("products", p.products);
        p.alpha_lo = params.value("alpha_lo", p.alpha_lo);
        p.alpha_hi = params.value("alpha_hi", p.alpha_hi);
        p.beta_scale = params.value("beta_scale", p.beta_scale);
        p.noise_sd = params.value("noise_sd", p.noise_sd);
        p.capacity = params.value("capacity", p.capacity);
        p.v_max = params.value("v_max", p.v_max);
        p.shrink_prob = params.value("shrink_prob", p.shrink_prob);
        p.shrink_factor = params.value("shrink_factor", p.shrink_factor);
        return make_assortment_scenario(p, seed);
    }
    if (kind == "scheduling") {
        SchedulingParams p;
        p.horizon = params.value("horizon", p.horizon);
        p.level_lo = params.value("level_lo", p.level_lo);
        p.level_hi = params.value("level_hi", p.level_hi);
        p.amp_lo = params.value("amp_lo", p.amp_lo);
        p.amp_hi = params.value("amp_hi", p.amp_hi);
        p.noise_step_sd = params.value("noise_step_sd", p.noise_step_sd);
        p.policy_noise_sd = params.value("policy_noise_sd", p.policy_noise_sd);
        return make_scheduling_scenario(p, seed);
    }
    throw std::invalid_argument("make_scenario: unknown kind " + kind);
}

/// Monte-Carlo evaluation of a decision policy against the true
/// conditional distribution. For each of n_points fresh features, the
/// policy proposes a decision and we average the cost of n_samples
/// conditional draws. Per-point generator streams are derived from the
/// point index, so results do not depend on worker count.
struct OracleEvalResult {
    double mean_cost = 0.0;
    double median_cost = 0.0;
    double standard_error = 0.0;
    Vec per_point_cost;          // MC mean per evaluation point
    Vec per_point_se;
    std::vector<Vec> decisions;
};

template <typename Policy> // Vec policy(const Vec& x)
OracleEvalResult oracle_eval(const Scenario& sc, const CostSpec& cs,
                             Policy&& policy, int n_points, int n_samples,
                             std::uint64_t seed, int threads = 1) {
    if (n_points < 1 || n_samples < 1)
        throw std::invalid_argument("oracle_eval: counts must be >= 1");
    const Rng root(seed);
    OracleEvalResult res;
    res.per_point_cost.assign(n_points, 0.0);
    res.per_point_se.assign(n_points, 0.0);
    res.decisions.assign(n_points, Vec{});
    parallel_for(n_points, threads, [&](std::size_t i) {
        Rng rx = root.split(2 * i);
        Rng rz = root.split(2 * i + 1);
        const Vec x = sc.sample_x(rx);
        const Vec v = policy(x);
        // accumulate deviations from the first draw: exact in the
        // zero-noise case and better conditioned in general
        double c0 = 0.0, sum_d = 0.0, sum_d2 = 0.0;
        for (int s = 0; s < n_samples; ++s) {
            const Vec z = sc.sample_z(x, v, rz);
            const double c = cost(cs, v, z);
            if (s == 0) c0 = c;
            const double d = c - c0;
            sum_d += d;
            sum_d2 += d * d;
        }
        const double md = sum_d / n_samples;
        res.per_point_cost[i] = c0 + md;
        if (n_samples > 1) {
            const double var =
                std::max(0.0, (sum_d2 - n_samples * md * md) / (n_samples - 1));
            res.per_point_se[i] = std::sqrt(var / n_samples);
        }
        res.decisions[i] = v;
    });
    res.mean_cost = mean_of(res.per_point_cost);
    res.median_cost = median_of(res.per_point_cost);
    res.standard_error = standard_error_of(res.per_point_cost);
    return res;
}

} // namespace endo
