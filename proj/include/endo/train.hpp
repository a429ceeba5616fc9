// Task-loss training and decision-making. The task loss of a forecaster
// is the squared gap between predicted and realized cost on historical
// decisions; minimizing it aligns the model with the downstream
// objective instead of the mean of z. Non-convexity is handled by
// perturbation sampling around the mean-squared-error fit, optionally
// refined chunk by chunk as data accumulates.

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "endo/core.hpp"
#include "endo/costs.hpp"
#include "endo/models.hpp"
#include "endo/rng.hpp"
#include "endo/vecmath.hpp"

namespace endo {

struct TrainingDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    double lr = 0.05;
    int epochs = 300;
    int batch_size = 0;          // 0 = full batch
    int samples = 8;             // S perturbation samples
    double perturb_sigma = -1.0; // < 0: auto 0.1 * (1 + ||theta||/sqrt(dim))
    int chunk_size = 0;          // D for iterative learning; 0 = whole dataset
    std::uint64_t seed = 0;
    double grad_clip = 10.0;     // <= 0 disables clipping
    int threads = 1;
    int sample_epochs = 0;       // epochs per perturbation sample; 0 = epochs
};

struct TrainedModel {
    ModelSpec spec;
    ModelParams params;
    std::string method;
    // sum-form task loss (the budget quantity); NaN where not applicable
    double final_task_loss = std::numeric_limits<double>::quiet_NaN();
    // mean squared prediction error in z; NaN where not applicable
    double final_mse = std::numeric_limits<double>::quiet_NaN();

    Vec predict(const Vec& x, const Vec& v) const {
        return forward(spec, params, x, v);
    }
    Vec input_gradient(const Vec& x, const Vec& v, const Vec& upstream) const {
        return backward(spec, params, x, v, upstream).d_v;
    }
};

// --- task loss -------------------------------------------------------------

/// Sum-form task loss: sum_n (c(v_n, f(x_n, v_n)) - c(v_n, z_n))^2.
/// This is the form uncertainty-set budgets are stated in.
inline double task_loss_sum(const ModelSpec& spec, const ModelParams& params,
                            const CostSpec& cs, const Dataset& ds) {
    if (ds.empty()) throw std::invalid_argument("task_loss: empty dataset");
    double total = 0.0;
    for (const Record& rec : ds) {
        const Vec zhat = forward(spec, params, rec.x, rec.v);
        const double r = cost(cs, rec.v, zhat) - cost(cs, rec.v, rec.z);
        total += r * r;
    }
    return total;
}

/// Mean-form task loss, for comparisons across dataset sizes.
inline double task_loss_mean(const ModelSpec& spec, const ModelParams& params,
                             const CostSpec& cs, const Dataset& ds) {
    return task_loss_sum(spec, params, cs, ds) / static_cast<double>(ds.size());
}

inline double task_loss_sum(const TrainedModel& m, const CostSpec& cs,
                            const Dataset& ds) {
    return task_loss_sum(m.spec, m.params, cs, ds);
}

inline double task_loss_mean(const TrainedModel& m, const CostSpec& cs,
                             const Dataset& ds) {
    return task_loss_mean(m.spec, m.params, cs, ds);
}

/// Mean squared error sum_n ||f - z||^2 / N.
inline double mse_mean(const ModelSpec& spec, const ModelParams& params,
                       const Dataset& ds) {
    if (ds.empty()) throw std::invalid_argument("mse: empty dataset");
    double total = 0.0;
    for (const Record& rec : ds) {
        const Vec zhat = forward(spec, params, rec.x, rec.v);
        for (std::size_t k = 0; k < zhat.size(); ++k) {
            const double d = zhat[k] - rec.z[k];
            total += d * d;
        }
    }
    return total / static_cast<double>(ds.size());
}

// --- gradient descent cores -------------------------------------------------

namespace detail {

inline void check_divergence(double loss, double loss0, double lr,
                             const char* what) {
    if (!std::isfinite(loss) || loss > 1e12 * (1.0 + std::abs(loss0))) {
        throw TrainingDivergence(std::string(what) +
                                 " diverged at learning rate " +
                                 std::to_string(lr));
    }
}

/// One pass of batched gradient descent. upstream_fn(rec) must return
/// dLoss_n/dzhat for the current params at that record; gradients are
/// averaged over the batch, clipped, and applied with constant lr.
template <typename UpstreamFn>
void gd_epoch(const ModelSpec& spec, ModelParams& params, const Dataset& ds,
              const TrainConfig& cfg, UpstreamFn&& upstream_fn) {
    const int n = static_cast<int>(ds.size());
    const int bs = cfg.batch_size > 0 ? std::min(cfg.batch_size, n) : n;
    for (int start = 0; start < n; start += bs) {
        const int stop = std::min(start + bs, n);
        Vec grad(params.theta.size(), 0.0);
        for (int i = start; i < stop; ++i) {
            const Record& rec = ds[static_cast<std::size_t>(i)];
            const Vec up = upstream_fn(rec, params);
            const ModelGrads g = backward(spec, params, rec.x, rec.v, up);
            axpy(1.0, g.d_theta, grad);
        }
        scale(grad, 1.0 / static_cast<double>(stop - start));
        if (cfg.grad_clip > 0.0) clip_norm(grad, cfg.grad_clip);
        axpy(-cfg.lr, grad, params.theta);
        project_params(spec, params);
    }
}

/// Task-loss descent that returns the best iterate seen. Because the
/// starting point is always a candidate, the result never has higher
/// in-sample task loss than its initializer.
inline std::pair<ModelParams, double> descend_task_loss(
    const ModelSpec& spec, ModelParams params, const CostSpec& cs,
    const Dataset& ds, const TrainConfig& cfg, int epochs) {
    double best_loss = task_loss_sum(spec, params, cs, ds);
    ModelParams best = params;
    const double loss0 = best_loss;
    for (int e = 0; e < epochs; ++e) {
        gd_epoch(spec, params, ds, cfg,
                 [&](const Record& rec, const ModelParams& p) {
                     const Vec zhat = forward(spec, p, rec.x, rec.v);
                     const double resid =
                         cost(cs, rec.v, zhat) - cost(cs, rec.v, rec.z);
                     Vec up = subgrad_z(cs, rec.v, zhat);
                     scale(up, 2.0 * resid);
                     return up;
                 });
        const double loss = task_loss_sum(spec, params, cs, ds);
        check_divergence(loss, loss0, cfg.lr, "task-loss descent");
        if (loss < best_loss) {
            best_loss = loss;
            best = params;
        }
    }
    return {std::move(best), best_loss};
}

} // namespace detail

// --- trainers ----------------------------------------------------------------

/// Mean-squared-error fit of z (the predict-then-optimize baseline).
inline TrainedModel train_two_stage(const ModelSpec& spec, const Dataset& ds,
                                    const TrainConfig& cfg) {
    spec.validate();
    if (ds.empty()) throw std::invalid_argument("train_two_stage: empty dataset");
    if (cfg.lr <= 0.0) throw std::invalid_argument("train_two_stage: lr must be > 0");
    Rng rng(cfg.seed);
    ModelParams params = init_params(spec, rng);
    const double loss0 = mse_mean(spec, params, ds);
    double best_loss = loss0;
    ModelParams best = params;
    for (int e = 0; e < cfg.epochs; ++e) {
        detail::gd_epoch(spec, params, ds, cfg,
                         [&](const Record& rec, const ModelParams& p) {
                             Vec up = forward(spec, p, rec.x, rec.v);
                             axpy(-1.0, rec.z, up);
                             scale(up, 2.0);
                             return up;
                         });
        const double loss = mse_mean(spec, params, ds);
        detail::check_divergence(loss, loss0, cfg.lr, "mean-squared-error fit");
        if (loss < best_loss) {
            best_loss = loss;
            best = params;
        }
    }
    TrainedModel out{spec, std::move(best), "two_stage"};
    out.final_mse = best_loss;
    return out;
}

namespace detail {

inline double auto_sigma(const ModelParams& center, double requested) {
    if (requested >= 0.0) return requested;
    return 0.1 * (1.0 + norm2(center.theta) /
                            std::sqrt(static_cast<double>(center.theta.size())));
}

/// Shared core of the sampling trainers: from a center model, spawn S
/// perturbed task-loss descents plus the untouched center as candidate 0
/// and keep the best in-sample loss (ties -> lowest sample index).
inline std::pair<ModelParams, double> sample_and_descend(
    const ModelSpec& spec, const ModelParams& center, const CostSpec& cs,
    const Dataset& ds, const TrainConfig& cfg, std::uint64_t chunk_index) {
    const int S = std::max(cfg.samples, 1);
    const int epochs = cfg.sample_epochs > 0 ? cfg.sample_epochs : cfg.epochs;
    const double sigma = auto_sigma(center, cfg.perturb_sigma);
    const Rng root = Rng(cfg.seed).split(0x5A17 + chunk_index);

    std::vector<std::pair<ModelParams, double>> results(S + 1);
    results[0] = {center, task_loss_sum(spec, center, cs, ds)};
    parallel_for(static_cast<std::size_t>(S), cfg.threads, [&](std::size_t i) {
        const int s = static_cast<int>(i) + 1;
        Rng rs = root.split(static_cast<std::uint64_t>(s));
        const ModelParams start = perturb(spec, center, sigma, rs);
        results[s] = descend_task_loss(spec, start, cs, ds, cfg, epochs);
    });
    std::size_t win = 0;
    for (std::size_t s = 1; s < results.size(); ++s)
        if (results[s].second < results[win].second) win = s;
    return results[win];
}

} // namespace detail

/// Perturb-the-MSE-fit sampling trainer: two-stage fit, S Gaussian
/// perturbations of its weights, task-loss descent from each, best
/// in-sample task loss wins. The two-stage model itself is candidate 0,
/// so the result never loses to it.
inline TrainedModel train_e2e_sampled(const ModelSpec& spec, const CostSpec& cs,
                                      const Dataset& ds, const TrainConfig& cfg) {
    const TrainedModel ts = train_two_stage(spec, ds, cfg);
    auto [params, loss] = detail::sample_and_descend(spec, ts.params, cs, ds, cfg, 1);
    TrainedModel out{spec, std::move(params), "e2e_sampled"};
    out.final_task_loss = loss;
    out.final_mse = mse_mean(spec, out.params, ds);
    return out;
}

/// Iterative variant: train on growing prefixes of D, 2D, ... records,
/// warm-starting each chunk from the previous winner with S fresh
/// perturbations. With chunk_size = N this reduces to train_e2e_sampled.
inline TrainedModel train_e2e_iterative(const ModelSpec& spec, const CostSpec& cs,
                                        const Dataset& ds, const TrainConfig& cfg) {
    const int n = static_cast<int>(ds.size());
    const int d = cfg.chunk_size > 0 ? cfg.chunk_size : n;
    if (d > n)
        throw std::invalid_argument("train_e2e_iterative: chunk_size exceeds dataset");
    ModelParams current;
    double loss = 0.0;
    bool first = true;
    for (int stop = d, k = 1; ; stop += d, ++k) {
        stop = std::min(stop, n);
        const Dataset chunk = ds.prefix(static_cast<std::size_t>(stop));
        if (first) {
            current = train_two_stage(spec, chunk, cfg).params;
            first = false;
        }
        std::tie(current, loss) =
            detail::sample_and_descend(spec, current, cs, chunk, cfg,
                                       static_cast<std::uint64_t>(k));
        if (stop == n) break;
    }
    TrainedModel out{spec, std::move(current), "e2e_iterative"};
    out.final_task_loss = loss;
    out.final_mse = mse_mean(spec, out.params, ds);
    return out;
}

/// Direct reward regression r(x, v) ~= c(v, z); bypasses z entirely.
inline TrainedModel train_reward_learner(const ModelSpec& spec_r,
                                         const CostSpec& cs, const Dataset& ds,
                                         const TrainConfig& cfg) {
    spec_r.validate();
    if (spec_r.d_z != 1)
        throw std::invalid_argument("train_reward_learner: model must output a scalar");
    if (ds.empty()) throw std::invalid_argument("train_reward_learner: empty dataset");
    Rng rng(cfg.seed);
    ModelParams params = init_params(spec_r, rng);
    auto objective = [&](const ModelParams& p) {
        double total = 0.0;
        for (const Record& rec : ds) {
            const double r =
                forward(spec_r, p, rec.x, rec.v)[0] - cost(cs, rec.v, rec.z);
            total += r * r;
        }
        return total / static_cast<double>(ds.size());
    };
    const double loss0 = objective(params);
    double best_loss = loss0;
    ModelParams best = params;
    for (int e = 0; e < cfg.epochs; ++e) {
        detail::gd_epoch(spec_r, params, ds, cfg,
                         [&](const Record& rec, const ModelParams& p) {
                             const double r = forward(spec_r, p, rec.x, rec.v)[0] -
                                              cost(cs, rec.v, rec.z);
                             return Vec{2.0 * r};
                         });
        const double loss = objective(params);
        detail::check_divergence(loss, loss0, cfg.lr, "reward regression");
        if (loss < best_loss) {
            best_loss = loss;
            best = params;
        }
    }
    TrainedModel out{spec_r, std::move(best), "reward"};
    out.final_mse = best_loss;
    return out;
}

/// K-nearest-neighbor forecaster: mean z of the k closest training
/// points in concat(x, v) under Euclidean distance; ties broken by the
/// lowest record index.
class KnnPredictor {
public:
    KnnPredictor(int k, const Dataset& ds) : k_(k) {
        if (ds.empty()) throw std::invalid_argument("train_knn: empty dataset");
        if (k < 1 || k > static_cast<int>(ds.size()))
            throw std::invalid_argument("train_knn: need 1 <= k <= N");
        for (const Record& rec : ds) {
            inputs_.push_back(concat(rec.x, rec.v));
            targets_.push_back(rec.z);
        }
    }

    Vec predict(const Vec& x, const Vec& v) const {
        const Vec q = concat(x, v);
        std::vector<std::pair<double, std::size_t>> dist(inputs_.size());
        for (std::size_t i = 0; i < inputs_.size(); ++i) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < q.size(); ++j) {
                const double d = inputs_[i][j] - q[j];
                d2 += d * d;
            }
            dist[i] = {d2, i};
        }
        std::partial_sort(dist.begin(), dist.begin() + k_, dist.end());
        Vec out(targets_.front().size(), 0.0);
        for (int i = 0; i < k_; ++i) axpy(1.0, targets_[dist[i].second], out);
        scale(out, 1.0 / static_cast<double>(k_));
        return out;
    }

    int k() const { return k_; }

private:
    int k_;
    std::vector<Vec> inputs_;
    std::vector<Vec> targets_;
};

inline KnnPredictor train_knn(int k, const Dataset& ds) {
    return KnnPredictor(k, ds);
}

// --- decision-making ----------------------------------------------------------

struct DecideConfig {
    int restarts = 10;
    int steps = 500;
    double lr = 0.05;      // scaled by the box width internally
    int decay_every = 100; // lr *= 0.5 on this cadence
    std::uint64_t seed = 0;
};

struct Decision {
    Vec v;
    double value = 0.0;
};

namespace detail {

template <typename M>
Vec model_input_gradient(const M& m, const Vec& x, const Vec& v,
                         const Vec& upstream) {
    if constexpr (requires { m.input_gradient(x, v, upstream); }) {
        return m.input_gradient(x, v, upstream);
    } else {
        return Vec(v.size(), 0.0); // piecewise-constant predictors
    }
}

} // namespace detail

/// argmin_v c(v, f(x, v)). Finite spaces are enumerated exactly (ties ->
/// lowest index); boxes run projected subgradient descent from multiple
/// restarts with a halving step schedule.
template <typename M>
Decision decide(const M& model, const CostSpec& cs, const DecisionSpace& space,
                const Vec& x, const DecideConfig& cfg = {}) {
    auto objective = [&](const Vec& v) { return cost(cs, v, model.predict(x, v)); };

    if (space.kind == DecisionSpace::Kind::finite) {
        Decision best{space.choices.front(), objective(space.choices.front())};
        for (std::size_t i = 1; i < space.choices.size(); ++i) {
            const double val = objective(space.choices[i]);
            if (val < best.value) best = {space.choices[i], val};
        }
        return best;
    }

    const int d = space.dim();
    double width = 0.0;
    for (int k = 0; k < d; ++k) width = std::max(width, space.upper[k] - space.lower[k]);
    const Rng root(cfg.seed);
    Decision best;
    best.value = std::numeric_limits<double>::infinity();
    for (int r = 0; r < cfg.restarts; ++r) {
        Rng rr = root.split(static_cast<std::uint64_t>(r));
        Vec v(d);
        for (int k = 0; k < d; ++k)
            v[k] = rr.uniform(space.lower[k], space.upper[k]);
        v = space.project(std::move(v));
        double lr = cfg.lr * std::max(width, 1e-12);
        Vec best_v = v;
        double best_val = objective(v);
        for (int step = 0; step < cfg.steps; ++step) {
            if (step > 0 && step % cfg.decay_every == 0) lr *= 0.5;
            const Vec zhat = model.predict(x, v);
            Vec g = subgrad_v(cs, v, zhat);
            const Vec gz = subgrad_z(cs, v, zhat);
            const Vec gv_model = detail::model_input_gradient(model, x, v, gz);
            axpy(1.0, gv_model, g);
            axpy(-lr, g, v);
            v = space.project(std::move(v));
            const double val = objective(v);
            if (val < best_val) {
                best_val = val;
                best_v = v;
            }
        }
        if (best_val < best.value) best = {std::move(best_v), best_val};
    }
    return best;
}

/// argmin_v c(v, zhat) for a fixed point forecast (the exogenous
/// second-stage problem). Analytic where the structure allows it.
inline Decision decide_point(const CostSpec& cs, const DecisionSpace& space,
                             const Vec& zhat, const DecideConfig& cfg = {}) {
    if (space.kind == DecisionSpace::Kind::finite) {
        Decision best{space.choices.front(),
                      cost(cs, space.choices.front(), zhat)};
        for (std::size_t i = 1; i < space.choices.size(); ++i) {
            const double val = cost(cs, space.choices[i], zhat);
            if (val < best.value) best = {space.choices[i], val};
        }
        return best;
    }
    if (space.kind == DecisionSpace::Kind::box) {
        Vec v(zhat.size());
        if (cs.kind == CostSpec::Kind::pricing_revenue) {
            // minimize -v.z over the box: bang-bang per coordinate
            for (std::size_t k = 0; k < v.size(); ++k)
                v[k] = zhat[k] > 0.0 ? space.upper[k] : space.lower[k];
        } else {
            // shortage and excess are both penalized: match the forecast
            v = zhat;
            clip_inplace(v, space.lower, space.upper);
        }
        return {v, cost(cs, v, zhat)};
    }
    // capacity-coupled box: projected subgradient descent
    const int d = space.dim();
    const Rng root(cfg.seed);
    Decision best;
    best.value = std::numeric_limits<double>::infinity();
    for (int r = 0; r < cfg.restarts; ++r) {
        Rng rr = root.split(static_cast<std::uint64_t>(r));
        Vec v(d);
        for (int k = 0; k < d; ++k)
            v[k] = rr.uniform(space.lower[k], space.upper[k]);
        v = space.project(std::move(v));
        double width = 0.0;
        for (int k = 0; k < d; ++k)
            width = std::max(width, space.upper[k] - space.lower[k]);
        double lr = cfg.lr * std::max(width, 1e-12);
        Vec best_v = v;
        double best_val = cost(cs, v, zhat);
        for (int step = 0; step < cfg.steps; ++step) {
            if (step > 0 && step % cfg.decay_every == 0) lr *= 0.5;
            const Vec g = subgrad_v(cs, v, zhat);
            axpy(-lr, g, v);
            v = space.project(std::move(v));
            const double val = cost(cs, v, zhat);
            if (val < best_val) {
                best_val = val;
                best_v = v;
            }
        }
        if (best_val < best.value) best = {std::move(best_v), best_val};
    }
    return best;
}

/// Constructive point forecast: bisection along [z_lo, z_hi] for a zhat
/// with c(v, zhat) = target, to residual 1e-9. Requires the target to be
/// bracketed by the endpoint costs.
inline Vec prop1_forecast(const CostSpec& cs, const Vec& v, const Vec& z_lo,
                          const Vec& z_hi, double target) {
    const double c_lo = cost(cs, v, z_lo);
    const double c_hi = cost(cs, v, z_hi);
    if (!(c_lo <= target && target <= c_hi))
        throw std::invalid_argument(
            "prop1_forecast: target is not bracketed by c(v, z_lo) <= target <= c(v, z_hi)");
    auto at = [&](double t) {
        Vec z(z_lo.size());
        for (std::size_t k = 0; k < z.size(); ++k)
            z[k] = z_lo[k] + t * (z_hi[k] - z_lo[k]);
        return z;
    };
    double lo = 0.0, hi = 1.0;
    if (std::abs(c_lo - target) <= 1e-9) return at(0.0);
    if (std::abs(c_hi - target) <= 1e-9) return at(1.0);
    Vec z = at(0.5);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        z = at(mid);
        const double g = cost(cs, v, z) - target;
        if (std::abs(g) <= 1e-9) return z;
        (g < 0.0 ? lo : hi) = mid;
    }
    return z;
}

} // namespace endo
