// Parameterized forecasters f_theta(x, v) with analytic gradients.
// Exactly two architectures are supported: a linear map on concat(x, v)
// and a one-hidden-layer network (relu or softplus, optional linear skip
// from input to output). Parameters live in one flat vector so training,
// perturbation, and norm projection stay uniform.

#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "endo/rng.hpp"
#include "endo/vecmath.hpp"

namespace endo {

using json = nlohmann::json;

enum class Activation { relu, softplus };

struct ModelSpec {
    enum class Arch { linear, mlp1 };

    Arch arch = Arch::linear;
    int d_x = 0;
    int d_v = 0;
    int d_z = 1;
    int hidden = 0;                       // mlp1 only
    Activation act = Activation::relu;    // mlp1 only
    bool residual = false;                // mlp1: linear skip input->output
    std::optional<double> norm_bound;     // ||theta||_2 <= norm_bound

    int input_dim() const { return d_x + d_v; }

    int param_count() const {
        const int din = input_dim();
        switch (arch) {
        case Arch::linear:
            return d_z * din + d_z;
        case Arch::mlp1: {
            int n = hidden * din + hidden + d_z * hidden + d_z;
            if (residual) n += d_z * din;
            return n;
        }
        }
        return 0;
    }

    void validate() const {
        if (d_x < 0 || d_v < 0 || d_z < 1)
            throw std::invalid_argument("ModelSpec: bad dims");
        if (input_dim() < 1)
            throw std::invalid_argument("ModelSpec: needs at least one input");
        if (arch == Arch::mlp1 && hidden < 1)
            throw std::invalid_argument("ModelSpec: mlp1 needs hidden >= 1");
        if (norm_bound && *norm_bound <= 0.0)
            throw std::invalid_argument("ModelSpec: norm_bound must be > 0");
    }
};

/// Flat parameter vector. Layout:
///   linear: A (d_z x din, row-major), b (d_z)
///   mlp1:   W1 (h x din), b1 (h), W2 (d_z x h), b2 (d_z)[, S (d_z x din)]
struct ModelParams {
    Vec theta;
};

struct ModelGrads {
    Vec d_theta;
    Vec d_x;
    Vec d_v;
};

namespace detail {

inline double softplus(double t) {
    if (t > 30.0) return t;
    if (t < -30.0) return std::exp(t);
    return std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
    if (t >= 0) {
        const double e = std::exp(-t);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

inline void check_model_inputs(const ModelSpec& spec, const ModelParams& p,
                               const Vec& x, const Vec& v) {
    if (static_cast<int>(p.theta.size()) != spec.param_count())
        throw std::invalid_argument("model: parameter vector has wrong length");
    if (static_cast<int>(x.size()) != spec.d_x ||
        static_cast<int>(v.size()) != spec.d_v)
        throw std::invalid_argument("model: input dimension mismatch");
}

} // namespace detail

/// Project theta onto the norm ball when the spec bounds it; no-op inside.
inline void project_params(const ModelSpec& spec, ModelParams& p) {
    if (!spec.norm_bound) return;
    const double n = norm2(p.theta);
    if (n > *spec.norm_bound) scale(p.theta, *spec.norm_bound / n);
}

/// Conventional init: weights ~ N(0, 1/fan_in), biases 0.
inline ModelParams init_params(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    ModelParams p;
    p.theta.assign(spec.param_count(), 0.0);
    const int din = spec.input_dim();
    auto fill = [&](int offset, int count, int fan_in) {
        const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int i = 0; i < count; ++i) p.theta[offset + i] = rng.normal(0.0, sd);
    };
    if (spec.arch == ModelSpec::Arch::linear) {
        fill(0, spec.d_z * din, din);
    } else {
        const int h = spec.hidden;
        fill(0, h * din, din);
        fill(h * din + h, spec.d_z * h, h);
        if (spec.residual) fill(h * din + h + spec.d_z * h + spec.d_z, spec.d_z * din, din);
    }
    project_params(spec, p);
    return p;
}

/// zhat = f_theta(x, v)
inline Vec forward(const ModelSpec& spec, const ModelParams& p, const Vec& x,
                   const Vec& v) {
    detail::check_model_inputs(spec, p, x, v);
    const Vec u = concat(x, v);
    const int din = spec.input_dim();
    Vec out(spec.d_z, 0.0);
    if (spec.arch == ModelSpec::Arch::linear) {
        const double* A = p.theta.data();
        const double* b = A + spec.d_z * din;
        for (int k = 0; k < spec.d_z; ++k) {
            double s = b[k];
            const double* row = A + k * din;
            for (int i = 0; i < din; ++i) s += row[i] * u[i];
            out[k] = s;
        }
        return out;
    }
    const int h = spec.hidden;
    const double* W1 = p.theta.data();
    const double* b1 = W1 + h * din;
    const double* W2 = b1 + h;
    const double* b2 = W2 + spec.d_z * h;
    const double* S = spec.residual ? b2 + spec.d_z : nullptr;
    Vec a(h);
    for (int j = 0; j < h; ++j) {
        double t = b1[j];
        const double* row = W1 + j * din;
        for (int i = 0; i < din; ++i) t += row[i] * u[i];
        a[j] = (spec.act == Activation::relu) ? std::max(t, 0.0)
                                              : detail::softplus(t);
    }
    for (int k = 0; k < spec.d_z; ++k) {
        double s = b2[k];
        const double* row = W2 + k * h;
        for (int j = 0; j < h; ++j) s += row[j] * a[j];
        if (S) {
            const double* srow = S + k * din;
            for (int i = 0; i < din; ++i) s += srow[i] * u[i];
        }
        out[k] = s;
    }
    return out;
}

/// Full backward pass. upstream is dLoss/dzhat (length d_z); returns
/// dLoss/dtheta plus dLoss/dx and dLoss/dv for composed objectives.
/// relu uses subgradient 0 at the kink.
inline ModelGrads backward(const ModelSpec& spec, const ModelParams& p,
                           const Vec& x, const Vec& v, const Vec& upstream) {
    detail::check_model_inputs(spec, p, x, v);
    if (static_cast<int>(upstream.size()) != spec.d_z)
        throw std::invalid_argument("backward: upstream length != d_z");
    const Vec u = concat(x, v);
    const int din = spec.input_dim();
    ModelGrads g;
    g.d_theta.assign(p.theta.size(), 0.0);
    Vec du(din, 0.0);

    if (spec.arch == ModelSpec::Arch::linear) {
        double* dA = g.d_theta.data();
        double* db = dA + spec.d_z * din;
        const double* A = p.theta.data();
        for (int k = 0; k < spec.d_z; ++k) {
            const double gk = upstream[k];
            if (gk == 0.0) continue;
            double* drow = dA + k * din;
            const double* row = A + k * din;
            for (int i = 0; i < din; ++i) {
                drow[i] += gk * u[i];
                du[i] += gk * row[i];
            }
            db[k] += gk;
        }
    } else {
        const int h = spec.hidden;
        const double* W1 = p.theta.data();
        const double* b1 = W1 + h * din;
        const double* W2 = b1 + h;
        const double* b2 = W2 + spec.d_z * h;
        const double* S = spec.residual ? b2 + spec.d_z : nullptr;
        double* dW1 = g.d_theta.data();
        double* db1 = dW1 + h * din;
        double* dW2 = db1 + h;
        double* db2 = dW2 + spec.d_z * h;
        double* dS = spec.residual ? db2 + spec.d_z : nullptr;

        Vec pre(h), a(h);
        for (int j = 0; j < h; ++j) {
            double t = b1[j];
            const double* row = W1 + j * din;
            for (int i = 0; i < din; ++i) t += row[i] * u[i];
            pre[j] = t;
            a[j] = (spec.act == Activation::relu) ? std::max(t, 0.0)
                                                  : detail::softplus(t);
        }
        Vec da(h, 0.0);
        for (int k = 0; k < spec.d_z; ++k) {
            const double gk = upstream[k];
            if (gk == 0.0) continue;
            db2[k] += gk;
            double* drow = dW2 + k * h;
            const double* row = W2 + k * h;
            for (int j = 0; j < h; ++j) {
                drow[j] += gk * a[j];
                da[j] += gk * row[j];
            }
            if (S) {
                double* dsrow = dS + k * din;
                const double* srow = S + k * din;
                for (int i = 0; i < din; ++i) {
                    dsrow[i] += gk * u[i];
                    du[i] += gk * srow[i];
                }
            }
        }
        for (int j = 0; j < h; ++j) {
            const double actp = (spec.act == Activation::relu)
                                    ? (pre[j] > 0.0 ? 1.0 : 0.0)
                                    : detail::sigmoid(pre[j]);
            const double dt = da[j] * actp;
            if (dt == 0.0) continue;
            db1[j] += dt;
            double* drow = dW1 + j * din;
            const double* row = W1 + j * din;
            for (int i = 0; i < din; ++i) {
                drow[i] += dt * u[i];
                du[i] += dt * row[i];
            }
        }
    }
    g.d_x.assign(du.begin(), du.begin() + spec.d_x);
    g.d_v.assign(du.begin() + spec.d_x, du.end());
    return g;
}

/// theta' = theta + N(0, sigma^2 I), projected back into the norm ball.
inline ModelParams perturb(const ModelSpec& spec, const ModelParams& p,
                           double sigma, Rng& rng) {
    if (sigma < 0.0) throw std::invalid_argument("perturb: sigma must be >= 0");
    ModelParams out = p;
    if (sigma > 0.0)
        for (auto& t : out.theta) t += rng.normal(0.0, sigma);
    project_params(spec, out);
    return out;
}

// --- checkpoint serialization -------------------------------------------

inline void to_json(json& j, const ModelSpec& s) {
    j = json{{"arch", s.arch == ModelSpec::Arch::linear ? "linear" : "mlp1"},
             {"d_x", s.d_x},
             {"d_v", s.d_v},
             {"d_z", s.d_z}};
    if (s.arch == ModelSpec::Arch::mlp1) {
        j["hidden"] = s.hidden;
        j["activation"] = s.act == Activation::relu ? "relu" : "softplus";
        j["residual"] = s.residual;
    }
    if (s.norm_bound) j["norm_bound"] = *s.norm_bound;
}

inline void from_json(const json& j, ModelSpec& s) {
    const std::string arch = j.at("arch").get<std::string>();
    if (arch == "linear") s.arch = ModelSpec::Arch::linear;
    else if (arch == "mlp1") s.arch = ModelSpec::Arch::mlp1;
    else throw std::invalid_argument("ModelSpec: unknown arch " + arch);
    j.at("d_x").get_to(s.d_x);
    j.at("d_v").get_to(s.d_v);
    j.at("d_z").get_to(s.d_z);
    s.hidden = j.value("hidden", 0);
    const std::string act = j.value("activation", "relu");
    s.act = act == "softplus" ? Activation::softplus : Activation::relu;
    s.residual = j.value("residual", false);
    if (j.contains("norm_bound")) s.norm_bound = j["norm_bound"].get<double>();
    s.validate();
}

} // namespace endo
