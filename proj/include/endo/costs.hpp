// Objective functions c(v, z): value, subgradients in z and v, and the
// max-of-affine decomposition the exact solver consumes. All kinds are
// stored in minimize sense; pricing revenue is negated internally and
// reported positively at the CLI layer.
//
// The piecewise-linear kinds evaluate through the same per-coordinate
// affine pieces that pwl_decompose returns, so decomposition exactness
// holds to the last bit rather than up to rounding.

#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "endo/vecmath.hpp"

namespace endo {

using json = nlohmann::json;

struct CostSpec {
    enum class Kind { pricing_revenue, newsvendor, scheduling, partial_scheduling };

    Kind kind = Kind::newsvendor;
    double b = 0.5;        // newsvendor procurement cost, in (0,1)
    double gamma_s = 1.0;  // scheduling shortage cost
    double gamma_e = 1.0;  // scheduling excess cost
    int from_index = 0;    // partial_scheduling: first evaluated coordinate
    int to_index = -1;     // partial_scheduling: one past last (-1 = end)

    static CostSpec pricing() {
        CostSpec c;
        c.kind = Kind::pricing_revenue;
        return c;
    }

    static CostSpec newsvendor_cost(double b) {
        if (!(b > 0.0 && b < 1.0))
            throw std::invalid_argument("newsvendor: b must be in (0,1)");
        CostSpec c;
        c.kind = Kind::newsvendor;
        c.b = b;
        return c;
    }

    static CostSpec scheduling_cost(double gamma_s, double gamma_e) {
        if (gamma_s <= 0.0 || gamma_e <= 0.0)
            throw std::invalid_argument("scheduling: gammas must be > 0");
        CostSpec c;
        c.kind = Kind::scheduling;
        c.gamma_s = gamma_s;
        c.gamma_e = gamma_e;
        return c;
    }

    static CostSpec partial_scheduling_cost(double gamma_s, double gamma_e,
                                            int from_index, int to_index = -1) {
        CostSpec c = scheduling_cost(gamma_s, gamma_e);
        if (from_index < 0)
            throw std::invalid_argument("partial_scheduling: from_index < 0");
        c.kind = Kind::partial_scheduling;
        c.from_index = from_index;
        c.to_index = to_index;
        return c;
    }

    bool piecewise_linear() const { return kind != Kind::pricing_revenue; }
};

/// One affine piece in the coordinate pair (v_k, z_k):
/// value = az * z_k + bv * v_k + c0.
struct AffinePiece {
    double az = 0.0;
    double bv = 0.0;
    double c0 = 0.0;

    double eval(double vk, double zk) const { return az * zk + bv * vk + c0; }
};

/// Per-coordinate decomposition: cost(v, z) = sum_k max_j pieces[k][j].
/// All supported kinds are separable with the same piece pair at every
/// active coordinate; coordinates outside a partial range carry a single
/// zero piece.
struct PWLDecomposition {
    std::vector<std::vector<AffinePiece>> coords;

    int max_pieces() const {
        std::size_t m = 0;
        for (const auto& ps : coords) m = std::max(m, ps.size());
        return static_cast<int>(m);
    }

    double eval(const Vec& v, const Vec& z) const {
        double total = 0.0;
        for (std::size_t k = 0; k < coords.size(); ++k) {
            double best = coords[k].front().eval(v[k], z[k]);
            for (std::size_t j = 1; j < coords[k].size(); ++j)
                best = std::max(best, coords[k][j].eval(v[k], z[k]));
            total += best;
        }
        return total;
    }
};

namespace detail {

inline void check_cost_dims(const Vec& v, const Vec& z) {
    if (v.size() != z.size() || v.empty())
        throw std::invalid_argument("cost: v and z must be same nonempty length");
}

inline std::pair<int, int> active_range(const CostSpec& spec, std::size_t d) {
    int from = 0, to = static_cast<int>(d);
    if (spec.kind == CostSpec::Kind::partial_scheduling) {
        from = std::min<int>(spec.from_index, static_cast<int>(d));
        if (spec.to_index >= 0) to = std::min<int>(spec.to_index, static_cast<int>(d));
    }
    return {from, to};
}

inline std::vector<AffinePiece> coordinate_pieces(const CostSpec& spec) {
    switch (spec.kind) {
    case CostSpec::Kind::newsvendor:
        // max{z - v, 0} + b v  ==  max{z + (b-1) v, b v}
        return {{1.0, spec.b - 1.0, 0.0}, {0.0, spec.b, 0.0}};
    case CostSpec::Kind::scheduling:
    case CostSpec::Kind::partial_scheduling:
        // gs max{z-v,0} + ge max{v-z,0}  ==  max{gs z - gs v, -ge z + ge v}
        return {{spec.gamma_s, -spec.gamma_s, 0.0},
                {-spec.gamma_e, spec.gamma_e, 0.0}};
    case CostSpec::Kind::pricing_revenue:
        break;
    }
    throw std::invalid_argument("pwl_decompose: kind is not piecewise-linear");
}

} // namespace detail

inline double cost(const CostSpec& spec, const Vec& v, const Vec& z) {
    detail::check_cost_dims(v, z);
    if (spec.kind == CostSpec::Kind::pricing_revenue) {
        return -dot(v, z);
    }
    const auto pieces = detail::coordinate_pieces(spec);
    const auto [from, to] = detail::active_range(spec, v.size());
    double total = 0.0;
    for (int k = from; k < to; ++k) {
        double best = pieces[0].eval(v[k], z[k]);
        for (std::size_t j = 1; j < pieces.size(); ++j)
            best = std::max(best, pieces[j].eval(v[k], z[k]));
        total += best;
    }
    return total;
}

/// Subgradient in z. Kink convention: at z_k == v_k take the no-shortage
/// piece, whose max-term derivative is 0.
inline Vec subgrad_z(const CostSpec& spec, const Vec& v, const Vec& z) {
    detail::check_cost_dims(v, z);
    Vec g(z.size(), 0.0);
    switch (spec.kind) {
    case CostSpec::Kind::pricing_revenue:
        for (std::size_t k = 0; k < z.size(); ++k) g[k] = -v[k];
        break;
    case CostSpec::Kind::newsvendor:
        for (std::size_t k = 0; k < z.size(); ++k)
            g[k] = z[k] > v[k] ? 1.0 : 0.0;
        break;
    case CostSpec::Kind::scheduling:
    case CostSpec::Kind::partial_scheduling: {
        const auto [from, to] = detail::active_range(spec, z.size());
        for (int k = from; k < to; ++k) {
            if (z[k] > v[k]) g[k] = spec.gamma_s;
            else if (z[k] < v[k]) g[k] = -spec.gamma_e;
        }
        break;
    }
    }
    return g;
}

inline Vec subgrad_v(const CostSpec& spec, const Vec& v, const Vec& z) {
    detail::check_cost_dims(v, z);
    Vec g(v.size(), 0.0);
    switch (spec.kind) {
    case CostSpec::Kind::pricing_revenue:
        for (std::size_t k = 0; k < v.size(); ++k) g[k] = -z[k];
        break;
    case CostSpec::Kind::newsvendor:
        for (std::size_t k = 0; k < v.size(); ++k)
            g[k] = (z[k] > v[k] ? -1.0 : 0.0) + spec.b;
        break;
    case CostSpec::Kind::scheduling:
    case CostSpec::Kind::partial_scheduling: {
        const auto [from, to] = detail::active_range(spec, v.size());
        for (int k = from; k < to; ++k) {
            if (z[k] > v[k]) g[k] = -spec.gamma_s;
            else if (z[k] < v[k]) g[k] = spec.gamma_e;
        }
        break;
    }
    }
    return g;
}

/// Max-of-affine decomposition over d coordinates. Pricing is excluded:
/// bilinear in (v, z), so it has no v-free piecewise-linear form.
inline PWLDecomposition pwl_decompose(const CostSpec& spec, int d) {
    if (!spec.piecewise_linear())
        throw std::invalid_argument(
            "pwl_decompose: pricing_revenue is bilinear, not piecewise-linear");
    if (d < 1) throw std::invalid_argument("pwl_decompose: d must be >= 1");
    const auto pieces = detail::coordinate_pieces(spec);
    const auto [from, to] = detail::active_range(spec, static_cast<std::size_t>(d));
    PWLDecomposition out;
    out.coords.resize(d);
    for (int k = 0; k < d; ++k) {
        if (k >= from && k < to) out.coords[k] = pieces;
        else out.coords[k] = {AffinePiece{0.0, 0.0, 0.0}};
    }
    return out;
}

// --- config serialization -------------------------------------------------

inline void to_json(json& j, const CostSpec& c) {
    switch (c.kind) {
    case CostSpec::Kind::pricing_revenue:
        j = json{{"kind", "pricing"}};
        break;
    case CostSpec::Kind::newsvendor:
        j = json{{"kind", "newsvendor"}, {"b", c.b}};
        break;
    case CostSpec::Kind::scheduling:
        j = json{{"kind", "scheduling"}, {"gamma_s", c.gamma_s}, {"gamma_e", c.gamma_e}};
        break;
    case CostSpec::Kind::partial_scheduling:
        j = json{{"kind", "partial_scheduling"},
                 {"gamma_s", c.gamma_s},
                 {"gamma_e", c.gamma_e},
                 {"from_index", c.from_index}};
        if (c.to_index >= 0) j["to_index"] = c.to_index;
        break;
    }
}

inline void from_json(const json& j, CostSpec& c) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "pricing") {
        c = CostSpec::pricing();
    } else if (kind == "newsvendor") {
        c = CostSpec::newsvendor_cost(j.at("b").get<double>());
    } else if (kind == "scheduling") {
        c = CostSpec::scheduling_cost(j.at("gamma_s").get<double>(),
                                      j.at("gamma_e").get<double>());
    } else if (kind == "partial_scheduling") {
        c = CostSpec::partial_scheduling_cost(
            j.at("gamma_s").get<double>(), j.at("gamma_e").get<double>(),
            j.at("from_index").get<int>(), j.value("to_index", -1));
    } else {
        throw std::invalid_argument("CostSpec: unknown kind " + kind);
    }
}

} // namespace endo
