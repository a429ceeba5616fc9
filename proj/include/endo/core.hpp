// Shared domain types: records of (features, decision, realized
// uncertainty), datasets over them, decision/poll spaces, and the
// scenario abstraction (ground-truth samplers) that drives data
// generation and Monte-Carlo evaluation.

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "endo/rng.hpp"
#include "endo/vecmath.hpp"

namespace endo {

using json = nlohmann::json;

/// One observation: features x, the decision v that was taken, and the
/// realized uncertainty z drawn from Z | x, v.
struct Record {
    Vec x;
    Vec v;
    Vec z;
};

struct Dims {
    int d_x = 0;
    int d_v = 0;
    int d_z = 0;

    bool operator==(const Dims&) const = default;
};

/// Ordered, immutable-after-construction dataset. Order matters: both the
/// historical-policy assumption and iterative chunked training are
/// defined on the record sequence, never on a shuffle.
class Dataset {
public:
    explicit Dataset(Dims dims) : dims_(dims) {
        if (dims.d_x < 0 || dims.d_v < 1 || dims.d_z < 1)
            throw std::invalid_argument("Dataset: need d_x >= 0, d_v >= 1, d_z >= 1");
    }

    void push(Record r) {
        if (static_cast<int>(r.x.size()) != dims_.d_x ||
            static_cast<int>(r.v.size()) != dims_.d_v ||
            static_cast<int>(r.z.size()) != dims_.d_z)
            throw std::invalid_argument("Dataset::push: record does not match dims");
        if (!all_finite(r.x) || !all_finite(r.v) || !all_finite(r.z))
            throw std::invalid_argument("Dataset::push: non-finite entry");
        records_.push_back(std::move(r));
    }

    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const Record& operator[](std::size_t i) const { return records_[i]; }
    const Dims& dims() const { return dims_; }
    auto begin() const { return records_.begin(); }
    auto end() const { return records_.end(); }

    /// First n records, order preserved.
    Dataset prefix(std::size_t n) const {
        Dataset out(dims_);
        for (std::size_t i = 0; i < n && i < records_.size(); ++i)
            out.records_.push_back(records_[i]);
        return out;
    }

private:
    std::vector<Record> records_;
    Dims dims_;
};

/// Feasible decision region. Three forms cover every experiment:
/// an explicit finite list, a coordinate box, and a box with a single
/// capacity constraint sum(v) <= capacity.
struct DecisionSpace {
    enum class Kind { finite, box, box_capacity };

    Kind kind = Kind::box;
    std::vector<Vec> choices; // finite
    Vec lower, upper;         // box forms
    double capacity = 0.0;    // box_capacity

    static DecisionSpace finite(std::vector<Vec> options) {
        if (options.empty())
            throw std::invalid_argument("DecisionSpace::finite: empty list");
        DecisionSpace s;
        s.kind = Kind::finite;
        s.choices = std::move(options);
        return s;
    }

    static DecisionSpace box(Vec lo, Vec hi) {
        check_bounds(lo, hi);
        DecisionSpace s;
        s.kind = Kind::box;
        s.lower = std::move(lo);
        s.upper = std::move(hi);
        return s;
    }

    static DecisionSpace box_with_capacity(Vec lo, Vec hi, double cap) {
        check_bounds(lo, hi);
        if (cap <= 0.0)
            throw std::invalid_argument("DecisionSpace: capacity must be > 0");
        DecisionSpace s;
        s.kind = Kind::box_capacity;
        s.lower = std::move(lo);
        s.upper = std::move(hi);
        s.capacity = cap;
        return s;
    }

    int dim() const {
        return kind == Kind::finite ? static_cast<int>(choices.front().size())
                                    : static_cast<int>(lower.size());
    }

    /// Euclidean projection. For the capacity form the active constraint
    /// is handled by a scalar shift found with bisection:
    /// sum_k clamp(v_k - tau, lo_k, hi_k) = capacity.
    Vec project(Vec v) const {
        if (kind == Kind::finite) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t arg = 0;
            for (std::size_t i = 0; i < choices.size(); ++i) {
                double d2 = 0.0;
                for (std::size_t k = 0; k < v.size(); ++k) {
                    const double d = v[k] - choices[i][k];
                    d2 += d * d;
                }
                if (d2 < best) { best = d2; arg = i; }
            }
            return choices[arg];
        }
        clip_inplace(v, lower, upper);
        if (kind == Kind::box) return v;
        double s = std::accumulate(v.begin(), v.end(), 0.0);
        if (s <= capacity) return v;
        double tau_lo = 0.0, tau_hi = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k)
            tau_hi = std::max(tau_hi, v[k] - lower[k]);
        for (int it = 0; it < 100; ++it) {
            const double tau = 0.5 * (tau_lo + tau_hi);
            double sum = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k)
                sum += std::clamp(v[k] - tau, lower[k], upper[k]);
            (sum > capacity ? tau_lo : tau_hi) = tau;
        }
        const double tau = 0.5 * (tau_lo + tau_hi);
        for (std::size_t k = 0; k < v.size(); ++k)
            v[k] = std::clamp(v[k] - tau, lower[k], upper[k]);
        return v;
    }

    bool contains(const Vec& v, double tol = 1e-9) const {
        if (kind == Kind::finite) {
            for (const auto& c : choices) {
                double d = 0.0;
                for (std::size_t k = 0; k < v.size(); ++k)
                    d = std::max(d, std::abs(v[k] - c[k]));
                if (d <= tol) return true;
            }
            return false;
        }
        for (std::size_t k = 0; k < v.size(); ++k)
            if (v[k] < lower[k] - tol || v[k] > upper[k] + tol) return false;
        if (kind == Kind::box_capacity)
            return std::accumulate(v.begin(), v.end(), 0.0) <= capacity + tol;
        return true;
    }

private:
    static void check_bounds(const Vec& lo, const Vec& hi) {
        if (lo.empty() || lo.size() != hi.size())
            throw std::invalid_argument("DecisionSpace: bad box bounds");
        for (std::size_t k = 0; k < lo.size(); ++k)
            if (lo[k] > hi[k])
                throw std::invalid_argument("DecisionSpace: lower > upper");
    }
};

/// Admissible poll decisions w (coordinate indices to observe, or the
/// prefix cut points 0..H for the scheduling variant).
struct PollSpace {
    std::vector<int> indices;

    static PollSpace coordinates(int d_z) {
        if (d_z < 1) throw std::invalid_argument("PollSpace: d_z < 1");
        PollSpace p;
        for (int i = 0; i < d_z; ++i) p.indices.push_back(i);
        return p;
    }

    static PollSpace prefix_horizon(int horizon) {
        if (horizon < 1) throw std::invalid_argument("PollSpace: horizon < 1");
        PollSpace p;
        for (int i = 0; i <= horizon; ++i) p.indices.push_back(i);
        return p;
    }

    std::size_t size() const { return indices.size(); }
};

/// Ground-truth synthetic world. Samplers are deterministic functions of
/// the passed generator; mean_z (when present) is the exact conditional
/// mean of sample_z.
struct Scenario {
    Dims dims;
    std::function<Vec(Rng&)> sample_x;
    std::function<Vec(const std::vector<Record>&, Rng&)> sample_v;
    std::function<Vec(const Vec&, const Vec&, Rng&)> sample_z;
    std::function<Vec(const Vec&, const Vec&)> mean_z; // optional (empty if unknown)
    json params;

    bool has_mean() const { return static_cast<bool>(mean_z); }
};

/// Draw an n-record dataset. Per-record generator streams are derived by
/// index (3i for x, 3i+1 for v, 3i+2 for z) so that the historical policy
/// at step i can be replayed exactly from the stored prefix.
inline Dataset generate_dataset(const Scenario& sc, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    if (!sc.sample_x || !sc.sample_v || !sc.sample_z)
        throw std::invalid_argument("generate_dataset: scenario is missing a sampler");
    const Rng root(seed);
    Dataset ds(sc.dims);
    std::vector<Record> history;
    history.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng rx = root.split(3 * static_cast<std::uint64_t>(i));
        Rng rv = root.split(3 * static_cast<std::uint64_t>(i) + 1);
        Rng rz = root.split(3 * static_cast<std::uint64_t>(i) + 2);
        Record r;
        r.x = sc.sample_x(rx);
        r.v = sc.sample_v(history, rv);
        r.z = sc.sample_z(r.x, r.v, rz);
        history.push_back(r);
        ds.push(std::move(r));
    }
    return ds;
}

/// Ordered prefix split; sizes are round(N * fraction) vs the rest.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds,
                                                 double train_fraction) {
    if (ds.empty()) throw std::invalid_argument("split_dataset: empty dataset");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split_dataset: fraction must be in (0,1)");
    const auto n = static_cast<long long>(ds.size());
    const auto n_train = std::llround(static_cast<double>(n) * train_fraction);
    if (n_train < 1 || n_train >= n)
        throw std::invalid_argument("split_dataset: split leaves an empty part");
    Dataset train(ds.dims()), test(ds.dims());
    for (long long i = 0; i < n; ++i)
        (i < n_train ? train : test).push(ds[static_cast<std::size_t>(i)]);
    return {std::move(train), std::move(test)};
}

// --- CSV / JSON persistence -------------------------------------------

namespace detail {

/// Shortest text form that round-trips the double exactly.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    // prefer a shorter representation when it parses back bit-identically
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[40];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, x);
        if (std::strtod(shorter, nullptr) == x) return shorter;
    }
    return buf;
}

} // namespace detail

/// CSV with header x_0..x_{dx-1}, v_0.., z_0..; one record per row at
/// full float precision. A sidecar JSON (same stem, .meta.json) carries
/// {d_x, d_v, d_z, scenario, seed}.
inline void write_dataset_csv(const Dataset& ds, const std::string& path,
                              const json& scenario_meta = json::object(),
                              std::uint64_t seed = 0) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);
    const Dims d = ds.dims();
    bool first = true;
    auto emit = [&](const std::string& prefix, int count) {
        for (int i = 0; i < count; ++i) {
            if (!first) out << ',';
            out << prefix << i;
            first = false;
        }
    };
    emit("x_", d.d_x);
    emit("v_", d.d_v);
    emit("z_", d.d_z);
    out << '\n';
    for (const Record& r : ds) {
        first = true;
        auto row = [&](const Vec& v) {
            for (double val : v) {
                if (!first) out << ',';
                out << detail::format_double(val);
                first = false;
            }
        };
        row(r.x);
        row(r.v);
        row(r.z);
        out << '\n';
    }
    json meta = {{"d_x", d.d_x}, {"d_v", d.d_v}, {"d_z", d.d_z},
                 {"scenario", scenario_meta}, {"seed", seed}};
    std::string meta_path = path;
    const auto dot = meta_path.rfind(".csv");
    if (dot != std::string::npos && dot == meta_path.size() - 4)
        meta_path = meta_path.substr(0, dot);
    std::ofstream mout(meta_path + ".meta.json");
    mout << meta.dump(2) << '\n';
}

inline Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path);
    std::string header;
    if (!std::getline(in, header))
        throw std::runtime_error("read_dataset_csv: empty file " + path);
    Dims d{};
    {
        std::stringstream hs(header);
        std::string col;
        while (std::getline(hs, col, ',')) {
            if (col.rfind("x_", 0) == 0) ++d.d_x;
            else if (col.rfind("v_", 0) == 0) ++d.d_v;
            else if (col.rfind("z_", 0) == 0) ++d.d_z;
            else throw std::runtime_error("read_dataset_csv: unknown column " + col);
        }
    }
    Dataset ds(d);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        Record r;
        auto take = [&](Vec& v, int count) {
            for (int i = 0; i < count; ++i) {
                if (!std::getline(ls, cell, ','))
                    throw std::runtime_error("read_dataset_csv: short row");
                v.push_back(std::strtod(cell.c_str(), nullptr));
            }
        };
        take(r.x, d.d_x);
        take(r.v, d.d_v);
        take(r.z, d.d_z);
        ds.push(std::move(r));
    }
    return ds;
}

} // namespace endo
