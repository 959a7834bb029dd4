#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "spinglass/admissible.hpp"
#include "spinglass/model.hpp"
#include "spinglass/rng.hpp"

// Hand-rolled generators for property tests. Every generator draws from the
// caller's Rng so a test case is reproducible from (seed, case index).
namespace gen {

using namespace spinglass;

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(hi - lo + 1));
}

inline std::vector<double> weights(Rng& rng, std::size_t n, double floor = 0.1) {
    std::vector<double> w(n);
    double total = 0.0;
    for (double& x : w) total += (x = floor + rng.uniform());
    for (double& x : w) x /= total;
    return w;
}

// Symmetric tensor with random entries in [lo, hi].
inline InteractionTensor symmetric_tensor(Rng& rng, std::size_t species, std::size_t order, double lo = 0.0,
                                          double hi = 1.0) {
    InteractionTensor t(species, order);
    std::vector<std::size_t> idx(order, 0);
    // Enumerate sorted index tuples and set all permutations.
    for (;;) {
        const double v = uniform(rng, lo, hi);
        auto perm = idx;
        do {
            t.set(perm, v);
        } while (std::next_permutation(perm.begin(), perm.end()));
        std::size_t pos = order;
        while (pos > 0 && idx[pos - 1] == species - 1) --pos;
        if (pos == 0) break;
        const std::size_t next = idx[pos - 1] + 1;
        for (std::size_t i = pos - 1; i < order; ++i) idx[i] = next;
    }
    return t;
}

struct ModelOptions {
    std::size_t max_species = 2;
    int max_p = 3;
    bool allow_p1 = false;
    double beta_lo = 0.2;
    double beta_hi = 1.2;
};

inline MixedModel model(Rng& rng, const ModelOptions& o = {}) {
    MixedModel m;
    const std::size_t S = pick(rng, 1, o.max_species);
    for (std::size_t s = 0; s < S; ++s) m.species.push_back("s" + std::to_string(s));
    m.lambda = weights(rng, S);
    const int p_lo = o.allow_p1 ? 1 : 2;
    const std::size_t terms = pick(rng, 1, 2);
    std::vector<int> used;
    for (std::size_t t = 0; t < terms; ++t) {
        const int p = static_cast<int>(pick(rng, static_cast<std::size_t>(p_lo), static_cast<std::size_t>(o.max_p)));
        if (std::find(used.begin(), used.end(), p) != used.end()) continue;
        used.push_back(p);
        m.terms.push_back({p, uniform(rng, o.beta_lo, o.beta_hi),
                           symmetric_tensor(rng, S, static_cast<std::size_t>(p), 0.1, 1.0)});
    }
    return m;
}

struct MeasureOptions {
    std::size_t max_levels = 3;
    double zero_first = 0.3;   // probability that q_1 = 0
    double duplicate = 0.15;   // probability of repeating the previous atom
};

inline DiscreteMeasure measure(Rng& rng, const MeasureOptions& o = {}) {
    const std::size_t k = pick(rng, 1, o.max_levels);
    DiscreteMeasure mu;
    mu.m.assign(1, 0.0);
    std::vector<double> cuts(k - 1);
    for (double& c : cuts) c = uniform(rng, 0.02, 0.98);
    std::sort(cuts.begin(), cuts.end());
    for (double c : cuts)
        if (c - mu.m.back() > 1e-3) mu.m.push_back(c);
    mu.m.push_back(1.0);
    const std::size_t levels = mu.m.size() - 1;
    mu.q.resize(levels);
    for (double& q : mu.q) q = rng.uniform();
    std::sort(mu.q.begin(), mu.q.end());
    if (rng.uniform() < o.zero_first) mu.q[0] = 0.0;
    for (std::size_t r = 1; r < levels; ++r)
        if (rng.uniform() < o.duplicate) mu.q[r] = mu.q[r - 1];
    return mu;
}

// Random admissible map: random interior knots and a random positive kernel,
// balanced onto the joint constraint.
inline SyncMap map(Rng& rng, const std::vector<double>& lambda, std::size_t max_interior = 3) {
    const std::size_t S = lambda.size();
    if (S == 1) return SyncMap::identity(1);
    std::vector<double> knots{0.0};
    std::vector<double> interior(pick(rng, 0, max_interior));
    for (double& x : interior) x = uniform(rng, 0.02, 0.98);
    std::sort(interior.begin(), interior.end());
    for (double x : interior)
        if (x - knots.back() > 1e-3) knots.push_back(x);
    if (1.0 - knots.back() < 1e-3) knots.pop_back();
    knots.push_back(1.0);
    std::vector<std::vector<double>> kernel(S, std::vector<double>(knots.size() - 1));
    for (auto& row : kernel)
        for (double& v : row) v = std::exp(uniform(rng, -2.0, 2.0));
    return balanced_map(lambda, knots, kernel);
}

inline AdmissiblePair pair(Rng& rng, const std::vector<double>& lambda, const MeasureOptions& o = {}) {
    return {measure(rng, o), map(rng, lambda)};
}

// Nondecreasing continuous piecewise-linear f on [0,1] with f(0) = 0.
inline PiecewiseLinear increasing_function(Rng& rng, std::size_t max_interior = 4) {
    PiecewiseLinear f;
    f.knots = {0.0};
    std::vector<double> interior(pick(rng, 0, max_interior));
    for (double& x : interior) x = uniform(rng, 0.01, 0.99);
    std::sort(interior.begin(), interior.end());
    for (double x : interior)
        if (x - f.knots.back() > 1e-4) f.knots.push_back(x);
    f.knots.push_back(1.0);
    f.values = {0.0};
    for (std::size_t j = 1; j < f.knots.size(); ++j) {
        // Occasional flat pieces exercise non-injective f.
        const double slope = rng.uniform() < 0.2 ? 0.0 : uniform(rng, 0.0, 3.0);
        f.values.push_back(f.values.back() + slope * (f.knots[j] - f.knots[j - 1]));
    }
    return f;
}

}  // namespace gen
