#include "spinglass/admissible.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "spinglass/errors.hpp"

namespace spinglass {

namespace {

constexpr double kJointTol = 1e-12;
constexpr double kGridMergeTol = 1e-14;

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

double interpolate(std::span<const double> knots, std::span<const double> values, double x) {
    if (x <= knots.front()) return values.front();
    if (x >= knots.back()) return values.back();
    const auto it = std::upper_bound(knots.begin(), knots.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - knots.begin());  // knots[j-1] <= x < knots[j]
    const double x0 = knots[j - 1], x1 = knots[j];
    if (x == x0 || x1 == x0) return values[j - 1];
    const double t = (x - x0) / (x1 - x0);
    return values[j - 1] + t * (values[j] - values[j - 1]);
}

std::vector<double> merged_grid(std::span<const double> a, std::span<const double> b) {
    std::vector<double> all(a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    std::vector<double> out;
    for (double v : all)
        if (out.empty() || v - out.back() > kGridMergeTol) out.push_back(v);
    out.front() = 0.0;
    out.back() = 1.0;
    return out;
}

// Smallest 1-based level r with m_r >= z (z in (0,1]).
std::size_t level_for(const DiscreteMeasure& measure, double z) {
    const auto it = std::lower_bound(measure.m.begin() + 1, measure.m.end(), z - kGridMergeTol);
    const std::size_t r = static_cast<std::size_t>(it - measure.m.begin());
    return std::min(r, measure.levels());
}

}  // namespace

// ---------------------------------------------------------------------------
// Maps

double PiecewiseLinear::operator()(double x) const { return interpolate(knots, values, x); }

double SyncMap::operator()(std::size_t s, double x) const { return interpolate(knots, values.at(s), x); }

std::vector<double> SyncMap::operator()(double x) const {
    std::vector<double> out(values.size());
    for (std::size_t s = 0; s < values.size(); ++s) out[s] = (*this)(s, x);
    return out;
}

PiecewiseLinear SyncMap::component(std::size_t s) const { return {knots, values.at(s)}; }

SyncMap SyncMap::identity(std::size_t species) {
    return {{0.0, 1.0}, std::vector<std::vector<double>>(species, {0.0, 1.0})};
}

SyncMap extremal_map(std::span<const double> lambda) {
    const std::size_t S = lambda.size();
    SyncMap map;
    map.knots.push_back(0.0);
    double cum = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        cum += lambda[s];
        map.knots.push_back(s + 1 == S ? 1.0 : cum);
    }
    map.values.assign(S, std::vector<double>(S + 1, 0.0));
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t j = s + 1; j <= S; ++j) map.values[s][j] = 1.0;
    return map;
}

SyncMap balanced_map(std::span<const double> lambda, std::vector<double> knots,
                     const std::vector<std::vector<double>>& kernel) {
    const std::size_t S = lambda.size();
    if (knots.size() < 2) throw ValidationError("balanced_map: need at least two knots");
    const std::size_t J = knots.size() - 1;
    if (kernel.size() != S) throw ValidationError("balanced_map: kernel needs one row per species");
    for (const auto& row : kernel)
        if (row.size() != J) throw ValidationError("balanced_map: kernel needs one column per knot interval");

    std::vector<double> width(J);
    for (std::size_t j = 0; j < J; ++j) width[j] = std::max(0.0, knots[j + 1] - knots[j]);

    std::vector<double> r(S, 1.0), c(J, 0.0);
    std::vector<std::vector<double>> a(S, std::vector<double>(J, 0.0));
    for (int iter = 0; iter < 20000; ++iter) {
        for (std::size_t j = 0; j < J; ++j) {
            double col = 0.0;
            for (std::size_t s = 0; s < S; ++s) col += r[s] * kernel[s][j];
            c[j] = width[j] > 0.0 ? width[j] / col : 0.0;
        }
        double err = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            double row = 0.0;
            for (std::size_t j = 0; j < J; ++j) row += kernel[s][j] * c[j];
            err = std::max(err, std::abs(r[s] * row - lambda[s]));
            r[s] = lambda[s] / row;
        }
        if (err < 1e-15) break;
    }
    // Final column pass so that sum_s a[s][j] = width[j] holds to roundoff.
    for (std::size_t j = 0; j < J; ++j) {
        double col = 0.0;
        for (std::size_t s = 0; s < S; ++s) col += r[s] * kernel[s][j];
        for (std::size_t s = 0; s < S; ++s) a[s][j] = col > 0.0 ? width[j] * r[s] * kernel[s][j] / col : 0.0;
    }

    SyncMap map;
    map.knots = std::move(knots);
    map.values.assign(S, std::vector<double>(J + 1, 0.0));
    for (std::size_t s = 0; s < S; ++s) {
        double cum = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            cum += a[s][j];
            map.values[s][j + 1] = std::min(1.0, cum / lambda[s]);
        }
        map.values[s][J] = 1.0;
    }
    return map;
}

// ---------------------------------------------------------------------------
// Validation

std::vector<Violation> validate_measure(const DiscreteMeasure& measure) {
    std::vector<Violation> out;
    const auto& m = measure.m;
    const auto& q = measure.q;
    if (q.empty()) {
        out.push_back({"measure", "measure has no atoms"});
        return out;
    }
    if (m.size() != q.size() + 1) {
        out.push_back({"measure", "expected " + std::to_string(q.size() + 1) + " cumulative masses, got " +
                                      std::to_string(m.size())});
        return out;
    }
    if (m.front() != 0.0) out.push_back({"masses", "m_0 must be 0"});
    if (std::abs(m.back() - 1.0) > 1e-12) out.push_back({"masses", "m_k must be 1, got " + num(m.back())});
    for (std::size_t r = 1; r < m.size(); ++r)
        if (!(m[r] > m[r - 1]))
            out.push_back({"masses", "cumulative masses not strictly increasing at level " + std::to_string(r)});
    for (std::size_t r = 0; r < q.size(); ++r) {
        if (!(q[r] >= 0.0 && q[r] <= 1.0))
            out.push_back({"atoms", "atom " + std::to_string(r + 1) + " = " + num(q[r]) + " outside [0,1]"});
        if (r > 0 && q[r] < q[r - 1])
            out.push_back({"atoms", "atoms decrease at level " + std::to_string(r + 1)});
    }
    return out;
}

std::vector<Violation> validate_map(std::span<const double> lambda, const SyncMap& map) {
    std::vector<Violation> out;
    const auto& knots = map.knots;
    if (map.values.size() != lambda.size()) {
        out.push_back({"map", "map has " + std::to_string(map.values.size()) + " components, expected " +
                                  std::to_string(lambda.size())});
        return out;
    }
    if (knots.size() < 2 || knots.front() != 0.0 || knots.back() != 1.0) {
        out.push_back({"knots", "knots must start at 0 and end at 1"});
        return out;
    }
    for (std::size_t j = 1; j < knots.size(); ++j)
        if (knots[j] < knots[j - 1]) out.push_back({"knots", "knots decrease at index " + std::to_string(j)});
    for (std::size_t s = 0; s < map.values.size(); ++s) {
        const auto& v = map.values[s];
        if (v.size() != knots.size()) {
            out.push_back({"map", "component " + std::to_string(s) + " has wrong number of values"});
            return out;
        }
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (!(v[j] >= -kJointTol && v[j] <= 1.0 + kJointTol))
                out.push_back({"range", "Phi^" + std::to_string(s) + " outside [0,1] at knot " + num(knots[j])});
            if (j > 0 && v[j] < v[j - 1])
                out.push_back({"monotone", "Phi^" + std::to_string(s) + " decreases at knot " + num(knots[j])});
            if (j > 0 && knots[j] == knots[j - 1] && v[j] != v[j - 1])
                out.push_back({"continuity", "Phi^" + std::to_string(s) + " jumps at repeated knot " + num(knots[j])});
        }
    }
    for (std::size_t j = 0; j < knots.size(); ++j) {
        double sum = 0.0;
        for (std::size_t s = 0; s < lambda.size(); ++s) sum += lambda[s] * map.values[s][j];
        if (std::abs(sum - knots[j]) > kJointTol)
            out.push_back({"joint", "joint constraint fails at knot " + num(knots[j]) + " (sum " + num(sum) + ")"});
    }
    return out;
}

std::vector<Violation> validate_pair(std::span<const double> lambda, const AdmissiblePair& pair) {
    auto out = validate_measure(pair.measure);
    auto more = validate_map(lambda, pair.map);
    out.insert(out.end(), more.begin(), more.end());
    return out;
}

void require_valid(std::span<const double> lambda, const AdmissiblePair& pair) {
    const auto violations = validate_pair(lambda, pair);
    if (violations.empty()) return;
    std::string msg = "invalid admissible pair:";
    for (const auto& v : violations) msg += "\n  [" + v.invariant + "] " + v.detail;
    throw ValidationError(msg);
}

// ---------------------------------------------------------------------------
// Quantiles and the pseudometric

double quantile(const DiscreteMeasure& measure, double z) {
    if (!(z >= 0.0 && z <= 1.0)) throw DomainError("quantile: z = " + num(z) + " outside [0,1]");
    if (z == 0.0) return 0.0;
    const auto it = std::lower_bound(measure.m.begin() + 1, measure.m.end(), z);
    std::size_t r = static_cast<std::size_t>(it - measure.m.begin());
    r = std::min(r, measure.levels());
    return measure.atom(r);
}

double cdf(const DiscreteMeasure& measure, double x) {
    double F = 0.0;
    for (std::size_t r = 1; r <= measure.levels(); ++r)
        if (measure.atom(r) <= x) F = measure.m[r];
    return F;
}

double pseudometric_d(std::span<const double> lambda, const AdmissiblePair& a, const AdmissiblePair& b) {
    if (a.map.species_count() != b.map.species_count() || a.map.species_count() != lambda.size())
        throw ValidationError("pseudometric_d: mismatched species sets");
    const auto grid = merged_grid(a.measure.m, b.measure.m);
    double total = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double dz = grid[i] - grid[i - 1];
        const double qa = a.measure.atom(level_for(a.measure, grid[i]));
        const double qb = b.measure.atom(level_for(b.measure, grid[i]));
        double l1 = 0.0;
        for (std::size_t s = 0; s < lambda.size(); ++s) l1 += std::abs(a.map(s, qa) - b.map(s, qb));
        total += dz * l1;
    }
    return total;
}

std::vector<Atom> pushforward(const AdmissiblePair& pair) {
    std::vector<Atom> out;
    for (std::size_t r = 1; r <= pair.measure.levels(); ++r)
        out.push_back({pair.map(pair.measure.atom(r)), pair.measure.mass(r)});
    return out;
}

std::vector<Atom> canonical_atoms(std::vector<Atom> atoms, double tol) {
    std::sort(atoms.begin(), atoms.end(), [](const Atom& x, const Atom& y) { return x.point < y.point; });
    std::vector<Atom> out;
    for (auto& a : atoms) {
        bool same = !out.empty();
        if (same)
            for (std::size_t s = 0; s < a.point.size(); ++s)
                if (std::abs(a.point[s] - out.back().point[s]) > tol) same = false;
        if (same) {
            out.back().mass += a.mass;
        } else {
            out.push_back(std::move(a));
        }
    }
    return out;
}

bool same_pushforward(const AdmissiblePair& a, const AdmissiblePair& b, double tol) {
    const auto pa = canonical_atoms(pushforward(a), tol);
    const auto pb = canonical_atoms(pushforward(b), tol);
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (std::abs(pa[i].mass - pb[i].mass) > tol) return false;
        for (std::size_t s = 0; s < pa[i].point.size(); ++s)
            if (std::abs(pa[i].point[s] - pb[i].point[s]) > tol) return false;
    }
    return true;
}

std::pair<DiscreteMeasure, DiscreteMeasure> mutual_refine(const DiscreteMeasure& a, const DiscreteMeasure& b) {
    const auto grid = merged_grid(a.m, b.m);
    auto refine = [&](const DiscreteMeasure& x) {
        DiscreteMeasure out;
        out.m = grid;
        out.q.clear();
        for (std::size_t i = 1; i < grid.size(); ++i) out.q.push_back(x.atom(level_for(x, grid[i])));
        return out;
    };
    return {refine(a), refine(b)};
}

DiscreteMeasure split_level(const DiscreteMeasure& measure, std::size_t r, double fraction) {
    if (r < 1 || r > measure.levels()) throw ValidationError("split_level: level out of range");
    if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("split_level: fraction must be in (0,1)");
    DiscreteMeasure out = measure;
    const double cut = measure.m[r - 1] + fraction * measure.mass(r);
    out.m.insert(out.m.begin() + static_cast<std::ptrdiff_t>(r), cut);
    out.q.insert(out.q.begin() + static_cast<std::ptrdiff_t>(r - 1), measure.atom(r));
    return out;
}

DiscreteMeasure canonicalize(const DiscreteMeasure& measure) {
    DiscreteMeasure out;
    out.m = {0.0};
    out.q.clear();
    for (std::size_t r = 1; r <= measure.levels(); ++r) {
        if (!out.q.empty() && measure.atom(r) == out.q.back()) {
            out.m.back() = measure.m[r];
        } else {
            out.q.push_back(measure.atom(r));
            out.m.push_back(measure.m[r]);
        }
    }
    return out;
}

DiscreteMeasure push_measure(const DiscreteMeasure& measure, const PiecewiseLinear& f) {
    DiscreteMeasure out = measure;
    for (double& q : out.q) q = f(q);
    return canonicalize(out);
}

double integral_cdf_times_slope(const DiscreteMeasure& measure, const PiecewiseLinear& f, double from) {
    std::vector<double> points{from, 1.0};
    for (double k : f.knots)
        if (k > from && k < 1.0) points.push_back(k);
    for (double q : measure.q)
        if (q > from && q < 1.0) points.push_back(q);
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    double total = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        total += cdf(measure, points[i - 1]) * (f(points[i]) - f(points[i - 1]));
    return total;
}

double integral_of_quantile_composition(const DiscreteMeasure& measure, const PiecewiseLinear& f, double z_from) {
    double total = 0.0;
    for (std::size_t r = 1; r <= measure.levels(); ++r) {
        const double lo = std::max(measure.m[r - 1], z_from);
        const double hi = measure.m[r];
        if (hi > lo) total += (hi - lo) * f(measure.atom(r));
    }
    return total;
}

// ---------------------------------------------------------------------------
// Discretization of general measures

double cdf_from_quantile(const QuantileOracle& quantile_oracle, double x) {
    if (quantile_oracle(1.0) <= x) return 1.0;
    double lo = 0.0, hi = 1.0;
    for (int iter = 0; iter < 200 && hi - lo > 0.0; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (quantile_oracle(mid) <= x) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return lo;
}

DiscreteMeasure discretize_measure(const QuantileOracle& quantile_oracle, std::size_t K) {
    if (K < 1) throw ValidationError("discretize_measure: K must be >= 1");
    // Sample the oracle for monotonicity and range.
    constexpr int kSamples = 1000;
    double prev = -1.0;
    for (int i = 0; i <= kSamples; ++i) {
        const double z = static_cast<double>(i) / kSamples;
        const double v = i == 0 ? 0.0 : quantile_oracle(z);
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("discretize_measure: quantile oracle left [0,1]");
        if (v < prev) throw ValidationError("discretize_measure: quantile oracle is not nondecreasing");
        prev = v;
    }
    const double k = static_cast<double>(K);
    // Level map: 0 -> 0, (j-1)/K < x <= j/K -> j/K.
    auto level = [k](double x) {
        if (x <= 0.0) return 0.0;
        double j = std::min(k, std::ceil(x * k));
        if (j > 1.0 && x <= (j - 1.0) / k) j -= 1.0;  // x*k rounded up past a boundary
        return j / k;
    };
    auto level_quantile = [&](double z) { return z == 0.0 ? 0.0 : level(quantile_oracle(z)); };

    DiscreteMeasure out;
    out.m = {0.0};
    out.q.clear();
    double last = 0.0;
    for (std::size_t j = 0; j <= K; ++j) {
        const double loc = static_cast<double>(j) / k;
        const double F = j == K ? 1.0 : cdf_from_quantile(level_quantile, loc);
        if (F - last > 1e-14) {
            out.q.push_back(loc);
            out.m.push_back(F);
            last = F;
        }
    }
    out.m.back() = 1.0;
    return out;
}

}  // namespace spinglass
