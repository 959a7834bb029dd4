#include "spinglass/parisi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <string>

#include "spinglass/errors.hpp"
#include "spinglass/parallel.hpp"
#include "spinglass/quadrature.hpp"
#include "spinglass/rng.hpp"

namespace spinglass {

namespace {

constexpr double kBMargin = 1e-12;

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

void check_sizes(const MixedModel& model, const std::vector<double>& b, const std::vector<double>& field) {
    const std::size_t S = model.species_count();
    if (b.size() != S) throw ValidationError("b has " + std::to_string(b.size()) + " entries, expected " + std::to_string(S));
    if (!field.empty() && field.size() != S)
        throw ValidationError("field has " + std::to_string(field.size()) + " entries, expected " + std::to_string(S));
}

double field_sq(const std::vector<double>& field, std::size_t s) { return field.empty() ? 0.0 : field[s] * field[s]; }

// Per-species scalar problem: minimize the s-summand over b in (d_1, inf).
struct SpeciesProblem {
    double c = 0.0;  // u_1 + h^2
    std::vector<double> d;    // d_1..d_{k+1}
    std::vector<double> du;   // u_{r+1} - u_r, r = 1..k
    std::vector<double> m;    // m_1..m_k

    double d1() const { return d.front(); }

    double bracket(double b) const {
        double v = b - 1.0 - std::log(b) + c / (b - d1());
        for (std::size_t r = 0; r < m.size(); ++r) {
            if (du[r] == 0.0) continue;
            v += std::log1p((d[r] - d[r + 1]) / (b - d[r])) / m[r];
        }
        return v;
    }

    double g(double b) const {
        double v = 1.0 - 1.0 / b;
        const double x = b - d1();
        v -= c / (x * x);
        for (std::size_t r = 0; r < du.size(); ++r)
            if (du[r] != 0.0) v -= du[r] / ((b - d[r + 1]) * (b - d[r]));
        return v;
    }

    double g_prime(double b) const {
        double v = 1.0 / (b * b);
        const double x = b - d1();
        v += 2.0 * c / (x * x * x);
        for (std::size_t r = 0; r < du.size(); ++r) {
            if (du[r] == 0.0) continue;
            const double p = b - d[r + 1], q = b - d[r];
            v += du[r] * (p + q) / (p * p * q * q);
        }
        return v;
    }
};

SpeciesProblem species_problem(const AdmissiblePair& pair, const LevelProfile& profile, std::size_t s,
                               const std::vector<double>& field) {
    const std::size_t k = pair.measure.levels();
    SpeciesProblem sp;
    sp.c = profile.u[s][1] + field_sq(field, s);
    sp.d = profile.d[s];
    sp.du.resize(k);
    sp.m.resize(k);
    for (std::size_t r = 1; r <= k; ++r) {
        sp.du[r - 1] = profile.u[s][r + 1] - profile.u[s][r];
        sp.m[r - 1] = pair.measure.m[r];
    }
    return sp;
}

double theta_part(const AdmissiblePair& pair, const LevelProfile& profile) {
    const std::size_t k = pair.measure.levels();
    double t = 0.0;
    for (std::size_t r = 1; r <= k; ++r) t += pair.measure.m[r] * (profile.w[r + 1] - profile.w[r]);
    return 0.5 * t;
}

struct Minimum {
    double b = 1.0;
    double residual = 0.0;
    bool boundary = false;
};

Minimum minimize_species(const SpeciesProblem& sp, double xi_s_one) {
    const double d1 = sp.d1();
    double lo = d1 + 1e-10;
    double hi = d1 + std::max(10.0, 10.0 * xi_s_one);
    // All numerators vanish: g = 1 - 1/b, minimum at b = 1.
    bool trivial = sp.c == 0.0;
    for (double du : sp.du) trivial = trivial && du == 0.0;
    if (trivial && d1 == 0.0) return {1.0, 0.0, false};

    if (sp.g(lo) > 0.0) {
        // Root lies in (d1, d1 + 1e-10]; fall back to bisection in that sliver.
        double a = d1, c = lo;
        for (int i = 0; i < 200 && c - a > 0.0; ++i) {
            const double mid = 0.5 * (a + c);
            if (mid <= a || mid >= c) break;
            (sp.g(mid) > 0.0 ? c : a) = mid;
        }
        if (c - d1 <= kBMargin) return {d1 + kBMargin, std::abs(sp.g(d1 + kBMargin)), true};
        return {c, std::abs(sp.g(c)), false};
    }
    for (int i = 0; sp.g(hi) < 0.0; ++i) {
        if (i > 200) throw NumericalError("inner minimization over b failed to bracket the stationary point");
        hi = d1 + 2.0 * (hi - d1);
    }
    double b = 0.5 * (lo + hi);
    for (int iter = 0; iter < 300; ++iter) {
        const double gv = sp.g(b);
        if (gv == 0.0) break;
        (gv > 0.0 ? hi : lo) = b;
        double next = b - gv / sp.g_prime(b);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - b) <= 1e-16 * std::max(1.0, b) || hi - lo <= 4e-16 * std::max(1.0, b)) {
            b = next;
            break;
        }
        b = next;
    }
    return {b, std::abs(sp.g(b)), false};
}

}  // namespace

LevelProfile d_profile(const MixedModel& model, const AdmissiblePair& pair) {
    const std::size_t S = model.species_count();
    const std::size_t k = pair.measure.levels();
    LevelProfile p;
    p.u.assign(S, std::vector<double>(k + 2, 0.0));
    p.d.assign(S, std::vector<double>(k + 1, 0.0));
    p.w.assign(k + 2, 0.0);
    const std::vector<double> ones(S, 1.0);
    for (std::size_t r = 1; r <= k + 1; ++r) {
        const std::vector<double> point = r <= k ? pair.map(pair.measure.atom(r)) : ones;
        for (std::size_t s = 0; s < S; ++s) p.u[s][r] = xi_s(model, s, point);
        p.w[r] = theta(model, point);
    }
    for (std::size_t s = 0; s < S; ++s) {
        // Repeated atoms share u exactly so that their increments are zero.
        for (std::size_t r = 2; r <= k; ++r)
            if (pair.measure.atom(r) == pair.measure.atom(r - 1)) p.u[s][r] = p.u[s][r - 1];
        double acc = 0.0;
        for (std::size_t r = k; r >= 1; --r) {
            acc += pair.measure.m[r] * (p.u[s][r + 1] - p.u[s][r]);
            p.d[s][r - 1] = acc;
        }
    }
    for (std::size_t r = 2; r <= k; ++r)
        if (pair.measure.atom(r) == pair.measure.atom(r - 1)) p.w[r] = p.w[r - 1];
    return p;
}

double a_value(const MixedModel& model, const AdmissiblePair& pair, const LevelProfile& profile,
               const std::vector<double>& b, const std::vector<double>& field) {
    check_sizes(model, b, field);
    double total = 0.0;
    for (std::size_t s = 0; s < model.species_count(); ++s) {
        const auto sp = species_problem(pair, profile, s, field);
        if (!(b[s] - sp.d1() >= kBMargin) || !(b[s] > 0.0))
            throw ConstraintViolation("b^" + model.species[s] + " = " + num(b[s]) + " does not exceed d^" +
                                      model.species[s] + "(0) = " + num(sp.d1()));
        total += 0.5 * model.lambda[s] * sp.bracket(b[s]);
    }
    return total - theta_part(pair, profile);
}

double a_value(const MixedModel& model, const AdmissiblePair& pair, const std::vector<double>& b,
               const std::vector<double>& field) {
    require_valid(model.lambda, pair);
    return a_value(model, pair, d_profile(model, pair), b, field);
}

std::vector<double> a_gradient(const MixedModel& model, const AdmissiblePair& pair, const LevelProfile& profile,
                               const std::vector<double>& b, const std::vector<double>& field) {
    check_sizes(model, b, field);
    std::vector<double> g(model.species_count());
    for (std::size_t s = 0; s < g.size(); ++s) {
        const auto sp = species_problem(pair, profile, s, field);
        if (!(b[s] - sp.d1() >= kBMargin))
            throw ConstraintViolation("b^" + model.species[s] + " = " + num(b[s]) + " does not exceed d^" +
                                      model.species[s] + "(0) = " + num(sp.d1()));
        g[s] = 0.5 * model.lambda[s] * sp.g(b[s]);
    }
    return g;
}

ParisiEvaluation inner_min_b(const MixedModel& model, const AdmissiblePair& pair, const std::vector<double>& field) {
    require_valid(model.lambda, pair);
    const std::size_t S = model.species_count();
    check_sizes(model, std::vector<double>(S, 1.0), field);
    const auto profile = d_profile(model, pair);
    ParisiEvaluation ev;
    ev.b_opt.resize(S);
    ev.residuals.resize(S);
    ev.boundary.resize(S);
    ev.d_profile = profile.d;
    ev.field = field;
    for (std::size_t s = 0; s < S; ++s) {
        const auto sp = species_problem(pair, profile, s, field);
        const auto mn = minimize_species(sp, profile.u[s].back());
        ev.b_opt[s] = mn.b;
        ev.residuals[s] = 0.5 * model.lambda[s] * mn.residual;
        ev.boundary[s] = mn.boundary;
    }
    ev.value = a_value(model, pair, profile, ev.b_opt, field);
    if (!std::isfinite(ev.value)) throw NumericalError("Parisi functional evaluated to a non-finite value");
    return ev;
}

double parisi_value(const MixedModel& model, const AdmissiblePair& pair, const std::vector<double>& field) {
    return inner_min_b(model, pair, field).value;
}

// ---------------------------------------------------------------------------
// General measures

double a_value_general(const MixedModel& model, const QuantileOracle& quantile_oracle, const SyncMap& map,
                       const std::vector<double>& b, std::size_t quadrature_points,
                       const std::vector<double>& field) {
    if (quadrature_points < 2) throw ValidationError("a_value_general: need at least two quadrature points");
    check_sizes(model, b, field);
    {
        const auto violations = validate_map(model.lambda, map);
        if (!violations.empty()) throw ValidationError("invalid synchronization map: " + violations.front().detail);
    }
    const std::size_t S = model.species_count();
    constexpr std::size_t kNodes = 8;
    const std::size_t panels_total = std::max<std::size_t>(1, quadrature_points / kNodes);
    const auto rule = gauss_legendre(kNodes);

    // Atoms show up as flat runs of the quantile on a z-scan.
    std::vector<double> atoms;
    {
        double prev = quantile_oracle(1.0 / static_cast<double>(quadrature_points));
        for (std::size_t i = 2; i <= quadrature_points; ++i) {
            const double v = quantile_oracle(static_cast<double>(i) / static_cast<double>(quadrature_points));
            if (v == prev && (atoms.empty() || atoms.back() != v)) atoms.push_back(v);
            prev = v;
        }
    }

    std::vector<double> qbreaks{0.0, 1.0};
    qbreaks.insert(qbreaks.end(), map.knots.begin(), map.knots.end());
    qbreaks.insert(qbreaks.end(), atoms.begin(), atoms.end());
    std::sort(qbreaks.begin(), qbreaks.end());
    qbreaks.erase(std::unique(qbreaks.begin(), qbreaks.end()), qbreaks.end());

    auto f_s = [&](std::size_t s, double x) { return xi_s(model, s, map(x)); };

    std::vector<double> d_right(S, 0.0), integral(S, 0.0);
    for (std::size_t i = qbreaks.size() - 1; i-- > 0;) {
        const double lo = qbreaks[i], hi = qbreaks[i + 1];
        if (hi <= lo) continue;
        std::vector<double> slope(S);
        for (std::size_t t = 0; t < S; ++t) slope[t] = (map(t, hi) - map(t, lo)) / (hi - lo);
        const std::size_t n_sub =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(static_cast<double>(panels_total) * (hi - lo))));
        const double h = (hi - lo) / static_cast<double>(n_sub);
        for (std::size_t j = n_sub; j-- > 0;) {
            const double a = lo + h * static_cast<double>(j);
            const double c = j + 1 == n_sub ? hi : a + h;
            const double F_mid = cdf_from_quantile(quantile_oracle, 0.5 * (a + c));
            std::vector<double> fc(S);
            for (std::size_t s = 0; s < S; ++s) fc[s] = f_s(s, c);
            for (std::size_t n = 0; n < kNodes; ++n) {
                const double x = 0.5 * (a + c) + 0.5 * (c - a) * rule.nodes[n];
                const double wgt = 0.5 * (c - a) * rule.weights[n];
                const auto phi = map(x);
                const auto der = xi_derivatives(model, phi);
                for (std::size_t s = 0; s < S; ++s) {
                    double fprime = 0.0;
                    for (std::size_t t = 0; t < S; ++t)
                        fprime += der.hessian(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) * slope[t];
                    fprime /= model.lambda[s];
                    const double dx = d_right[s] + F_mid * (fc[s] - xi_s(model, s, phi));
                    const double gap = b[s] - dx;
                    if (!(gap > 0.0))
                        throw ConstraintViolation("b^" + model.species[s] + " = " + num(b[s]) + " does not exceed d^" +
                                                  model.species[s] + "(" + num(x) + ") = " + num(dx));
                    integral[s] += wgt * fprime / gap;
                }
            }
            for (std::size_t s = 0; s < S; ++s) d_right[s] += F_mid * (fc[s] - f_s(s, a));
        }
    }

    double total = 0.0;
    const std::vector<double> zeros(S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
        const double d0 = d_right[s];
        if (!(b[s] - d0 >= kBMargin))
            throw ConstraintViolation("b^" + model.species[s] + " = " + num(b[s]) + " does not exceed d^" +
                                      model.species[s] + "(0) = " + num(d0));
        const double c = xi_s(model, s, zeros) + field_sq(field, s);
        total += 0.5 * model.lambda[s] * (b[s] - 1.0 - std::log(b[s]) + c / (b[s] - d0) + integral[s]);
    }

    // theta term in z-space, split where the quantile jumps onto an atom.
    std::vector<double> zbreaks{0.0, 1.0};
    for (double atom : atoms) {
        zbreaks.push_back(cdf_from_quantile(quantile_oracle, atom));
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            (quantile_oracle(mid) < atom ? lo : hi) = mid;
        }
        zbreaks.push_back(lo);
    }
    std::sort(zbreaks.begin(), zbreaks.end());
    zbreaks.erase(std::unique(zbreaks.begin(), zbreaks.end()), zbreaks.end());
    double theta_z = 0.0;
    for (std::size_t i = 0; i + 1 < zbreaks.size(); ++i) {
        const double lo = zbreaks[i], hi = zbreaks[i + 1];
        if (hi <= lo) continue;
        const std::size_t n_sub =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(static_cast<double>(panels_total) * (hi - lo))));
        const double h = (hi - lo) / static_cast<double>(n_sub);
        for (std::size_t j = 0; j < n_sub; ++j) {
            const double a = lo + h * static_cast<double>(j);
            const double c = j + 1 == n_sub ? hi : a + h;
            for (std::size_t n = 0; n < kNodes; ++n) {
                const double z = 0.5 * (a + c) + 0.5 * (c - a) * rule.nodes[n];
                theta_z += 0.5 * (c - a) * rule.weights[n] * theta(model, map(quantile_oracle(z)));
            }
        }
    }
    const std::vector<double> ones(S, 1.0);
    total -= 0.5 * (theta(model, ones) - theta_z);
    return total;
}

// ---------------------------------------------------------------------------
// Outer minimization

AdmissiblePair embed_levels(const AdmissiblePair& pair, std::size_t k) {
    if (pair.measure.levels() > k)
        throw ValidationError("cannot embed a " + std::to_string(pair.measure.levels()) + "-level pair into " +
                              std::to_string(k) + " levels");
    AdmissiblePair out = pair;
    while (out.measure.levels() < k) out.measure = split_level(out.measure, out.measure.levels(), 0.5);
    return out;
}

namespace {

constexpr double kLogClamp = 30.0;

struct Layout {
    std::size_t S = 1;
    std::size_t k = 1;

    std::size_t mass_count() const { return k - 1; }
    std::size_t q_count() const { return k; }
    std::size_t kernel_count() const { return (S - 1) * (k + 1); }
    std::size_t size() const { return mass_count() + q_count() + kernel_count(); }
};

AdmissiblePair decode(const Layout& layout, std::span<const double> lambda, const std::vector<double>& x) {
    const std::size_t k = layout.k, S = layout.S;
    AdmissiblePair pair;
    std::vector<double> logits(k, 0.0);
    for (std::size_t r = 1; r < k; ++r) logits[r] = std::clamp(x[r - 1], -kLogClamp, kLogClamp);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    pair.measure.m.assign(k + 1, 0.0);
    double cum = 0.0;
    for (std::size_t r = 0; r < k; ++r) pair.measure.m[r + 1] = (cum += logits[r] / z);
    pair.measure.m.back() = 1.0;

    pair.measure.q.resize(k);
    for (std::size_t r = 0; r < k; ++r) pair.measure.q[r] = std::clamp(x[layout.mass_count() + r], 0.0, 1.0);
    std::sort(pair.measure.q.begin(), pair.measure.q.end());

    if (S == 1) {
        pair.map = SyncMap::identity(1);
        return pair;
    }
    std::vector<double> knots{0.0};
    knots.insert(knots.end(), pair.measure.q.begin(), pair.measure.q.end());
    knots.push_back(1.0);
    std::vector<std::vector<double>> kernel(S, std::vector<double>(k + 1, 1.0));
    std::size_t pos = layout.mass_count() + layout.q_count();
    for (std::size_t s = 1; s < S; ++s)
        for (std::size_t j = 0; j <= k; ++j) kernel[s][j] = std::exp(std::clamp(x[pos++], -kLogClamp, kLogClamp));
    SyncMap raw = balanced_map(lambda, knots, kernel);
    SyncMap map;
    map.values.assign(S, {});
    for (std::size_t j = 0; j < raw.knots.size(); ++j) {
        if (j > 0 && raw.knots[j] == map.knots.back()) continue;
        map.knots.push_back(raw.knots[j]);
        for (std::size_t s = 0; s < S; ++s) map.values[s].push_back(raw.values[s][j]);
    }
    pair.map = std::move(map);
    return pair;
}

std::vector<double> encode(const Layout& layout, std::span<const double> lambda, const AdmissiblePair& pair) {
    const std::size_t k = layout.k, S = layout.S;
    std::vector<double> x(layout.size(), 0.0);
    const double base = std::log(std::max(pair.measure.mass(1), 1e-300));
    for (std::size_t r = 2; r <= k; ++r)
        x[r - 2] = std::clamp(std::log(std::max(pair.measure.mass(r), 1e-300)) - base, -kLogClamp, kLogClamp);
    for (std::size_t r = 1; r <= k; ++r) x[layout.mass_count() + r - 1] = pair.measure.atom(r);
    if (S == 1) return x;
    std::vector<double> knots{0.0};
    knots.insert(knots.end(), pair.measure.q.begin(), pair.measure.q.end());
    knots.push_back(1.0);
    std::size_t pos = layout.mass_count() + layout.q_count();
    auto increment = [&](std::size_t s, std::size_t j) {
        return std::max(lambda[s] * (pair.map(s, knots[j + 1]) - pair.map(s, knots[j])), 1e-300);
    };
    for (std::size_t s = 1; s < S; ++s)
        for (std::size_t j = 0; j <= k; ++j)
            x[pos++] = std::clamp(std::log(increment(s, j)) - std::log(increment(0, j)), -kLogClamp, kLogClamp);
    return x;
}

struct Candidate {
    AdmissiblePair pair;
    double value = std::numeric_limits<double>::infinity();
    std::size_t evaluations = 0;
    bool converged = false;
};

}  // namespace

MinimizeResult minimize_parisi(const MixedModel& model, std::size_t k, const std::vector<double>& field,
                               const MinimizeOptions& options) {
    if (k < 1) throw ValidationError("minimize_parisi: k must be >= 1");
    require_valid(model);
    const std::size_t S = model.species_count();
    const Layout layout{S, k};
    const std::span<const double> lambda(model.lambda);

    auto objective = [&](const std::vector<double>& x) {
        try {
            return parisi_value(model, decode(layout, lambda, x), field);
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    // Seeds: the annealed pair, caller warm starts, then random starts.
    std::vector<AdmissiblePair> seeds;
    seeds.push_back(embed_levels({DiscreteMeasure::dirac(0.0), SyncMap::identity(S)}, k));
    for (const auto& w : options.warm_starts) {
        require_valid(model.lambda, w);
        seeds.push_back(embed_levels(w, k));
    }
    const std::size_t fixed = seeds.size();
    const std::size_t total = fixed + options.starts;

    std::vector<Candidate> candidates(total);
    parallel_for(total, options.workers, [&](std::size_t i) {
        std::vector<double> x;
        Candidate cand;
        if (i < fixed) {
            // The seed itself is a candidate, so embedding never loses ground.
            cand.pair = seeds[i];
            cand.value = parisi_value(model, seeds[i], field);
            x = encode(layout, lambda, seeds[i]);
        } else {
            auto rng = Rng::stream(options.seed, {k, i - fixed});
            std::normal_distribution<double> normal;
            x.resize(layout.size());
            for (std::size_t j = 0; j < layout.mass_count(); ++j) x[j] = normal(rng);
            for (std::size_t j = 0; j < layout.q_count(); ++j) x[layout.mass_count() + j] = rng.uniform();
            for (std::size_t j = layout.mass_count() + layout.q_count(); j < layout.size(); ++j) x[j] = normal(rng);
        }
        NelderMeadResult best{x, objective(x), 1, false};
        for (std::size_t round = 0; round <= options.restarts; ++round) {
            auto res = nelder_mead(objective, best.point, options.local);
            const std::size_t evals = best.evaluations + res.evaluations;
            const bool improved = res.value < best.value;
            if (improved) best = std::move(res);
            best.evaluations = evals;
            if (!improved && round > 0) break;
        }
        if (best.value < cand.value) {
            cand.pair = decode(layout, lambda, best.point);
            cand.value = best.value;
        }
        cand.evaluations = best.evaluations;
        cand.converged = best.converged;
        candidates[i] = std::move(cand);
    });

    MinimizeResult result;
    result.levels = k;
    std::size_t best = 0;
    for (std::size_t i = 0; i < total; ++i) {
        result.evaluations += candidates[i].evaluations;
        if (i >= fixed) result.start_values.push_back(candidates[i].value);
        if (candidates[i].value < candidates[best].value - 1e-13) best = i;
    }
    if (!std::isfinite(candidates[best].value))
        throw NumericalError("minimize_parisi: no start produced a finite value");
    result.pair = candidates[best].pair;
    result.evaluation = inner_min_b(model, result.pair, field);
    result.converged = candidates[best].converged;
    return result;
}

LevelSweep minimize_parisi_levels(const MixedModel& model, std::vector<std::size_t> ks,
                                  const std::vector<double>& field, const MinimizeOptions& options) {
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    LevelSweep sweep;
    MinimizeOptions opts = options;
    for (std::size_t k : ks) {
        auto res = minimize_parisi(model, k, field, opts);
        if (!sweep.results.empty() && res.evaluation.value > sweep.results.back().evaluation.value + 1e-9)
            sweep.monotone = false;
        opts.warm_starts = options.warm_starts;
        opts.warm_starts.push_back(res.pair);
        sweep.results.push_back(std::move(res));
    }
    return sweep;
}

LipschitzCheck lipschitz_check(const MixedModel& model, const AdmissiblePair& a, const AdmissiblePair& b) {
    LipschitzCheck out;
    out.lhs = std::abs(parisi_value(model, a) - parisi_value(model, b));
    out.rhs = 0.5 * c_star(model) * pseudometric_d(model.lambda, a, b);
    out.ok = out.lhs <= out.rhs + 1e-8;
    return out;
}

}  // namespace spinglass
