#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "spinglass/model.hpp"

namespace spinglass {

// Finitely supported overlap measure zeta = sum_r (m_r - m_{r-1}) delta_{q_r}.
//
// `m` holds the cumulative masses m_0 = 0 < m_1 < ... < m_k = 1 (k+1 values),
// `q` holds the atoms q_1 <= ... <= q_k (k values). Repeated atoms are allowed.
struct DiscreteMeasure {
    std::vector<double> m{0.0, 1.0};
    std::vector<double> q{0.0};

    std::size_t levels() const { return q.size(); }
    double mass(std::size_t r) const { return m[r] - m[r - 1]; }  // 1-based level
    double atom(std::size_t r) const { return q[r - 1]; }          // 1-based level

    static DiscreteMeasure dirac(double location) { return {{0.0, 1.0}, {location}}; }
};

// Nondecreasing, continuous, piecewise-linear f on [0,1] given by knots.
struct PiecewiseLinear {
    std::vector<double> knots;
    std::vector<double> values;

    double operator()(double x) const;
};

// Piecewise-linear synchronization map Phi = (Phi^s): [0,1] -> [0,1]^S.
struct SyncMap {
    std::vector<double> knots;
    std::vector<std::vector<double>> values;  // values[s][j] = Phi^s(knots[j])

    std::size_t species_count() const { return values.size(); }
    double operator()(std::size_t s, double x) const;
    std::vector<double> operator()(double x) const;
    PiecewiseLinear component(std::size_t s) const;

    // Phi^s(x) = x for every species; admissible for any lambda.
    static SyncMap identity(std::size_t species);
};

struct AdmissiblePair {
    DiscreteMeasure measure;
    SyncMap map;
};

std::vector<Violation> validate_measure(const DiscreteMeasure& measure);
std::vector<Violation> validate_map(std::span<const double> lambda, const SyncMap& map);
std::vector<Violation> validate_pair(std::span<const double> lambda, const AdmissiblePair& pair);
void require_valid(std::span<const double> lambda, const AdmissiblePair& pair);

// Q_zeta(z) = inf{q >= 0 : zeta([0,q]) >= z}.
double quantile(const DiscreteMeasure& measure, double z);

// zeta([0,x]).
double cdf(const DiscreteMeasure& measure, double x);

// D((zeta1,Phi1),(zeta2,Phi2)) = int_0^1 |Phi1(Q1(z)) - Phi2(Q2(z))|_1 dz,
// evaluated exactly on the merged mass grid.
double pseudometric_d(std::span<const double> lambda, const AdmissiblePair& a, const AdmissiblePair& b);

struct Atom {
    std::vector<double> point;
    double mass = 0.0;
};

// The measure zeta o Phi^{-1} on [0,1]^S, one atom per level (duplicates kept).
std::vector<Atom> pushforward(const AdmissiblePair& pair);

// Merge coincident points (within tol) and sort lexicographically.
std::vector<Atom> canonical_atoms(std::vector<Atom> atoms, double tol = 1e-12);
bool same_pushforward(const AdmissiblePair& a, const AdmissiblePair& b, double tol = 1e-12);

// Re-express both measures on the union of their mass grids, duplicating
// atoms as needed. Each output represents the same measure as its input.
std::pair<DiscreteMeasure, DiscreteMeasure> mutual_refine(const DiscreteMeasure& a, const DiscreteMeasure& b);

// Insert a duplicate of level r (1-based), splitting its mass at `fraction`.
DiscreteMeasure split_level(const DiscreteMeasure& measure, std::size_t r, double fraction);

// Merge repeated atoms into single levels.
DiscreteMeasure canonicalize(const DiscreteMeasure& measure);

// Pushforward of zeta under a nondecreasing f with f(0) = 0 (a 1-D measure).
DiscreteMeasure push_measure(const DiscreteMeasure& measure, const PiecewiseLinear& f);

// int_from^1 zeta([0,u]) f'(u) du, exact for piecewise-linear f.
double integral_cdf_times_slope(const DiscreteMeasure& measure, const PiecewiseLinear& f, double from = 0.0);

// int_{z_from}^1 f(Q_zeta(z)) dz, exact.
double integral_of_quantile_composition(const DiscreteMeasure& measure, const PiecewiseLinear& f,
                                        double z_from = 0.0);

// Grid discretization of a general measure given through its quantile
// function: an atom at 0 keeps the mass of {0}, and atom j/K carries the mass
// of ((j-1)/K, j/K].
using QuantileOracle = std::function<double(double)>;
DiscreteMeasure discretize_measure(const QuantileOracle& quantile_oracle, std::size_t K);

// zeta([0,x]) for a measure known only through its quantile function.
double cdf_from_quantile(const QuantileOracle& quantile_oracle, double x);

// Admissible map on `knots` whose increments over interval j are split among
// species in proportion to a positive kernel, balanced (Sinkhorn) so that
// sum_s lambda^s dPhi^s_j = dknot_j and Phi^s(1) = 1 for every s.
// `kernel[s][j]` must be positive; there is one column per knot interval.
SyncMap balanced_map(std::span<const double> lambda, std::vector<double> knots,
                     const std::vector<std::vector<double>>& kernel);

// The two-species map that first fills species 0 then species 1.
SyncMap extremal_map(std::span<const double> lambda);

}  // namespace spinglass
