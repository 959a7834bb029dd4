#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spinglass/admissible.hpp"
#include "spinglass/model.hpp"
#include "spinglass/optimize.hpp"

namespace spinglass {

// Discrete ingredients of the functional for a finitely supported pair with
// k levels:
//   u[s][r] = xi^s(Phi(q_r)) for r = 1..k, u[s][0] = 0, u[s][k+1] = xi^s(1)
//   w[r]    = theta(Phi(q_r)) with the same conventions
//   d[s][i] = d^s_{i+1} = sum_{r' >= i+1} m_{r'} (u_{r'+1} - u_{r'}), i = 0..k
// so d[s][0] = d^s(0) and d[s][k] = 0.
struct LevelProfile {
    std::vector<std::vector<double>> u;
    std::vector<std::vector<double>> d;
    std::vector<double> w;
};

LevelProfile d_profile(const MixedModel& model, const AdmissiblePair& pair);

// A(zeta, Phi, b) with an optional external field h (empty = no field).
double a_value(const MixedModel& model, const AdmissiblePair& pair, const std::vector<double>& b,
               const std::vector<double>& field = {});
double a_value(const MixedModel& model, const AdmissiblePair& pair, const LevelProfile& profile,
               const std::vector<double>& b, const std::vector<double>& field = {});

// dA/db^s = (lambda^s / 2) * g^s(b^s); g^s is increasing in b^s.
std::vector<double> a_gradient(const MixedModel& model, const AdmissiblePair& pair, const LevelProfile& profile,
                               const std::vector<double>& b, const std::vector<double>& field = {});

// A for a general overlap measure given by its quantile function. The q
// integral is split at the map's knots and at atoms detected as flat runs of
// the quantile; each piece gets composite Gauss-Legendre. The theta term uses
// int zeta([0,q]) (theta o Phi)'(q) dq = theta(1) - int_0^1 theta(Phi(Q(z))) dz.
double a_value_general(const MixedModel& model, const QuantileOracle& quantile_oracle, const SyncMap& map,
                       const std::vector<double>& b, std::size_t quadrature_points,
                       const std::vector<double>& field = {});

struct ParisiEvaluation {
    double value = 0.0;
    std::vector<double> b_opt;
    std::vector<std::vector<double>> d_profile;
    std::vector<double> field;
    // |dA/db^s| at b_opt.
    std::vector<double> residuals;
    // Species whose infimum sits at the boundary b -> d^s(0).
    std::vector<bool> boundary;
};

ParisiEvaluation inner_min_b(const MixedModel& model, const AdmissiblePair& pair,
                             const std::vector<double>& field = {});

double parisi_value(const MixedModel& model, const AdmissiblePair& pair, const std::vector<double>& field = {});

struct MinimizeOptions {
    std::size_t starts = 16;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    NelderMeadOptions local{.max_evaluations = 6000, .initial_step = 0.5, .value_tolerance = 1e-14,
                            .point_tolerance = 1e-10};
    // Rounds of Nelder-Mead restarts from the best point of each start.
    std::size_t restarts = 2;
    // Extra starting pairs (any number of levels <= k; embedded by duplication).
    std::vector<AdmissiblePair> warm_starts;
};

struct MinimizeResult {
    AdmissiblePair pair;
    ParisiEvaluation evaluation;
    std::size_t levels = 0;
    std::size_t evaluations = 0;
    bool converged = false;
    // Best value reached by each random start (in start order).
    std::vector<double> start_values;
};

MinimizeResult minimize_parisi(const MixedModel& model, std::size_t k, const std::vector<double>& field = {},
                               const MinimizeOptions& options = {});

struct LevelSweep {
    std::vector<MinimizeResult> results;
    // value(k_{i+1}) <= value(k_i) + 1e-9 for every consecutive pair.
    bool monotone = true;
};

// Minimizes for each k in ascending order, warm-starting each level from the
// previous optimum.
LevelSweep minimize_parisi_levels(const MixedModel& model, std::vector<std::size_t> ks,
                                  const std::vector<double>& field = {}, const MinimizeOptions& options = {});

// Embed a pair into `k` levels by splitting its top level (duplication).
AdmissiblePair embed_levels(const AdmissiblePair& pair, std::size_t k);

struct LipschitzCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    bool ok = true;
};

LipschitzCheck lipschitz_check(const MixedModel& model, const AdmissiblePair& a, const AdmissiblePair& b);

}  // namespace spinglass
