#pragma once

#include "tailreg/likelihood.hpp"
#include "tailreg/types.hpp"

#include <cstdint>
#include <vector>

namespace tailreg {

// Per-coordinate box constraints on the packed coefficient vector. The true
// parameter is assumed interior; bounds exist to keep iterates in a compact
// set, not to bind at the solution.
struct BoxBounds {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    // Default box for a model with p predictors: +/-50 everywhere except the
    // AR coefficient, capped at +/-0.99 to keep the scale recursion stable.
    static BoxBounds standard(int p, double coef_bound = 50.0, double ar_bound = 0.99);

    void validate() const;
    Eigen::VectorXd clamp(const Eigen::VectorXd& x) const;
};

// Weighted-L1 penalty acting on a subset of coordinates of the packed vector.
// Intercepts are never penalized; weights must be strictly positive.
struct PenaltySpec {
    double lambda_k = 0.0;
    double lambda_sigma = 0.0;
    Eigen::VectorXd weights_k;      // length p, shape slopes
    Eigen::VectorXd weights_sigma;  // length p+1, scale slopes then AR

    // Effective per-coordinate penalty lambda * w on the packed layout,
    // zero on intercepts.
    Eigen::VectorXd packed_penalty(int p) const;
};

struct SolveReport {
    bool converged = false;
    int iterations = 0;
    double objective = 0.0;      // log-likelihood orientation
    double max_kkt_violation = 0.0;
    std::vector<int> active_set; // packed indices of nonzero penalized coords
};

struct SmoothOptions {
    int max_iterations = 2000;
    double tolerance_scale = 1e-6;  // tol = scale * (1 + |objective|)
    int history = 10;               // L-BFGS memory
    // Coordinates with mask 0 are pinned at their start value.
    std::vector<std::uint8_t> free_mask;
};

struct ProxOptions {
    int max_iterations = 5000;
    double tolerance_scale = 1e-5;  // KKT tol = scale * (1 + |objective|)
    std::vector<std::uint8_t> free_mask;
};

// Projected L-BFGS ascent on a smooth objective (maximization orientation).
// Stops when the infinity norm of the projected gradient falls below
// tolerance_scale * (1 + |objective|). Infeasible evaluations (diverged scale
// path, unit-root AR) are stepped back from during line search.
std::pair<Eigen::VectorXd, SolveReport> maximize_smooth(const SmoothObjective& objective,
                                                        const Eigen::VectorXd& start,
                                                        const BoxBounds& bounds,
                                                        const SmoothOptions& options = {});

// Proximal-gradient (FISTA with restart) minimization of
//   -objective(x) + sum_j pen_j |x_j|
// over the box. Soft-thresholding produces exact zeros. The reported solution
// satisfies the KKT conditions within tol = tolerance_scale * (1 + |objective|):
//   zero coords:    |grad_j| <= pen_j + tol
//   nonzero coords: |grad_j - pen_j sign(x_j)| <= tol
struct PenalizedProblem {
    const SmoothObjective& objective;
    Eigen::VectorXd penalty;  // per packed coordinate, >= 0
};

std::pair<Eigen::VectorXd, SolveReport> solve_penalized(const PenalizedProblem& problem,
                                                        const Eigen::VectorXd& start,
                                                        const BoxBounds& bounds,
                                                        const ProxOptions& options = {});

// Smallest lambda at which all penalized coordinates stay at zero, scaled by
// a 1.05 safety factor: 1.05 * max_j |grad_j(x_ref)| / w_j over the penalized
// coordinates listed in `penalized` (packed indices, paired with weights).
double lambda_max(const SmoothObjective& objective, const Eigen::VectorXd& x_ref,
                  const std::vector<int>& penalized, const Eigen::VectorXd& weights);

} // namespace tailreg
