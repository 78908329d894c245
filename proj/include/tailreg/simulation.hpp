#pragma once

#include "tailreg/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace tailreg {

// Student-t distribution function and quantile for real df > 0. Implemented
// on top of the incomplete beta function, deliberately sharing no code with
// the GPD primitives so the two can cross-check each other in tests.
double student_t_cdf(double x, double df);
double student_t_quantile(double p, double df);

// A coefficient entry resolved from the local-to-zero form c / sqrt(T); the
// stored constant c recovers as value * sqrt(T) for every T.
struct LocalCoef {
    int index;  // position in the owning coefficient block (natural order)
    double c;
};

// Ground truth for one synthetic experiment. Coefficients are stored in the
// natural order of the generating equations:
//   shape: [b_{1,0}, b_{1,1} (lagged loss), b_{1,2}..b_{1,15} (z_1..z_14)]
//   scale: [b_{2,0}, b_{2,1} (AR), b_{2,2} (lagged loss), b_{2,3}..b_{2,16}]
// to_model() converts to the model layout (AR last). The fourteen z
// predictors follow z_{i,t} = phi_i z_{i,t-1} + eps_{i,t}, phi_i in {0,1};
// the remaining predictor is the lagged-loss transform log(|l_{t-1}|+1-r_m).
struct DgpSpec {
    Eigen::VectorXd phi;         // length 14, entries 0 or 1
    Eigen::VectorXd beta_shape;  // length 16
    Eigen::VectorXd beta_scale;  // length 17, AR at position 1
    double u = 0.0;              // fixed exceedance threshold
    double r_m = 0.05;           // offset in the lagged-loss transform
    std::uint64_t seed = 0;
    std::vector<LocalCoef> local_shape;  // entries resolved as c / sqrt(T)
    std::vector<LocalCoef> local_scale;

    int n_z() const { return static_cast<int>(phi.size()); }
    int n_predictors() const { return n_z() + 1; }

    CoefVector to_model() const;

    // Integration order per model predictor: the lagged-loss transform is
    // stationary, z_i inherits I(1) from phi_i == 1.
    std::vector<IntegrationOrder> predictor_orders() const;

    void validate() const;
};

// The four preset experiments. All share u = t(3) quantile at 0.8 and
// r_m = 0.05; combinations of unit-root predictors, an active AR term, and
// local-to-zero coefficients (resolved with the given T) distinguish them.
DgpSpec dgp_preset(int which, int T);

// Losses with their generating parameter paths. panel row t holds the
// predictors driving (k_t, sigma_t): the lagged-loss transform first, then
// z_{1,t-1}..z_{14,t-1}.
struct SimulatedSeries {
    Eigen::VectorXd losses;
    PredictorPanel panel;
    Eigen::VectorXd k_path;
    Eigen::VectorXd sigma_path;
};

// Samples T observations of the mixed body/tail loss law: below the
// threshold l_t follows Student-t(1/k_t); above it, u plus a GPD(k_t,
// sigma_t) excess via the conditional inverse transform. A fixed burn-in
// settles the predictor recursions before recording starts; identical seeds
// give identical output.
SimulatedSeries simulate_series(const DgpSpec& spec, int T);

inline constexpr int kSimulationBurnIn = 1000;

// Censors losses at the fixed threshold: y_t = max(l_t - u, 0). Throws if
// nothing exceeds.
ExceedanceSeries extract_exceedances(const Eigen::VectorXd& losses, double u);

// Average absolute error and squared error per true coefficient. Intercepts
// and the AR coefficient compare raw; slope j compares the destandardized
// estimate beta_hat_j * scale_factor_j against truth, scaled by sqrt(T) for
// I(1) predictors. beta_hat comes from a fit on the standardized panel,
// beta_true holds natural units.
struct ErrorStats {
    double bias = 0.0;
    double mse = 0.0;
};
ErrorStats bias_mse(const CoefVector& beta_hat, const CoefVector& beta_true,
                    const std::vector<double>& scale_factors,
                    const std::vector<IntegrationOrder>& orders, int T);

// Selected / truly-active cross counts for one category of candidates.
struct SelectionCounts {
    int true_positive = 0;
    int false_positive = 0;
    int n_active = 0;    // truly active candidates in the category
    int n_inactive = 0;  // truly inactive candidates

    // Rates are NaN when the category is empty.
    double tp_rate() const;
    double fp_rate() const;
};

// Per-replication selection outcome split by parameter block and predictor
// integration order, plus the correct-classification rate over all slope
// candidates in both blocks (the AR term is reported separately).
struct ReplicationSelection {
    SelectionCounts k_i0, k_i1, sigma_i0, sigma_i1;
    int n_correct = 0;
    int n_candidates = 0;
    bool ar_selected = false;
    bool ar_truly_active = false;

    double ccr() const { return static_cast<double>(n_correct) / n_candidates; }
};

ReplicationSelection selection_metrics(const std::vector<int>& active_k,
                                       const std::vector<int>& active_sigma,
                                       const DgpSpec& truth);

} // namespace tailreg
