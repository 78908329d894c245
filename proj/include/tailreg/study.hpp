#pragma once

#include "tailreg/estimators.hpp"
#include "tailreg/simulation.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tailreg {

// Monte Carlo study plan: which presets, sample sizes, and estimators to
// cross, and how many replications of each cell.
struct StudyConfig {
    std::vector<int> presets{1};
    std::vector<int> T_list{25000};
    int n_reps = 100;
    bool run_mle = true;  // t-test selection baseline
    bool run_tal = true;  // two-step penalized estimator, one fit per criterion
    std::vector<Criterion> criteria{Criterion::AIC, Criterion::HQ, Criterion::BIC};
    int jobs = 1;
    // 0 keeps each preset's built-in seed; otherwise every preset uses this
    // base. Replication r always draws from base + r.
    std::uint64_t base_seed = 0;
    // Grid sizes for the penalized fits (test hooks; defaults match the
    // estimator module).
    int shape_grid = kDefaultShapeGridSize;
    int scale_grid = kDefaultScaleGridSize;
};

// One estimator on one replication, annotated for aggregation.
struct ReplicationRecord {
    int preset = 0;
    int T = 0;
    std::string estimator;  // "mle" | "tal"
    std::string criterion;  // "ttest" | "aic" | "hq" | "bic"
    int rep = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string failure;  // set when ok is false
    ErrorStats errors;
    ReplicationSelection selection;
    bool hessian_pd = true;  // t-test baseline only
    bool converged = false;
};

struct StudyResult {
    // Deterministic order: presets x T x replication x estimator, regardless
    // of how many workers ran them.
    std::vector<ReplicationRecord> records;
    std::vector<std::string> failures;
};

// Runs the full plan. Replications are independent tasks with preassigned
// seeds, so the result is identical for any worker count. Failed fits are
// recorded and skipped by the aggregations rather than aborting the study.
StudyResult run_study(const StudyConfig& config);

// Wald selection at |t| > 1.96 using standard errors from the inverse
// observed information. When the information matrix is not positive
// definite every predictor is reported unselected and the flag is cleared.
struct TTestSelection {
    std::vector<int> active_k;
    std::vector<int> active_sigma;  // slope indices, p for the AR term
    bool hessian_pd = true;
};
TTestSelection t_test_selection(const CoefVector& beta_hat, const ExceedanceSeries& series,
                                const PredictorPanel& panel);

// Average bias/MSE per (preset, estimator) row with one column pair per T.
void write_bias_mse_csv(const std::string& path, const StudyConfig& config,
                        const StudyResult& result);

// Average selection rates per (preset, T, estimator) row: true/false
// positives by block and integration order, CCR, and the AR selection rate.
// Rates whose candidate category is empty render as empty cells.
void write_selection_csv(const std::string& path, const StudyConfig& config,
                         const StudyResult& result);

// Reproducibility manifest: config echo, per-cell seed lists, and failure
// annotations. Content is a pure function of config and results.
void write_study_manifest(const std::string& path, const StudyConfig& config,
                          const StudyResult& result);

} // namespace tailreg
