#include "tailreg/study.hpp"

#include "tailreg/io.hpp"
#include "tailreg/likelihood.hpp"

#include <Eigen/Cholesky>

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace tailreg {

namespace {

constexpr double kWaldThreshold = 1.96;

struct Task {
    int preset;
    int T;
    int rep;
    std::uint64_t seed;
    std::size_t first_record;  // slot of this task's first output record
};

std::string cell_failure(const std::exception& e) {
    return std::string(e.what());
}

} // namespace

TTestSelection t_test_selection(const CoefVector& beta_hat, const ExceedanceSeries& series,
                                const PredictorPanel& panel) {
    const int p = panel.p();
    TTestSelection sel;

    const HessianMatrix h = hessian(beta_hat, series, panel);
    const Eigen::MatrixXd info = -h;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    bool pd = ldlt.info() == Eigen::Success && ldlt.isPositive();
    Eigen::VectorXd var;
    if (pd) {
        const Eigen::MatrixXd cov =
            ldlt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
        var = cov.diagonal();
        if ((var.array() <= 0.0).any()) pd = false;
    }
    sel.hessian_pd = pd;
    if (!pd) return sel;

    const auto significant = [&](int packed_index, double coef) {
        const double se = std::sqrt(var(packed_index));
        return std::abs(coef) > kWaldThreshold * se;
    };
    for (int j = 0; j < p; ++j) {
        if (significant(1 + j, beta_hat.shape(1 + j))) sel.active_k.push_back(j);
        if (significant(p + 2 + j, beta_hat.scale(1 + j))) sel.active_sigma.push_back(j);
    }
    if (significant(2 * p + 2, beta_hat.ar())) sel.active_sigma.push_back(p);
    return sel;
}

StudyResult run_study(const StudyConfig& config) {
    if (config.n_reps < 1) throw std::invalid_argument("run_study: n_reps must be >= 1");
    if (config.T_list.empty() || config.presets.empty())
        throw std::invalid_argument("run_study: empty preset or T list");
    if (!config.run_mle && !config.run_tal)
        throw std::invalid_argument("run_study: no estimator requested");
    if (config.run_tal && config.criteria.empty())
        throw std::invalid_argument("run_study: tal requested without criteria");

    const std::size_t records_per_task =
        (config.run_mle ? 1u : 0u) + (config.run_tal ? config.criteria.size() : 0u);

    std::vector<Task> tasks;
    for (int preset : config.presets)
        for (int T : config.T_list)
            for (int rep = 0; rep < config.n_reps; ++rep) {
                const std::uint64_t base =
                    config.base_seed != 0 ? config.base_seed : dgp_preset(preset, T).seed;
                tasks.push_back({preset, T, rep, base + static_cast<std::uint64_t>(rep),
                                 tasks.size() * records_per_task});
            }

    StudyResult result;
    result.records.resize(tasks.size() * records_per_task);

    const auto run_task = [&](const Task& task) {
        DgpSpec spec = dgp_preset(task.preset, task.T);
        spec.seed = task.seed;

        std::size_t slot = task.first_record;
        const auto blank = [&](const std::string& estimator, const std::string& criterion) {
            ReplicationRecord rec;
            rec.preset = task.preset;
            rec.T = task.T;
            rec.estimator = estimator;
            rec.criterion = criterion;
            rec.rep = task.rep;
            rec.seed = task.seed;
            return rec;
        };

        SimulatedSeries sim;
        ExceedanceSeries series;
        PredictorPanel panel;
        CoefVector truth;
        std::vector<IntegrationOrder> orders;
        std::string sim_failure;
        try {
            sim = simulate_series(spec, task.T);
            series = extract_exceedances(sim.losses, spec.u);
            panel = standardize_panel(sim.panel);
            truth = spec.to_model();
            orders = spec.predictor_orders();
        } catch (const std::exception& e) {
            sim_failure = cell_failure(e);
        }

        if (config.run_mle) {
            ReplicationRecord rec = blank("mle", "ttest");
            if (sim_failure.empty()) {
                try {
                    const FitResult fit = fit_mle(series, panel);
                    rec.errors = bias_mse(fit.beta_hat, truth, panel.scale_factors, orders, task.T);
                    const TTestSelection tt = t_test_selection(fit.beta_hat, series, panel);
                    rec.selection = selection_metrics(tt.active_k, tt.active_sigma, spec);
                    rec.hessian_pd = tt.hessian_pd;
                    rec.converged = fit.converged;
                    rec.ok = true;
                } catch (const std::exception& e) {
                    rec.failure = cell_failure(e);
                }
            } else {
                rec.failure = sim_failure;
            }
            result.records[slot++] = std::move(rec);
        }

        if (config.run_tal) {
            std::vector<FitResult> fits;
            std::string tal_failure = sim_failure;
            if (tal_failure.empty()) {
                try {
                    fits = fit_two_step_almle_multi(series, panel, config.criteria,
                                                    config.shape_grid, config.scale_grid);
                } catch (const std::exception& e) {
                    tal_failure = cell_failure(e);
                }
            }
            for (std::size_t c = 0; c < config.criteria.size(); ++c) {
                ReplicationRecord rec = blank("tal", criterion_name(config.criteria[c]));
                if (tal_failure.empty()) {
                    const FitResult& fit = fits[c];
                    rec.errors = bias_mse(fit.beta_hat, truth, panel.scale_factors, orders, task.T);
                    rec.selection = selection_metrics(fit.active_k, fit.active_sigma, spec);
                    rec.converged = fit.converged;
                    rec.ok = true;
                } else {
                    rec.failure = tal_failure;
                }
                result.records[slot++] = std::move(rec);
            }
        }
    };

    const int jobs = std::max(1, config.jobs);
    if (jobs == 1 || tasks.size() <= 1) {
        for (const Task& task : tasks) run_task(task);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        const int n_workers = std::min<std::size_t>(jobs, tasks.size());
        workers.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w)
            workers.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= tasks.size()) return;
                    run_task(tasks[i]);
                }
            });
        for (std::thread& t : workers) t.join();
    }

    for (const ReplicationRecord& rec : result.records)
        if (!rec.ok)
            result.failures.push_back("preset " + std::to_string(rec.preset) + " T " +
                                      std::to_string(rec.T) + " rep " + std::to_string(rec.rep) +
                                      " " + rec.estimator + "/" + rec.criterion + ": " +
                                      rec.failure);
    return result;
}

namespace {

struct EstimatorKey {
    std::string estimator;
    std::string criterion;
};

std::vector<EstimatorKey> estimator_keys(const StudyConfig& config) {
    std::vector<EstimatorKey> keys;
    if (config.run_mle) keys.push_back({"mle", "ttest"});
    if (config.run_tal)
        for (Criterion c : config.criteria) keys.push_back({"tal", criterion_name(c)});
    return keys;
}

// Mean over records passing the filter; NaN contributions are skipped so a
// category that is empty for the whole cell yields NaN (rendered blank).
template <typename Getter>
double cell_mean(const StudyResult& result, int preset, int T, const EstimatorKey& key,
                 Getter&& get) {
    double sum = 0.0;
    int n = 0;
    for (const ReplicationRecord& rec : result.records) {
        if (!rec.ok || rec.preset != preset || rec.T != T || rec.estimator != key.estimator ||
            rec.criterion != key.criterion)
            continue;
        const double v = get(rec);
        if (std::isnan(v)) continue;
        sum += v;
        ++n;
    }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / n;
}

int cell_ok_count(const StudyResult& result, int preset, int T, const EstimatorKey& key) {
    int n = 0;
    for (const ReplicationRecord& rec : result.records)
        if (rec.ok && rec.preset == preset && rec.T == T && rec.estimator == key.estimator &&
            rec.criterion == key.criterion)
            ++n;
    return n;
}

std::string rate_cell(double v) {
    return std::isnan(v) ? std::string() : format_double(v);
}

} // namespace

void write_bias_mse_csv(const std::string& path, const StudyConfig& config,
                        const StudyResult& result) {
    std::vector<std::string> header{"dgp", "estimator", "criterion"};
    for (int T : config.T_list) header.push_back("bias_" + std::to_string(T));
    for (int T : config.T_list) header.push_back("mse_" + std::to_string(T));
    header.push_back("reps_ok");

    std::vector<std::vector<std::string>> rows;
    for (int preset : config.presets)
        for (const EstimatorKey& key : estimator_keys(config)) {
            std::vector<std::string> row{std::to_string(preset), key.estimator, key.criterion};
            for (int T : config.T_list)
                row.push_back(rate_cell(cell_mean(result, preset, T, key,
                                                  [](const ReplicationRecord& r) {
                                                      return r.errors.bias;
                                                  })));
            for (int T : config.T_list)
                row.push_back(rate_cell(cell_mean(result, preset, T, key,
                                                  [](const ReplicationRecord& r) {
                                                      return r.errors.mse;
                                                  })));
            int ok_total = 0;
            for (int T : config.T_list) ok_total += cell_ok_count(result, preset, T, key);
            row.push_back(std::to_string(ok_total));
            rows.push_back(std::move(row));
        }
    write_csv(path, header, rows);
}

void write_selection_csv(const std::string& path, const StudyConfig& config,
                         const StudyResult& result) {
    const std::vector<std::string> header{
        "dgp",      "T",        "estimator", "criterion", "tp_k_i0", "fp_k_i0",
        "tp_k_i1",  "fp_k_i1",  "tp_s_i0",   "fp_s_i0",   "tp_s_i1", "fp_s_i1",
        "ccr",      "ar_rate",  "reps_ok"};

    std::vector<std::vector<std::string>> rows;
    for (int preset : config.presets)
        for (int T : config.T_list)
            for (const EstimatorKey& key : estimator_keys(config)) {
                const auto mean = [&](auto&& get) {
                    return rate_cell(cell_mean(result, preset, T, key, get));
                };
                std::vector<std::string> row{std::to_string(preset), std::to_string(T),
                                             key.estimator, key.criterion};
                row.push_back(mean([](const ReplicationRecord& r) {
                    return r.selection.k_i0.tp_rate();
                }));
                row.push_back(mean([](const ReplicationRecord& r) {
                    return r.selection.k_i0.fp_rate();
                }));
                row.push_back(mean([](const ReplicationRecord& r) {
                    return r.selection.k_i1.tp_rate();
                }));
                row.push_back(mean([](const ReplicationRecord& r) {
                    return r.selection.k_i1.fp_rate();
                }));
                row.push_back(mean([](const ReplicationRecord& r) {
                    return r.selection.sigma_i0.tp_rate();
                }));
                row.push_back(mean([](const ReplicationRecord& r) {
                    return r.selection.sigma_i0.fp_rate();
                }));
                row.push_back(mean([](const ReplicationRecord& r) {
                    return r.selection.sigma_i1.tp_rate();
                }));
                row.push_back(mean([](const ReplicationRecord& r) {
                    return r.selection.sigma_i1.fp_rate();
                }));
                row.push_back(mean([](const ReplicationRecord& r) { return r.selection.ccr(); }));
                row.push_back(mean([](const ReplicationRecord& r) {
                    return r.selection.ar_selected ? 1.0 : 0.0;
                }));
                row.push_back(std::to_string(cell_ok_count(result, preset, T, key)));
                rows.push_back(std::move(row));
            }
    write_csv(path, header, rows);
}

void write_study_manifest(const std::string& path, const StudyConfig& config,
                          const StudyResult& result) {
    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    ordered_json cfg;
    cfg["presets"] = config.presets;
    cfg["T_list"] = config.T_list;
    cfg["n_reps"] = config.n_reps;
    cfg["run_mle"] = config.run_mle;
    cfg["run_tal"] = config.run_tal;
    std::vector<std::string> crit_names;
    for (Criterion c : config.criteria) crit_names.push_back(criterion_name(c));
    cfg["criteria"] = crit_names;
    cfg["jobs"] = config.jobs;
    cfg["base_seed"] = config.base_seed;
    cfg["shape_grid"] = config.shape_grid;
    cfg["scale_grid"] = config.scale_grid;
    j["config"] = cfg;

    ordered_json cells = ordered_json::array();
    for (int preset : config.presets)
        for (int T : config.T_list) {
            ordered_json cell;
            cell["dgp"] = preset;
            cell["T"] = T;
            const std::uint64_t base =
                config.base_seed != 0 ? config.base_seed : dgp_preset(preset, T).seed;
            std::vector<std::uint64_t> seeds;
            for (int rep = 0; rep < config.n_reps; ++rep)
                seeds.push_back(base + static_cast<std::uint64_t>(rep));
            cell["seeds"] = seeds;
            int n_ok = 0, n_failed = 0, hessian_not_pd = 0, not_converged = 0;
            for (const ReplicationRecord& rec : result.records) {
                if (rec.preset != preset || rec.T != T) continue;
                if (rec.ok) {
                    ++n_ok;
                    if (!rec.hessian_pd) ++hessian_not_pd;
                    if (!rec.converged) ++not_converged;
                } else {
                    ++n_failed;
                }
            }
            cell["records_ok"] = n_ok;
            cell["records_failed"] = n_failed;
            cell["hessian_not_pd"] = hessian_not_pd;
            cell["not_converged"] = not_converged;
            cells.push_back(cell);
        }
    j["cells"] = cells;
    j["failures"] = result.failures;
    write_text_file(path, j.dump(2) + "\n");
}

} // namespace tailreg
