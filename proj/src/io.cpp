#include "tailreg/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tailreg {

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::string content;
    const auto append_row = [&content](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) content += ',';
            content += csv_escape(row[i]);
        }
        content += '\n';
    };
    append_row(header);
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw std::invalid_argument("write_csv: row width differs from header");
        append_row(row);
    }
    write_text_file(path, content);
}

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line, const std::string& path) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw std::runtime_error(path + ": unterminated quote");
    fields.push_back(std::move(cur));
    return fields;
}

} // namespace

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    CsvTable table;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && table.header.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line, path);
        if (table.header.empty()) {
            table.header = std::move(fields);
        } else {
            if (fields.size() != table.header.size())
                throw std::runtime_error(path + ": row " + std::to_string(table.rows.size() + 2) +
                                         " has " + std::to_string(fields.size()) +
                                         " fields, expected " +
                                         std::to_string(table.header.size()));
            table.rows.push_back(std::move(fields));
        }
    }
    if (table.header.empty()) throw std::runtime_error(path + ": empty file");
    return table;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << content;
    if (!out) throw std::runtime_error(path + ": write failed");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

ordered_json vector_to_json(const Eigen::VectorXd& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Eigen::VectorXd vector_from_json(const ordered_json& arr) {
    Eigen::VectorXd v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = arr[i].is_null()
                                              ? std::numeric_limits<double>::quiet_NaN()
                                              : arr[i].get<double>();
    return v;
}

ordered_json locals_to_json(const std::vector<LocalCoef>& locals) {
    ordered_json arr = ordered_json::array();
    for (const LocalCoef& lc : locals) arr.push_back({{"index", lc.index}, {"c", lc.c}});
    return arr;
}

std::vector<LocalCoef> locals_from_json(const ordered_json& arr) {
    std::vector<LocalCoef> locals;
    for (const auto& j : arr) locals.push_back({j.at("index").get<int>(), j.at("c").get<double>()});
    return locals;
}

} // namespace

ordered_json dgp_to_json(const DgpSpec& spec) {
    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["phi"] = vector_to_json(spec.phi);
    j["beta_shape"] = vector_to_json(spec.beta_shape);
    j["beta_scale"] = vector_to_json(spec.beta_scale);
    j["u"] = spec.u;
    j["r_m"] = spec.r_m;
    j["seed"] = spec.seed;
    j["local_shape"] = locals_to_json(spec.local_shape);
    j["local_scale"] = locals_to_json(spec.local_scale);
    return j;
}

DgpSpec dgp_from_json(const ordered_json& j) {
    DgpSpec spec;
    spec.phi = vector_from_json(j.at("phi"));
    spec.beta_shape = vector_from_json(j.at("beta_shape"));
    spec.beta_scale = vector_from_json(j.at("beta_scale"));
    spec.u = j.at("u").get<double>();
    spec.r_m = j.at("r_m").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.local_shape = locals_from_json(j.at("local_shape"));
    spec.local_scale = locals_from_json(j.at("local_scale"));
    spec.validate();
    return spec;
}

ordered_json fit_to_json(const FitResult& fit, const std::vector<std::string>& predictor_names) {
    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["criterion"] = fit.criterion;
    j["converged"] = fit.converged;
    j["warning_low_exceedances"] = fit.warning_low_exceedances;
    j["loglik"] = fit.loglik;
    j["ic"] = fit.ic;
    j["lambda_k"] = fit.lambda_k;
    j["lambda_sigma"] = fit.lambda_sigma;
    j["predictor_names"] = predictor_names;
    j["beta_shape"] = vector_to_json(fit.beta_hat.shape);
    j["beta_scale"] = vector_to_json(fit.beta_hat.scale);
    j["active_k"] = fit.active_k;
    j["active_sigma"] = fit.active_sigma;
    ordered_json path = ordered_json::array();
    for (const PathEntry& e : fit.path)
        path.push_back({{"lambda_k", e.lambda_k},
                        {"lambda_sigma", e.lambda_sigma},
                        {"loglik", e.loglik},
                        {"n_active", e.n_active},
                        {"ic", e.ic},
                        {"converged", e.converged}});
    j["path"] = path;
    return j;
}

FitResult fit_from_json(const ordered_json& j) {
    FitResult fit;
    fit.criterion = j.at("criterion").get<std::string>();
    fit.converged = j.at("converged").get<bool>();
    fit.warning_low_exceedances = j.at("warning_low_exceedances").get<bool>();
    fit.loglik = j.at("loglik").get<double>();
    fit.ic = j.at("ic").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                  : j.at("ic").get<double>();
    fit.lambda_k = j.at("lambda_k").get<double>();
    fit.lambda_sigma = j.at("lambda_sigma").get<double>();
    fit.beta_hat.shape = vector_from_json(j.at("beta_shape"));
    fit.beta_hat.scale = vector_from_json(j.at("beta_scale"));
    if (!fit.beta_hat.dims_consistent())
        throw std::runtime_error("fit_from_json: inconsistent coefficient blocks");
    fit.active_k = j.at("active_k").get<std::vector<int>>();
    fit.active_sigma = j.at("active_sigma").get<std::vector<int>>();
    for (const auto& e : j.at("path")) {
        PathEntry entry;
        entry.lambda_k = e.at("lambda_k").get<double>();
        entry.lambda_sigma = e.at("lambda_sigma").get<double>();
        entry.loglik = e.at("loglik").get<double>();
        entry.n_active = e.at("n_active").get<int>();
        entry.ic = e.at("ic").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                        : e.at("ic").get<double>();
        entry.converged = e.at("converged").get<bool>();
        fit.path.push_back(entry);
    }
    return fit;
}

void write_series_csv(const std::string& path, const Eigen::VectorXd& losses,
                      const PredictorPanel& panel) {
    if (losses.size() != panel.values.rows())
        throw std::invalid_argument("write_series_csv: loss/panel length mismatch");
    std::vector<std::string> header{"loss"};
    header.insert(header.end(), panel.names.begin(), panel.names.end());
    std::vector<std::vector<std::string>> rows;
    rows.reserve(static_cast<std::size_t>(losses.size()));
    for (Eigen::Index t = 0; t < losses.size(); ++t) {
        std::vector<std::string> row;
        row.reserve(header.size());
        row.push_back(format_double(losses(t)));
        for (int jcol = 0; jcol < panel.p(); ++jcol)
            row.push_back(format_double(panel.values(t, jcol)));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

SeriesData read_series_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    if (table.header.empty() || table.header[0] != "loss")
        throw std::runtime_error(path + ": first column must be 'loss'");
    const int p = static_cast<int>(table.header.size()) - 1;
    const int T = static_cast<int>(table.rows.size());
    if (T == 0) throw std::runtime_error(path + ": no data rows");

    SeriesData data;
    data.losses.resize(T);
    data.panel.values.resize(T, p);
    data.panel.names.assign(table.header.begin() + 1, table.header.end());
    data.panel.integration_order.assign(static_cast<std::size_t>(p), IntegrationOrder::I0);
    data.panel.scale_factors.assign(static_cast<std::size_t>(p), 1.0);
    for (int t = 0; t < T; ++t) {
        const auto& row = table.rows[static_cast<std::size_t>(t)];
        const auto parse = [&](const std::string& s, int col) {
            double v;
            const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size())
                throw std::runtime_error(path + ": row " + std::to_string(t + 2) + " column " +
                                         std::to_string(col + 1) + ": not a number: '" + s + "'");
            return v;
        };
        data.losses(t) = parse(row[0], 0);
        for (int jcol = 0; jcol < p; ++jcol)
            data.panel.values(t, jcol) = parse(row[static_cast<std::size_t>(jcol) + 1], jcol + 1);
    }
    data.panel.validate();
    return data;
}

} // namespace tailreg
