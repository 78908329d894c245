#pragma once

#include "tailreg/estimators.hpp"
#include "tailreg/simulation.hpp"
#include "tailreg/types.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace tailreg {

// Every serializer in the project writes keys in declaration order so that
// identical inputs produce byte-identical files.
using ordered_json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "1";

// Shortest decimal string that parses back to exactly x (std::to_chars).
// Non-finite values format as "nan"/"inf"/"-inf"; NaN cells in tables are
// rendered empty by the table writers instead.
std::string format_double(double x);

// Quotes a CSV field only when it contains a comma, quote, or newline.
std::string csv_escape(const std::string& field);

// Writes header + rows, comma separated, "\n" line ends.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Minimal CSV reader: splits on commas, honors double-quoted fields, strips
// a trailing "\r". Returns header + rows; throws on ragged rows.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 when absent
};
CsvTable read_csv(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Ground-truth serialization for synthetic experiments.
ordered_json dgp_to_json(const DgpSpec& spec);
DgpSpec dgp_from_json(const ordered_json& j);

// Fit serialization: coefficients, active sets, tuning outcome, and path.
ordered_json fit_to_json(const FitResult& fit, const std::vector<std::string>& predictor_names);
FitResult fit_from_json(const ordered_json& j);

// Simulated series on disk: one row per period with the loss and the
// predictor columns (already lagged by the producer).
void write_series_csv(const std::string& path, const Eigen::VectorXd& losses,
                      const PredictorPanel& panel);
struct SeriesData {
    Eigen::VectorXd losses;
    PredictorPanel panel;
};
SeriesData read_series_csv(const std::string& path);

} // namespace tailreg
