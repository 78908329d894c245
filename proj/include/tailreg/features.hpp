#pragma once

#include "tailreg/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tailreg {

// One trade. duration_ms is meaningful only when the source file carries the
// optional duration column.
struct TickRecord {
    std::int64_t timestamp_ms = 0;
    double price = 0.0;
    double volume = 0.0;
    double duration_ms = 0.0;
};

struct TickData {
    std::vector<TickRecord> ticks;
    bool has_duration = false;
};

// Header `timestamp_ms,price,volume[,duration_ms]`. Rows must be parseable,
// strictly positive in price and volume, and nondecreasing in time; the first
// offending line is reported by number.
TickData read_ticks_csv(const std::string& path);

// Half-open trading window [open_ms, close_ms).
struct TradingSession {
    std::int64_t open_ms = 0;
    std::int64_t close_ms = 0;
};

inline constexpr std::int64_t kBarIntervalMs = 5 * 60 * 1000;

// Five-minute bars per calendar week under the usual 6.5-hour session, the
// unit behind week-denominated threshold windows.
inline constexpr int kBarsPerWeek = 5 * 78;

// One five-minute slot. The price is the median trade price, carried forward
// over empty slots; tick arrays hold the within-slot trades. returns holds the
// within-bar log returns, seeded from the last trade earlier in the same
// session, so it has n entries when a seed exists and n - 1 (or 0) when the
// bar opens its session.
struct Bar {
    int t = 0;
    int session = 0;
    std::int64_t start_ms = 0;
    double price = 0.0;
    int n = 0;
    std::vector<double> prices;
    std::vector<double> volumes;
    std::vector<double> durations;  // empty when the tape has no durations
    std::vector<double> returns;
};

struct BarSeries {
    std::vector<Bar> bars;
    bool has_duration = false;
    int n_ticks_outside_sessions = 0;
    std::vector<std::string> warnings;
};

// One bar per five-minute slot inside each session. Sessions must be sorted
// and non-overlapping; ticks outside every session are counted and skipped,
// sessions without a single trade are skipped with a warning, and slots
// before the first trade of the tape are dropped (no price to carry).
BarSeries build_bars(const TickData& ticks, const std::vector<TradingSession>& sessions);

// Per-bar loss -(log P_t - log P_{t-1}), defined between consecutive bars of
// the same session.
std::vector<std::optional<double>> bar_losses(const BarSeries& series);

// u_t = upper empirical q-quantile (the ceil(q h)-th order statistic) of the
// h most recent defined losses strictly before t; undefined until h of them
// have accumulated. Requires h >= 10 and more than h defined losses.
std::vector<std::optional<double>> rolling_threshold(
    const std::vector<std::optional<double>>& losses, int h, double q = 0.9);

enum class Indicator {
    // Within-bar (W) measures.
    TV,
    TQ,
    AM,
    MTVV,
    EAM,
    MTQV,
    MRV,
    MNRV,
    Dur,
    // Windowed (A) and ratio (R) measures.
    AMI,
    Roll,
    RollNeg,
    RollMod,
    RollModNeg,
    TVV,
    TQV,
    RTVV,
    RTQV,
    RAC,
    VR,
    RV,
    MNRV2RV,
    MRV2RV,
};

// A named column: a formula plus, for windowed measures, the neighbourhood
// size T_w in {2, 6, 12}. Within-bar measures carry window 0.
struct IndicatorSpec {
    Indicator id = Indicator::TV;
    int window = 0;

    std::string name() const;  // e.g. "TV", "AMI_6"
    bool windowed() const;
    void validate() const;
};

IndicatorSpec parse_indicator_name(const std::string& name);

// The 42 standard columns in their canonical order: the nine within-bar
// measures, then the defined windowed measures at T_w = 2, 6, 12.
std::vector<IndicatorSpec> default_feature_set();

// Position of a spec in the canonical order (within-bar block first, then by
// window, then by formula rank inside the window block).
int canonical_rank(const IndicatorSpec& spec);

// Evaluates one formula at bar t. Empty when the value is undefined there:
// within-bar measures on an empty slot, windows reaching outside the data or
// across a session boundary (for return-based inputs), or a zero denominator.
std::optional<double> compute_indicator(const IndicatorSpec& spec, const BarSeries& series,
                                        int t);

// Per-bar table of loss, threshold, and indicator values as computed at that
// bar (no lag applied here).
struct FeatureTable {
    std::vector<std::string> names;
    std::vector<int> t;
    std::vector<std::optional<double>> loss;
    std::vector<std::optional<double>> u;
    std::vector<std::vector<std::optional<double>>> rows;  // [bar][column]
};

FeatureTable compute_features(const BarSeries& series, int h, double q = 0.9,
                              std::vector<IndicatorSpec> specs = default_feature_set());

// Header `t,loss,u,<names>`; undefined cells are empty fields; numbers are
// round-trip exact.
void write_features_csv(const std::string& path, const FeatureTable& table);
FeatureTable read_features_csv(const std::string& path);

// Estimation-ready design: row for bar t holds the indicators from bar t-1
// (predictors one step ahead of the loss they explain), restricted to bars
// where the loss, the threshold, and every lagged indicator are defined.
// Columns are put in canonical order regardless of the table's order.
struct DesignBuild {
    PredictorPanel panel;
    Eigen::VectorXd losses;
    Eigen::VectorXd u;
    std::vector<int> bar_index;  // bar t behind each retained row
    int n_dropped = 0;           // bars lost to undefined cells (warm-up included)
};

DesignBuild build_design(const FeatureTable& table);
DesignBuild build_design(const BarSeries& series, int h, double q = 0.9,
                         std::vector<IndicatorSpec> specs = default_feature_set());

} // namespace tailreg
