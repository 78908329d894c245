#include "tailreg/features.hpp"

#include "tailreg/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tailreg {

namespace {

double parse_field(const std::string& field, std::size_t row, const char* column) {
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw std::invalid_argument("ticks: line " + std::to_string(row + 2) +
                                    ": cannot parse " + column + " from '" + field + "'");
    return value;
}

} // namespace

TickData read_ticks_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    const std::vector<std::string> base{"timestamp_ms", "price", "volume"};
    const bool with_duration =
        table.header.size() == 4 && table.header[3] == "duration_ms";
    if (!(table.header.size() == 3 || with_duration) ||
        !std::equal(base.begin(), base.end(), table.header.begin()))
        throw std::invalid_argument(
            "ticks: header must be timestamp_ms,price,volume[,duration_ms]");

    TickData data;
    data.has_duration = with_duration;
    data.ticks.reserve(table.rows.size());
    std::int64_t prev_ts = std::numeric_limits<std::int64_t>::min();
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::vector<std::string>& row = table.rows[r];
        TickRecord tick;
        const double ts = parse_field(row[0], r, "timestamp_ms");
        tick.timestamp_ms = static_cast<std::int64_t>(ts);
        if (static_cast<double>(tick.timestamp_ms) != ts)
            throw std::invalid_argument("ticks: line " + std::to_string(r + 2) +
                                        ": timestamp_ms must be an integer");
        tick.price = parse_field(row[1], r, "price");
        tick.volume = parse_field(row[2], r, "volume");
        if (!(tick.price > 0.0) || !(tick.volume > 0.0))
            throw std::invalid_argument("ticks: line " + std::to_string(r + 2) +
                                        ": price and volume must be > 0");
        if (with_duration) {
            tick.duration_ms = parse_field(row[3], r, "duration_ms");
            if (!(tick.duration_ms >= 0.0))
                throw std::invalid_argument("ticks: line " + std::to_string(r + 2) +
                                            ": duration_ms must be >= 0");
        }
        if (tick.timestamp_ms < prev_ts)
            throw std::invalid_argument("ticks: line " + std::to_string(r + 2) +
                                        ": timestamps must be nondecreasing");
        prev_ts = tick.timestamp_ms;
        data.ticks.push_back(tick);
    }
    return data;
}

namespace {

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

} // namespace

BarSeries build_bars(const TickData& data, const std::vector<TradingSession>& sessions) {
    for (std::size_t s = 0; s < sessions.size(); ++s) {
        if (!(sessions[s].open_ms < sessions[s].close_ms))
            throw std::invalid_argument("build_bars: session must open before it closes");
        if (s > 0 && sessions[s].open_ms < sessions[s - 1].close_ms)
            throw std::invalid_argument("build_bars: sessions must be sorted and disjoint");
    }
    for (std::size_t i = 1; i < data.ticks.size(); ++i)
        if (data.ticks[i].timestamp_ms < data.ticks[i - 1].timestamp_ms)
            throw std::invalid_argument("build_bars: ticks must be sorted by timestamp");

    BarSeries series;
    series.has_duration = data.has_duration;
    std::size_t i = 0;  // tick cursor
    bool have_price = false;
    double carried_price = 0.0;

    for (std::size_t s = 0; s < sessions.size(); ++s) {
        const TradingSession& session = sessions[s];
        // Skip ticks before the session opens.
        while (i < data.ticks.size() && data.ticks[i].timestamp_ms < session.open_ms) {
            ++series.n_ticks_outside_sessions;
            ++i;
        }
        const std::size_t session_begin = i;
        std::size_t probe = i;
        bool session_has_trades = false;
        while (probe < data.ticks.size() && data.ticks[probe].timestamp_ms < session.close_ms) {
            session_has_trades = true;
            ++probe;
        }
        if (!session_has_trades) {
            series.warnings.push_back("session " + std::to_string(s) + " has no trades");
            continue;
        }
        i = session_begin;

        bool seeded = false;
        double seed_price = 0.0;
        for (std::int64_t start = session.open_ms; start < session.close_ms;
             start += kBarIntervalMs) {
            const std::int64_t stop = std::min(start + kBarIntervalMs, session.close_ms);
            Bar bar;
            bar.session = static_cast<int>(s);
            bar.start_ms = start;
            while (i < data.ticks.size() && data.ticks[i].timestamp_ms < stop) {
                const TickRecord& tick = data.ticks[i];
                bar.prices.push_back(tick.price);
                bar.volumes.push_back(tick.volume);
                if (data.has_duration) bar.durations.push_back(tick.duration_ms);
                if (seeded) bar.returns.push_back(std::log(tick.price) - std::log(seed_price));
                seeded = true;
                seed_price = tick.price;
                ++i;
            }
            bar.n = static_cast<int>(bar.prices.size());
            if (bar.n > 0) {
                bar.price = median_of(bar.prices);
                have_price = true;
                carried_price = bar.price;
            } else if (have_price) {
                bar.price = carried_price;
            } else {
                continue;  // nothing to carry yet: drop the slot
            }
            bar.t = static_cast<int>(series.bars.size());
            series.bars.push_back(std::move(bar));
        }
    }
    series.n_ticks_outside_sessions +=
        static_cast<int>(data.ticks.size() - i);
    return series;
}

std::vector<std::optional<double>> bar_losses(const BarSeries& series) {
    std::vector<std::optional<double>> losses(series.bars.size());
    for (std::size_t t = 1; t < series.bars.size(); ++t)
        if (series.bars[t].session == series.bars[t - 1].session)
            losses[t] = -(std::log(series.bars[t].price) - std::log(series.bars[t - 1].price));
    return losses;
}

std::vector<std::optional<double>> rolling_threshold(
    const std::vector<std::optional<double>>& losses, int h, double q) {
    if (h < 10) throw std::invalid_argument("rolling_threshold: window must be >= 10 bars");
    if (!(q > 0.0) || !(q < 1.0))
        throw std::invalid_argument("rolling_threshold: quantile must be in (0, 1)");
    int n_defined = 0;
    for (const auto& l : losses)
        if (l) ++n_defined;
    if (n_defined <= h)
        throw std::invalid_argument("rolling_threshold: need more than " + std::to_string(h) +
                                    " defined losses, have " + std::to_string(n_defined));

    // Upper order statistic; the nudge keeps ceil() from overshooting when
    // q * h rounds a hair above an integer.
    const double m = q * static_cast<double>(h);
    int rank = static_cast<int>(std::ceil(m * (1.0 - 1e-12)));
    rank = std::clamp(rank, 1, h);

    std::vector<std::optional<double>> u(losses.size());
    std::vector<double> history;  // defined losses in time order
    history.reserve(losses.size());
    std::vector<double> window(static_cast<std::size_t>(h));
    for (std::size_t t = 0; t < losses.size(); ++t) {
        if (static_cast<int>(history.size()) >= h) {
            std::copy(history.end() - h, history.end(), window.begin());
            std::nth_element(window.begin(), window.begin() + (rank - 1), window.end());
            u[t] = window[static_cast<std::size_t>(rank - 1)];
        }
        if (losses[t]) history.push_back(*losses[t]);
    }
    return u;
}

namespace {

struct BaseName {
    Indicator id;
    const char* name;
    bool windowed;
};

constexpr BaseName kRegistry[] = {
    {Indicator::TV, "TV", false},
    {Indicator::TQ, "TQ", false},
    {Indicator::AM, "AM", false},
    {Indicator::MTVV, "MTVV", false},
    {Indicator::EAM, "EAM", false},
    {Indicator::MTQV, "MTQV", false},
    {Indicator::MRV, "MRV", false},
    {Indicator::MNRV, "MNRV", false},
    {Indicator::Dur, "dur", false},
    {Indicator::AMI, "AMI", true},
    {Indicator::Roll, "Roll", true},
    {Indicator::RollNeg, "RollNeg", true},
    {Indicator::RollMod, "RollMod", true},
    {Indicator::RollModNeg, "RollModNeg", true},
    {Indicator::TVV, "TVV", true},
    {Indicator::TQV, "TQV", true},
    {Indicator::RTVV, "RTVV", true},
    {Indicator::RTQV, "RTQV", true},
    {Indicator::RAC, "RAC", true},
    {Indicator::VR, "VR", true},
    {Indicator::RV, "RV", true},
    {Indicator::MNRV2RV, "MNRV2RV", true},
    {Indicator::MRV2RV, "MRV2RV", true},
};

const BaseName& registry_entry(Indicator id) {
    for (const BaseName& entry : kRegistry)
        if (entry.id == id) return entry;
    throw std::invalid_argument("IndicatorSpec: unknown formula");
}

// Rank of a windowed formula inside its window block, matching the canonical
// column listing.
constexpr Indicator kWindowBlock[] = {
    Indicator::AMI,  Indicator::Roll, Indicator::RollNeg, Indicator::RollMod,
    Indicator::RollModNeg, Indicator::TVV, Indicator::TQV, Indicator::RTVV,
    Indicator::RTQV, Indicator::RAC,  Indicator::VR,      Indicator::RV,
    Indicator::MNRV2RV,    Indicator::MRV2RV,
};

int window_block_rank(Indicator id) {
    for (int j = 0; j < 14; ++j)
        if (kWindowBlock[j] == id) return j;
    throw std::invalid_argument("IndicatorSpec: not a windowed formula");
}

int window_position(int window) {
    switch (window) {
        case 2: return 0;
        case 6: return 1;
        case 12: return 2;
        default: throw std::invalid_argument("IndicatorSpec: window must be 2, 6, or 12");
    }
}

} // namespace

std::string IndicatorSpec::name() const {
    const BaseName& entry = registry_entry(id);
    if (!entry.windowed) return entry.name;
    return std::string(entry.name) + "_" + std::to_string(window);
}

bool IndicatorSpec::windowed() const { return registry_entry(id).windowed; }

void IndicatorSpec::validate() const {
    const BaseName& entry = registry_entry(id);
    if (entry.windowed)
        (void)window_position(window);
    else if (window != 0)
        throw std::invalid_argument("IndicatorSpec: within-bar measures take no window");
}

IndicatorSpec parse_indicator_name(const std::string& name) {
    const std::size_t sep = name.rfind('_');
    const std::string base = sep == std::string::npos ? name : name.substr(0, sep);
    for (const BaseName& entry : kRegistry) {
        if (base != entry.name) continue;
        IndicatorSpec spec;
        spec.id = entry.id;
        if (sep != std::string::npos) {
            const std::string suffix = name.substr(sep + 1);
            int w = 0;
            const auto [ptr, ec] = std::from_chars(suffix.data(), suffix.data() + suffix.size(), w);
            if (ec != std::errc() || ptr != suffix.data() + suffix.size())
                throw std::invalid_argument("parse_indicator_name: bad window in '" + name + "'");
            spec.window = w;
        }
        spec.validate();
        return spec;
    }
    throw std::invalid_argument("parse_indicator_name: unknown indicator '" + name + "'");
}

std::vector<IndicatorSpec> default_feature_set() {
    std::vector<IndicatorSpec> specs;
    for (int j = 0; j < 9; ++j) specs.push_back({kRegistry[j].id, 0});
    for (Indicator id : {Indicator::AMI, Indicator::VR, Indicator::RV, Indicator::MNRV2RV,
                         Indicator::MRV2RV})
        specs.push_back({id, 2});
    for (int window : {6, 12})
        for (Indicator id : kWindowBlock) specs.push_back({id, window});
    return specs;
}

int canonical_rank(const IndicatorSpec& spec) {
    spec.validate();
    if (!spec.windowed()) {
        for (int j = 0; j < 9; ++j)
            if (kRegistry[j].id == spec.id) return j;
    }
    return 9 + window_position(spec.window) * 14 + window_block_rank(spec.id);
}

namespace {

// Population moments, accumulated in index order.
double pop_mean(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double pop_var(const std::vector<double>& x) {
    const double m = pop_mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

double pop_cov(const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = pop_mean(x);
    const double my = pop_mean(y);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
    return s / static_cast<double>(x.size());
}

struct BarContext {
    const BarSeries& series;

    const Bar& bar(int t) const { return series.bars[static_cast<std::size_t>(t)]; }
    int T() const { return static_cast<int>(series.bars.size()); }

    bool same_session(int a, int b) const { return bar(a).session == bar(b).session; }

    // Five-minute log return, defined between consecutive bars of a session.
    std::optional<double> ret(int t) const {
        if (t < 1 || !same_session(t, t - 1)) return std::nullopt;
        return std::log(bar(t).price) - std::log(bar(t - 1).price);
    }

    // Price difference, same definedness as the return.
    std::optional<double> price_diff(int t) const {
        if (t < 1 || !same_session(t, t - 1)) return std::nullopt;
        return bar(t).price - bar(t - 1).price;
    }

    std::optional<double> tv(int t) const {
        const Bar& b = bar(t);
        if (b.n == 0) return std::nullopt;
        double s = 0.0;
        for (int i = 0; i < b.n; ++i)
            s += b.prices[static_cast<std::size_t>(i)] * b.volumes[static_cast<std::size_t>(i)];
        return s;
    }

    std::optional<double> tq(int t) const {
        const Bar& b = bar(t);
        if (b.n == 0) return std::nullopt;
        double s = 0.0;
        for (double v : b.volumes) s += v;
        return s;
    }

    // Collects the window {f(t-j)}_{j=0..w-1} in that order; empty optional
    // when any element is undefined or the window leaves the data.
    template <typename F>
    std::optional<std::vector<double>> window_values(int t, int w, F&& f) const {
        if (t - (w - 1) < 0) return std::nullopt;
        std::vector<double> values;
        values.reserve(static_cast<std::size_t>(w));
        for (int j = 0; j < w; ++j) {
            const std::optional<double> v = f(t - j);
            if (!v) return std::nullopt;
            values.push_back(*v);
        }
        return values;
    }

    // Difference vector (P_{t-w+1} - P_{t-w}, ..., P_t - P_{t-1}), oldest
    // first; w differences require w+1 bars of one session.
    std::optional<std::vector<double>> diff_vector(int t, int w) const {
        if (t - w < 0) return std::nullopt;
        std::vector<double> diffs(static_cast<std::size_t>(w));
        for (int j = 0; j < w; ++j) {
            const std::optional<double> d = price_diff(t - w + 1 + j);
            if (!d) return std::nullopt;
            diffs[static_cast<std::size_t>(j)] = *d;
        }
        return diffs;
    }

    // Return vector (R_{t-w+1}, ..., R_t), oldest first.
    std::optional<std::vector<double>> return_vector(int t, int w) const {
        if (t - w < 0) return std::nullopt;
        std::vector<double> rets(static_cast<std::size_t>(w));
        for (int j = 0; j < w; ++j) {
            const std::optional<double> r = ret(t - w + 1 + j);
            if (!r) return std::nullopt;
            rets[static_cast<std::size_t>(j)] = *r;
        }
        return rets;
    }

    std::optional<double> roll(int t, int w) const {
        const auto cur = diff_vector(t, w);
        const auto prev = diff_vector(t - 1, w);
        if (!cur || !prev) return std::nullopt;
        return pop_cov(*cur, *prev);
    }

    std::optional<double> mnrv(int t) const {
        const Bar& b = bar(t);
        if (b.n == 0) return std::nullopt;
        const double log_p = std::log(b.price);
        double s = 0.0;
        for (double p : b.prices) {
            const double d = std::log(p) - log_p;
            s += d * d;
        }
        return std::sqrt(s / static_cast<double>(b.n));
    }

    std::optional<double> mrv(int t) const {
        const Bar& b = bar(t);
        if (b.returns.empty()) return std::nullopt;
        double s = 0.0;
        for (double r : b.returns) s += r * r;
        return std::sqrt(s);
    }

    std::optional<double> rv(int t, int w) const {
        const auto rets = window_values(t, w, [&](int s) { return ret(s); });
        if (!rets) return std::nullopt;
        double s = 0.0;
        for (double r : *rets) s += r * r;
        return std::sqrt(s);
    }
};

std::optional<double> evaluate(const IndicatorSpec& spec, const BarContext& ctx, int t) {
    const Bar& b = ctx.bar(t);
    const int w = spec.window;
    switch (spec.id) {
        case Indicator::TV:
            return ctx.tv(t);
        case Indicator::TQ:
            return ctx.tq(t);
        case Indicator::AM: {
            if (b.returns.empty()) return std::nullopt;
            // Returns align with the trades they end on: trade 0 has none
            // when the bar opens its session.
            const int offset = b.n - static_cast<int>(b.returns.size());
            double s = 0.0;
            for (std::size_t j = 0; j < b.returns.size(); ++j) {
                const std::size_t i = j + static_cast<std::size_t>(offset);
                s += std::fabs(b.returns[j]) / (b.prices[i] * b.volumes[i]);
            }
            return s / static_cast<double>(b.returns.size());
        }
        case Indicator::MTVV: {
            if (b.n == 0) return std::nullopt;
            std::vector<double> pv(static_cast<std::size_t>(b.n));
            for (int i = 0; i < b.n; ++i)
                pv[static_cast<std::size_t>(i)] =
                    b.prices[static_cast<std::size_t>(i)] * b.volumes[static_cast<std::size_t>(i)];
            return std::sqrt(pop_var(pv));
        }
        case Indicator::EAM: {
            if (b.n == 0) return std::nullopt;
            double lo = b.prices[0];
            double hi = b.prices[0];
            for (double p : b.prices) {
                lo = std::min(lo, p);
                hi = std::max(hi, p);
            }
            return (hi - lo) / *ctx.tv(t);
        }
        case Indicator::MTQV:
            if (b.n == 0) return std::nullopt;
            return std::sqrt(pop_var(b.volumes));
        case Indicator::MRV:
            return ctx.mrv(t);
        case Indicator::MNRV:
            return ctx.mnrv(t);
        case Indicator::Dur: {
            if (!ctx.series.has_duration || b.n == 0) return std::nullopt;
            double s = 0.0;
            for (double d : b.durations) s += d;
            return s / static_cast<double>(b.n);
        }
        case Indicator::AMI: {
            const auto terms = ctx.window_values(t, w, [&](int s) -> std::optional<double> {
                const std::optional<double> r = ctx.ret(s);
                const std::optional<double> volume = ctx.tv(s);
                if (!r || !volume) return std::nullopt;
                return std::fabs(*r) / *volume;
            });
            if (!terms) return std::nullopt;
            double s = 0.0;
            for (double v : *terms) s += v;
            return s / static_cast<double>(w);
        }
        case Indicator::Roll:
            return ctx.roll(t, w);
        case Indicator::RollNeg: {
            const std::optional<double> r = ctx.roll(t, w);
            if (!r) return std::nullopt;
            return *r < 0.0 ? *r : 0.0;
        }
        case Indicator::RollMod: {
            const std::optional<double> r = ctx.roll(t, w);
            if (!r) return std::nullopt;
            return *r / b.price;
        }
        case Indicator::RollModNeg: {
            const std::optional<double> r = ctx.roll(t, w);
            if (!r) return std::nullopt;
            const double mod = *r / b.price;
            return mod < 0.0 ? mod : 0.0;
        }
        case Indicator::TVV:
        case Indicator::RTVV:
        case Indicator::TQV:
        case Indicator::RTQV: {
            const bool volume_side =
                spec.id == Indicator::TQV || spec.id == Indicator::RTQV;
            const auto values = ctx.window_values(t, w, [&](int s) {
                return volume_side ? ctx.tq(s) : ctx.tv(s);
            });
            if (!values) return std::nullopt;
            const double sd = std::sqrt(pop_var(*values));
            if (spec.id == Indicator::TVV || spec.id == Indicator::TQV) return sd;
            return sd / pop_mean(*values);
        }
        case Indicator::RAC: {
            const auto cur = ctx.return_vector(t, w);
            const auto prev = ctx.return_vector(t - 1, w);
            if (!cur || !prev) return std::nullopt;
            const double vx = pop_var(*cur);
            const double vy = pop_var(*prev);
            if (vx == 0.0 || vy == 0.0) return std::nullopt;
            return pop_cov(*cur, *prev) / (std::sqrt(vx) * std::sqrt(vy));
        }
        case Indicator::VR: {
            if (b.n == 0) return std::nullopt;
            const auto rets = ctx.return_vector(t, w);
            if (!rets) return std::nullopt;
            const double var_r = pop_var(*rets);
            if (var_r == 0.0) return std::nullopt;
            const double log_p = std::log(b.price);
            std::vector<double> dev(static_cast<std::size_t>(b.n));
            for (int i = 0; i < b.n; ++i)
                dev[static_cast<std::size_t>(i)] =
                    std::log(b.prices[static_cast<std::size_t>(i)]) - log_p;
            return (static_cast<double>(w) * pop_var(dev)) /
                   (static_cast<double>(b.n) * var_r);
        }
        case Indicator::RV:
            return ctx.rv(t, w);
        case Indicator::MNRV2RV:
        case Indicator::MRV2RV: {
            const std::optional<double> num =
                spec.id == Indicator::MNRV2RV ? ctx.mnrv(t) : ctx.mrv(t);
            const std::optional<double> den = ctx.rv(t, w);
            if (!num || !den || *den == 0.0) return std::nullopt;
            return *num / *den;
        }
    }
    throw std::logic_error("compute_indicator: unhandled formula");
}

} // namespace

std::optional<double> compute_indicator(const IndicatorSpec& spec, const BarSeries& series,
                                        int t) {
    spec.validate();
    if (t < 0 || t >= static_cast<int>(series.bars.size()))
        throw std::invalid_argument("compute_indicator: bar index out of range");
    return evaluate(spec, BarContext{series}, t);
}

FeatureTable compute_features(const BarSeries& series, int h, double q,
                              std::vector<IndicatorSpec> specs) {
    for (const IndicatorSpec& spec : specs) spec.validate();
    FeatureTable table;
    for (const IndicatorSpec& spec : specs) table.names.push_back(spec.name());
    table.loss = bar_losses(series);
    table.u = rolling_threshold(table.loss, h, q);
    const BarContext ctx{series};
    const int T = static_cast<int>(series.bars.size());
    table.t.resize(static_cast<std::size_t>(T));
    table.rows.resize(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        table.t[static_cast<std::size_t>(t)] = t;
        std::vector<std::optional<double>>& row = table.rows[static_cast<std::size_t>(t)];
        row.reserve(specs.size());
        for (const IndicatorSpec& spec : specs) row.push_back(evaluate(spec, ctx, t));
    }
    return table;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::optional<double> parse_cell(const std::string& field, std::size_t row,
                                 const std::string& column) {
    if (field.empty()) return std::nullopt;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw std::invalid_argument("features: line " + std::to_string(row + 2) +
                                    ", column " + column + ": cannot parse '" + field + "'");
    return value;
}

} // namespace

void write_features_csv(const std::string& path, const FeatureTable& table) {
    std::vector<std::string> header{"t", "loss", "u"};
    header.insert(header.end(), table.names.begin(), table.names.end());
    std::vector<std::vector<std::string>> rows;
    rows.reserve(table.t.size());
    for (std::size_t i = 0; i < table.t.size(); ++i) {
        std::vector<std::string> row{std::to_string(table.t[i]), cell(table.loss[i]),
                                     cell(table.u[i])};
        for (const std::optional<double>& v : table.rows[i]) row.push_back(cell(v));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

FeatureTable read_features_csv(const std::string& path) {
    const CsvTable csv = read_csv(path);
    if (csv.header.size() < 3 || csv.header[0] != "t" || csv.header[1] != "loss" ||
        csv.header[2] != "u")
        throw std::invalid_argument("features: header must start with t,loss,u");
    FeatureTable table;
    table.names.assign(csv.header.begin() + 3, csv.header.end());
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const std::vector<std::string>& row = csv.rows[r];
        int t = 0;
        const auto [ptr, ec] = std::from_chars(row[0].data(), row[0].data() + row[0].size(), t);
        if (ec != std::errc() || ptr != row[0].data() + row[0].size())
            throw std::invalid_argument("features: line " + std::to_string(r + 2) +
                                        ": cannot parse t from '" + row[0] + "'");
        table.t.push_back(t);
        table.loss.push_back(parse_cell(row[1], r, "loss"));
        table.u.push_back(parse_cell(row[2], r, "u"));
        std::vector<std::optional<double>> cells;
        cells.reserve(table.names.size());
        for (std::size_t c = 0; c < table.names.size(); ++c)
            cells.push_back(parse_cell(row[c + 3], r, table.names[c]));
        table.rows.push_back(std::move(cells));
    }
    return table;
}

DesignBuild build_design(const FeatureTable& table) {
    const std::size_t p = table.names.size();
    if (p == 0) throw std::invalid_argument("build_design: no indicator columns");

    // Canonical column order, independent of how the table was produced.
    std::vector<std::size_t> order(p);
    std::vector<int> ranks(p);
    for (std::size_t c = 0; c < p; ++c) {
        order[c] = c;
        ranks[c] = canonical_rank(parse_indicator_name(table.names[c]));
    }
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return ranks[a] < ranks[b]; });
    for (std::size_t c = 1; c < p; ++c)
        if (ranks[order[c]] == ranks[order[c - 1]])
            throw std::invalid_argument("build_design: duplicate column " +
                                        table.names[order[c]]);

    // A row enters when its loss and threshold exist, the previous bar is
    // adjacent, and every indicator is defined there (the one-step lag).
    std::vector<std::size_t> keep;
    int dropped = 0;
    for (std::size_t i = 1; i < table.t.size(); ++i) {
        if (table.t[i] != table.t[i - 1] + 1) {
            ++dropped;
            continue;
        }
        bool ok = table.loss[i].has_value() && table.u[i].has_value();
        for (std::size_t c = 0; ok && c < p; ++c) ok = table.rows[i - 1][c].has_value();
        if (ok)
            keep.push_back(i);
        else
            ++dropped;
    }
    if (keep.empty())
        throw std::invalid_argument("build_design: no usable rows after dropping undefined");

    DesignBuild design;
    design.n_dropped = dropped;
    design.panel.values.resize(static_cast<Eigen::Index>(keep.size()),
                               static_cast<Eigen::Index>(p));
    design.losses.resize(static_cast<Eigen::Index>(keep.size()));
    design.u.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < p; ++c)
        design.panel.names.push_back(table.names[order[c]]);
    design.panel.integration_order.assign(p, IntegrationOrder::I0);
    design.panel.scale_factors.assign(p, 1.0);
    for (std::size_t r = 0; r < keep.size(); ++r) {
        const std::size_t i = keep[r];
        design.bar_index.push_back(table.t[i]);
        design.losses(static_cast<Eigen::Index>(r)) = *table.loss[i];
        design.u(static_cast<Eigen::Index>(r)) = *table.u[i];
        for (std::size_t c = 0; c < p; ++c)
            design.panel.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                *table.rows[i - 1][order[c]];
    }
    design.panel.validate();
    return design;
}

DesignBuild build_design(const BarSeries& series, int h, double q,
                         std::vector<IndicatorSpec> specs) {
    return build_design(compute_features(series, h, q, std::move(specs)));
}

} // namespace tailreg
