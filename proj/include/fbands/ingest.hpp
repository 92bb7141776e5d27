#pragma once

#include "fbands/curves.hpp"
#include "fbands/error.hpp"
#include "fbands/regression.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fbands {

using Date = std::chrono::sys_days;

enum class DayType { Weekday, Saturday, Sunday };

[[nodiscard]] inline const char* to_string(DayType d) noexcept {
    switch (d) {
    case DayType::Weekday: return "Weekday";
    case DayType::Saturday: return "Saturday";
    case DayType::Sunday: return "Sunday";
    }
    return "?";
}

[[nodiscard]] inline DayType day_type_of(Date d) noexcept {
    const std::chrono::weekday w{d};
    if (w == std::chrono::Saturday) return DayType::Saturday;
    if (w == std::chrono::Sunday) return DayType::Sunday;
    return DayType::Weekday;
}

[[nodiscard]] inline std::string format_date(Date d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

namespace detail {

inline bool parse_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

inline bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline std::string fmt_double(double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

} // namespace detail

[[nodiscard]] inline std::optional<Date> parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y = 0, m = 0, d = 0;
    if (!detail::parse_int(s.substr(0, 4), y) || !detail::parse_int(s.substr(5, 2), m) ||
        !detail::parse_int(s.substr(8, 2), d)) {
        return std::nullopt;
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return Date{ymd};
}

/// Hour-aligned civil timestamp with an optional UTC offset.
struct HourStamp {
    Date date;
    int hour = 0;
    std::optional<int> offset_minutes;

    /// Minutes since the epoch of the instant (civil time when no offset is given).
    [[nodiscard]] long long instant_minutes() const noexcept {
        return static_cast<long long>(date.time_since_epoch().count()) * 1440 + hour * 60 - offset_minutes.value_or(0);
    }

    friend bool operator==(const HourStamp&, const HourStamp&) = default;
};

[[nodiscard]] inline std::string format_stamp(const HourStamp& s) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%sT%02d:00", format_date(s.date).c_str(), s.hour);
    std::string out = buf;
    if (s.offset_minutes) {
        const int off = *s.offset_minutes;
        if (off == 0) {
            out += 'Z';
        } else {
            const int a = std::abs(off);
            std::snprintf(buf, sizeof buf, "%c%02d:%02d", off < 0 ? '-' : '+', a / 60, a % 60);
            out += buf;
        }
    }
    return out;
}

/// ISO-8601 `YYYY-MM-DDTHH:MM[:SS][Z|+HH:MM|-HH:MM]` (a space may replace `T`);
/// minutes and seconds must be zero.
[[nodiscard]] inline std::optional<HourStamp> parse_stamp(std::string_view s) {
    if (s.size() < 16 || (s[10] != 'T' && s[10] != ' ') || s[13] != ':') return std::nullopt;
    const auto date = parse_date(s.substr(0, 10));
    int hh = 0, mm = 0, ss = 0;
    if (!date || !detail::parse_int(s.substr(11, 2), hh) || !detail::parse_int(s.substr(14, 2), mm)) return std::nullopt;
    std::size_t pos = 16;
    if (pos < s.size() && s[pos] == ':') {
        if (s.size() < pos + 3 || !detail::parse_int(s.substr(pos + 1, 2), ss)) return std::nullopt;
        pos += 3;
    }
    if (hh < 0 || hh > 23 || mm != 0 || ss != 0) return std::nullopt;
    HourStamp out{*date, hh, std::nullopt};
    const auto rest = s.substr(pos);
    if (rest.empty()) return out;
    if (rest == "Z") {
        out.offset_minutes = 0;
        return out;
    }
    int oh = 0, om = 0;
    if (rest.size() != 6 || (rest[0] != '+' && rest[0] != '-') || rest[3] != ':' ||
        !detail::parse_int(rest.substr(1, 2), oh) || !detail::parse_int(rest.substr(4, 2), om)) {
        return std::nullopt;
    }
    out.offset_minutes = (rest[0] == '-' ? -1 : 1) * (oh * 60 + om);
    return out;
}

struct HourlyRecord {
    HourStamp timestamp;
    double demand = 0.0;   // MWh
    double price = 0.0;    // Cent/kWh
    double max_temp = 0.0; // deg C, daily value repeated per hour
    double wind = 0.0;     // MWh, daily value repeated per hour

    friend bool operator==(const HourlyRecord&, const HourlyRecord&) = default;
};

struct ColumnMap {
    std::string timestamp = "timestamp";
    std::string demand = "demand_mwh";
    std::string price = "price_cent_kwh";
    std::string max_temp = "max_temp_c";
    std::string wind = "wind_mwh";
};

inline constexpr std::string_view kHourlyHeader = "timestamp,demand_mwh,price_cent_kwh,max_temp_c,wind_mwh";

namespace detail {

/// One record per local hour: a missing hour (23-hour day) is linearly
/// interpolated from its neighbours; a repeated hour (25-hour day) is averaged.
inline std::vector<HourlyRecord> normalize_dst(std::vector<HourlyRecord> recs) {
    std::vector<HourlyRecord> out;
    out.reserve(recs.size());
    std::size_t i = 0;
    while (i < recs.size()) {
        std::size_t j = i;
        while (j < recs.size() && recs[j].timestamp.date == recs[i].timestamp.date) ++j;
        std::map<int, std::vector<const HourlyRecord*>> by_hour;
        for (std::size_t r = i; r < j; ++r) by_hour[recs[r].timestamp.hour].push_back(&recs[r]);
        const bool shifted = recs[i].timestamp.offset_minutes.has_value();
        std::vector<HourlyRecord> day;
        for (auto& [hour, list] : by_hour) {
            HourlyRecord merged = *list.front();
            if (list.size() > 1) {
                const auto m = static_cast<double>(list.size());
                merged.demand = merged.price = merged.max_temp = merged.wind = 0.0;
                for (const auto* r : list) {
                    merged.demand += r->demand / m;
                    merged.price += r->price / m;
                    merged.max_temp += r->max_temp / m;
                    merged.wind += r->wind / m;
                }
            }
            day.push_back(merged);
        }
        // A single missing interior hour on an offset-aware full day is the spring-forward hour.
        if (shifted && day.size() == 23 && (j - i) == 23 && i > 0 && j < recs.size()) {
            int missing = 0;
            while (missing < 24 && by_hour.count(missing)) ++missing;
            const auto at = static_cast<std::size_t>(missing);
            HourlyRecord fill = day[missing == 0 ? 0 : at - 1];
            fill.timestamp.hour = missing;
            if (missing > 0 && missing < 23) {
                const HourlyRecord& a = day[at - 1];
                const HourlyRecord& b = day[at];
                fill.demand = 0.5 * (a.demand + b.demand);
                fill.price = 0.5 * (a.price + b.price);
                fill.max_temp = 0.5 * (a.max_temp + b.max_temp);
                fill.wind = 0.5 * (a.wind + b.wind);
                fill.timestamp.offset_minutes = b.timestamp.offset_minutes;
            }
            day.insert(day.begin() + static_cast<std::ptrdiff_t>(at), fill);
        }
        out.insert(out.end(), day.begin(), day.end());
        i = j;
    }
    return out;
}

} // namespace detail

/// Reads hourly observations. Timestamps must increase strictly by one hour
/// (as instants, so DST transitions with explicit offsets are legal); a gap is
/// reported with the first missing timestamp.
[[nodiscard]] inline std::vector<HourlyRecord> parse_hourly_csv(std::istream& in, const ColumnMap& columns = {},
                                                               const std::string& source = "<input>") {
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) -> Error {
        return Error(ErrorKind::Data, source + ":" + std::to_string(line_no) + ": " + what);
    };
    if (!std::getline(in, line)) throw Error(ErrorKind::Data, source + ": empty file");
    ++line_no;
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3); // UTF-8 BOM
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_csv(line);
    auto column = [&](const std::string& name) -> std::size_t {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == name) return c;
        }
        throw fail("missing column '" + name + "'");
    };
    const std::size_t c_ts = column(columns.timestamp), c_d = column(columns.demand), c_p = column(columns.price),
                      c_t = column(columns.max_temp), c_w = column(columns.wind);

    std::vector<HourlyRecord> recs;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != header.size()) throw fail("expected " + std::to_string(header.size()) + " fields");
        const auto stamp = parse_stamp(f[c_ts]);
        if (!stamp) throw fail("bad timestamp '" + std::string(f[c_ts]) + "'");
        HourlyRecord r{*stamp};
        const std::pair<std::size_t, double*> cells[] = {{c_d, &r.demand}, {c_p, &r.price}, {c_t, &r.max_temp}, {c_w, &r.wind}};
        for (const auto& [c, dst] : cells) {
            if (!detail::parse_double(f[c], *dst)) throw fail("bad number '" + std::string(f[c]) + "'");
            if (!std::isfinite(*dst)) throw fail("non-finite value");
        }
        if (!recs.empty()) {
            const long long prev = recs.back().timestamp.instant_minutes();
            const long long cur = r.timestamp.instant_minutes();
            if (cur <= prev) throw fail("timestamps must strictly increase");
            if (cur - prev != 60) {
                HourStamp missing = recs.back().timestamp;
                const long long civil = prev + 60 + missing.offset_minutes.value_or(0);
                missing.date = Date{std::chrono::days{civil / 1440}};
                missing.hour = static_cast<int>((civil % 1440) / 60);
                throw fail("gap in hourly data: missing " + format_stamp(missing));
            }
        }
        recs.push_back(r);
    }
    return detail::normalize_dst(std::move(recs));
}

[[nodiscard]] inline std::vector<HourlyRecord> load_hourly_csv(const std::string& path, const ColumnMap& columns = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    return parse_hourly_csv(in, columns, path);
}

inline void write_hourly_csv(std::ostream& out, std::span<const HourlyRecord> recs) {
    out << kHourlyHeader << '\n';
    for (const auto& r : recs) {
        out << format_stamp(r.timestamp) << ',' << detail::fmt_double(r.demand) << ',' << detail::fmt_double(r.price)
            << ',' << detail::fmt_double(r.max_temp) << ',' << detail::fmt_double(r.wind) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Daily curves
// ---------------------------------------------------------------------------

enum class Series { Demand, Price };

/// Heating and cooling degree transforms of the daily maximum temperature.
[[nodiscard]] constexpr std::pair<double, double> hdd_cdd(double max_temp_c) noexcept {
    return {std::max(20.0 - max_temp_c, 0.0), std::max(max_temp_c - 24.0, 0.0)};
}

struct DailyObservation {
    Date date;
    DayType day_type = DayType::Weekday;
    Curve curve;
    CovariateRow covariates;
};

/// Ordered daily curves sharing one grid.
struct FunctionalSample {
    Grid grid{24};
    std::vector<DailyObservation> days;
    std::vector<std::string> warnings;

    [[nodiscard]] const DailyObservation* find(Date d) const {
        auto it = std::lower_bound(days.begin(), days.end(), d,
                                   [](const DailyObservation& o, Date x) { return o.date < x; });
        return (it != days.end() && it->date == d) ? &*it : nullptr;
    }
};

/// One 24-point curve per complete day. Demand days carry x = (HDD, CDD);
/// price days carry x = (daily demand, wind production). Incomplete leading or
/// trailing days are dropped with a warning.
[[nodiscard]] inline FunctionalSample build_daily_curves(std::span<const HourlyRecord> recs,
                                                         Series series = Series::Demand) {
    FunctionalSample out;
    const Grid grid(24);
    out.grid = grid;
    std::size_t i = 0;
    while (i < recs.size()) {
        std::size_t j = i;
        while (j < recs.size() && recs[j].timestamp.date == recs[i].timestamp.date) ++j;
        const Date date = recs[i].timestamp.date;
        bool complete = (j - i) == 24;
        for (std::size_t r = i; complete && r < j; ++r) complete = recs[r].timestamp.hour == static_cast<int>(r - i);
        if (!complete) {
            if (i != 0 && j != recs.size()) {
                throw Error(ErrorKind::Data, "incomplete interior day " + format_date(date));
            }
            out.warnings.push_back("dropped incomplete day " + format_date(date) + " (" + std::to_string(j - i) +
                                   " hours)");
            i = j;
            continue;
        }
        std::vector<double> v(24);
        double total_demand = 0.0, temp = 0.0, wind = 0.0;
        for (std::size_t h = 0; h < 24; ++h) {
            const auto& r = recs[i + h];
            v[h] = series == Series::Demand ? r.demand : r.price;
            total_demand += r.demand;
            temp += r.max_temp / 24.0;
            wind += r.wind / 24.0;
        }
        CovariateRow x;
        if (series == Series::Demand) {
            const auto [hdd, cdd] = hdd_cdd(temp);
            x.x = {hdd, cdd};
        } else {
            x.x = {total_demand, wind};
        }
        out.days.push_back(DailyObservation{date, day_type_of(date), Curve(grid, std::move(v)), std::move(x)});
        i = j;
    }
    return out;
}

/// Concatenated curve values, the inverse of the daily segmentation.
[[nodiscard]] inline std::vector<double> flatten(const FunctionalSample& s) {
    std::vector<double> out;
    out.reserve(s.days.size() * s.grid.tau());
    for (const auto& d : s.days) out.insert(out.end(), d.curve.values().begin(), d.curve.values().end());
    return out;
}

/// Centered moving average over `width` hours within each day (truncated at the
/// day boundaries).
[[nodiscard]] inline FunctionalSample presmooth(const FunctionalSample& s, std::size_t width) {
    if (width <= 1) return s;
    FunctionalSample out = s;
    const auto half = static_cast<std::ptrdiff_t>(width / 2);
    for (auto& d : out.days) {
        const auto src = s.find(d.date)->curve.values();
        const auto tau = static_cast<std::ptrdiff_t>(src.size());
        std::vector<double> v(src.size());
        for (std::ptrdiff_t t = 0; t < tau; ++t) {
            const auto a = std::max<std::ptrdiff_t>(0, t - half);
            const auto b = std::min<std::ptrdiff_t>(tau - 1, t + half);
            double acc = 0.0;
            for (auto u = a; u <= b; ++u) acc += src[static_cast<std::size_t>(u)];
            v[static_cast<std::size_t>(t)] = acc / static_cast<double>(b - a + 1);
        }
        d.curve = Curve(s.grid, std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Day-type regression samples
// ---------------------------------------------------------------------------

/// Date of the curve that explains `d`: the previous weekday (Friday before a
/// Monday) for weekdays, the previous calendar day for Saturdays and Sundays.
[[nodiscard]] inline Date predictor_date(Date d) {
    using std::chrono::days;
    if (day_type_of(d) == DayType::Weekday && std::chrono::weekday{d} == std::chrono::Monday) return d - days{3};
    return d - days{1};
}

struct DayTypeProblem {
    Date target;
    DayType day_type = DayType::Weekday;
    RegressionSample sample;
    std::vector<Date> response_dates;
    Query query;
    bool has_target_covariates = false;
    std::optional<Curve> truth;
    std::vector<Curve> recent_history; ///< last few same-type curves, for plotting
};

/// Training pairs of the target's day type taken from the `window_days` days
/// preceding the target, and the query built from the target's predictor day.
[[nodiscard]] inline DayTypeProblem day_type_sets(const FunctionalSample& data, Date target,
                                                  std::size_t window_days = 365) {
    using std::chrono::days;
    if (data.days.empty() || data.days.front().date > target - days{static_cast<int>(window_days)}) {
        throw Error(ErrorKind::InsufficientHistory,
                    "need " + std::to_string(window_days) + " days of history before " + format_date(target));
    }
    const DayType type = day_type_of(target);
    std::vector<RegressionPair> pairs;
    std::vector<long long> idx;
    std::vector<Date> dates;
    for (int back = static_cast<int>(window_days); back >= 1; --back) {
        const Date d = target - days{back};
        if (day_type_of(d) != type) continue;
        const auto* resp = data.find(d);
        const auto* pred = data.find(predictor_date(d));
        if (!resp || !pred) continue;
        pairs.push_back(RegressionPair{pred->curve, resp->covariates, resp->curve});
        idx.push_back(d.time_since_epoch().count());
        dates.push_back(d);
    }
    if (pairs.size() < 3) {
        throw Error(ErrorKind::InsufficientHistory, "fewer than 3 training pairs for " + format_date(target));
    }
    const auto* qday = data.find(predictor_date(target));
    if (!qday) {
        throw Error(ErrorKind::InsufficientHistory,
                    "predictor day " + format_date(predictor_date(target)) + " missing for " + format_date(target));
    }
    const auto* tday = data.find(target);
    const std::size_t p = pairs.front().covariates.x.size();
    Query query{qday->curve, tday ? tday->covariates : CovariateRow{std::vector<double>(p, 0.0)}};
    std::vector<Curve> hist;
    for (std::size_t i = pairs.size() >= 8 ? pairs.size() - 8 : 0; i < pairs.size(); ++i) hist.push_back(pairs[i].response);
    std::optional<Curve> truth;
    if (tday) truth = tday->curve;
    return DayTypeProblem{target, type, RegressionSample(std::move(pairs), std::move(idx)), std::move(dates),
                          std::move(query), tday != nullptr, std::move(truth), std::move(hist)};
}

// ---------------------------------------------------------------------------
// Outlier replacement
// ---------------------------------------------------------------------------

struct OutlierReplacement {
    Date date;
    double distance = 0.0;
    double limit = 0.0;
};

struct CleanedSample {
    FunctionalSample sample;
    std::vector<OutlierReplacement> audit;
};

namespace detail {

inline Curve pointwise_median(std::span<const Curve> curves) {
    std::vector<double> out(curves.front().size());
    std::vector<double> col(curves.size());
    for (std::size_t t = 0; t < out.size(); ++t) {
        for (std::size_t i = 0; i < curves.size(); ++i) col[i] = curves[i][t];
        std::sort(col.begin(), col.end());
        const std::size_t m = col.size() / 2;
        out[t] = col.size() % 2 ? col[m] : 0.5 * (col[m - 1] + col[m]);
    }
    return Curve(curves.front().grid(), std::move(out));
}

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

} // namespace detail

/// Flags a day whose L2 distance to the pointwise median of its `window`
/// preceding same-type days exceeds threshold times the median such distance
/// of its day type, and replaces it by the triangular-weighted average of the
/// `window` nearest unflagged same-type days in time (weight maxoff + 1 - |offset|,
/// offsets counted in same-type days, earlier day first on ties).
[[nodiscard]] inline CleanedSample replace_outliers(const FunctionalSample& s, std::size_t window, double threshold) {
    if (window == 0) throw Error(ErrorKind::InvalidArgument, "outlier window must be at least 1");
    CleanedSample out{s, {}};
    for (DayType type : {DayType::Weekday, DayType::Saturday, DayType::Sunday}) {
        std::vector<std::size_t> pos;
        for (std::size_t i = 0; i < s.days.size(); ++i) {
            if (s.days[i].day_type == type) pos.push_back(i);
        }
        if (pos.size() <= window) continue;
        std::vector<double> dist(pos.size(), 0.0);
        std::vector<double> computed;
        for (std::size_t j = window; j < pos.size(); ++j) {
            std::vector<Curve> trailing;
            for (std::size_t a = j - window; a < j; ++a) trailing.push_back(s.days[pos[a]].curve);
            dist[j] = lp_distance(s.days[pos[j]].curve, detail::pointwise_median(trailing), NormTag::L2);
            computed.push_back(dist[j]);
        }
        const double scale = detail::median_of(computed);
        const double limit = threshold * scale;
        std::vector<bool> flagged(pos.size(), false);
        for (std::size_t j = window; j < pos.size(); ++j) flagged[j] = dist[j] > limit && dist[j] > 0.0;

        for (std::size_t j = 0; j < pos.size(); ++j) {
            if (!flagged[j]) continue;
            std::vector<std::pair<std::size_t, std::size_t>> cand; // (|offset|, position)
            for (std::size_t a = 0; a < pos.size(); ++a) {
                if (a == j || flagged[a]) continue;
                cand.emplace_back(a > j ? a - j : j - a, a);
            }
            std::sort(cand.begin(), cand.end());
            if (cand.size() > window) cand.resize(window);
            if (cand.empty()) continue;
            const double maxoff = static_cast<double>(cand.back().first);
            std::vector<double> acc(s.grid.tau(), 0.0);
            double wsum = 0.0;
            for (const auto& [off, a] : cand) {
                const double w = maxoff + 1.0 - static_cast<double>(off);
                wsum += w;
                for (std::size_t t = 0; t < acc.size(); ++t) acc[t] += w * s.days[pos[a]].curve[t];
            }
            for (double& v : acc) v /= wsum;
            out.sample.days[pos[j]].curve = Curve(s.grid, std::move(acc));
            out.audit.push_back(OutlierReplacement{s.days[pos[j]].date, dist[j], limit});
        }
    }
    std::sort(out.audit.begin(), out.audit.end(),
              [](const OutlierReplacement& a, const OutlierReplacement& b) { return a.date < b.date; });
    return out;
}

} // namespace fbands
