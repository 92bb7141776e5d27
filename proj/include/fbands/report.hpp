#pragma once

#include "fbands/harness.hpp"

#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fbands {

struct ReportFormats {
    bool csv = true;
    bool json = true;
    bool svg = true;

    [[nodiscard]] bool any() const noexcept { return csv || json || svg; }
};

[[nodiscard]] inline std::string report_stem(const DayRecord& d) {
    return format_date(d.date) + "_" + to_string(d.model) + "_" + to_string(d.method) + "_" + format_number(d.alpha);
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << content;
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

inline std::string region_csv(const DayRecord& d) {
    std::ostringstream out;
    const auto band = as_band(*d.region);
    const Curve& center = band ? band->center : std::get<BallRegion>(*d.region).center;
    if (band) {
        out << "t,lower,center,upper,truth\n";
        for (std::size_t t = 0; t < center.size(); ++t) {
            out << t + 1 << ',' << format_number(band->lower[t]) << ',' << format_number(center[t]) << ','
                << format_number(band->upper[t]) << ',' << format_number((*d.truth)[t]) << '\n';
        }
    } else {
        const double radius = std::get<BallRegion>(*d.region).radius;
        out << "t,center,radius,truth\n";
        for (std::size_t t = 0; t < center.size(); ++t) {
            out << t + 1 << ',' << format_number(center[t]) << ',' << format_number(radius) << ','
                << format_number((*d.truth)[t]) << '\n';
        }
    }
    return out.str();
}

inline std::vector<double> to_vec(const Curve& c) { return {c.values().begin(), c.values().end()}; }

inline std::string region_json(const DayRecord& d) {
    nlohmann::ordered_json j;
    j["date"] = format_date(d.date);
    j["day_type"] = to_string(d.day_type);
    j["model"] = to_string(d.model);
    j["method"] = to_string(d.method);
    j["alpha"] = d.alpha;
    j["k"] = d.k;
    if (const auto* ball = std::get_if<BallRegion>(&*d.region)) {
        j["center"] = to_vec(ball->center);
        j["radius"] = ball->radius;
        j["norm"] = to_string(ball->norm);
        j["degenerate"] = ball->degenerate;
    } else {
        const auto& band = std::get<BandRegion>(*d.region);
        j["center"] = to_vec(band.center);
        j["lower"] = to_vec(band.lower);
        j["upper"] = to_vec(band.upper);
    }
    j["truth"] = to_vec(*d.truth);
    j["contained"] = d.score.contained;
    if (d.score.band) {
        j["PCov"] = 100.0 * d.score.pcov;
        j["AWidth"] = d.score.width;
        j["FWS"] = d.score.fws;
    }
    return j.dump(2) + "\n";
}

/// Static line chart: recent same-type history in grey, the realized curve in
/// black, the center in blue and the band limits dashed.
inline std::string region_svg(const DayRecord& d) {
    constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, Bm = 40;
    std::vector<const Curve*> all;
    for (const auto& h : d.history) all.push_back(&h);
    all.push_back(&*d.truth);
    const auto band = as_band(*d.region);
    const Curve& center = band ? band->center : std::get<BallRegion>(*d.region).center;
    all.push_back(&center);
    if (band) {
        all.push_back(&band->lower);
        all.push_back(&band->upper);
    }
    double lo = all.front()->min(), hi = all.front()->max();
    for (const Curve* c : all) {
        lo = std::min(lo, c->min());
        hi = std::max(hi, c->max());
    }
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
    }
    const std::size_t tau = center.size();
    auto x = [&](std::size_t t) { return L + (W - L - R) * static_cast<double>(t) / static_cast<double>(tau - 1); };
    auto y = [&](double v) { return T + (H - T - Bm) * (hi - v) / (hi - lo); };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    auto polyline = [&](const Curve& c, const char* stroke, const char* extra) {
        std::string s = "  <polyline fill=\"none\" stroke=\"";
        s += stroke;
        s += "\" ";
        s += extra;
        s += " points=\"";
        for (std::size_t t = 0; t < tau; ++t) {
            if (t) s += ' ';
            s += num(x(t)) + "," + num(y(c[t]));
        }
        return s + "\"/>\n";
    };
    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
    s += "  <rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"white\"/>\n";
    s += "  <text x=\"" + num(L) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" + report_stem(d) +
         "</text>\n";
    s += "  <line x1=\"" + num(L) + "\" y1=\"" + num(H - Bm) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - Bm) +
         "\" stroke=\"black\"/>\n";
    s += "  <line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - Bm) +
         "\" stroke=\"black\"/>\n";
    s += "  <text x=\"4\" y=\"" + num(T + 4) + "\" font-family=\"sans-serif\" font-size=\"10\">" + num(hi) + "</text>\n";
    s += "  <text x=\"4\" y=\"" + num(H - Bm) + "\" font-family=\"sans-serif\" font-size=\"10\">" + num(lo) +
         "</text>\n";
    for (const auto& h : d.history) s += polyline(h, "#bbbbbb", "stroke-width=\"1\"");
    if (band) {
        s += polyline(band->lower, "black", "stroke-width=\"1.5\" stroke-dasharray=\"6,4\"");
        s += polyline(band->upper, "black", "stroke-width=\"1.5\" stroke-dasharray=\"6,4\"");
    }
    s += polyline(center, "#1f4fbf", "stroke-width=\"1.5\"");
    s += polyline(*d.truth, "black", "stroke-width=\"2\"");
    s += "</svg>\n";
    return s;
}

} // namespace detail

/// Writes `<date>_<model>_<method>_<alpha>.{csv,json,svg}` for every successful
/// day record and returns the paths written, in record order.
inline std::vector<std::filesystem::path> emit_reports(std::span<const DayRecord> days,
                                                       const std::filesystem::path& out_dir,
                                                       const ReportFormats& formats = {}) {
    std::vector<std::filesystem::path> written;
    if (!formats.any()) return written;
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw Error(ErrorKind::Io, "cannot create output directory " + out_dir.string());
    }
    for (const auto& d : days) {
        if (!d.ok || !d.region || !d.truth) continue;
        const std::string stem = report_stem(d);
        if (formats.csv) {
            written.push_back(out_dir / (stem + ".csv"));
            detail::write_file(written.back(), detail::region_csv(d));
        }
        if (formats.json) {
            written.push_back(out_dir / (stem + ".json"));
            detail::write_file(written.back(), detail::region_json(d));
        }
        if (formats.svg) {
            written.push_back(out_dir / (stem + ".svg"));
            detail::write_file(written.back(), detail::region_svg(d));
        }
    }
    return written;
}

/// metrics.csv and days.csv (deterministic) plus timing.csv (wall clock).
inline void write_backtest_tables(const BacktestResult& res, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw Error(ErrorKind::Io, "cannot create output directory " + out_dir.string());
    }
    std::ostringstream m, d, t;
    write_metrics_csv(m, res.metrics);
    write_days_csv(d, res.days);
    write_timing_csv(t, res);
    detail::write_file(out_dir / "metrics.csv", m.str());
    detail::write_file(out_dir / "days.csv", d.str());
    detail::write_file(out_dir / "timing.csv", t.str());
}

} // namespace fbands
