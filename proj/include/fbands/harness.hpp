#pragma once

#include "fbands/evaluation.hpp"
#include "fbands/ingest.hpp"
#include "fbands/parallel.hpp"
#include "fbands/pipeline.hpp"
#include "fbands/rng.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace fbands {

struct BacktestConfig {
    Date first;
    Date last;
    std::vector<RegionMethod> methods = {RegionMethod{MethodKind::Lp, NormTag::Linf}};
    std::vector<ModelFamily> models = {ModelFamily::FNP};
    std::vector<double> alphas = {0.05};
    PipelineConfig pipeline; ///< its `model` field is overridden by `models`
    std::uint64_t seed = 1;
    std::size_t window = 365;

    void validate() const {
        if (last < first) throw Error(ErrorKind::Config, "evaluation range is empty");
        if (models.empty()) throw Error(ErrorKind::Config, "no model selected");
        for (double a : alphas) {
            if (!(a > 0.0 && a < 1.0)) throw Error(ErrorKind::Config, "alpha values must lie in (0, 1)");
        }
        if (window == 0) throw Error(ErrorKind::Config, "window must be positive");
        pipeline.validate();
    }
};

/// One scored region of one evaluation day.
struct DayRecord {
    Date date;
    DayType day_type = DayType::Weekday;
    ModelFamily model = ModelFamily::FNP;
    RegionMethod method;
    double alpha = 0.05;
    bool ok = false;
    std::string cause; ///< failure reason when !ok
    std::size_t k = 0;
    DayScore score;
    std::optional<PredictionRegion> region;
    std::optional<Curve> truth;
    std::vector<Curve> history;
};

struct DayTiming {
    Date date;
    ModelFamily model = ModelFamily::FNP;
    double fit_seconds = 0.0; ///< CV, fit and bootstrap
    std::vector<double> region_seconds; ///< per method, summed over alphas
};

struct MetricRow {
    std::string day_type; ///< Weekday, Saturday, Sunday or Year
    RegionMethod method;
    ModelFamily model = ModelFamily::FNP;
    double alpha = 0.0;
    RegionReport report;
};

struct BacktestResult {
    BacktestConfig config;
    std::vector<DayRecord> days;
    std::vector<DayTiming> timings;
    std::vector<MetricRow> metrics;
};

/// Day-count pooled aggregation: per day type and over all days ("Year").
[[nodiscard]] inline std::vector<MetricRow> aggregate_backtest(const BacktestConfig& cfg,
                                                              std::span<const DayRecord> days) {
    std::vector<MetricRow> rows;
    const std::pair<const char*, std::optional<DayType>> groups[] = {{"Weekday", DayType::Weekday},
                                                                     {"Saturday", DayType::Saturday},
                                                                     {"Sunday", DayType::Sunday},
                                                                     {"Year", std::nullopt}};
    for (const auto& [name, type] : groups) {
        for (const auto& model : cfg.models) {
            for (const auto& method : cfg.methods) {
                for (double alpha : cfg.alphas) {
                    std::vector<DayScore> scores;
                    for (const auto& d : days) {
                        if (!d.ok || d.model != model || !(d.method == method) || d.alpha != alpha) continue;
                        if (type && d.day_type != *type) continue;
                        scores.push_back(d.score);
                    }
                    rows.push_back(MetricRow{name, method, model, alpha, aggregate(scores)});
                }
            }
        }
    }
    return rows;
}

/// Rolling one-day-ahead evaluation. Every day draws from its own seed stream
/// and runs independently, so the result does not depend on `threads`. A day
/// that fails is recorded with its cause and left out of the metrics.
[[nodiscard]] inline BacktestResult rolling_evaluate(const BacktestConfig& cfg, const FunctionalSample& data,
                                                     unsigned threads = 1) {
    cfg.validate();
    std::vector<Date> dates;
    for (Date d = cfg.first; d <= cfg.last; d += std::chrono::days{1}) dates.push_back(d);
    const std::size_t per_day = cfg.models.size() * cfg.methods.size() * cfg.alphas.size();
    std::vector<std::vector<DayRecord>> slots(dates.size());
    std::vector<std::vector<DayTiming>> timing_slots(dates.size());

    parallel_for(dates.size(), threads, [&](std::size_t di) {
        using clock = std::chrono::steady_clock;
        const Date date = dates[di];
        auto& out = slots[di];
        out.reserve(per_day);
        std::optional<DayTypeProblem> problem;
        std::string setup_error;
        try {
            problem = day_type_sets(data, date, cfg.window);
            if (!problem->truth) setup_error = "no realized curve for " + format_date(date);
        } catch (const Error& e) {
            setup_error = e.what();
        }
        for (std::size_t mi = 0; mi < cfg.models.size(); ++mi) {
            const ModelFamily model = cfg.models[mi];
            auto record = [&](const RegionMethod& method, double alpha) {
                DayRecord r;
                r.date = date;
                r.day_type = day_type_of(date);
                r.model = model;
                r.method = method;
                r.alpha = alpha;
                return r;
            };
            std::optional<DayFit> fit;
            std::string cause = setup_error;
            const auto t0 = clock::now();
            if (cause.empty()) {
                try {
                    if (model == ModelFamily::SFPL && !problem->has_target_covariates) {
                        throw Error(ErrorKind::Data, "covariates of the target day are missing");
                    }
                    PipelineConfig pc = cfg.pipeline;
                    pc.model = model;
                    const auto seed = derive_seed(cfg.seed, kDayStream,
                                                  static_cast<std::uint64_t>(date.time_since_epoch().count()) * 2 + mi);
                    fit = fit_day(problem->sample, problem->query, pc, seed);
                } catch (const Error& e) {
                    cause = e.what();
                }
            }
            DayTiming timing{date, model, std::chrono::duration<double>(clock::now() - t0).count(),
                             std::vector<double>(cfg.methods.size(), 0.0)};
            for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
                for (double alpha : cfg.alphas) {
                    DayRecord r = record(cfg.methods[k], alpha);
                    if (!fit) {
                        r.cause = cause;
                        out.push_back(std::move(r));
                        continue;
                    }
                    r.k = fit->spec.k;
                    const auto t1 = clock::now();
                    try {
                        r.region = build_region(fit->run, cfg.methods[k], alpha, cfg.pipeline);
                        r.score = score_outcome(RegionOutcome{*problem->truth, *r.region, alpha});
                        r.truth = problem->truth;
                        r.history = problem->recent_history;
                        r.ok = true;
                    } catch (const Error& e) {
                        r.region.reset();
                        r.cause = e.what();
                    }
                    timing.region_seconds[k] += std::chrono::duration<double>(clock::now() - t1).count();
                    out.push_back(std::move(r));
                }
            }
            if (fit) timing_slots[di].push_back(std::move(timing));
        }
    });

    BacktestResult result{cfg, {}, {}, {}};
    for (auto& s : slots) {
        for (auto& r : s) result.days.push_back(std::move(r));
    }
    for (auto& s : timing_slots) {
        for (auto& t : s) result.timings.push_back(std::move(t));
    }
    result.metrics = aggregate_backtest(cfg, result.days);
    return result;
}

// ---------------------------------------------------------------------------
// Tabular output
// ---------------------------------------------------------------------------

/// Shortest round-trip decimal, "NaN" for NaN.
[[nodiscard]] inline std::string format_number(double v) {
    if (std::isnan(v)) return "NaN";
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline constexpr std::string_view kMetricsHeader = "day_type,method,model,alpha,FCov,PCov,AWidth,FWS";

inline void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
    out << kMetricsHeader << '\n';
    for (const auto& r : rows) {
        out << r.day_type << ',' << to_string(r.method) << ',' << to_string(r.model) << ',' << format_number(r.alpha)
            << ',' << format_number(r.report.fcov) << ',' << format_number(r.report.pcov) << ','
            << format_number(r.report.awidth) << ',' << format_number(r.report.fws) << '\n';
    }
}

inline void write_days_csv(std::ostream& out, std::span<const DayRecord> days) {
    out << "date,day_type,model,method,alpha,status,k,contained,PCov,AWidth,FWS,cause\n";
    for (const auto& d : days) {
        out << format_date(d.date) << ',' << to_string(d.day_type) << ',' << to_string(d.model) << ','
            << to_string(d.method) << ',' << format_number(d.alpha) << ',' << (d.ok ? "ok" : "failed") << ',' << d.k
            << ',';
        if (d.ok) {
            out << (d.score.contained ? 1 : 0) << ',' << format_number(100.0 * d.score.pcov) << ','
                << format_number(d.score.width) << ',' << format_number(d.score.fws) << ',';
        } else {
            out << ",,,,";
        }
        std::string cause = d.cause;
        for (char& c : cause) {
            if (c == ',' || c == '\n' || c == '"') c = ';';
        }
        out << cause << '\n';
    }
}

/// Mean seconds per evaluation day for each (model, method); region time
/// includes the shared fit.
inline void write_timing_csv(std::ostream& out, const BacktestResult& res) {
    out << "# cpu=" << std::thread::hardware_concurrency() << " hardware threads";
    std::ifstream cpu("/proc/cpuinfo");
    for (std::string line; std::getline(cpu, line);) {
        if (line.rfind("model name", 0) == 0) {
            out << "; " << line.substr(line.find(':') + 2);
            break;
        }
    }
    out << "\nmodel,method,days,seconds_per_day\n";
    for (const auto& model : res.config.models) {
        for (std::size_t k = 0; k < res.config.methods.size(); ++k) {
            double total = 0.0;
            std::size_t n = 0;
            for (const auto& t : res.timings) {
                if (t.model != model) continue;
                total += t.fit_seconds + t.region_seconds[k];
                ++n;
            }
            out << to_string(model) << ',' << to_string(res.config.methods[k]) << ',' << n << ','
                << format_number(n ? total / static_cast<double>(n) : std::nan("")) << '\n';
        }
    }
}

} // namespace fbands
