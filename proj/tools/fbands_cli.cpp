#include "fbands/config.hpp"
#include "fbands/harness.hpp"
#include "fbands/ingest.hpp"
#include "fbands/pipeline.hpp"
#include "fbands/report.hpp"
#include "fbands/synthetic.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace fbands;

/// Raw values of the flags that mirror config keys; unset flags stay empty.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> raw;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "JSON config file; flags override its keys");
        for (const auto& key : config_keys()) {
            app->add_option("--" + key, raw[key], "config key " + key + (list_key(key) ? " (comma list)" : ""));
        }
    }

    static bool list_key(const std::string& key) {
        return key == "k_grid" || key == "alpha" || key == "method" || key == "model";
    }
    static bool string_key(const std::string& key) {
        return key == "method" || key == "model" || key == "series" || key == "cv_mode";
    }

    static nlohmann::json scalar(const std::string& key, const std::string& text) {
        if (string_key(key)) return text;
        try {
            return nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error&) {
            throw Error(ErrorKind::Config, "bad value '" + text + "' for --" + key);
        }
    }

    [[nodiscard]] RunConfig resolve() const {
        nlohmann::json j = config_path.empty() ? nlohmann::json::object() : load_config_json(config_path);
        if (!j.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
        for (const auto& [key, text] : raw) {
            if (text.empty() && !list_key(key)) continue;
            if (list_key(key)) {
                if (text.empty()) continue;
                nlohmann::json arr = nlohmann::json::array();
                if (text != "none") {
                    std::size_t start = 0;
                    while (start <= text.size()) {
                        const auto end = std::min(text.find(',', start), text.size());
                        const auto item = text.substr(start, end - start);
                        if (!item.empty()) arr.push_back(scalar(key, item));
                        start = end + 1;
                    }
                }
                j[key] = arr;
            } else {
                j[key] = scalar(key, text);
            }
        }
        return config_from_json(j);
    }
};

Date require_date(const std::string& s, const char* flag) {
    const auto d = parse_date(s);
    if (!d) throw Error(ErrorKind::Config, std::string("bad date for ") + flag + ": '" + s + "' (YYYY-MM-DD)");
    return *d;
}

void print_notes(const std::vector<std::string>& notes) {
    for (const auto& n : notes) std::cerr << "note: " << n << '\n';
}

int cmd_ingest(const std::string& data, const std::string& series, const std::string& out) {
    RunConfig c;
    if (series == "price") c.series = Series::Price;
    else if (series != "demand") throw Error(ErrorKind::Config, "series must be 'demand' or 'price'");
    const auto records = load_hourly_csv(data);
    std::vector<std::string> notes;
    const auto sample = prepare_sample(records, c, &notes);
    print_notes(notes);
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& d : sample.days) ++counts[static_cast<int>(d.day_type)];
    std::cout << "records," << records.size() << "\ndays," << sample.days.size() << "\nweekdays," << counts[0]
              << "\nsaturdays," << counts[1] << "\nsundays," << counts[2] << '\n';
    if (!sample.days.empty()) {
        std::cout << "first," << format_date(sample.days.front().date) << "\nlast,"
                  << format_date(sample.days.back().date) << '\n';
    }
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw Error(ErrorKind::Io, "cannot write " + out);
        f << "date,day_type,x1,x2";
        for (std::size_t t = 1; t <= 24; ++t) f << ",v" << t;
        f << '\n';
        for (const auto& d : sample.days) {
            f << format_date(d.date) << ',' << to_string(d.day_type);
            for (double x : d.covariates.x) f << ',' << format_number(x);
            for (double v : d.curve.values()) f << ',' << format_number(v);
            f << '\n';
        }
    }
    return 0;
}

int cmd_predict(const ConfigFlags& flags, const std::string& data, const std::string& date_text) {
    const RunConfig c = flags.resolve();
    if (c.methods.empty() || c.models.empty()) throw Error(ErrorKind::Config, "predict needs one method and one model");
    const Date date = require_date(date_text, "--date");
    std::vector<std::string> notes;
    const auto sample = prepare_sample(load_hourly_csv(data), c, &notes);
    print_notes(notes);
    const auto problem = day_type_sets(sample, date, c.window);
    PipelineConfig pc = c.pipeline;
    pc.model = c.models.front();
    if (pc.model == ModelFamily::SFPL && !problem.has_target_covariates) {
        throw Error(ErrorKind::Data, "SFPL needs the covariates of " + format_date(date) + " in the data");
    }
    const auto fit = fit_day(problem.sample, problem.query, pc, derive_seed(c.seed, kDayStream), c.threads);
    const auto region = build_region(fit.run, c.methods.front(), c.alphas.front(), pc);
    std::cerr << "date " << format_date(date) << " (" << to_string(problem.day_type) << "), n = "
              << problem.sample.size() << ", k = " << fit.spec.k << ", k_boot = " << fit.run.k_boot << '\n';
    if (const auto band = as_band(region)) {
        std::cout << "t,lower,center,upper\n";
        for (std::size_t t = 0; t < band->center.size(); ++t) {
            std::cout << t + 1 << ',' << format_number(band->lower[t]) << ',' << format_number(band->center[t]) << ','
                      << format_number(band->upper[t]) << '\n';
        }
    } else {
        const auto& ball = std::get<BallRegion>(region);
        std::cout << "t,center,radius\n";
        for (std::size_t t = 0; t < ball.center.size(); ++t) {
            std::cout << t + 1 << ',' << format_number(ball.center[t]) << ',' << format_number(ball.radius) << '\n';
        }
    }
    if (problem.truth) {
        std::cerr << "realized curve " << (contains(region, *problem.truth) ? "inside" : "outside") << " the region\n";
    }
    return 0;
}

ReportFormats parse_formats(const std::string& text) {
    ReportFormats f{false, false, false};
    if (text.empty() || text == "none") return f;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = std::min(text.find(',', start), text.size());
        const auto item = text.substr(start, end - start);
        if (item == "csv") f.csv = true;
        else if (item == "json") f.json = true;
        else if (item == "svg") f.svg = true;
        else if (!item.empty()) throw Error(ErrorKind::Config, "unknown report format '" + item + "'");
        start = end + 1;
    }
    return f;
}

int cmd_backtest(const ConfigFlags& flags, const std::string& data, const std::string& from, const std::string& to,
                 const std::string& out, const std::string& reports) {
    const RunConfig c = flags.resolve();
    const ReportFormats formats = parse_formats(reports);
    if (c.methods.empty()) {
        std::cerr << "warning: empty method list, nothing to evaluate\n";
        return 0;
    }
    BacktestConfig bc;
    bc.first = require_date(from, "--from");
    bc.last = require_date(to, "--to");
    bc.methods = c.methods;
    bc.models = c.models;
    bc.alphas = c.alphas;
    bc.pipeline = c.pipeline;
    bc.seed = c.seed;
    bc.window = c.window;
    std::vector<std::string> notes;
    const auto sample = prepare_sample(load_hourly_csv(data), c, &notes);
    print_notes(notes);
    const auto res = rolling_evaluate(bc, sample, c.threads);
    write_backtest_tables(res, out);
    const auto files = emit_reports(res.days, out, formats);
    std::size_t failed = 0;
    for (const auto& d : res.days) failed += d.ok ? 0 : 1;
    write_metrics_csv(std::cout, res.metrics);
    std::cerr << res.days.size() - failed << " scored regions, " << failed << " failed, " << files.size()
              << " report files in " << out << '\n';
    return 0;
}

int cmd_synth(const std::string& out, std::size_t days, std::uint64_t seed, double a, double white_sd,
              double hetero, bool degenerate, const std::string& start) {
    SyntheticSpec s = degenerate ? SyntheticSpec::degenerate()
                                 : (hetero > 0.0 ? SyntheticSpec::heteroscedastic(hetero) : SyntheticSpec{});
    s.n_days = days;
    if (!degenerate) {
        s.a = a;
        if (white_sd >= 0.0) s.white_sd = white_sd;
    }
    if (!start.empty()) s.start = require_date(start, "--start");
    Rng rng = make_stream(seed, kSynthStream);
    const auto series = synthetic_far1(s, rng);
    std::ofstream f(out, std::ios::binary);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + out);
    write_hourly_csv(f, series.records);
    std::cerr << "wrote " << series.records.size() << " hourly records to " << out << '\n';
    return 0;
}

int cmd_calibrate(const ConfigFlags& flags, std::size_t replicates, double hetero, double confidence) {
    const RunConfig c = flags.resolve();
    CalibrationSpec spec;
    if (hetero > 0.0) spec.process = SyntheticSpec::heteroscedastic(hetero);
    spec.pipeline = c.pipeline;
    spec.pipeline.model = c.models.empty() ? ModelFamily::FNP : c.models.front();
    spec.methods = c.methods;
    spec.alphas = c.alphas;
    spec.n_replicates = replicates;
    spec.window = c.window;
    spec.seed = c.seed;
    spec.confidence = confidence;
    spec.threads = c.threads;
    const auto res = calibrate(spec);
    std::cout << "method,alpha,n,hits,FCov,ci_lo,ci_hi,accept_lo,accept_hi,within\n";
    for (const auto& r : res.rows) {
        std::cout << to_string(r.method) << ',' << format_number(r.alpha) << ',' << r.n << ',' << r.hits << ','
                  << format_number(r.fcov) << ',' << format_number(r.ci.first) << ',' << format_number(r.ci.second)
                  << ',' << format_number(r.acceptance.first) << ',' << format_number(r.acceptance.second) << ','
                  << (r.within() ? "yes" : "no") << '\n';
    }
    if (res.failures) std::cerr << res.failures << " replicates failed\n";
    return 0;
}

/// Scores externally supplied bands (`date,t,lower,upper`, t = 1..24) against
/// the realized curves of the data set.
int cmd_score(const ConfigFlags& flags, const std::string& data, const std::string& bands_path) {
    const RunConfig c = flags.resolve();
    const double alpha = c.alphas.front();
    const auto sample = prepare_sample(load_hourly_csv(data), c);
    std::ifstream in(bands_path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + bands_path);
    std::map<Date, std::pair<std::vector<double>, std::vector<double>>> bands;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        return Error(ErrorKind::Data, bands_path + ":" + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line_no == 1) continue;
        const auto f = detail::split_csv(line);
        int t = 0;
        double lo = 0, hi = 0;
        const auto d = f.size() == 4 ? parse_date(f[0]) : std::nullopt;
        if (!d || !detail::parse_int(f[1], t) || !detail::parse_double(f[2], lo) || !detail::parse_double(f[3], hi) ||
            t < 1 || t > 24) {
            throw fail("expected date,t,lower,upper with t in 1..24");
        }
        if (!(lo <= hi)) throw fail("lower exceeds upper");
        auto& [L, U] = bands[*d];
        L.resize(24, std::nan(""));
        U.resize(24, std::nan(""));
        L[static_cast<std::size_t>(t - 1)] = lo;
        U[static_cast<std::size_t>(t - 1)] = hi;
    }
    std::map<std::string, std::vector<DayScore>> groups;
    for (const auto& [date, lu] : bands) {
        const auto* day = sample.find(date);
        if (!day) throw Error(ErrorKind::Data, "no realized curve for " + format_date(date));
        for (std::size_t t = 0; t < 24; ++t) {
            if (std::isnan(lu.first[t])) throw Error(ErrorKind::Data, "incomplete band for " + format_date(date));
        }
        const Curve lo(sample.grid, lu.first), hi(sample.grid, lu.second);
        const PredictionRegion region = BandRegion{lo, hi, (lo + hi) * 0.5};
        const auto s = score_outcome(RegionOutcome{day->curve, region, alpha});
        groups[to_string(day->day_type)].push_back(s);
        groups["Year"].push_back(s);
    }
    std::cout << kMetricsHeader << '\n';
    for (const char* g : {"Weekday", "Saturday", "Sunday", "Year"}) {
        const auto rep = aggregate(groups[g]);
        std::cout << g << ",External,-," << format_number(alpha) << ',' << format_number(rep.fcov) << ','
                  << format_number(rep.pcov) << ',' << format_number(rep.awidth) << ',' << format_number(rep.fws)
                  << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bootstrap prediction regions for functional time series"};
    app.require_subcommand(1);

    std::string data, out, date, from, to, reports = "none", series = "demand", bands, start;
    std::size_t days = 730, replicates = 200;
    std::uint64_t seed = 1;
    double a = 0.5, white_sd = -1.0, hetero = 0.0, confidence = 0.99;
    bool degenerate = false;

    auto* ingest = app.add_subcommand("ingest", "Validate an hourly CSV and summarize its daily curves");
    ingest->add_option("--data", data, "hourly CSV")->required();
    ingest->add_option("--series", series, "demand or price");
    ingest->add_option("--out", out, "optional daily curve CSV");

    ConfigFlags predict_flags, backtest_flags, calibrate_flags, score_flags;
    auto* predict = app.add_subcommand("predict", "Prediction region for one day, as CSV on stdout");
    predict->add_option("--data", data, "hourly CSV")->required();
    predict->add_option("--date", date, "target day YYYY-MM-DD")->required();
    predict_flags.attach(predict);

    auto* backtest = app.add_subcommand("backtest", "Rolling one-day-ahead evaluation");
    backtest->add_option("--data", data, "hourly CSV")->required();
    backtest->add_option("--from", from, "first evaluation day")->required();
    backtest->add_option("--to", to, "last evaluation day")->required();
    backtest->add_option("--out", out, "output directory")->required();
    backtest->add_option("--reports", reports, "per-day files: comma list of csv,json,svg or none");
    backtest_flags.attach(backtest);

    auto* synth = app.add_subcommand("synth", "Simulate a functional AR(1) series as hourly CSV");
    synth->add_option("--out", out, "output CSV")->required();
    synth->add_option("--days", days, "number of days");
    synth->add_option("--seed", seed, "random seed");
    synth->add_option("--a", a, "AR coefficient, |a| < 1");
    synth->add_option("--white_sd", white_sd, "white noise standard deviation");
    synth->add_option("--hetero", hetero, "noise std ratio at t = 12 (white noise only)");
    synth->add_option("--start", start, "first day YYYY-MM-DD");
    synth->add_flag("--degenerate", degenerate, "noise-free constant map");

    auto* cal = app.add_subcommand("calibrate", "Empirical coverage on simulated replicates");
    cal->add_option("--replicates", replicates, "number of replicate days (>= 100)");
    cal->add_option("--hetero", hetero, "noise std ratio at t = 12");
    cal->add_option("--confidence", confidence, "level of the binomial intervals");
    calibrate_flags.attach(cal);

    auto* score = app.add_subcommand("score", "Score external bands (date,t,lower,upper)");
    score->add_option("--data", data, "hourly CSV with the realized curves")->required();
    score->add_option("--bands", bands, "bands CSV")->required();
    score_flags.attach(score);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 3;
    }

    try {
        if (*ingest) return cmd_ingest(data, series, out);
        if (*predict) return cmd_predict(predict_flags, data, date);
        if (*backtest) return cmd_backtest(backtest_flags, data, from, to, out, reports);
        if (*synth) return cmd_synth(out, days, seed, a, white_sd, hetero, degenerate, start);
        if (*cal) return cmd_calibrate(calibrate_flags, replicates, hetero, confidence);
        if (*score) return cmd_score(score_flags, data, bands);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
