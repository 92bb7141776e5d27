#include "catch_amalgamated.hpp"

#include "fbands/fbands.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fbands;
using Catch::Approx;
using std::chrono::days;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

FunctionalSample synthetic_sample(const SyntheticSpec& spec, std::uint64_t seed) {
    Rng rng = make_stream(seed, kSynthStream);
    return build_daily_curves(synthetic_far1(spec, rng).records);
}

BacktestConfig small_backtest(Date first, Date last) {
    BacktestConfig cfg;
    cfg.first = first;
    cfg.last = last;
    cfg.methods = {RegionMethod{MethodKind::Lp, NormTag::Linf}, RegionMethod{MethodKind::Lp, NormTag::L2},
                   RegionMethod{MethodKind::Lambda}, RegionMethod{MethodKind::Depth}};
    cfg.alphas = {0.05, 0.2};
    cfg.pipeline.B = 40;
    cfg.pipeline.k_grid = {5, 10, 20};
    return cfg;
}

const fs::path kScratch = fs::temp_directory_path() / "fbands_harness_test";

} // namespace

TEST_CASE("synthetic process") {
    SECTION("zero noise is deterministic and contracts to the fixed point") {
        SyntheticSpec s;
        s.score_sd.clear();
        s.white_sd = 0.0;
        s.n_days = 40;
        Rng a(1), b(2);
        const auto x = synthetic_far1(s, a), y = synthetic_far1(s, b);
        CHECK(x.curves == y.curves);
        const Curve mu = synthetic_mean(s);
        for (std::size_t i = 0; i < x.curves.size(); ++i) {
            const Curve expected = mu + (x.curves[0] - mu) * std::pow(s.a, static_cast<double>(i));
            for (std::size_t t = 0; t < 24; ++t) CHECK(x.curves[i][t] == Approx(expected[t]).margin(1e-7));
        }
        const auto d = SyntheticSpec::degenerate();
        Rng c(3);
        const auto z = synthetic_far1(d, c);
        for (std::size_t i = 1; i < z.curves.size(); ++i) CHECK(z.curves[i] == synthetic_mean(d));
    }
    SECTION("components are orthonormal on the grid") {
        for (std::size_t j = 0; j < 6; ++j) {
            for (std::size_t k = 0; k < 6; ++k) {
                CHECK(inner_product(synthetic_component(j), synthetic_component(k)) ==
                      Approx(j == k ? 1.0 : 0.0).margin(1e-12));
            }
        }
    }
    SECTION("heteroscedastic noise has the requested per-hour std") {
        auto s = SyntheticSpec::heteroscedastic(5.0, 11);
        s.n_days = 2000;
        Rng rng(4);
        const auto x = synthetic_far1(s, rng);
        for (std::size_t t = 0; t < 24; ++t) {
            double m = 0.0, ss = 0.0;
            const auto n = static_cast<double>(x.curves.size() - 1);
            for (std::size_t i = 1; i < x.curves.size(); ++i) m += (x.curves[i][t] - x.conditional_means[i][t]) / n;
            for (std::size_t i = 1; i < x.curves.size(); ++i) {
                const double e = x.curves[i][t] - x.conditional_means[i][t] - m;
                ss += e * e;
            }
            const double sd = std::sqrt(ss / n);
            const double target = t == 11 ? 2500.0 : 500.0;
            CHECK(std::fabs(sd / target - 1.0) < 0.05);
        }
    }
    SECTION("unstable processes are rejected") {
        for (double a : {1.0, -1.0, 1.2}) {
            SyntheticSpec s;
            s.a = a;
            Rng rng(1);
            try {
                (void)synthetic_far1(s, rng);
                FAIL("expected a config error");
            } catch (const Error& e) {
                CHECK(e.kind() == ErrorKind::Config);
            }
        }
    }
    SECTION("hourly representation") {
        SyntheticSpec s;
        s.n_days = 10;
        Rng rng(5);
        const auto x = synthetic_far1(s, rng);
        REQUIRE(x.records.size() == 240);
        const auto daily = build_daily_curves(x.records);
        REQUIRE(daily.days.size() == 10);
        for (std::size_t i = 0; i < 10; ++i) CHECK(daily.days[i].curve == x.curves[i]);
        CHECK(daily.days[0].date == s.start);
        CHECK(std::chrono::weekday{s.start} == std::chrono::Monday);
    }
}

TEST_CASE("binomial intervals") {
    const auto a = binomial_acceptance(200, 0.8, 0.99);
    CHECK(a.first == Approx(0.725));
    CHECK(a.second == Approx(0.87));
    const auto b = binomial_acceptance(200, 0.95, 0.99);
    CHECK(b.first == Approx(0.905));
    CHECK(b.second == Approx(0.985));
    const auto ci = clopper_pearson(160, 200, 0.99);
    CHECK(ci.first < 0.8);
    CHECK(ci.second > 0.8);
    CHECK(clopper_pearson(0, 50, 0.95).first == 0.0);
    CHECK(clopper_pearson(50, 50, 0.95).second == 1.0);
}

TEST_CASE("method and model names") {
    for (const char* name : {"L1", "L2", "Linf", "Lambda", "Depth"}) {
        const auto m = parse_method(name);
        REQUIRE(m);
        CHECK(to_string(*m) == name);
    }
    CHECK_FALSE(parse_method("L3"));
    CHECK(parse_model("SFPL") == ModelFamily::SFPL);
    CHECK_FALSE(parse_model("GAM"));
}

TEST_CASE("configuration") {
    const auto c = config_from_json(nlohmann::json::parse(
        R"({"alpha": [0.05, 0.2], "method": "Lambda", "model": ["FNP", "SFPL"], "B": 300, "k_grid": 7})"));
    CHECK(c.alphas == std::vector<double>{0.05, 0.2});
    CHECK(c.methods.size() == 1);
    CHECK(c.methods[0].kind == MethodKind::Lambda);
    CHECK(c.models.size() == 2);
    CHECK(c.pipeline.B == 300);
    CHECK(c.pipeline.k_grid == std::vector<std::size_t>{7});

    const auto back = config_from_json(nlohmann::json::parse(config_to_json(c).dump()));
    CHECK(config_to_json(back) == config_to_json(c));

    for (const char* bad : {R"({"alpha_level": 0.1})", R"({"B": "many"})", R"({"grid_tau": 48})",
                            R"({"alpha": 1.5})", R"({"method": "L3"})", R"({"B": 1})", R"([1, 2])",
                            R"({"k_boot_factor": 1.0})", R"({"series": "wind"})"}) {
        try {
            (void)config_from_json(nlohmann::json::parse(bad));
            FAIL(std::string("accepted ") + bad);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Config);
        }
    }
    for (const auto& key : {"grid_tau", "q_fpca", "k_grid", "k_boot_factor", "B", "alpha", "method", "model",
                            "n_projections", "seed", "eta"}) {
        CHECK(config_keys().count(key) == 1);
    }
}

TEST_CASE("pipeline fit") {
    SyntheticSpec s;
    s.n_days = 12;
    Rng rng(8);
    const auto daily = build_daily_curves(synthetic_far1(s, rng).records);
    std::vector<RegressionPair> pairs;
    for (std::size_t i = 1; i < 6; ++i) pairs.push_back({daily.days[i - 1].curve, daily.days[i].covariates, daily.days[i].curve});
    const RegressionSample sample(pairs);
    PipelineConfig cfg;
    cfg.B = 20;
    const auto fit = fit_day(sample, Query{daily.days[5].curve, daily.days[6].covariates}, cfg, 1);
    CHECK(fit.spec.k == 3); // the only admissible grid entry for five pairs
    CHECK(fit.run.B == 20);
    cfg.k_grid = {10};
    CHECK_THROWS_AS(fit_day(sample, Query{daily.days[5].curve, daily.days[6].covariates}, cfg, 1), Error);
    cfg.B = 1;
    try {
        (void)fit_day(sample, Query{daily.days[5].curve, {}}, cfg, 1);
        FAIL("B = 1 must be rejected");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
}

TEST_CASE("backtest on a degenerate process") {
    const auto spec = SyntheticSpec::degenerate();
    const auto data = synthetic_sample(spec, 1);
    const Date first = spec.start + days{400};
    auto cfg = small_backtest(first, first + days{6});
    cfg.models = {ModelFamily::FNP, ModelFamily::SFPL};
    const auto res = rolling_evaluate(cfg, data);
    for (const auto& d : res.days) {
        INFO(d.cause);
        CHECK(d.ok);
    }
    for (const auto& row : res.metrics) {
        if (row.report.j_count == 0) continue;
        CHECK(row.report.fcov == 100.0);
        if (row.method.kind == MethodKind::Lp && row.method.norm == NormTag::L2) {
            CHECK(std::isnan(row.report.awidth));
        } else {
            CHECK(row.report.awidth < 1e-6);
            CHECK(row.report.pcov == 100.0);
        }
    }
}

TEST_CASE("metrics table schema") {
    SyntheticSpec s;
    s.n_days = 380;
    const auto data = synthetic_sample(s, 2);
    const auto cfg = small_backtest(s.start + days{370}, s.start + days{376});
    const auto res = rolling_evaluate(cfg, data);
    CHECK(res.metrics.size() == 4 * cfg.methods.size() * cfg.alphas.size());
    std::ostringstream os;
    write_metrics_csv(os, res.metrics);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == kMetricsHeader);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 7);
    }
    CHECK(rows == res.metrics.size());

    // pooled Year row equals the day-count pooling of the three day types
    for (const auto& year : res.metrics) {
        if (year.day_type != "Year") continue;
        double hits = 0.0;
        std::size_t n = 0;
        for (const auto& r : res.metrics) {
            if (r.day_type == "Year" || !(r.method == year.method) || r.alpha != year.alpha) continue;
            if (r.report.j_count == 0) continue;
            hits += r.report.fcov * static_cast<double>(r.report.j_count) / 100.0;
            n += r.report.j_count;
        }
        CHECK(n == year.report.j_count);
        CHECK(100.0 * hits / static_cast<double>(n) == Approx(year.report.fcov));
    }
}

TEST_CASE("backtest determinism, failure isolation and reports") {
    SyntheticSpec s;
    s.n_days = 380;
    auto data = synthetic_sample(s, 3);
    const Date first = s.start + days{370};
    const auto cfg = small_backtest(first, first + days{6});
    // drop the predictor day of one target
    const Date broken = first + days{3};
    const Date hole = predictor_date(broken);
    data.days.erase(std::remove_if(data.days.begin(), data.days.end(),
                                   [&](const DailyObservation& o) { return o.date == hole; }),
                    data.days.end());

    const auto one = rolling_evaluate(cfg, data, 1);
    const auto four = rolling_evaluate(cfg, data, 4);
    std::ostringstream m1, m4, d1, d4;
    write_metrics_csv(m1, one.metrics);
    write_metrics_csv(m4, four.metrics);
    write_days_csv(d1, one.days);
    write_days_csv(d4, four.days);
    CHECK(m1.str() == m4.str());
    CHECK(d1.str() == d4.str());

    std::size_t failed_days = 0;
    for (Date d = cfg.first; d <= cfg.last; d += days{1}) failed_days += (d == hole || predictor_date(d) == hole) ? 1 : 0;
    CHECK(failed_days > 0);
    for (const auto& d : one.days) {
        INFO(format_date(d.date) << " " << d.cause);
        if (d.date == hole || predictor_date(d.date) == hole) {
            CHECK_FALSE(d.ok);
            CHECK_FALSE(d.cause.empty());
        } else {
            CHECK(d.ok);
        }
    }
    for (const auto& row : one.metrics) {
        if (row.day_type == "Year") CHECK(row.report.j_count == 7 - failed_days);
    }

    fs::remove_all(kScratch);
    const auto paths = emit_reports(one.days, kScratch / "a");
    const auto again = emit_reports(four.days, kScratch / "b");
    REQUIRE(paths.size() == again.size());
    REQUIRE_FALSE(paths.empty());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        CHECK(paths[i].filename() == again[i].filename());
        CHECK(slurp(paths[i]) == slurp(again[i]));
    }
    CHECK(fs::exists(kScratch / "a" / (format_date(first) + "_FNP_Lambda_0.05.svg")));
    CHECK(fs::exists(kScratch / "a" / (format_date(first) + "_FNP_L2_0.2.json")));
    for (const auto& p : paths) {
        if (p.extension() == ".svg") {
            boost::property_tree::ptree tree;
            CHECK_NOTHROW(boost::property_tree::read_xml(p.string(), tree));
            CHECK(tree.count("svg") == 1);
        } else if (p.extension() == ".json") {
            const auto j = nlohmann::json::parse(slurp(p));
            CHECK(j.contains("center"));
            CHECK(j["truth"].size() == 24);
        } else {
            const std::string text = slurp(p);
            CHECK(std::count(text.begin(), text.end(), '\n') == 25);
        }
    }
    const auto none = emit_reports(one.days, kScratch / "c", ReportFormats{false, false, false});
    CHECK(none.empty());

    write_backtest_tables(one, kScratch / "t1");
    write_backtest_tables(four, kScratch / "t4");
    CHECK(slurp(kScratch / "t1" / "metrics.csv") == slurp(kScratch / "t4" / "metrics.csv"));
    CHECK(slurp(kScratch / "t1" / "days.csv") == slurp(kScratch / "t4" / "days.csv"));
    CHECK(fs::exists(kScratch / "t1" / "timing.csv"));
    fs::remove_all(kScratch);
}

TEST_CASE("coverage calibration is monotone in alpha") {
    CalibrationSpec spec;
    spec.n_replicates = 100;
    spec.pipeline.B = 100;
    spec.pipeline.k_grid = {10, 20};
    spec.seed = 11;
    const auto res = calibrate(spec);
    CHECK(res.failures == 0);
    REQUIRE(res.rows.size() == 4);
    for (std::size_t m = 0; m < 2; ++m) {
        const auto& wide = res.rows[m * 2 + 1]; // alpha 0.05
        const auto& narrow = res.rows[m * 2];   // alpha 0.2
        CHECK(wide.alpha == 0.05);
        CHECK(narrow.alpha == 0.2);
        CHECK(wide.hits >= narrow.hits);
        CHECK(wide.ci.first <= wide.fcov);
        CHECK(wide.fcov <= wide.ci.second);
    }
    CalibrationSpec few = spec;
    few.n_replicates = 50;
    CHECK_THROWS_AS(calibrate(few), Error);
}
