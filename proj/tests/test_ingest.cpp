#include "catch_amalgamated.hpp"

#include "fbands/ingest.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <sstream>

using namespace fbands;
using Catch::Approx;
using std::chrono::days;

namespace {

Date ymd(int y, unsigned m, unsigned d) {
    return Date{std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}}};
}

std::vector<HourlyRecord> hourly(Date start, int n_days, double (*value)(int day, int hour)) {
    std::vector<HourlyRecord> out;
    for (int d = 0; d < n_days; ++d) {
        for (int h = 0; h < 24; ++h) {
            out.push_back({HourStamp{start + days{d}, h, std::nullopt}, value(d, h), 3.0 + 0.01 * h, 15.0 + d % 3,
                           1000.0 + d});
        }
    }
    return out;
}

std::string to_csv(std::span<const HourlyRecord> recs) {
    std::ostringstream os;
    write_hourly_csv(os, recs);
    return os.str();
}

std::vector<HourlyRecord> parse(const std::string& text) {
    std::istringstream in(text);
    return parse_hourly_csv(in);
}

double ramp(int d, int h) { return 100.0 * d + h; }

/// Daily sample with curve value equal to the day ordinal, for calendar tests.
FunctionalSample ordinal_sample(Date first, int n_days) {
    FunctionalSample s;
    for (int i = 0; i < n_days; ++i) {
        const Date d = first + days{i};
        const double v = d.time_since_epoch().count();
        s.days.push_back({d, day_type_of(d), Curve::constant(s.grid, v), CovariateRow{{v, 1.0}}});
    }
    return s;
}

} // namespace

TEST_CASE("timestamps") {
    const auto s = parse_stamp("2021-03-28T03:00:00+02:00");
    REQUIRE(s);
    CHECK(s->hour == 3);
    CHECK(*s->offset_minutes == 120);
    CHECK(format_stamp(*s) == "2021-03-28T03:00+02:00");
    CHECK(parse_stamp("2021-03-28 03:00")->offset_minutes == std::nullopt);
    CHECK(*parse_stamp("2021-03-28T03:00Z")->offset_minutes == 0);
    CHECK_FALSE(parse_stamp("2021-03-28T03:30"));
    CHECK_FALSE(parse_stamp("2021-02-30T03:00"));
    CHECK_FALSE(parse_stamp("2021-03-28T24:00"));
    CHECK_FALSE(parse_stamp("garbage"));
    CHECK(format_date(ymd(2021, 1, 4)) == "2021-01-04");
    CHECK(parse_date("2021-01-04") == ymd(2021, 1, 4));
    CHECK(day_type_of(ymd(2021, 1, 4)) == DayType::Weekday);
    CHECK(day_type_of(ymd(2021, 1, 9)) == DayType::Saturday);
    CHECK(day_type_of(ymd(2021, 1, 10)) == DayType::Sunday);
}

TEST_CASE("hourly parsing and daily curves") {
    const Date start = ymd(2021, 1, 4);
    SECTION("48 hours make two days indexed by hour") {
        const auto recs = parse(to_csv(hourly(start, 2, ramp)));
        const auto s = build_daily_curves(recs);
        REQUIRE(s.days.size() == 2);
        CHECK(s.warnings.empty());
        for (std::size_t t = 0; t < 24; ++t) {
            CHECK(s.days[0].curve[t] == static_cast<double>(t));
            CHECK(s.days[1].curve[t] == 100.0 + t);
        }
        CHECK(s.days[1].date == start + days{1});
        CHECK(s.days[0].day_type == DayType::Weekday);
    }
    SECTION("a constant series gives constant curves") {
        const auto recs = hourly(start, 5, [](int, int) { return 7.5; });
        const auto s = build_daily_curves(recs);
        for (const auto& d : s.days) CHECK(d.curve == Curve::constant(Grid(24), 7.5));
    }
    SECTION("N days of records round-trip through flatten and the CSV writer") {
        const auto recs = hourly(start, 9, ramp);
        const auto back = parse(to_csv(recs));
        REQUIRE(back.size() == 9 * 24);
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(back[i].timestamp == recs[i].timestamp);
            CHECK(back[i].demand == recs[i].demand);
            CHECK(back[i].price == recs[i].price);
            CHECK(back[i].max_temp == recs[i].max_temp);
            CHECK(back[i].wind == recs[i].wind);
        }
        const auto flat = flatten(build_daily_curves(back));
        REQUIRE(flat.size() == recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) CHECK(flat[i] == recs[i].demand);
        // byte-stable rewrite
        CHECK(to_csv(back) == to_csv(recs));
    }
    SECTION("covariates") {
        auto recs = hourly(start, 2, ramp);
        for (auto& r : recs) r.max_temp = r.timestamp.date == start ? 12.0 : 30.0;
        const auto demand = build_daily_curves(recs, Series::Demand);
        CHECK(demand.days[0].covariates.x == std::vector<double>{8.0, 0.0});
        CHECK(demand.days[1].covariates.x[0] == 0.0);
        CHECK(demand.days[1].covariates.x[1] == Approx(6.0));
        const auto price = build_daily_curves(recs, Series::Price);
        CHECK(price.days[0].curve[5] == Approx(3.05));
        CHECK(price.days[0].covariates.x[0] == Approx(276.0)); // sum 0..23
        CHECK(price.days[0].covariates.x[1] == Approx(1000.0));
    }
    SECTION("load from disk") {
        const auto dir = std::filesystem::temp_directory_path() / "fbands_ingest_test";
        std::filesystem::create_directories(dir);
        const auto path = (dir / "h.csv").string();
        {
            std::ofstream out(path);
            out << to_csv(hourly(start, 3, ramp));
        }
        CHECK(load_hourly_csv(path).size() == 72);
        try {
            (void)load_hourly_csv((dir / "absent.csv").string());
            FAIL("missing file");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Io);
        }
    }
}

TEST_CASE("malformed hourly input") {
    const Date start = ymd(2021, 1, 4);
    auto expect_data_error = [](const std::string& text, const std::string& fragment) {
        try {
            (void)parse(text);
            FAIL("expected a data error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Data);
            CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring(fragment));
        }
    };
    SECTION("a missing hour names the gap") {
        auto recs = hourly(start, 3, ramp);
        recs.erase(recs.begin() + 24 + 13);
        expect_data_error(to_csv(recs), "2021-01-05T13:00");
    }
    SECTION("non-increasing timestamps") {
        auto recs = hourly(start, 2, ramp);
        recs[4].timestamp = recs[3].timestamp;
        expect_data_error(to_csv(recs), "increase");
    }
    SECTION("bad cells") {
        std::string text = to_csv(hourly(start, 1, ramp));
        expect_data_error(text + "2021-01-05T00:00,abc,1,1,1\n", "bad number");
        expect_data_error(text + "2021-01-05T00:00,nan,1,1,1\n", "non-finite");
        expect_data_error(text + "2021-01-05T00:00,1,1,1\n", "fields");
        expect_data_error(text + "2021/01/05 00:00,1,1,1,1\n", "timestamp");
        expect_data_error("timestamp,demand_mwh\n", "price_cent_kwh");
    }
    SECTION("custom column names") {
        std::istringstream in("when,load,p,temp,w\n2021-01-04T00:00,1,2,3,4\n");
        ColumnMap cols{"when", "load", "p", "temp", "w"};
        const auto recs = parse_hourly_csv(in, cols);
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].wind == 4.0);
    }
}

TEST_CASE("edge days and daylight-saving transitions") {
    SECTION("partial first and last days are dropped with warnings") {
        auto recs = hourly(ymd(2021, 1, 4), 4, ramp);
        recs.erase(recs.begin(), recs.begin() + 5);
        recs.resize(recs.size() - 2);
        const auto s = build_daily_curves(recs);
        CHECK(s.days.size() == 2);
        CHECK(s.warnings.size() == 2);
        CHECK(s.days.front().date == ymd(2021, 1, 5));
    }
    SECTION("23-hour and 25-hour days with offsets") {
        std::vector<HourlyRecord> recs;
        auto add = [&](Date d, int h, int off, double v) {
            recs.push_back({HourStamp{d, h, off}, v, 1.0, 20.0, 100.0});
        };
        const Date spring = ymd(2021, 3, 28);
        for (int h = 0; h < 24; ++h) add(spring - days{1}, h, 60, h);
        add(spring, 0, 60, 0.0);
        add(spring, 1, 60, 10.0);
        for (int h = 3; h < 24; ++h) add(spring, h, 120, 10.0 * h);
        for (int h = 0; h < 24; ++h) add(spring + days{1}, h, 120, h);
        const auto parsed = parse(to_csv(recs));
        const auto s = build_daily_curves(parsed);
        REQUIRE(s.days.size() == 3);
        CHECK(s.days[1].curve[2] == Approx(20.0)); // midpoint of hours 1 and 3
        CHECK(s.days[1].curve[3] == 30.0);

        recs.clear();
        const Date fall = ymd(2021, 10, 31);
        for (int h = 0; h < 24; ++h) add(fall - days{1}, h, 120, h);
        add(fall, 0, 120, 0.0);
        add(fall, 1, 120, 1.0);
        add(fall, 2, 120, 4.0);
        add(fall, 2, 60, 6.0);
        for (int h = 3; h < 24; ++h) add(fall, h, 60, h);
        for (int h = 0; h < 24; ++h) add(fall + days{1}, h, 60, h);
        const auto s2 = build_daily_curves(parse(to_csv(recs)));
        REQUIRE(s2.days.size() == 3);
        CHECK(s2.days[1].curve[2] == Approx(5.0)); // repeated hour averaged
        CHECK(s2.days[1].curve[23] == 23.0);
    }
    SECTION("without offsets a skipped hour is a gap") {
        std::vector<HourlyRecord> recs = hourly(ymd(2021, 3, 27), 3, ramp);
        recs.erase(recs.begin() + 24 + 2);
        CHECK_THROWS_AS(parse(to_csv(recs)), Error);
    }
}

TEST_CASE("degree-day transforms") {
    CHECK(hdd_cdd(15.0) == std::pair<double, double>{5.0, 0.0});
    CHECK(hdd_cdd(30.0) == std::pair<double, double>{0.0, 6.0});
    CHECK(hdd_cdd(22.0) == std::pair<double, double>{0.0, 0.0});
    CHECK(hdd_cdd(20.0) == std::pair<double, double>{0.0, 0.0});
    CHECK(hdd_cdd(24.0) == std::pair<double, double>{0.0, 0.0});
    for (double t = -20.0; t <= 50.0; t += 0.37) {
        const auto [h, c] = hdd_cdd(t);
        CHECK(h >= 0.0);
        CHECK(c >= 0.0);
        CHECK(h * c == 0.0);
    }
}

TEST_CASE("presmoothing") {
    FunctionalSample s;
    std::vector<double> v(24);
    for (std::size_t t = 0; t < 24; ++t) v[t] = static_cast<double>(t * t);
    s.days.push_back({ymd(2021, 1, 4), DayType::Weekday, Curve(s.grid, v), {}});
    CHECK(presmooth(s, 1).days[0].curve == s.days[0].curve);
    const auto sm = presmooth(s, 3);
    CHECK(sm.days[0].curve[0] == Approx((0.0 + 1.0) / 2.0));
    CHECK(sm.days[0].curve[5] == Approx((16.0 + 25.0 + 36.0) / 3.0));
    CHECK(sm.days[0].curve[23] == Approx((484.0 + 529.0) / 2.0));
}

TEST_CASE("day-type training sets") {
    const Date first = ymd(2020, 1, 1);
    const auto data = ordinal_sample(first, 900);
    auto ordinal = [](Date d) { return static_cast<double>(d.time_since_epoch().count()); };

    SECTION("cardinalities and types") {
        for (int offset = 400; offset < 414; ++offset) {
            const Date target = first + days{offset};
            const auto prob = day_type_sets(data, target, 365);
            const auto type = day_type_of(target);
            std::size_t expected = 0;
            for (int b = 1; b <= 365; ++b) expected += day_type_of(target - days{b}) == type ? 1 : 0;
            CHECK(prob.sample.size() == expected);
            if (type == DayType::Weekday) {
                CHECK(expected >= 260);
                CHECK(expected <= 262);
            } else {
                CHECK(expected >= 52);
                CHECK(expected <= 53);
            }
            for (std::size_t i = 0; i < prob.sample.size(); ++i) {
                const Date d = prob.response_dates[i];
                CHECK(day_type_of(d) == type);
                CHECK(d < target);
                CHECK(d >= target - days{365});
                CHECK(prob.sample[i].response[0] == ordinal(d));
                CHECK(prob.sample[i].predictor[0] == ordinal(predictor_date(d)));
                CHECK(prob.sample[i].covariates.x[0] == ordinal(d));
            }
            CHECK(prob.query.curve[0] == ordinal(predictor_date(target)));
            CHECK(prob.query.covariates.x[0] == ordinal(target));
            CHECK(prob.has_target_covariates);
            REQUIRE(prob.truth);
            CHECK((*prob.truth)[0] == ordinal(target));
            CHECK(prob.recent_history.size() == 8);
            CHECK(prob.recent_history.back()[0] == ordinal(prob.response_dates.back()));
        }
    }
    SECTION("previous-day rules") {
        CHECK(predictor_date(ymd(2021, 1, 4)) == ymd(2021, 1, 1));  // Monday -> Friday
        CHECK(predictor_date(ymd(2021, 1, 5)) == ymd(2021, 1, 4));  // Tuesday -> Monday
        CHECK(predictor_date(ymd(2021, 1, 9)) == ymd(2021, 1, 8));  // Saturday -> Friday
        CHECK(predictor_date(ymd(2021, 1, 10)) == ymd(2021, 1, 9)); // Sunday -> Saturday
    }
    SECTION("the three day types partition a common window") {
        Date sat = first + days{500};
        while (day_type_of(sat) != DayType::Saturday) sat += days{1};
        const Date lo = sat + days{2} - days{365}, hi = sat - days{1};
        std::vector<Date> all;
        for (const Date t : {sat, sat + days{1}, sat + days{2}}) {
            for (const Date d : day_type_sets(data, t, 365).response_dates) {
                if (d >= lo && d <= hi) all.push_back(d);
            }
        }
        std::sort(all.begin(), all.end());
        CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
        CHECK(all.size() == static_cast<std::size_t>((hi - lo).count() + 1));
    }
    SECTION("a target past the data has no truth") {
        const Date target = first + days{900};
        const auto prob = day_type_sets(data, target, 365);
        CHECK_FALSE(prob.truth);
        CHECK_FALSE(prob.has_target_covariates);
        CHECK(prob.query.covariates.x == std::vector<double>{0.0, 0.0});
    }
    SECTION("insufficient history") {
        for (const Date target : {first + days{100}, first + days{364}}) {
            try {
                (void)day_type_sets(data, target, 365);
                FAIL("expected insufficient history");
            } catch (const Error& e) {
                CHECK(e.kind() == ErrorKind::InsufficientHistory);
            }
        }
        CHECK_NOTHROW(day_type_sets(data, first + days{365}, 365));
        auto holey = data;
        const Date target = first + days{501};
        holey.days.erase(std::remove_if(holey.days.begin(), holey.days.end(),
                                        [&](const DailyObservation& o) { return o.date == predictor_date(target); }),
                         holey.days.end());
        CHECK_THROWS_AS(day_type_sets(holey, target, 365), Error);
    }
}

TEST_CASE("outlier replacement") {
    Rng rng(4);
    FunctionalSample s;
    const Date first = ymd(2021, 1, 4);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int i = 0; i < 140; ++i) {
        const Date d = first + days{i};
        std::vector<double> v(24);
        for (std::size_t t = 0; t < 24; ++t) v[t] = 100.0 + 10.0 * std::sin(0.26 * t) + nd(rng);
        s.days.push_back({d, day_type_of(d), Curve(s.grid, v), {}});
    }
    SECTION("infinite threshold leaves the sample unchanged") {
        const auto c = replace_outliers(s, 3, INFINITY);
        CHECK(c.audit.empty());
        for (std::size_t i = 0; i < s.days.size(); ++i) CHECK(c.sample.days[i].curve == s.days[i].curve);
    }
    SECTION("a single spike is flagged and replaced by the weighted neighbours") {
        const std::size_t spike = 72; // a weekday well inside the sample
        REQUIRE(s.days[spike].day_type == DayType::Weekday);
        auto dirty = s;
        dirty.days[spike].curve = s.days[spike].curve * 10.0;
        const auto c = replace_outliers(dirty, 3, 5.0);
        REQUIRE(c.audit.size() == 1);
        CHECK(c.audit[0].date == s.days[spike].date);
        CHECK(c.audit[0].distance > c.audit[0].limit);

        // same-type neighbours: previous weekday, next weekday (offset 1), the one before (offset 2)
        std::vector<std::size_t> wk;
        for (std::size_t i = 0; i < s.days.size(); ++i) {
            if (s.days[i].day_type == DayType::Weekday) wk.push_back(i);
        }
        const auto j = static_cast<std::size_t>(std::find(wk.begin(), wk.end(), spike) - wk.begin());
        const Curve expected =
            (dirty.days[wk[j - 1]].curve * 2.0 + dirty.days[wk[j + 1]].curve * 2.0 + dirty.days[wk[j - 2]].curve) *
            (1.0 / 5.0);
        for (std::size_t t = 0; t < 24; ++t) CHECK(c.sample.days[spike].curve[t] == Approx(expected[t]).epsilon(1e-12));
        for (std::size_t i = 0; i < s.days.size(); ++i) {
            if (i != spike) CHECK(c.sample.days[i].curve == dirty.days[i].curve);
        }
    }
    SECTION("window validation") { CHECK_THROWS_AS(replace_outliers(s, 0, 5.0), Error); }
}
