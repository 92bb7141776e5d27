// Simulates a year and a half of hourly demand, forecasts one day and prints
// the regions each method builds around the prediction.
#include "fbands/fbands.hpp"

#include <cstdio>

int main() {
    using namespace fbands;
    using namespace std::chrono;

    SyntheticSpec spec;
    spec.n_days = 430;
    Rng rng = make_stream(7, kSynthStream);
    const auto series = synthetic_far1(spec, rng);
    const auto sample = build_daily_curves(series.records, Series::Demand);

    const Date target = spec.start + days{420};
    const auto problem = day_type_sets(sample, target);
    PipelineConfig cfg;
    cfg.B = 300;
    const auto fit = fit_day(problem.sample, problem.query, cfg, 42);

    std::printf("%s (%s): %zu training pairs, k = %zu\n", format_date(target).c_str(), to_string(problem.day_type),
                problem.sample.size(), fit.spec.k);
    for (const char* name : {"Linf", "L2", "Lambda", "Depth"}) {
        const auto method = *parse_method(name);
        const auto region = build_region(fit.run, method, 0.05, cfg);
        const bool inside = contains(region, *problem.truth);
        if (const auto band = as_band(region)) {
            const auto s = score_outcome(RegionOutcome{*problem.truth, region, 0.05});
            std::printf("  %-6s band  mean width %9.1f  contains truth: %s  FWS %.1f\n", name, s.width,
                        inside ? "yes" : "no", s.fws);
        } else {
            std::printf("  %-6s ball  radius     %9.1f  contains truth: %s\n", name,
                        std::get<BallRegion>(region).radius, inside ? "yes" : "no");
        }
    }
    return 0;
}
