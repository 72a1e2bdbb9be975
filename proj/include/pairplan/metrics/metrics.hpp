#pragma once

#include "pairplan/sim/simulator.hpp"

namespace pairplan::metrics {

struct MetricsConfig {
    double ttc_threshold = 1.0;   // seconds
    double a_max = 3.0;           // m/s^2 comfort bound
    double j_max = 5.0;           // m/s^3 comfort bound
    double lane_half_width = 1.75;
    double eps_p = 0.1;           // progress-reference floor, meters
    double eps_v = 0.1;           // TTC closing-speed floor
};

// Per-scenario penalties are {0,1}; the aggregation formulas accept any value
// in [0,1] so dataset means can be pushed through them as well.
struct SubScores {
    double nc = 1.0;
    double dac = 1.0;
    double ep = 1.0;
    double ttc = 1.0;
    double comfort = 1.0;
};

struct ExtendedSubScores {
    SubScores base;
    double ddc = 1.0;
    double tlc = 1.0;
    double lk = 1.0;
    double hc = 1.0;
    double ec = 1.0;
};

// True where the scenario's human expert scores zero on that multiplicative
// penalty; masked penalties are not charged in epdms.
struct HumanMask {
    bool nc = false;
    bool dac = false;
    bool ddc = false;
    bool tlc = false;
};

ExtendedSubScores subscores(const sim::SimulationTrace& trace,
                            const sim::Scenario& scenario, double reference_progress,
                            const MetricsConfig& config = {});

HumanMask human_mask(const ExtendedSubScores& expert_scores);

// PDMS = NC * DAC * (5*EP + 5*TTC + 2*C) / 12
double pdms(const SubScores& s);

// EPDMS = NC * DAC * DDC * TLC * (5*EP + 5*TTC + 2*LK + 2*HC + 2*EC) / 16,
// with masked penalties replaced by 1.
double epdms(const ExtendedSubScores& s, const HumanMask& mask = {});

}  // namespace pairplan::metrics
