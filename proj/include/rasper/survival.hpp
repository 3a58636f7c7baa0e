#pragma once

#include <Eigen/Dense>

#include <vector>

namespace rasper {

/// Right-censored times; events[i] is true when the event was observed.
struct SurvivalSample {
    std::vector<double> times;
    std::vector<bool> events;
    double tau = 36.0;

    std::size_t size() const { return times.size(); }
    /// Throws on empty input, length mismatch, nonpositive times or tau.
    void validate() const;
};

/// Product-limit estimate. S(t) = survival[k] for jump_times[k] <= t < jump_times[k+1],
/// and 1 before the first jump. Only event times are jump points.
struct KaplanMeier {
    std::vector<double> jump_times;
    std::vector<double> survival;

    double operator()(double t) const;
};

/// Events precede censorings at tied times.
KaplanMeier km_curve(const SurvivalSample& sample);

/// Integral of the KM curve over [0, tau], summed rectangle by rectangle.
double rmst(const SurvivalSample& sample);

/// V_i = n mu - (n - 1) mu^(-i). Needs n >= 2.
Eigen::VectorXd pseudovalues(const SurvivalSample& sample, int threads = 1);

struct NomogramInput {
    double psa = 0.0;                  ///< ng/ml
    bool visceral_mets = false;
    bool ecog_ge2 = false;
    double days_to_progression = 0.0;  ///< prior chemotherapy, days

    void validate() const;
};

/// 0.74 I(psa > 30) + 0.49 I(visceral) + 0.65 I(ecog >= 2) + 0.45 (2 - min(2, days / 180)).
/// Larger means higher hazard.
double nomogram_score(const NomogramInput& input);

} // namespace rasper
