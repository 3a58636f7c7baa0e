#include "rasper/survival.hpp"

#include "rasper/error.hpp"
#include "rasper/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rasper {

void SurvivalSample::validate() const
{
    if (times.empty()) throw Error(ErrorCode::EmptyData, "no survival times");
    if (times.size() != events.size()) throw Error(ErrorCode::DimensionMismatch, "times and events differ in length");
    for (double t : times)
        if (!(t > 0.0) || !std::isfinite(t)) throw Error(ErrorCode::InvalidArgument, "survival times must be positive");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");
}

double KaplanMeier::operator()(double t) const
{
    const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    if (it == jump_times.begin()) return 1.0;
    return survival[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

namespace {

KaplanMeier product_limit(const std::vector<double>& times, const std::vector<bool>& events,
                          const std::vector<std::size_t>& order)
{
    // `order` sorts by time with events first at ties; the at-risk count at
    // an event time then includes every tied censoring.
    KaplanMeier km;
    std::size_t at_risk = order.size();
    double s = 1.0;
    std::size_t k = 0;
    while (k < order.size()) {
        const double t = times[order[k]];
        std::size_t deaths = 0;
        std::size_t tied = 0;
        while (k + tied < order.size() && times[order[k + tied]] == t) {
            if (events[order[k + tied]]) ++deaths;
            ++tied;
        }
        if (deaths > 0) {
            s *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
            km.jump_times.push_back(t);
            km.survival.push_back(s);
        }
        at_risk -= tied;
        k += tied;
    }
    return km;
}

std::vector<std::size_t> event_first_order(const std::vector<double>& times, const std::vector<bool>& events)
{
    std::vector<std::size_t> order(times.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (times[a] != times[b]) return times[a] < times[b];
        return events[a] && !events[b];
    });
    return order;
}

double area(const KaplanMeier& km, double tau)
{
    double total = 0.0;
    double previous = 0.0;
    double level = 1.0;
    for (std::size_t k = 0; k < km.jump_times.size() && km.jump_times[k] < tau; ++k) {
        total += level * (km.jump_times[k] - previous);
        previous = km.jump_times[k];
        level = km.survival[k];
    }
    return total + level * (tau - previous);
}

} // namespace

KaplanMeier km_curve(const SurvivalSample& sample)
{
    sample.validate();
    return product_limit(sample.times, sample.events, event_first_order(sample.times, sample.events));
}

double rmst(const SurvivalSample& sample)
{
    return area(km_curve(sample), sample.tau);
}

Eigen::VectorXd pseudovalues(const SurvivalSample& sample, int threads)
{
    sample.validate();
    const std::size_t n = sample.size();
    if (n < 2) throw Error(ErrorCode::EmptyData, "pseudovalues need at least 2 subjects");
    const auto order = event_first_order(sample.times, sample.events);
    const double full = area(product_limit(sample.times, sample.events, order), sample.tau);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    parallel_for(n, threads, [&](std::size_t i) {
        std::vector<std::size_t> reduced;
        reduced.reserve(n - 1);
        for (auto j : order)
            if (j != i) reduced.push_back(j);
        const double loo = area(product_limit(sample.times, sample.events, reduced), sample.tau);
        v(static_cast<Eigen::Index>(i)) = static_cast<double>(n) * full - static_cast<double>(n - 1) * loo;
    });
    return v;
}

void NomogramInput::validate() const
{
    if (!(psa >= 0.0)) throw Error(ErrorCode::InvalidArgument, "psa must be nonnegative");
    if (!(days_to_progression >= 0.0)) throw Error(ErrorCode::InvalidArgument, "days must be nonnegative");
}

double nomogram_score(const NomogramInput& input)
{
    input.validate();
    double score = 0.0;
    if (input.psa > 30.0) score += 0.74;
    if (input.visceral_mets) score += 0.49;
    if (input.ecog_ge2) score += 0.65;
    score += 0.45 * (2.0 - std::min(2.0, input.days_to_progression / 180.0));
    return score;
}

} // namespace rasper
