#pragma once

#include "camnet/core.hpp"
#include "camnet/topology.hpp"

#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace camnet {

struct GroundTruth;

/// -ln sum sqrt(p q) over the union grid; +infinity when the supports are disjoint.
double bhattacharyya(const TransitionDistribution& p, const TransitionDistribution& q);

/// -ln of the integral of sqrt(p q) for two Gaussian densities, by composite Simpson quadrature.
double bhattacharyya(const GaussianModel& p, const GaussianModel& q, int intervals = 20000);

using TruePairSet = std::set<std::pair<TrackRef, TrackRef>>;

/// True pairs whose exit falls in [from, to).
TruePairSet true_pair_set(const GroundTruth& truth, double from = -std::numeric_limits<double>::infinity(),
                          double to = std::numeric_limits<double>::infinity());

/// Distinct true pairs matched by at least one record, divided by the true pair count.
/// Throws NoGroundTruth when `truth` is empty.
double rank1(const std::vector<Correspondence>& matches, const TruePairSet& truth);

/// cmc[r-1]: fraction of true pairs whose partner appears within the first r ranked candidates of a
/// record probing one side of the pair.
std::vector<double> cmc(const std::vector<Correspondence>& matches, const TruePairSet& truth, std::size_t max_rank);

struct LinkComparison
{
    ZoneKey exit;
    ZoneKey entry;
    int true_link = -1;
    double mu = 0, mu_gt = 0;
    double sigma = 0, sigma_gt = 0;
    double bhattacharyya = 0;
    std::int64_t sample_count = 0;
};

struct TransitionError
{
    double mean = 0;
    std::vector<double> per_link;
    std::size_t missing = 0;
};

/// Mean |mu - mu_gt| over the compared links. Throws NoCommonLinks on an empty list.
TransitionError transition_time_error(const std::vector<LinkComparison>& links, std::size_t true_link_count);

struct TimingRow
{
    std::size_t n = 0;
    std::string path;
    double median_seconds = 0;
};

struct EvalReport
{
    double rank1 = 0;
    std::vector<double> cmc;
    double transition_time_error = 0;
    double topology_distance = 0;
    std::size_t true_links = 0;
    std::size_t recovered = 0;
    std::size_t missing = 0;
    std::size_t spurious = 0;
    std::vector<LinkComparison> links;
    std::vector<TimingRow> timing;
};

/// Maps each valid inferred link onto the true link joining the nearest true zones (per camera).
/// `at_time` selects which piecewise link parameters count as the truth.
std::vector<LinkComparison> compare_links(const ZoneTopology& topo, const GroundTruth& truth, double at_time,
                                          std::size_t* spurious = nullptr);

/// Link metrics against the truth in force at `at_time`; rank-1 and CMC over true pairs exiting
/// at or after `pairs_from`.
EvalReport evaluate(const ZoneTopology& topo, const std::vector<Correspondence>& matches, const GroundTruth& truth,
                    double at_time = 0.0, std::size_t max_rank = 10,
                    double pairs_from = -std::numeric_limits<double>::infinity());

struct BenchmarkTable
{
    std::vector<TimingRow> rows;
    /// time(N_{i+1}) / time(N_i) per path.
    std::vector<double> forest_ratios;
    std::vector<double> exhaustive_ratios;
};

/// Median wall time of forest-path versus exhaustive matching of N probes against N gallery
/// identities with K appearances each.
BenchmarkTable benchmark_matching(const std::vector<std::size_t>& sizes, int k, const PipelineConfig& cfg,
                                  int repetitions = 5, int dim = 64, std::uint64_t seed = 1);

}  // namespace camnet
