#pragma once

#include "camnet/core.hpp"
#include "camnet/topology.hpp"

#include <optional>
#include <vector>

namespace camnet {

struct Dataset;

/// A link during streaming: the fitted histogram p, the accumulating p', and their L1 gap.
struct OnlineLink
{
    ZoneLink link;
    TransitionDistribution accumulated;
    double drift = 0;
    int refits = 0;
};

OnlineLink make_online_link(const ZoneLink& link);

/// Entry-zone tracklets whose entry time lies in [t + lower, t + upper]; `entries` sorted by entry time.
std::vector<const Tracklet*> gate_candidates(const LinkState& state, double exit_time,
                                             const std::vector<const Tracklet*>& entries);

/// Forest over the candidates when there are at least candidate_rf_threshold of them, otherwise
/// exhaustive maximum similarity. Empty candidates give no match.
std::optional<Correspondence> match_online(const Tracklet& probe, const std::vector<const Tracklet*>& candidates,
                                           const PipelineConfig& cfg, std::uint64_t seed);

/// Folds a reliable match into p' and refreshes the drift. Returns false (and changes nothing)
/// when the match is not above theta_sim.
bool update_distribution(OnlineLink& l, const Correspondence& c, const PipelineConfig& cfg);

/// Refits p' into the link when drift exceeds the threshold. Returns true on a refit.
bool maybe_refit(OnlineLink& l, const PipelineConfig& cfg);

struct ModelSnapshot
{
    double time = 0;
    std::size_t link = 0;
    GaussianModel model;
};

struct OnlineResult
{
    ZoneTopology topology;
    std::vector<Correspondence> log;
    std::vector<ModelSnapshot> refits;
};

/// Replays exits in time order against the frozen zones of `init`, matching inside each
/// valid link's window and (unless disabled) refitting drifted links.
OnlineResult run_online(const ZoneTopology& init, const Dataset& stream, const PipelineConfig& cfg);

}  // namespace camnet
