#pragma once

#include "camnet/core.hpp"
#include "camnet/forest.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace camnet {

struct Dataset;

/// One matched (exit tracklet, entry tracklet) pair.
struct Correspondence
{
    TrackRef exit;
    TrackRef entry;
    std::optional<ZoneKey> exit_zone;
    std::optional<ZoneKey> entry_zone;
    double exit_time = 0;
    double entry_time = 0;
    double delta_t = 0;
    double similarity = 0;
    double posterior = 0;
    std::string path = "forest";
    bool refit = false;
    /// The tracklet that was queried; the ranking lists candidates for it.
    TrackRef probe;
    std::vector<TrackRef> ranking;
};

struct CorrespondenceSet
{
    std::vector<Correspondence> pairs;
    std::size_t reliable_count = 0;

    /// Recounts pairs with similarity > theta_sim.
    void update_reliable(double theta_sim);
};

/// Histogram of delta_t over the pairs with similarity > theta_sim inside [range_lo, range_hi),
/// normalized by their count. Throws NoReliablePairs when none qualify.
TransitionDistribution estimate_distribution(const CorrespondenceSet& c, double theta_sim, double bin_width,
                                             double range_lo, double range_hi);

/// Least-squares Gaussian (free amplitude) over bin heights; fit_error = 1 - R^2.
/// Throws NoReliablePairs on an empty histogram.
GaussianModel fit_gaussian(const TransitionDistribution& d);

/// exp(-sigma / time_scale) * (1 - fit_error).
double connectivity_confidence(const GaussianModel& m, double time_scale);

struct WindowBounds
{
    double lower = 0;
    double upper = 0;
    double window = 0;
};

/// Standard normal quantile.
double normal_quantile(double p);

/// Central coverage_percent interval of the model, and its width inflated by 1/(1 - E)
/// with E clamped to max_error.
WindowBounds update_time_window(const GaussianModel& m, double coverage_percent, double max_error = 0.9);

/// Fits the model, then sets model, confidence (with `time_scale`) on the distribution.
void attach_model(TransitionDistribution& d, double time_scale);

struct CameraStage
{
    CameraTopology topology;
    std::map<std::pair<CameraId, CameraId>, CorrespondenceSet> correspondences;
};

/// Every camera pair: the camera with more people is the gallery, the other supplies probes
/// searched within [t - T, t + T]. `ds` should already hold key appearances.
CameraStage infer_cam_topology(const Dataset& ds, const PipelineConfig& cfg);

struct ZoneStage
{
    ZoneTopology topology;
    /// Indexed like topology.links().
    std::vector<CorrespondenceSet> correspondences;
};

/// Exit-zone to entry-zone links across every valid camera pair, searched within [t, t + T].
ZoneStage infer_zone_topology(const Dataset& ds, const CameraTopology& cams,
                              const std::map<CameraId, std::vector<Zone>>& zones, const PipelineConfig& cfg);

struct RefineResult
{
    LinkState state;
    CorrespondenceSet correspondences;
};

/// One pass of window update, series re-training, nearest-window matching and distribution refresh.
RefineResult refine_link(const LinkState& link, const std::vector<Tracklet>& exits, const std::vector<Tracklet>& entries,
                         const PipelineConfig& cfg, std::uint64_t seed);

struct StageRecord
{
    std::string name;
    std::vector<Correspondence> matches;
};

struct InitResult
{
    CameraTopology cameras;
    ZoneTopology zones;
    /// Final correspondences, indexed like zones.links().
    std::vector<CorrespondenceSet> correspondences;
    /// cam, zone, iter1, iter2, ..., final
    std::vector<StageRecord> stages;
    /// Topology after each refinement iteration.
    std::vector<ZoneTopology> iterations;
};

/// CAM-to-CAM, then Zone-to-Zone, then refinement until every valid link converges
/// or max_iterations passes.
InitResult initialize_topology(const Dataset& ds, const PipelineConfig& cfg);

/// Tracklets of `camera` whose exit (or entry) point falls in `zone`.
std::vector<Tracklet> tracklets_in_zone(const Dataset& ds, const std::vector<Zone>& zones, ZoneKey key, ZoneKind kind);

}  // namespace camnet
