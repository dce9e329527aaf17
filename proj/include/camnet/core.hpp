#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace camnet {

template <class Scalar_, int Rows_ = Eigen::Dynamic>
using vec_type = Eigen::Matrix<Scalar_, Rows_, 1>;

template <class Scalar_, int Rows_ = Eigen::Dynamic, int Cols_ = Eigen::Dynamic>
using colmat_type = Eigen::Matrix<Scalar_, Rows_, Cols_, Eigen::ColMajor>;

using FeatureVector = vec_type<double>;
/// One appearance per column.
using FeatureMatrix = colmat_type<double>;
using Point2 = Eigen::Vector2d;

using CameraId = std::int32_t;
using PersonId = std::int64_t;
using ZoneId = std::int32_t;
using Label = std::int64_t;

enum class ErrorCode {
    InvalidFeature,
    EmptyTracklet,
    UnsortedTimestamps,
    InvalidBox,
    InvalidTimestamp,
    FeatureDimMismatch,
    MissingLabel,
    UnreadableFile,
    ParseError,
    EmptyGallery,
    EmptyProbe,
    EmptySet,
    NoReliablePairs,
    NoZones,
    InvalidConfig,
    InvalidScenario,
    NoCommonLinks,
    NoGroundTruth,
};

std::string_view to_string(ErrorCode code);

/// Every library failure surfaces as this exception; `what()` starts with the code name.
class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, const std::string& detail);
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Independent, reproducible sub-seed for `stream`.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct Box
{
    double x = 0, y = 0, w = 0, h = 0;
    Point2 center() const { return {x + 0.5 * w, y + 0.5 * h}; }
    bool operator==(const Box&) const = default;
};

struct Observation
{
    CameraId camera_id = 0;
    double timestamp = 0;
    FeatureVector feature;
    std::optional<Box> box;
};

/// Reference to one tracklet: (camera, local person id).
struct TrackRef
{
    CameraId camera = 0;
    PersonId person = 0;
    auto operator<=>(const TrackRef&) const = default;
};

struct Tracklet
{
    CameraId camera_id = 0;
    PersonId local_person_id = 0;
    std::vector<Observation> observations;
    double entry_time = 0;
    double exit_time = 0;
    Point2 entry_point = Point2::Zero();
    Point2 exit_point = Point2::Zero();

    TrackRef ref() const { return {camera_id, local_person_id}; }
    std::size_t size() const { return observations.size(); }
    /// Stacks the observation features column-wise.
    FeatureMatrix features() const;
};

/// Unit-L2 copy of `raw`. Throws InvalidFeature on zero norm or non-finite entries.
FeatureVector normalize_feature(const FeatureVector& raw);

struct TrackletCheck
{
    Tracklet tracklet;
    std::vector<std::string> warnings;
};

/// Sorts observations if needed (with a warning), derives entry/exit times
/// and points from the first and last observation, and rejects broken input.
TrackletCheck validate_tracklet(Tracklet t);

struct Gallery
{
    CameraId camera_id = 0;
    std::optional<ZoneId> zone_id;
    FeatureMatrix features;        // d x n
    std::vector<Label> labels;     // n
    std::vector<double> timestamps; // n
    double span_start = 0;
    double span_end = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t person_count() const;
};

struct GaussianModel
{
    double mu = 0;
    double sigma = 1;
    double fit_error = 0;
    bool operator==(const GaussianModel&) const = default;
};

/// Normalized histogram over transition time. Bin i covers
/// [lo + i*bin_width, lo + (i+1)*bin_width); lo is always a multiple of bin_width.
struct TransitionDistribution
{
    Eigen::VectorXd bins;
    double bin_width = 1.0;
    double lo = 0.0;
    std::int64_t sample_count = 0;
    std::optional<GaussianModel> model;
    double confidence = 0.0;

    double hi() const { return lo + bin_width * static_cast<double>(bins.size()); }
    double center(Eigen::Index i) const { return lo + (static_cast<double>(i) + 0.5) * bin_width; }
    bool empty() const { return sample_count == 0; }
    double mass() const { return bins.sum(); }
};

/// Empty histogram whose grid covers [range_lo, range_hi], edges snapped outward to bin_width.
TransitionDistribution make_distribution(double bin_width, double range_lo, double range_hi);

/// Index of the bin containing dt, growing the grid if dt falls outside it.
Eigen::Index locate_or_grow(TransitionDistribution& d, double dt);

/// Adds one sample with weight 1/(n+1) and renormalizes.
void add_sample(TransitionDistribution& d, double dt);

/// Both histograms re-expressed on their common (union) grid. Bin widths must match.
std::pair<Eigen::VectorXd, Eigen::VectorXd> align(const TransitionDistribution& a,
                                                  const TransitionDistribution& b);

/// Sum over the union grid of |p - q|.
double l1_difference(const TransitionDistribution& a, const TransitionDistribution& b);

struct ZoneKey
{
    CameraId camera = 0;
    ZoneId zone = 0;
    auto operator<=>(const ZoneKey&) const = default;
};

struct CameraTopology
{
    std::vector<CameraId> vertices;
    std::map<std::pair<CameraId, CameraId>, TransitionDistribution> edges;
    std::set<std::pair<CameraId, CameraId>> valid;

    bool is_valid(CameraId a, CameraId b) const
    {
        return valid.count({a, b}) || valid.count({b, a});
    }
};

struct LinkState
{
    TransitionDistribution distribution;
    double window = 600.0;
    double lower = 0.0;
    double upper = 0.0;
    int iteration = 0;
    bool converged = false;
    int stagnant = 0;
};

enum class ZoneKind { entry, exit, both };

std::string_view to_string(ZoneKind k);
ZoneKind zone_kind_from_string(std::string_view s);

struct Zone
{
    CameraId camera_id = 0;
    ZoneId zone_id = 0;
    Point2 center = Point2::Zero();
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
    ZoneKind kind = ZoneKind::entry;
    std::int64_t member_count = 0;
};

struct ZoneLink
{
    ZoneKey exit;
    ZoneKey entry;
    LinkState state;
    bool valid = false;
};

class ZoneTopology
{
public:
    std::map<CameraId, std::vector<Zone>> zones;

    /// Throws InvalidConfig unless `exit` is an exit zone and `entry` an entry
    /// zone on a different camera.
    ZoneLink& add_link(ZoneKey exit, ZoneKey entry, LinkState state, bool valid);

    const std::vector<ZoneLink>& links() const { return links_; }
    std::vector<ZoneLink>& links() { return links_; }
    const ZoneLink* find(ZoneKey exit, ZoneKey entry) const;
    const Zone* zone(ZoneKey key) const;
    std::size_t valid_count() const;

private:
    std::vector<ZoneLink> links_;
};

struct PipelineConfig
{
    // [paper_defaults]
    double theta_sim = 0.7;
    double theta_conf = 0.4;
    double initial_window = 600.0;
    double coverage_percent = 95.0;
    int tree_count = 10;
    int max_key_appearances = 30;
    double online_refit_threshold = 0.1;

    double bin_width = 1.0;
    double window_stride_fraction = 0.25;
    double convergence_epsilon = 0.01;
    int max_iterations = 10;
    int candidate_rf_threshold = 20;
    /// Reliable pairs a camera or zone link needs before its confidence counts.
    int min_link_samples = 10;
    int max_tree_depth = 12;
    int min_samples_split = 3;
    int max_zones = 4;
    int zone_em_iterations = 20;
    bool normalize_features = true;
    /// Upper clamp on the fitting error when widening the window.
    double max_window_error = 0.9;
    /// Seconds used to make sigma dimensionless in the confidence; <= 0 means "current window".
    double confidence_time_scale = 0.0;
    bool one_to_one = false;
    bool online_refit = true;
    int threads = 1;
    std::uint64_t seed = 1;

    /// Throws InvalidConfig naming the offending field.
    void validate() const;
};

}  // namespace camnet
