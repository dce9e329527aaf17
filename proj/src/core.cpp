#include "camnet/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace camnet {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidFeature: return "InvalidFeature";
    case ErrorCode::EmptyTracklet: return "EmptyTracklet";
    case ErrorCode::UnsortedTimestamps: return "UnsortedTimestamps";
    case ErrorCode::InvalidBox: return "InvalidBox";
    case ErrorCode::InvalidTimestamp: return "InvalidTimestamp";
    case ErrorCode::FeatureDimMismatch: return "FeatureDimMismatch";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::UnreadableFile: return "UnreadableFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyGallery: return "EmptyGallery";
    case ErrorCode::EmptyProbe: return "EmptyProbe";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::NoReliablePairs: return "NoReliablePairs";
    case ErrorCode::NoZones: return "NoZones";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::NoCommonLinks: return "NoCommonLinks";
    case ErrorCode::NoGroundTruth: return "NoGroundTruth";
    }
    return "Unknown";
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail)),
      code_(code)
{}

FeatureMatrix Tracklet::features() const
{
    if (observations.empty()) return {};
    FeatureMatrix m(observations.front().feature.size(), static_cast<Eigen::Index>(observations.size()));
    for (std::size_t i = 0; i < observations.size(); ++i) {
        m.col(static_cast<Eigen::Index>(i)) = observations[i].feature;
    }
    return m;
}

FeatureVector normalize_feature(const FeatureVector& raw)
{
    if (raw.size() == 0) throw Error(ErrorCode::InvalidFeature, "zero-dimensional feature");
    if (!raw.allFinite()) throw Error(ErrorCode::InvalidFeature, "non-finite entry");
    const double n = raw.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::InvalidFeature, "zero norm");
    return raw / n;
}

TrackletCheck validate_tracklet(Tracklet t)
{
    TrackletCheck out;
    if (t.observations.empty()) {
        throw Error(ErrorCode::EmptyTracklet, "camera " + std::to_string(t.camera_id) + " person " +
                                                  std::to_string(t.local_person_id));
    }
    const auto dim = t.observations.front().feature.size();
    for (const auto& o : t.observations) {
        if (!std::isfinite(o.timestamp) || o.timestamp < 0) {
            throw Error(ErrorCode::InvalidTimestamp, std::to_string(o.timestamp));
        }
        if (o.box && !(o.box->w > 0 && o.box->h > 0)) {
            throw Error(ErrorCode::InvalidBox, "non-positive box size");
        }
        if (o.feature.size() != dim) {
            throw Error(ErrorCode::FeatureDimMismatch, "mixed feature dimensions in one tracklet");
        }
    }
    const auto by_time = [](const Observation& a, const Observation& b) { return a.timestamp < b.timestamp; };
    if (!std::is_sorted(t.observations.begin(), t.observations.end(), by_time)) {
        std::stable_sort(t.observations.begin(), t.observations.end(), by_time);
        out.warnings.push_back("observations of camera " + std::to_string(t.camera_id) + " person " +
                               std::to_string(t.local_person_id) + " were out of order; sorted");
    }
    const auto& first = t.observations.front();
    const auto& last = t.observations.back();
    t.entry_time = first.timestamp;
    t.exit_time = last.timestamp;
    if (first.box) t.entry_point = first.box->center();
    if (last.box) t.exit_point = last.box->center();
    out.tracklet = std::move(t);
    return out;
}

std::size_t Gallery::person_count() const
{
    return std::set<Label>(labels.begin(), labels.end()).size();
}

TransitionDistribution make_distribution(double bin_width, double range_lo, double range_hi)
{
    if (!(bin_width > 0)) throw Error(ErrorCode::InvalidConfig, "bin_width must be positive");
    TransitionDistribution d;
    d.bin_width = bin_width;
    d.lo = std::floor(range_lo / bin_width) * bin_width;
    const double hi = std::ceil(range_hi / bin_width) * bin_width;
    const auto n = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround((hi - d.lo) / bin_width)));
    d.bins = Eigen::VectorXd::Zero(n);
    return d;
}

Eigen::Index locate_or_grow(TransitionDistribution& d, double dt)
{
    const auto w = d.bin_width;
    auto idx = static_cast<Eigen::Index>(std::floor((dt - d.lo) / w));
    if (idx < 0) {
        const auto grow = -idx;
        Eigen::VectorXd bins = Eigen::VectorXd::Zero(d.bins.size() + grow);
        bins.tail(d.bins.size()) = d.bins;
        d.bins = std::move(bins);
        d.lo -= static_cast<double>(grow) * w;
        idx = 0;
    } else if (idx >= d.bins.size()) {
        const auto n = idx + 1;
        Eigen::VectorXd bins = Eigen::VectorXd::Zero(n);
        bins.head(d.bins.size()) = d.bins;
        d.bins = std::move(bins);
    }
    return idx;
}

void add_sample(TransitionDistribution& d, double dt)
{
    const auto idx = locate_or_grow(d, dt);
    const double n = static_cast<double>(d.sample_count);
    d.bins *= n / (n + 1.0);
    d.bins[idx] += 1.0 / (n + 1.0);
    d.sample_count += 1;
    // keep the sum exact against rounding drift
    d.bins /= d.bins.sum();
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> align(const TransitionDistribution& a,
                                                  const TransitionDistribution& b)
{
    if (std::abs(a.bin_width - b.bin_width) > 1e-12) {
        throw Error(ErrorCode::InvalidConfig, "histograms with different bin widths");
    }
    const double w = a.bin_width;
    const double lo = std::min(a.lo, b.lo);
    const double hi = std::max(a.hi(), b.hi());
    const auto n = static_cast<Eigen::Index>(std::llround((hi - lo) / w));
    Eigen::VectorXd pa = Eigen::VectorXd::Zero(n), pb = Eigen::VectorXd::Zero(n);
    const auto oa = static_cast<Eigen::Index>(std::llround((a.lo - lo) / w));
    const auto ob = static_cast<Eigen::Index>(std::llround((b.lo - lo) / w));
    pa.segment(oa, a.bins.size()) = a.bins;
    pb.segment(ob, b.bins.size()) = b.bins;
    return {std::move(pa), std::move(pb)};
}

double l1_difference(const TransitionDistribution& a, const TransitionDistribution& b)
{
    const auto [pa, pb] = align(a, b);
    return (pa - pb).cwiseAbs().sum();
}

std::string_view to_string(ZoneKind k)
{
    switch (k) {
    case ZoneKind::entry: return "entry";
    case ZoneKind::exit: return "exit";
    case ZoneKind::both: return "both";
    }
    return "entry";
}

ZoneKind zone_kind_from_string(std::string_view s)
{
    if (s == "entry") return ZoneKind::entry;
    if (s == "exit") return ZoneKind::exit;
    if (s == "both") return ZoneKind::both;
    throw Error(ErrorCode::ParseError, "unknown zone kind '" + std::string(s) + "'");
}

const Zone* ZoneTopology::zone(ZoneKey key) const
{
    auto it = zones.find(key.camera);
    if (it == zones.end()) return nullptr;
    for (const auto& z : it->second) {
        if (z.zone_id == key.zone) return &z;
    }
    return nullptr;
}

ZoneLink& ZoneTopology::add_link(ZoneKey exit, ZoneKey entry, LinkState state, bool valid)
{
    if (exit.camera == entry.camera) {
        throw Error(ErrorCode::InvalidConfig, "zone link within one camera");
    }
    const auto* ze = zone(exit);
    const auto* zn = zone(entry);
    if (!ze || !zn) throw Error(ErrorCode::NoZones, "link refers to an unknown zone");
    if (ze->kind == ZoneKind::entry || zn->kind == ZoneKind::exit) {
        throw Error(ErrorCode::InvalidConfig, "only exit-to-entry zone links are allowed");
    }
    links_.push_back(ZoneLink{exit, entry, std::move(state), valid});
    return links_.back();
}

const ZoneLink* ZoneTopology::find(ZoneKey exit, ZoneKey entry) const
{
    for (const auto& l : links_) {
        if (l.exit == exit && l.entry == entry) return &l;
    }
    return nullptr;
}

std::size_t ZoneTopology::valid_count() const
{
    return static_cast<std::size_t>(std::count_if(links_.begin(), links_.end(), [](const auto& l) { return l.valid; }));
}

void PipelineConfig::validate() const
{
    auto fail = [](const std::string& field, const std::string& why) {
        throw Error(ErrorCode::InvalidConfig, field + " " + why);
    };
    if (!(theta_sim > 0 && theta_sim < 1)) fail("theta_sim", "must lie in (0, 1)");
    if (!(theta_conf > 0 && theta_conf < 1)) fail("theta_conf", "must lie in (0, 1)");
    if (!(coverage_percent > 0 && coverage_percent < 100)) fail("coverage_percent", "must lie in (0, 100)");
    if (tree_count < 1) fail("tree_count", "must be >= 1");
    if (max_key_appearances < 1) fail("max_key_appearances", "must be >= 1");
    if (!(initial_window > 0)) fail("initial_window", "must be positive");
    if (!(bin_width > 0)) fail("bin_width", "must be positive");
    if (!(window_stride_fraction > 0 && window_stride_fraction < 1)) fail("window_stride_fraction", "must lie in (0, 1)");
    if (!(convergence_epsilon > 0)) fail("convergence_epsilon", "must be positive");
    if (max_iterations < 1) fail("max_iterations", "must be >= 1");
    if (!(online_refit_threshold > 0)) fail("online_refit_threshold", "must be positive");
    if (min_link_samples < 1) fail("min_link_samples", "must be >= 1");
    if (candidate_rf_threshold < 1) fail("candidate_rf_threshold", "must be >= 1");
    if (max_tree_depth < 1) fail("max_tree_depth", "must be >= 1");
    if (min_samples_split < 2) fail("min_samples_split", "must be >= 2");
    if (max_zones < 1) fail("max_zones", "must be >= 1");
    if (!(max_window_error >= 0 && max_window_error < 1)) fail("max_window_error", "must lie in [0, 1)");
    if (threads < 1) fail("threads", "must be >= 1");
}

}  // namespace camnet
