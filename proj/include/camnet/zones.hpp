#pragma once

#include "camnet/core.hpp"

#include <map>
#include <vector>

namespace camnet {

struct Dataset;

/// Variance (pixels^2) added to every zone covariance when evaluating likelihoods.
inline constexpr double zone_regularization = 1.0;

/// Gaussian mixture over 2-D points: k-means seeding, EM refinement, and
/// component count picked by BIC over 1..max_components.
struct Mixture2
{
    std::vector<Point2> means;
    std::vector<Eigen::Matrix2d> covariances;
    std::vector<double> weights;
    double log_likelihood = 0;
    double bic = 0;
};

Mixture2 fit_mixture(const std::vector<Point2>& points, int components, int em_iterations);
Mixture2 select_mixture(const std::vector<Point2>& points, int max_components, int em_iterations);

/// Log density of `p` under N(center, covariance + regularization).
double zone_log_likelihood(const Zone& z, const Point2& p);

/// Entry zones (ids 0..E-1) then exit zones (ids E..) of one camera. Throws NoZones on empty input.
std::vector<Zone> learn_zones(const std::vector<Tracklet>& tracklets, int max_zones, int em_iterations = 20);
/// Same over raw endpoint lists; an empty list yields no zones of that kind.
std::vector<Zone> learn_zones(CameraId camera, const std::vector<Point2>& entry_points,
                              const std::vector<Point2>& exit_points, int max_zones, int em_iterations = 20);

/// Zone of the requested kind maximizing the Gaussian likelihood; ties go to the smaller id.
ZoneId assign_zone(const std::vector<Zone>& zones, const Point2& point, ZoneKind kind);

std::map<CameraId, std::vector<Zone>> learn_all_zones(const Dataset& ds, const PipelineConfig& cfg);

}  // namespace camnet
