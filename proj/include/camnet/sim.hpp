#pragma once

#include "camnet/core.hpp"
#include "camnet/ingest.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace camnet {

struct SimZone
{
    Point2 center = Point2::Zero();
    /// Isotropic standard deviation of endpoints around the center, in pixels.
    double spread = 40.0;
    /// Relative chance of leaving the view through this zone.
    double exit_weight = 1.0;
    /// People may enter the network here from outside.
    bool boundary = false;
};

struct SimCamera
{
    CameraId id = 0;
    double width = 1920, height = 1080;
    std::vector<SimZone> zones;
};

struct SimLink
{
    CameraId from_camera = 0;
    int from_zone = 0;
    CameraId to_camera = 0;
    int to_zone = 0;
    double mu = 30;
    double sigma = 5;
    /// Probability that someone leaving through from_zone takes this link.
    double routing = 0.85;
};

struct ScenarioChange
{
    enum class Kind { none, shift_mu, remove_link };
    Kind kind = Kind::none;
    int link = 0;
    double t0 = 0;
    double mu = 0;
    /// Negative keeps the current sigma.
    double sigma = -1;
};

struct ScenarioSpec
{
    std::vector<SimCamera> cameras;
    std::vector<SimLink> links;
    std::vector<ScenarioChange> changes;
    int persons = 300;
    double duration = 3600;
    int feature_dim = 64;
    /// Norm of the expected per-observation appearance noise.
    double appearance_noise = 0.25;
    /// Minimum latent distance between two identities.
    double identity_separation = 0.1;
    /// 0 draws identities independently; otherwise they cluster around this many centers.
    int appearance_groups = 40;
    double group_spread = 0.25;
    double dwell_mean = 8;
    double dwell_sigma = 5;
    double dwell_min = 3;
    double observation_rate = 1.0;
    int max_visits = 10;
    /// Exit weight multiplier for leaving through the zone one entered by.
    double return_weight = 1.5;
    double box_width = 40, box_height = 100;
    std::uint64_t seed = 1;

    /// Throws InvalidScenario.
    void validate() const;
};

struct TruePair
{
    TrackRef exit;
    TrackRef entry;
    int link = -1;
    double exit_time = 0;
    double delta_t = 0;
};

struct GroundTruth
{
    std::vector<SimCamera> cameras;
    std::vector<SimLink> links;
    std::vector<ScenarioChange> changes;
    std::vector<TruePair> pairs;
    std::map<TrackRef, PersonId> identity;

    /// Link parameters in force at time t (changes with t0 <= t applied in order).
    /// A removed link keeps its slot with routing 0.
    std::vector<SimLink> links_at(double t) const;
};

struct Simulation
{
    Dataset dataset;
    GroundTruth truth;
};

/// Seeded generator: identities walk the camera graph, tracklets carry noisy features of their latent.
Simulation generate(const ScenarioSpec& spec);

/// Copy of `spec` with `change` appended (kind none leaves it as is).
ScenarioSpec perturb(ScenarioSpec spec, const ScenarioChange& change);

/// Five cameras in a chain, three zones each, eight directed zone links.
ScenarioSpec default_scenario(std::uint64_t seed = 1);
/// default_scenario with a 30 s to 40 s shift of link 0 at `shift_time`, over `duration` seconds.
ScenarioSpec drift_scenario(std::uint64_t seed = 1, double duration = 6 * 3600.0, double shift_time = 3600.0);
/// Well separated identities (separation >= 5 x noise).
ScenarioSpec separable_scenario(std::uint64_t seed = 1);

/// JSON text round trip; parsing throws ParseError or InvalidScenario.
std::string scenario_to_json(const ScenarioSpec& s);
ScenarioSpec scenario_from_json(const std::string& text);
std::string truth_to_json(const GroundTruth& g);
GroundTruth truth_from_json(const std::string& text);

ScenarioSpec read_scenario(const std::filesystem::path& file);
void write_scenario(const ScenarioSpec& s, const std::filesystem::path& file);
GroundTruth read_truth(const std::filesystem::path& file);
void write_truth(const GroundTruth& g, const std::filesystem::path& file);

}  // namespace camnet
