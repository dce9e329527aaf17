#include "camnet/sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace camnet {

using nlohmann::json;

void ScenarioSpec::validate() const
{
    auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidScenario, why); };
    if (cameras.empty()) fail("no cameras");
    std::map<CameraId, const SimCamera*> by_id;
    bool boundary = false;
    for (const auto& c : cameras) {
        if (!by_id.emplace(c.id, &c).second) fail("duplicate camera id " + std::to_string(c.id));
        if (c.zones.empty()) fail("camera " + std::to_string(c.id) + " has no zones");
        if (!(c.width > 0 && c.height > 0)) fail("camera " + std::to_string(c.id) + " has no image size");
        for (const auto& z : c.zones) {
            if (!(z.spread >= 0) || !(z.exit_weight >= 0)) fail("zone spread and exit weight must be >= 0");
            boundary = boundary || z.boundary;
        }
    }
    if (!boundary) fail("no boundary zone to enter the network from");
    std::map<std::pair<CameraId, int>, double> routing;
    for (std::size_t i = 0; i < links.size(); ++i) {
        const auto& l = links[i];
        const auto name = "link " + std::to_string(i);
        auto a = by_id.find(l.from_camera);
        auto b = by_id.find(l.to_camera);
        if (a == by_id.end() || b == by_id.end()) fail(name + " refers to an unknown camera");
        if (l.from_camera == l.to_camera) fail(name + " stays within one camera");
        if (l.from_zone < 0 || l.from_zone >= static_cast<int>(a->second->zones.size()) || l.to_zone < 0 ||
            l.to_zone >= static_cast<int>(b->second->zones.size())) {
            fail(name + " refers to an unknown zone");
        }
        if (!(l.sigma > 0)) fail(name + " needs sigma > 0");
        if (!(l.routing >= 0 && l.routing <= 1)) fail(name + " routing must lie in [0, 1]");
        routing[{l.from_camera, l.from_zone}] += l.routing;
    }
    for (const auto& [key, total] : routing) {
        if (total > 1 + 1e-9) fail("routing out of one zone sums above 1");
    }
    for (const auto& c : changes) {
        if (c.kind == ScenarioChange::Kind::none) continue;
        if (c.link < 0 || c.link >= static_cast<int>(links.size())) fail("change refers to an unknown link");
        if (!(c.t0 >= 0)) fail("change time must be >= 0");
    }
    if (persons < 1) fail("persons must be >= 1");
    if (!(duration > 0)) fail("duration must be positive");
    if (feature_dim < 1) fail("feature_dim must be >= 1");
    if (!(appearance_noise >= 0)) fail("appearance_noise must be >= 0");
    if (!(identity_separation >= 0)) fail("identity_separation must be >= 0");
    if (appearance_groups < 0) fail("appearance_groups must be >= 0");
    if (!(group_spread >= 0)) fail("group_spread must be >= 0");
    if (!(dwell_mean > 0) || !(dwell_sigma >= 0) || !(dwell_min > 0)) fail("dwell parameters must be positive");
    if (!(observation_rate > 0)) fail("observation_rate must be positive");
    if (!(return_weight >= 0)) fail("return_weight must be >= 0");
    if (max_visits < 1) fail("max_visits must be >= 1");
    if (!(box_width > 0 && box_height > 0)) fail("box size must be positive");
}

std::vector<SimLink> GroundTruth::links_at(double t) const
{
    auto out = links;
    for (const auto& c : changes) {
        if (c.t0 > t) continue;
        auto& l = out.at(static_cast<std::size_t>(c.link));
        switch (c.kind) {
        case ScenarioChange::Kind::none: break;
        case ScenarioChange::Kind::shift_mu:
            l.mu = c.mu;
            if (c.sigma > 0) l.sigma = c.sigma;
            break;
        case ScenarioChange::Kind::remove_link: l.routing = 0; break;
        }
    }
    return out;
}

namespace {

FeatureVector unit_gaussian(std::mt19937_64& rng, int d)
{
    std::normal_distribution<double> n(0, 1);
    FeatureVector v(d);
    for (int i = 0; i < d; ++i) v[i] = n(rng);
    return v.normalized();
}

FeatureMatrix make_latents(const ScenarioSpec& s, std::mt19937_64& rng)
{
    const int d = s.feature_dim;
    FeatureMatrix lat(d, s.persons);
    std::vector<FeatureVector> centers;
    for (int g = 0; g < s.appearance_groups; ++g) centers.push_back(unit_gaussian(rng, d));
    std::normal_distribution<double> n(0, 1);
    for (int p = 0; p < s.persons; ++p) {
        if (centers.empty()) {
            lat.col(p) = unit_gaussian(rng, d);
        } else {
            FeatureVector u(d);
            for (int i = 0; i < d; ++i) u[i] = n(rng);
            u *= s.group_spread / std::sqrt(double(d));
            lat.col(p) = (centers[static_cast<std::size_t>(p % s.appearance_groups)] + u).normalized();
        }
    }
    // push apart pairs closer than the separation, then back onto the sphere
    const double sep = s.identity_separation;
    for (int pass = 0; pass < 200 && sep > 0; ++pass) {
        bool moved = false;
        for (int i = 0; i < s.persons; ++i) {
            for (int j = i + 1; j < s.persons; ++j) {
                FeatureVector diff = lat.col(j) - lat.col(i);
                const double dist = diff.norm();
                if (dist >= sep) continue;
                if (dist < 1e-12) diff = unit_gaussian(rng, d) * 1e-6;
                const FeatureVector step = diff.normalized() * (0.5 * (sep - dist) + 1e-6);
                lat.col(i) = (lat.col(i) - step).normalized();
                lat.col(j) = (lat.col(j) + step).normalized();
                moved = true;
            }
        }
        if (!moved) break;
    }
    return lat;
}

struct Visit
{
    PersonId person = 0;
    CameraId camera = 0;
    int entry_zone = 0, exit_zone = 0;
    double t_in = 0, t_out = 0;
    Point2 p_in, p_out;
    PersonId local = -1;
};

struct PendingPair
{
    std::size_t from_visit;
    std::size_t to_visit;
    int link;
    double delta_t;
};

}  // namespace

Simulation generate(const ScenarioSpec& spec)
{
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unif(0, 1);
    std::normal_distribution<double> normal(0, 1);

    GroundTruth truth;
    truth.cameras = spec.cameras;
    truth.links = spec.links;
    truth.changes = spec.changes;

    const auto latents = make_latents(spec, rng);
    std::map<CameraId, const SimCamera*> cams;
    for (const auto& c : spec.cameras) cams[c.id] = &c;
    std::vector<std::pair<CameraId, int>> boundary;
    for (const auto& c : spec.cameras) {
        for (std::size_t z = 0; z < c.zones.size(); ++z) {
            if (c.zones[z].boundary) boundary.emplace_back(c.id, static_cast<int>(z));
        }
    }
    auto point_in = [&](const SimZone& z) -> Point2 {
        return {z.center.x() + z.spread * normal(rng), z.center.y() + z.spread * normal(rng)};
    };

    std::vector<Visit> visits;
    std::vector<PendingPair> pairs;
    for (int p = 0; p < spec.persons; ++p) {
        double t = spec.duration * unif(rng);
        auto [cam, zin] = boundary[static_cast<std::size_t>(unif(rng) * double(boundary.size())) % boundary.size()];
        std::optional<std::pair<std::size_t, std::pair<int, double>>> pending;
        for (int v = 0; v < spec.max_visits; ++v) {
            const auto& camera = *cams.at(cam);
            double dwell = spec.dwell_mean + spec.dwell_sigma * normal(rng);
            for (int tries = 0; dwell < spec.dwell_min && tries < 100; ++tries) {
                dwell = spec.dwell_mean + spec.dwell_sigma * normal(rng);
            }
            dwell = std::max(dwell, spec.dwell_min);
            // turning back through the entry zone is down-weighted
            auto weight = [&](std::size_t z) {
                const double w = camera.zones[z].exit_weight;
                return static_cast<int>(z) == zin ? w * spec.return_weight : w;
            };
            double total = 0;
            for (std::size_t z = 0; z < camera.zones.size(); ++z) total += weight(z);
            int zout = zin;
            if (total > 0) {
                double u = unif(rng) * total;
                for (std::size_t z = 0; z < camera.zones.size(); ++z) {
                    if (weight(z) <= 0) continue;
                    zout = static_cast<int>(z);
                    u -= weight(z);
                    if (u < 0) break;
                }
            }
            const double t_out = t + dwell;
            if (t_out > spec.duration) break;
            Visit vis;
            vis.person = p;
            vis.camera = cam;
            vis.entry_zone = zin;
            vis.exit_zone = zout;
            vis.t_in = t;
            vis.t_out = t_out;
            vis.p_in = point_in(camera.zones[static_cast<std::size_t>(zin)]);
            vis.p_out = point_in(camera.zones[static_cast<std::size_t>(zout)]);
            visits.push_back(vis);
            if (pending) {
                pairs.push_back({pending->first, visits.size() - 1, pending->second.first, pending->second.second});
            }
            pending.reset();

            const auto active = truth.links_at(t_out);
            double u = unif(rng);
            int chosen = -1;
            for (std::size_t l = 0; l < active.size(); ++l) {
                if (active[l].from_camera != cam || active[l].from_zone != zout) continue;
                u -= active[l].routing;
                if (u < 0) {
                    chosen = static_cast<int>(l);
                    break;
                }
            }
            if (chosen < 0) break;
            const auto& link = active[static_cast<std::size_t>(chosen)];
            const double dt = link.mu + link.sigma * normal(rng);
            pending = {visits.size() - 1, {chosen, dt}};
            cam = link.to_camera;
            zin = link.to_zone;
            t = t_out + dt;
            if (t < 0) break;
        }
    }

    // local ids follow entry order within each camera
    std::map<CameraId, std::vector<std::size_t>> per_cam;
    for (std::size_t i = 0; i < visits.size(); ++i) per_cam[visits[i].camera].push_back(i);
    Simulation sim;
    sim.dataset.feature_dim = spec.feature_dim;
    const double noise = spec.appearance_noise / std::sqrt(double(spec.feature_dim));
    for (const auto& c : spec.cameras) sim.dataset.cameras[c.id];
    for (auto& [cam, idx] : per_cam) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return visits[a].t_in < visits[b].t_in;
        });
        auto& list = sim.dataset.cameras[cam];
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto& v = visits[idx[k]];
            v.local = static_cast<PersonId>(k);
            Tracklet t;
            t.camera_id = cam;
            t.local_person_id = v.local;
            std::vector<double> times;
            for (long s = 0;; ++s) {
                const double ts = v.t_in + static_cast<double>(s) / spec.observation_rate;
                if (ts >= v.t_out) break;
                times.push_back(ts);
            }
            times.push_back(v.t_out);
            for (double ts : times) {
                const double a = v.t_out > v.t_in ? (ts - v.t_in) / (v.t_out - v.t_in) : 0.0;
                const Point2 c = (1 - a) * v.p_in + a * v.p_out;
                Observation o;
                o.camera_id = cam;
                o.timestamp = ts;
                o.box = Box{c.x() - 0.5 * spec.box_width, c.y() - 0.5 * spec.box_height, spec.box_width,
                            spec.box_height};
                FeatureVector f = latents.col(static_cast<Eigen::Index>(v.person));
                for (Eigen::Index i = 0; i < f.size(); ++i) f[i] += noise * normal(rng);
                o.feature = f.normalized();
                t.observations.push_back(std::move(o));
            }
            auto checked = validate_tracklet(std::move(t));
            truth.identity[checked.tracklet.ref()] = v.person;
            list.push_back(std::move(checked.tracklet));
        }
    }
    for (const auto& p : pairs) {
        const auto& a = visits[p.from_visit];
        const auto& b = visits[p.to_visit];
        truth.pairs.push_back({{a.camera, a.local}, {b.camera, b.local}, p.link, a.t_out, b.t_in - a.t_out});
    }
    std::sort(truth.pairs.begin(), truth.pairs.end(), [](const TruePair& x, const TruePair& y) {
        return std::tie(x.exit_time, x.exit) < std::tie(y.exit_time, y.exit);
    });
    sim.truth = std::move(truth);
    return sim;
}

ScenarioSpec perturb(ScenarioSpec spec, const ScenarioChange& change)
{
    if (change.kind != ScenarioChange::Kind::none) spec.changes.push_back(change);
    spec.validate();
    return spec;
}

ScenarioSpec default_scenario(std::uint64_t seed)
{
    ScenarioSpec s;
    s.seed = seed;
    for (CameraId c = 0; c < 5; ++c) {
        SimCamera cam;
        cam.id = c;
        cam.zones = {
            SimZone{{150, 620}, 40, 1.0, c == 0},
            SimZone{{1770, 620}, 40, 1.0, c == 4},
            SimZone{{960, 240}, 40, 0.3, true},
        };
        s.cameras.push_back(cam);
    }
    const double mu[8] = {30, 38, 25, 22, 45, 40, 18, 20};
    const double sigma[8] = {5, 6, 4, 4, 7, 6, 3, 3.5};
    for (int k = 0; k < 4; ++k) {
        s.links.push_back({k, 1, k + 1, 0, mu[2 * k], sigma[2 * k], 0.9});
        s.links.push_back({k + 1, 0, k, 1, mu[2 * k + 1], sigma[2 * k + 1], 0.9});
    }
    return s;
}

ScenarioSpec drift_scenario(std::uint64_t seed, double duration, double shift_time)
{
    auto s = default_scenario(seed);
    s.persons = static_cast<int>(std::lround(s.persons * duration / 3600.0));
    s.duration = duration;
    ScenarioChange c;
    c.kind = ScenarioChange::Kind::shift_mu;
    c.link = 0;
    c.t0 = shift_time;
    c.mu = 40;
    return perturb(std::move(s), c);
}

ScenarioSpec separable_scenario(std::uint64_t seed)
{
    auto s = default_scenario(seed);
    s.appearance_noise = 0.05;
    s.identity_separation = 0.3;
    s.appearance_groups = 0;
    return s;
}

namespace {

std::string_view kind_name(ScenarioChange::Kind k)
{
    switch (k) {
    case ScenarioChange::Kind::none: return "none";
    case ScenarioChange::Kind::shift_mu: return "shift_mu";
    case ScenarioChange::Kind::remove_link: return "remove_link";
    }
    return "none";
}

ScenarioChange::Kind kind_from(const std::string& s)
{
    if (s == "none") return ScenarioChange::Kind::none;
    if (s == "shift_mu") return ScenarioChange::Kind::shift_mu;
    if (s == "remove_link") return ScenarioChange::Kind::remove_link;
    throw Error(ErrorCode::InvalidScenario, "unknown change kind '" + s + "'");
}

json cameras_json(const std::vector<SimCamera>& cams)
{
    json out = json::array();
    for (const auto& c : cams) {
        json zs = json::array();
        for (const auto& z : c.zones) {
            zs.push_back({{"center", {z.center.x(), z.center.y()}},
                          {"spread", z.spread},
                          {"exit_weight", z.exit_weight},
                          {"boundary", z.boundary}});
        }
        out.push_back({{"id", c.id}, {"width", c.width}, {"height", c.height}, {"zones", zs}});
    }
    return out;
}

std::vector<SimCamera> cameras_from(const json& j)
{
    std::vector<SimCamera> out;
    for (const auto& jc : j) {
        SimCamera c;
        c.id = jc.at("id").get<CameraId>();
        c.width = jc.value("width", 1920.0);
        c.height = jc.value("height", 1080.0);
        for (const auto& jz : jc.at("zones")) {
            SimZone z;
            z.center = {jz.at("center").at(0).get<double>(), jz.at("center").at(1).get<double>()};
            z.spread = jz.value("spread", 40.0);
            z.exit_weight = jz.value("exit_weight", 1.0);
            z.boundary = jz.value("boundary", false);
            c.zones.push_back(z);
        }
        out.push_back(std::move(c));
    }
    return out;
}

json links_json(const std::vector<SimLink>& links)
{
    json out = json::array();
    for (const auto& l : links) {
        out.push_back({{"from_camera", l.from_camera},
                       {"from_zone", l.from_zone},
                       {"to_camera", l.to_camera},
                       {"to_zone", l.to_zone},
                       {"mu", l.mu},
                       {"sigma", l.sigma},
                       {"routing", l.routing}});
    }
    return out;
}

std::vector<SimLink> links_from(const json& j)
{
    std::vector<SimLink> out;
    for (const auto& jl : j) {
        SimLink l;
        l.from_camera = jl.at("from_camera").get<CameraId>();
        l.from_zone = jl.at("from_zone").get<int>();
        l.to_camera = jl.at("to_camera").get<CameraId>();
        l.to_zone = jl.at("to_zone").get<int>();
        l.mu = jl.at("mu").get<double>();
        l.sigma = jl.at("sigma").get<double>();
        l.routing = jl.value("routing", 0.85);
        out.push_back(l);
    }
    return out;
}

json changes_json(const std::vector<ScenarioChange>& cs)
{
    json out = json::array();
    for (const auto& c : cs) {
        out.push_back({{"kind", kind_name(c.kind)}, {"link", c.link}, {"t0", c.t0}, {"mu", c.mu}, {"sigma", c.sigma}});
    }
    return out;
}

std::vector<ScenarioChange> changes_from(const json& j)
{
    std::vector<ScenarioChange> out;
    for (const auto& jc : j) {
        ScenarioChange c;
        c.kind = kind_from(jc.at("kind").get<std::string>());
        c.link = jc.value("link", 0);
        c.t0 = jc.value("t0", 0.0);
        c.mu = jc.value("mu", 0.0);
        c.sigma = jc.value("sigma", -1.0);
        out.push_back(c);
    }
    return out;
}

template <class F>
auto parse_guarded(const std::string& text, F&& f)
{
    try {
        return f(json::parse(text));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
}

std::string slurp(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::UnreadableFile, file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spill(const std::filesystem::path& file, const std::string& text)
{
    std::ofstream out(file);
    if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + file.string());
    out << text << '\n';
}

std::string ref_key(TrackRef r)
{
    return std::to_string(r.camera) + ":" + std::to_string(r.person);
}

}  // namespace

std::string scenario_to_json(const ScenarioSpec& s)
{
    json j = {{"cameras", cameras_json(s.cameras)},
              {"links", links_json(s.links)},
              {"changes", changes_json(s.changes)},
              {"persons", s.persons},
              {"duration", s.duration},
              {"feature_dim", s.feature_dim},
              {"appearance_noise", s.appearance_noise},
              {"identity_separation", s.identity_separation},
              {"appearance_groups", s.appearance_groups},
              {"group_spread", s.group_spread},
              {"dwell_mean", s.dwell_mean},
              {"dwell_sigma", s.dwell_sigma},
              {"dwell_min", s.dwell_min},
              {"observation_rate", s.observation_rate},
              {"max_visits", s.max_visits},
              {"return_weight", s.return_weight},
              {"box_width", s.box_width},
              {"box_height", s.box_height},
              {"seed", s.seed}};
    return j.dump(2);
}

ScenarioSpec scenario_from_json(const std::string& text)
{
    auto s = parse_guarded(text, [](const json& j) {
        // fields left out keep the default scenario's values
        ScenarioSpec s = default_scenario(j.value("seed", std::uint64_t{1}));
        if (j.contains("cameras")) s.cameras = cameras_from(j.at("cameras"));
        if (j.contains("links")) s.links = links_from(j.at("links"));
        if (j.contains("changes")) s.changes = changes_from(j.at("changes"));
        s.persons = j.value("persons", s.persons);
        s.duration = j.value("duration", s.duration);
        s.feature_dim = j.value("feature_dim", s.feature_dim);
        s.appearance_noise = j.value("appearance_noise", s.appearance_noise);
        s.identity_separation = j.value("identity_separation", s.identity_separation);
        s.appearance_groups = j.value("appearance_groups", s.appearance_groups);
        s.group_spread = j.value("group_spread", s.group_spread);
        s.dwell_mean = j.value("dwell_mean", s.dwell_mean);
        s.dwell_sigma = j.value("dwell_sigma", s.dwell_sigma);
        s.dwell_min = j.value("dwell_min", s.dwell_min);
        s.observation_rate = j.value("observation_rate", s.observation_rate);
        s.max_visits = j.value("max_visits", s.max_visits);
        s.return_weight = j.value("return_weight", s.return_weight);
        s.box_width = j.value("box_width", s.box_width);
        s.box_height = j.value("box_height", s.box_height);
        return s;
    });
    s.validate();
    return s;
}

std::string truth_to_json(const GroundTruth& g)
{
    json pairs = json::array();
    for (const auto& p : g.pairs) {
        pairs.push_back({{"exit", {p.exit.camera, p.exit.person}},
                         {"entry", {p.entry.camera, p.entry.person}},
                         {"link", p.link},
                         {"exit_time", p.exit_time},
                         {"delta_t", p.delta_t}});
    }
    json ids = json::object();
    for (const auto& [ref, person] : g.identity) ids[ref_key(ref)] = person;
    json j = {{"cameras", cameras_json(g.cameras)},
              {"links", links_json(g.links)},
              {"changes", changes_json(g.changes)},
              {"pairs", pairs},
              {"identity", ids}};
    return j.dump(2);
}

GroundTruth truth_from_json(const std::string& text)
{
    return parse_guarded(text, [](const json& j) {
        GroundTruth g;
        g.cameras = cameras_from(j.at("cameras"));
        g.links = links_from(j.at("links"));
        if (j.contains("changes")) g.changes = changes_from(j.at("changes"));
        for (const auto& jp : j.at("pairs")) {
            TruePair p;
            p.exit = {jp.at("exit").at(0).get<CameraId>(), jp.at("exit").at(1).get<PersonId>()};
            p.entry = {jp.at("entry").at(0).get<CameraId>(), jp.at("entry").at(1).get<PersonId>()};
            p.link = jp.value("link", -1);
            p.exit_time = jp.value("exit_time", 0.0);
            p.delta_t = jp.value("delta_t", 0.0);
            g.pairs.push_back(p);
        }
        if (j.contains("identity")) {
            for (const auto& [key, person] : j.at("identity").items()) {
                const auto colon = key.find(':');
                if (colon == std::string::npos) throw Error(ErrorCode::ParseError, "bad identity key " + key);
                g.identity[{static_cast<CameraId>(std::stoi(key.substr(0, colon))), std::stoll(key.substr(colon + 1))}] =
                    person.get<PersonId>();
            }
        }
        return g;
    });
}

ScenarioSpec read_scenario(const std::filesystem::path& file)
{
    return scenario_from_json(slurp(file));
}

void write_scenario(const ScenarioSpec& s, const std::filesystem::path& file)
{
    spill(file, scenario_to_json(s));
}

GroundTruth read_truth(const std::filesystem::path& file)
{
    return truth_from_json(slurp(file));
}

void write_truth(const GroundTruth& g, const std::filesystem::path& file)
{
    spill(file, truth_to_json(g));
}

}  // namespace camnet
