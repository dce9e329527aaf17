#include "camnet/topology.hpp"

#include "camnet/eval.hpp"
#include "camnet/ingest.hpp"
#include "camnet/parallel.hpp"
#include "camnet/zones.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace camnet {

void CorrespondenceSet::update_reliable(double theta_sim)
{
    reliable_count = static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(), [&](const auto& c) { return c.similarity > theta_sim; }));
}

TransitionDistribution estimate_distribution(const CorrespondenceSet& c, double theta_sim, double bin_width,
                                             double range_lo, double range_hi)
{
    auto d = make_distribution(bin_width, range_lo, range_hi);
    std::int64_t n = 0;
    for (const auto& p : c.pairs) {
        if (!(p.similarity > theta_sim)) continue;
        if (p.delta_t < range_lo || p.delta_t > range_hi) continue;
        d.bins[locate_or_grow(d, p.delta_t)] += 1.0;
        ++n;
    }
    if (n == 0) throw Error(ErrorCode::NoReliablePairs, "no pair above theta_sim inside the range");
    d.bins /= static_cast<double>(n);
    d.sample_count = n;
    return d;
}

namespace {

struct FitParams
{
    double amplitude, mu, sigma;
};

double sse(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const FitParams& p)
{
    const Eigen::ArrayXd z = (x.array() - p.mu) / p.sigma;
    return ((p.amplitude * (-0.5 * z.square()).exp()) - y.array()).square().sum();
}

FitParams levenberg_marquardt(const Eigen::VectorXd& x, const Eigen::VectorXd& y, FitParams p, double sigma_lo,
                              double sigma_hi, double mu_lo, double mu_hi)
{
    auto clamp = [&](FitParams q) {
        q.sigma = std::clamp(q.sigma, sigma_lo, sigma_hi);
        q.mu = std::clamp(q.mu, mu_lo, mu_hi);
        q.amplitude = std::max(q.amplitude, 0.0);
        return q;
    };
    p = clamp(p);
    double cost = sse(x, y, p);
    double lambda = 1e-3;
    const auto n = x.size();
    Eigen::MatrixXd jac(n, 3);
    for (int step = 0; step < 100; ++step) {
        const Eigen::ArrayXd d = x.array() - p.mu;
        const Eigen::ArrayXd g = (-0.5 * d.square() / (p.sigma * p.sigma)).exp();
        const Eigen::VectorXd r = (p.amplitude * g - y.array()).matrix();
        jac.col(0) = g.matrix();
        jac.col(1) = (p.amplitude * g * d / (p.sigma * p.sigma)).matrix();
        jac.col(2) = (p.amplitude * g * d.square() / (p.sigma * p.sigma * p.sigma)).matrix();
        const Eigen::Matrix3d jtj = jac.transpose() * jac;
        const Eigen::Vector3d jtr = jac.transpose() * r;
        bool accepted = false;
        while (lambda < 1e12) {
            Eigen::Matrix3d a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::Vector3d delta = a.ldlt().solve(-jtr);
            const FitParams trial = clamp({p.amplitude + delta[0], p.mu + delta[1], p.sigma + delta[2]});
            const double c = sse(x, y, trial);
            if (c < cost) {
                const double rel = (cost - c) / std::max(cost, 1e-300);
                p = trial;
                cost = c;
                lambda = std::max(lambda / 10, 1e-12);
                accepted = true;
                if (rel < 1e-8) return p;
                break;
            }
            lambda *= 10;
        }
        if (!accepted) break;
    }
    return p;
}

}  // namespace

GaussianModel fit_gaussian(const TransitionDistribution& d)
{
    const auto n = d.bins.size();
    const double mass = d.bins.sum();
    if (n == 0 || !(mass > 0)) throw Error(ErrorCode::NoReliablePairs, "empty histogram");
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = d.center(i);
    const Eigen::VectorXd& y = d.bins;
    const double w = d.bin_width;

    Eigen::Index nonzero = 0, peak = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (y[i] > 0) ++nonzero;
        if (y[i] > y[peak]) peak = i;
    }
    if (nonzero == 1) return {x[peak], 0.5 * w, 0.0};

    const double mean = x.dot(y) / mass;
    const double var = ((x.array() - mean).square() * y.array()).sum() / mass;
    const double sigma_lo = 0.5 * w;
    const double sigma_hi = std::max(sigma_lo, d.hi() - d.lo);
    const double ss_tot = (y.array() - y.mean()).square().sum();
    if (!(ss_tot > 0)) return {mean, std::clamp(std::sqrt(var), sigma_lo, sigma_hi), 1.0};

    std::vector<FitParams> starts;
    starts.push_back({y.maxCoeff(), mean, std::sqrt(var)});
    // robust start: weighted median and MAD, unaffected by a thin background of stray pairs
    {
        auto quantile = [&](const Eigen::VectorXd& w, double q) {
            double acc = 0;
            const double total = w.sum();
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += w[i];
                if (acc >= q * total) return x[i];
            }
            return x[n - 1];
        };
        const double med = quantile(y, 0.5);
        std::vector<std::pair<double, double>> dev;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (y[i] > 0) dev.emplace_back(std::abs(x[i] - med), y[i]);
        }
        std::sort(dev.begin(), dev.end());
        double acc = 0, mad = dev.back().first;
        for (const auto& [d, wt] : dev) {
            acc += wt;
            if (acc >= 0.5 * mass) {
                mad = d;
                break;
            }
        }
        starts.push_back({y.maxCoeff(), med, 1.4826 * mad});
    }
    FitParams best{0, mean, sigma_lo};
    double best_cost = std::numeric_limits<double>::infinity();
    for (const auto& s : starts) {
        const auto p = levenberg_marquardt(x, y, s, sigma_lo, sigma_hi, d.lo, d.hi());
        const double c = sse(x, y, p);
        if (c < best_cost) {
            best_cost = c;
            best = p;
        }
    }
    const double r2 = 1.0 - best_cost / ss_tot;
    return {best.mu, best.sigma, std::clamp(1.0 - r2, 0.0, 1.0)};
}

double connectivity_confidence(const GaussianModel& m, double time_scale)
{
    if (!(time_scale > 0)) throw Error(ErrorCode::InvalidConfig, "confidence time scale must be positive");
    return std::exp(-m.sigma / time_scale) * (1.0 - std::clamp(m.fit_error, 0.0, 1.0));
}

double normal_quantile(double p)
{
    if (!(p > 0 && p < 1)) throw Error(ErrorCode::InvalidConfig, "quantile probability must lie in (0, 1)");
    // rational approximation, then one Halley step against erfc
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double e[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((e[0] * q + e[1]) * q + e[2]) * q + e[3]) * q + 1);
    } else if (p <= 1 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        const double q = std::sqrt(-2 * std::log(1 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((e[0] * q + e[1]) * q + e[2]) * q + e[3]) * q + 1);
    }
    const double err = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = err * std::sqrt(2 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1 + 0.5 * x * u);
}

WindowBounds update_time_window(const GaussianModel& m, double coverage_percent, double max_error)
{
    if (!(coverage_percent > 0 && coverage_percent < 100)) {
        throw Error(ErrorCode::InvalidConfig, "coverage must lie in (0, 100)");
    }
    const double z = normal_quantile(0.5 * (1.0 + coverage_percent / 100.0));
    WindowBounds b;
    b.lower = m.mu - z * m.sigma;
    b.upper = m.mu + z * m.sigma;
    b.window = (b.upper - b.lower) / (1.0 - std::min(std::clamp(m.fit_error, 0.0, 1.0), max_error));
    return b;
}

void attach_model(TransitionDistribution& d, double time_scale)
{
    d.model = fit_gaussian(d);
    d.confidence = connectivity_confidence(*d.model, time_scale);
}

namespace {

double confidence_scale(const PipelineConfig& cfg, double window)
{
    return cfg.confidence_time_scale > 0 ? cfg.confidence_time_scale : window;
}

Correspondence to_correspondence(const MatchResult& m, const Tracklet& exit, const Tracklet& entry)
{
    Correspondence c;
    c.exit = exit.ref();
    c.entry = entry.ref();
    c.exit_time = exit.exit_time;
    c.entry_time = entry.entry_time;
    c.delta_t = entry.entry_time - exit.exit_time;
    c.similarity = m.similarity;
    c.posterior = m.posterior;
    c.probe = m.probe;
    c.ranking = m.ranking;
    return c;
}

/// Fills distribution, model and confidence; an empty distribution means "no reliable pairs".
TransitionDistribution distribution_or_empty(const CorrespondenceSet& set, const PipelineConfig& cfg, double lo,
                                             double hi, double window)
{
    try {
        auto d = estimate_distribution(set, cfg.theta_sim, cfg.bin_width, lo, hi);
        attach_model(d, confidence_scale(cfg, window));
        return d;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoReliablePairs) throw;
        return make_distribution(cfg.bin_width, lo, hi);
    }
}

bool supported(const TransitionDistribution& d, const PipelineConfig& cfg)
{
    return d.sample_count >= cfg.min_link_samples && d.confidence > cfg.theta_conf;
}

}  // namespace

CameraStage infer_cam_topology(const Dataset& ds, const PipelineConfig& cfg)
{
    cfg.validate();
    CameraStage out;
    const double T = cfg.initial_window;
    std::vector<CameraId> cams;
    for (const auto& [cam, tracks] : ds.cameras) {
        out.topology.vertices.push_back(cam);
        if (!tracks.empty()) cams.push_back(cam);
    }
    for (std::size_t i = 0; i < cams.size(); ++i) {
        for (std::size_t j = i + 1; j < cams.size(); ++j) {
            const CameraId a = cams[i], b = cams[j];
            const auto& ta = ds.cameras.at(a);
            const auto& tb = ds.cameras.at(b);
            const bool a_gallery = ta.size() >= tb.size();
            const auto& gallery = a_gallery ? ta : tb;
            const auto& probes = a_gallery ? tb : ta;
            const CameraId gcam = a_gallery ? a : b;
            const auto series = build_series(gallery, T, T * cfg.window_stride_fraction, cfg,
                                             mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(gcam) * 131 +
                                                                    static_cast<std::uint64_t>(a + b)));
            std::vector<std::optional<Correspondence>> found(probes.size());
            parallel_for(probes.size(), cfg.threads, [&](std::size_t k) {
                const auto& p = probes[k];
                auto m = query_series(series, p, p.entry_time - T, p.exit_time + T);
                if (!m) return;
                const Tracklet* g = ds.find(m->matched);
                if (!g) return;
                // the tracklet that enters first is the exit side of the gap
                const bool probe_first = g->entry_time >= p.entry_time;
                const Tracklet& ex = probe_first ? p : *g;
                const Tracklet& en = probe_first ? *g : p;
                auto c = to_correspondence(*m, ex, en);
                if (std::abs(c.delta_t) > T) return;
                found[k] = std::move(c);
            });
            CorrespondenceSet set;
            for (auto& f : found) {
                if (f) set.pairs.push_back(std::move(*f));
            }
            set.update_reliable(cfg.theta_sim);
            auto d = distribution_or_empty(set, cfg, -T, T, T);
            if (supported(d, cfg)) out.topology.valid.insert({a, b});
            out.topology.edges[{a, b}] = std::move(d);
            out.correspondences[{a, b}] = std::move(set);
        }
    }
    return out;
}

namespace {

struct ZoneLists
{
    std::map<ZoneKey, std::vector<const Tracklet*>> entries;
    std::map<ZoneKey, std::vector<const Tracklet*>> exits;
};

ZoneLists assign_all(const Dataset& ds, const std::map<CameraId, std::vector<Zone>>& zones)
{
    ZoneLists out;
    for (const auto& [cam, tracks] : ds.cameras) {
        auto it = zones.find(cam);
        if (it == zones.end() || it->second.empty()) continue;
        const auto& zs = it->second;
        const bool has_entry = std::any_of(zs.begin(), zs.end(), [](const Zone& z) { return z.kind != ZoneKind::exit; });
        const bool has_exit = std::any_of(zs.begin(), zs.end(), [](const Zone& z) { return z.kind != ZoneKind::entry; });
        for (const auto& t : tracks) {
            if (has_entry) out.entries[{cam, assign_zone(zs, t.entry_point, ZoneKind::entry)}].push_back(&t);
            if (has_exit) out.exits[{cam, assign_zone(zs, t.exit_point, ZoneKind::exit)}].push_back(&t);
        }
    }
    return out;
}

std::vector<Tracklet> deref(const std::vector<const Tracklet*>& v)
{
    std::vector<Tracklet> out;
    out.reserve(v.size());
    for (const auto* t : v) out.push_back(*t);
    return out;
}

}  // namespace

ZoneStage infer_zone_topology(const Dataset& ds, const CameraTopology& cams,
                              const std::map<CameraId, std::vector<Zone>>& zones, const PipelineConfig& cfg)
{
    cfg.validate();
    ZoneStage out;
    out.topology.zones = zones;
    const double T = cfg.initial_window;
    const auto lists = assign_all(ds, zones);
    std::map<ZoneKey, WindowedForestSeries> series_cache;
    auto series_for = [&](ZoneKey key) -> const WindowedForestSeries& {
        auto it = series_cache.find(key);
        if (it != series_cache.end()) return it->second;
        const auto& v = lists.entries.at(key);
        const auto seed = mix_seed(cfg.seed, 5000 + static_cast<std::uint64_t>(key.camera) * 64 +
                                                 static_cast<std::uint64_t>(key.zone));
        return series_cache.emplace(key, build_series(deref(v), T, T * cfg.window_stride_fraction, cfg, seed))
            .first->second;
    };

    for (const auto& [a, b] : cams.valid) {
        // negative gaps among the camera-level reliable pairs widen the zone search backwards
        double lo = 0.0;
        if (auto it = cams.edges.find({a, b}); it != cams.edges.end()) {
            const auto& d = it->second;
            for (Eigen::Index i = 0; i < d.bins.size(); ++i) {
                if (d.bins[i] > 0 && d.center(i) < 0) lo = -T;
            }
        }
        for (const auto& [src, dst] : {std::pair{a, b}, std::pair{b, a}}) {
            for (const auto& [exit_key, probes] : lists.exits) {
                if (exit_key.camera != src || probes.empty()) continue;
                for (const auto& [entry_key, gallery] : lists.entries) {
                    if (entry_key.camera != dst || gallery.empty()) continue;
                    const auto& series = series_for(entry_key);
                    std::vector<std::optional<Correspondence>> found(probes.size());
                    parallel_for(probes.size(), cfg.threads, [&](std::size_t k) {
                        const Tracklet& p = *probes[k];
                        auto m = query_series(series, p, p.exit_time + lo, p.exit_time + T);
                        if (!m) return;
                        const Tracklet* g = ds.find(m->matched);
                        if (!g) return;
                        auto c = to_correspondence(*m, p, *g);
                        if (c.delta_t < lo || c.delta_t > T) return;
                        c.exit_zone = exit_key;
                        c.entry_zone = entry_key;
                        found[k] = std::move(c);
                    });
                    CorrespondenceSet set;
                    for (auto& f : found) {
                        if (f) set.pairs.push_back(std::move(*f));
                    }
                    set.update_reliable(cfg.theta_sim);
                    auto d = distribution_or_empty(set, cfg, lo, T, T);
                    if (!supported(d, cfg)) continue;
                    LinkState st;
                    st.distribution = std::move(d);
                    st.window = T;
                    st.lower = lo;
                    st.upper = T;
                    out.topology.add_link(exit_key, entry_key, std::move(st), true);
                    out.correspondences.push_back(std::move(set));
                }
            }
        }
    }
    return out;
}

RefineResult refine_link(const LinkState& link, const std::vector<Tracklet>& exits,
                         const std::vector<Tracklet>& entries, const PipelineConfig& cfg, std::uint64_t seed)
{
    RefineResult out;
    out.state = link;
    out.state.iteration = link.iteration + 1;
    if (!link.distribution.model) {
        ++out.state.stagnant;
        out.state.converged = out.state.stagnant >= 2;
        return out;
    }
    const auto& model = *link.distribution.model;
    const auto bounds = update_time_window(model, cfg.coverage_percent, cfg.max_window_error);
    const double T = std::max(bounds.window, 2.0 * cfg.bin_width);
    if (!entries.empty()) {
        const auto series = build_series(entries, T, T * cfg.window_stride_fraction, cfg, seed);
        std::map<TrackRef, const Tracklet*> by_ref;
        for (const auto& e : entries) by_ref[e.ref()] = &e;
        std::vector<std::optional<Correspondence>> found(exits.size());
        parallel_for(exits.size(), cfg.threads, [&](std::size_t k) {
            const auto& p = exits[k];
            const int w = series.nearest_window(p.exit_time + model.mu);
            if (w < 0) return;
            auto m = query_window(series, static_cast<std::size_t>(w), p);
            if (!m) return;
            found[k] = to_correspondence(*m, p, *by_ref.at(m->matched));
        });
        for (auto& f : found) {
            if (f) out.correspondences.pairs.push_back(std::move(*f));
        }
    }
    out.correspondences.update_reliable(cfg.theta_sim);
    TransitionDistribution d;
    try {
        d = estimate_distribution(out.correspondences, cfg.theta_sim, cfg.bin_width, model.mu - T, model.mu + T);
        attach_model(d, confidence_scale(cfg, T));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoReliablePairs) throw;
        ++out.state.stagnant;
        out.state.converged = out.state.stagnant >= 2;
        return out;
    }
    const double db = bhattacharyya(link.distribution, d);
    out.state.distribution = std::move(d);
    out.state.window = T;
    out.state.lower = bounds.lower;
    out.state.upper = bounds.upper;
    out.state.stagnant = 0;
    out.state.converged = db < cfg.convergence_epsilon;
    return out;
}

std::vector<Tracklet> tracklets_in_zone(const Dataset& ds, const std::vector<Zone>& zones, ZoneKey key, ZoneKind kind)
{
    std::vector<Tracklet> out;
    auto it = ds.cameras.find(key.camera);
    if (it == ds.cameras.end()) return out;
    for (const auto& t : it->second) {
        const auto& pt = kind == ZoneKind::exit ? t.exit_point : t.entry_point;
        if (assign_zone(zones, pt, kind) == key.zone) out.push_back(t);
    }
    return out;
}

namespace {

std::vector<Correspondence> flatten(const std::vector<CorrespondenceSet>& sets)
{
    std::vector<Correspondence> out;
    for (const auto& s : sets) out.insert(out.end(), s.pairs.begin(), s.pairs.end());
    return out;
}

}  // namespace

InitResult initialize_topology(const Dataset& raw, const PipelineConfig& cfg)
{
    cfg.validate();
    const auto ds = with_key_appearances(raw, cfg.max_key_appearances);
    InitResult out;
    auto cam = infer_cam_topology(ds, cfg);
    {
        StageRecord rec{"cam", {}};
        for (const auto& [pair, set] : cam.correspondences) {
            if (cam.topology.valid.count(pair)) rec.matches.insert(rec.matches.end(), set.pairs.begin(), set.pairs.end());
        }
        out.stages.push_back(std::move(rec));
    }
    const auto zones = learn_all_zones(ds, cfg);
    auto zs = infer_zone_topology(ds, cam.topology, zones, cfg);
    out.cameras = std::move(cam.topology);
    out.stages.push_back({"zone", flatten(zs.correspondences)});
    out.zones = std::move(zs.topology);
    out.correspondences = std::move(zs.correspondences);

    auto& links = out.zones.links();
    std::vector<std::vector<Tracklet>> exits(links.size()), entries(links.size());
    for (std::size_t i = 0; i < links.size(); ++i) {
        exits[i] = tracklets_in_zone(ds, zones.at(links[i].exit.camera), links[i].exit, ZoneKind::exit);
        entries[i] = tracklets_in_zone(ds, zones.at(links[i].entry.camera), links[i].entry, ZoneKind::entry);
    }
    for (int it = 1; it <= cfg.max_iterations && !links.empty(); ++it) {
        bool all_converged = true;
        for (std::size_t i = 0; i < links.size(); ++i) {
            auto& l = links[i];
            if (!l.valid || l.state.converged) continue;
            const auto seed = mix_seed(cfg.seed, 90000 + i);
            auto r = refine_link(l.state, exits[i], entries[i], cfg, seed);
            l.state = std::move(r.state);
            if (!r.correspondences.pairs.empty()) {
                for (auto& c : r.correspondences.pairs) {
                    c.exit_zone = l.exit;
                    c.entry_zone = l.entry;
                }
                out.correspondences[i] = std::move(r.correspondences);
            }
            if (!supported(l.state.distribution, cfg)) {
                l.valid = false;
                out.correspondences[i].pairs.clear();
                continue;
            }
            all_converged = all_converged && l.state.converged;
        }
        out.stages.push_back({"iter" + std::to_string(it), flatten(out.correspondences)});
        out.iterations.push_back(out.zones);
        if (all_converged) break;
    }
    out.stages.push_back({"final", flatten(out.correspondences)});
    return out;
}

}  // namespace camnet
