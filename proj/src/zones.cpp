#include "camnet/zones.hpp"

#include "camnet/ingest.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace camnet {

namespace {

double gaussian_log_pdf(const Point2& p, const Point2& mean, const Eigen::Matrix2d& cov)
{
    const Eigen::Matrix2d c = cov + zone_regularization * Eigen::Matrix2d::Identity();
    const Point2 d = p - mean;
    const double det = c.determinant();
    return -0.5 * d.dot(c.inverse() * d) - 0.5 * std::log(det) - std::log(2 * std::numbers::pi);
}

double log_sum_exp(const std::vector<double>& v)
{
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

std::size_t distinct_points(const std::vector<Point2>& pts)
{
    std::set<std::pair<double, double>> s;
    for (const auto& p : pts) s.emplace(p.x(), p.y());
    return s.size();
}

std::vector<Point2> kmeans(const std::vector<Point2>& pts, int k)
{
    // farthest-first seeding from the first point
    std::vector<Point2> centers{pts.front()};
    std::vector<double> d2(pts.size(), std::numeric_limits<double>::infinity());
    while (static_cast<int>(centers.size()) < k) {
        std::size_t best = 0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            d2[i] = std::min(d2[i], (pts[i] - centers.back()).squaredNorm());
            if (d2[i] > d2[best]) best = i;
        }
        centers.push_back(pts[best]);
    }
    std::vector<int> assign(pts.size(), -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            int best = 0;
            for (int c = 1; c < k; ++c) {
                if ((pts[i] - centers[static_cast<std::size_t>(c)]).squaredNorm() <
                    (pts[i] - centers[static_cast<std::size_t>(best)]).squaredNorm()) {
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        std::vector<Point2> sum(static_cast<std::size_t>(k), Point2::Zero());
        std::vector<int> cnt(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            sum[static_cast<std::size_t>(assign[i])] += pts[i];
            ++cnt[static_cast<std::size_t>(assign[i])];
        }
        for (int c = 0; c < k; ++c) {
            if (cnt[static_cast<std::size_t>(c)] > 0) centers[static_cast<std::size_t>(c)] = sum[static_cast<std::size_t>(c)] / cnt[static_cast<std::size_t>(c)];
        }
        if (!changed) break;
    }
    return centers;
}

}  // namespace

Mixture2 fit_mixture(const std::vector<Point2>& pts, int k, int em_iterations)
{
    if (pts.empty()) throw Error(ErrorCode::NoZones, "no points to cluster");
    const auto n = pts.size();
    const auto K = static_cast<std::size_t>(k);
    Mixture2 m;
    m.means = kmeans(pts, k);
    m.covariances.assign(K, Eigen::Matrix2d::Zero());
    m.weights.assign(K, 1.0 / double(k));
    // hard k-means assignment for the initial covariances
    {
        std::vector<Point2> sum(K, Point2::Zero());
        std::vector<double> cnt(K, 0);
        for (const auto& p : pts) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < K; ++c) {
                if ((p - m.means[c]).squaredNorm() < (p - m.means[best]).squaredNorm()) best = c;
            }
            const Point2 d = p - m.means[best];
            m.covariances[best] += d * d.transpose();
            cnt[best] += 1;
        }
        for (std::size_t c = 0; c < K; ++c) {
            if (cnt[c] > 0) m.covariances[c] /= cnt[c];
            m.weights[c] = std::max(cnt[c], 1.0) / double(n);
        }
    }
    std::vector<std::vector<double>> resp(n, std::vector<double>(K));
    std::vector<double> row(K);
    auto e_step = [&]() {
        double ll = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < K; ++c) {
                row[c] = std::log(m.weights[c]) + gaussian_log_pdf(pts[i], m.means[c], m.covariances[c]);
            }
            const double lse = log_sum_exp(row);
            ll += lse;
            for (std::size_t c = 0; c < K; ++c) resp[i][c] = std::exp(row[c] - lse);
        }
        return ll;
    };
    for (int iter = 0; iter < em_iterations; ++iter) {
        e_step();
        for (std::size_t c = 0; c < K; ++c) {
            double w = 0;
            Point2 mu = Point2::Zero();
            for (std::size_t i = 0; i < n; ++i) {
                w += resp[i][c];
                mu += resp[i][c] * pts[i];
            }
            if (w < 1e-9) continue;
            mu /= w;
            Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
            for (std::size_t i = 0; i < n; ++i) {
                const Point2 d = pts[i] - mu;
                cov += resp[i][c] * d * d.transpose();
            }
            m.means[c] = mu;
            m.covariances[c] = cov / w;
            m.weights[c] = w / double(n);
        }
    }
    m.log_likelihood = e_step();
    const double params = 6.0 * k - 1.0;
    m.bic = -2.0 * m.log_likelihood + params * std::log(double(n));
    return m;
}

Mixture2 select_mixture(const std::vector<Point2>& pts, int max_components, int em_iterations)
{
    if (pts.empty()) throw Error(ErrorCode::NoZones, "no points to cluster");
    const int kmax = std::min<int>(max_components, static_cast<int>(distinct_points(pts)));
    Mixture2 best = fit_mixture(pts, 1, em_iterations);
    for (int k = 2; k <= kmax; ++k) {
        auto m = fit_mixture(pts, k, em_iterations);
        if (m.bic < best.bic) best = std::move(m);
    }
    return best;
}

double zone_log_likelihood(const Zone& z, const Point2& p)
{
    return gaussian_log_pdf(p, z.center, z.covariance);
}

ZoneId assign_zone(const std::vector<Zone>& zones, const Point2& point, ZoneKind kind)
{
    const Zone* best = nullptr;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (const auto& z : zones) {
        if (z.kind != kind && z.kind != ZoneKind::both) continue;
        const double ll = zone_log_likelihood(z, point);
        if (!best || ll > best_ll || (ll == best_ll && z.zone_id < best->zone_id)) {
            best = &z;
            best_ll = ll;
        }
    }
    if (!best) throw Error(ErrorCode::NoZones, "no " + std::string(to_string(kind)) + " zone");
    return best->zone_id;
}

std::vector<Zone> learn_zones(CameraId camera, const std::vector<Point2>& entry_points,
                              const std::vector<Point2>& exit_points, int max_zones, int em_iterations)
{
    if (entry_points.empty() && exit_points.empty()) throw Error(ErrorCode::NoZones, "no endpoints to cluster");
    std::vector<Zone> out;
    for (ZoneKind kind : {ZoneKind::entry, ZoneKind::exit}) {
        const auto& pts = kind == ZoneKind::entry ? entry_points : exit_points;
        if (pts.empty()) continue;
        const auto mix = select_mixture(pts, max_zones, em_iterations);
        std::vector<Zone> zs;
        for (std::size_t c = 0; c < mix.means.size(); ++c) {
            Zone z;
            z.camera_id = camera;
            z.zone_id = static_cast<ZoneId>(c);
            z.center = mix.means[c];
            z.covariance = 0.5 * (mix.covariances[c] + mix.covariances[c].transpose());
            z.kind = kind;
            zs.push_back(z);
        }
        for (const auto& p : pts) {
            const auto id = assign_zone(zs, p, kind);
            ++zs[static_cast<std::size_t>(id)].member_count;
        }
        for (auto& z : zs) {
            if (z.member_count == 0) continue;
            z.zone_id = static_cast<ZoneId>(out.size());
            out.push_back(z);
        }
    }
    return out;
}

std::vector<Zone> learn_zones(const std::vector<Tracklet>& tracklets, int max_zones, int em_iterations)
{
    if (tracklets.empty()) throw Error(ErrorCode::NoZones, "zone learning needs at least one tracklet");
    std::vector<Point2> entries, exits;
    for (const auto& t : tracklets) {
        entries.push_back(t.entry_point);
        exits.push_back(t.exit_point);
    }
    return learn_zones(tracklets.front().camera_id, entries, exits, max_zones, em_iterations);
}

std::map<CameraId, std::vector<Zone>> learn_all_zones(const Dataset& ds, const PipelineConfig& cfg)
{
    std::map<CameraId, std::vector<Zone>> out;
    for (const auto& [cam, tracks] : ds.cameras) {
        if (tracks.empty()) continue;
        out[cam] = learn_zones(tracks, cfg.max_zones, cfg.zone_em_iterations);
    }
    return out;
}

}  // namespace camnet
