#include "camnet/eval.hpp"

#include "camnet/forest.hpp"
#include "camnet/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

namespace camnet {

double bhattacharyya(const TransitionDistribution& p, const TransitionDistribution& q)
{
    const auto [a, b] = align(p, q);
    const double bc = (a.array() * b.array()).sqrt().sum();
    if (!(bc > 0)) return std::numeric_limits<double>::infinity();
    return std::max(0.0, -std::log(bc));
}

double bhattacharyya(const GaussianModel& p, const GaussianModel& q, int intervals)
{
    if (!(p.sigma > 0) || !(q.sigma > 0)) throw Error(ErrorCode::InvalidConfig, "Gaussian sigma must be positive");
    intervals += intervals % 2;
    // sqrt(p q) is itself Gaussian-shaped; integrate it over +-12 of its own widths
    const double s2 = 2 * p.sigma * p.sigma * q.sigma * q.sigma / (p.sigma * p.sigma + q.sigma * q.sigma);
    const double center = (p.mu * q.sigma * q.sigma + q.mu * p.sigma * p.sigma) / (p.sigma * p.sigma + q.sigma * q.sigma);
    const double half = 12.0 * std::sqrt(s2);
    const double lo = center - half, hi = center + half;
    const double h = (hi - lo) / intervals;
    auto f = [&](double x) {
        const double zp = (x - p.mu) / p.sigma, zq = (x - q.mu) / q.sigma;
        return std::exp(-0.25 * (zp * zp + zq * zq)) / std::sqrt(2 * std::numbers::pi * p.sigma * q.sigma);
    };
    double sum = f(lo) + f(hi);
    for (int i = 1; i < intervals; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
    const double bc = sum * h / 3.0;
    if (!(bc > 0)) return std::numeric_limits<double>::infinity();
    return std::max(0.0, -std::log(bc));
}

TruePairSet true_pair_set(const GroundTruth& truth, double from, double to)
{
    TruePairSet out;
    for (const auto& p : truth.pairs) {
        if (p.exit_time >= from && p.exit_time < to) out.insert({p.exit, p.entry});
    }
    return out;
}

double rank1(const std::vector<Correspondence>& matches, const TruePairSet& truth)
{
    if (truth.empty()) throw Error(ErrorCode::NoGroundTruth, "no true pairs");
    std::set<std::pair<TrackRef, TrackRef>> hit;
    for (const auto& m : matches) {
        if (truth.count({m.exit, m.entry})) hit.insert({m.exit, m.entry});
    }
    return static_cast<double>(hit.size()) / static_cast<double>(truth.size());
}

std::vector<double> cmc(const std::vector<Correspondence>& matches, const TruePairSet& truth, std::size_t max_rank)
{
    if (truth.empty()) throw Error(ErrorCode::NoGroundTruth, "no true pairs");
    std::map<TrackRef, std::vector<TrackRef>> partners;
    for (const auto& [a, b] : truth) {
        partners[a].push_back(b);
        partners[b].push_back(a);
    }
    // best rank reached by each true pair
    std::map<std::pair<TrackRef, TrackRef>, std::size_t> best;
    for (const auto& m : matches) {
        auto it = partners.find(m.probe);
        if (it == partners.end()) continue;
        const auto n = std::min(max_rank, m.ranking.size());
        for (std::size_t r = 0; r < n; ++r) {
            for (const auto& other : it->second) {
                if (m.ranking[r] != other) continue;
                const auto key = truth.count({m.probe, other}) ? std::pair{m.probe, other} : std::pair{other, m.probe};
                auto [pos, fresh] = best.emplace(key, r);
                if (!fresh) pos->second = std::min(pos->second, r);
            }
        }
    }
    std::vector<double> out(max_rank, 0.0);
    for (const auto& [key, r] : best) {
        for (std::size_t k = r; k < max_rank; ++k) out[k] += 1.0;
    }
    for (auto& v : out) v /= static_cast<double>(truth.size());
    return out;
}

TransitionError transition_time_error(const std::vector<LinkComparison>& links, std::size_t true_link_count)
{
    if (links.empty()) throw Error(ErrorCode::NoCommonLinks, "no inferred link matches a true link");
    TransitionError e;
    for (const auto& l : links) e.per_link.push_back(std::abs(l.mu - l.mu_gt));
    double s = 0;
    for (double v : e.per_link) s += v;
    e.mean = s / static_cast<double>(links.size());
    e.missing = true_link_count > links.size() ? true_link_count - links.size() : 0;
    return e;
}

namespace {

int nearest_true_zone(const GroundTruth& truth, const Zone& z)
{
    for (const auto& c : truth.cameras) {
        if (c.id != z.camera_id) continue;
        int best = -1;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < c.zones.size(); ++i) {
            const double d = (c.zones[i].center - z.center).squaredNorm();
            if (d < bd) {
                bd = d;
                best = static_cast<int>(i);
            }
        }
        return best;
    }
    return -1;
}

}  // namespace

std::vector<LinkComparison> compare_links(const ZoneTopology& topo, const GroundTruth& truth, double at_time,
                                          std::size_t* spurious)
{
    const auto active = truth.links_at(at_time);
    std::vector<LinkComparison> out;
    std::set<int> claimed;
    std::size_t extra = 0;
    for (const auto& l : topo.links()) {
        if (!l.valid) continue;
        const Zone* ze = topo.zone(l.exit);
        const Zone* zn = topo.zone(l.entry);
        const auto& model = l.state.distribution.model;
        int match = -1;
        if (ze && zn && model) {
            const int from = nearest_true_zone(truth, *ze);
            const int to = nearest_true_zone(truth, *zn);
            for (std::size_t k = 0; k < active.size(); ++k) {
                const auto& t = active[k];
                if (t.routing > 0 && t.from_camera == l.exit.camera && t.from_zone == from &&
                    t.to_camera == l.entry.camera && t.to_zone == to) {
                    match = static_cast<int>(k);
                }
            }
        }
        if (match < 0 || claimed.count(match)) {
            ++extra;
            continue;
        }
        claimed.insert(match);
        const auto& t = active[static_cast<std::size_t>(match)];
        LinkComparison c;
        c.exit = l.exit;
        c.entry = l.entry;
        c.true_link = match;
        c.mu = model->mu;
        c.sigma = model->sigma;
        c.mu_gt = t.mu;
        c.sigma_gt = t.sigma;
        c.bhattacharyya = bhattacharyya(GaussianModel{c.mu, c.sigma, 0}, GaussianModel{t.mu, t.sigma, 0});
        c.sample_count = l.state.distribution.sample_count;
        out.push_back(c);
    }
    if (spurious) *spurious = extra;
    return out;
}

EvalReport evaluate(const ZoneTopology& topo, const std::vector<Correspondence>& matches, const GroundTruth& truth,
                    double at_time, std::size_t max_rank, double pairs_from)
{
    EvalReport r;
    r.links = compare_links(topo, truth, at_time, &r.spurious);
    const auto active = truth.links_at(at_time);
    r.true_links = static_cast<std::size_t>(
        std::count_if(active.begin(), active.end(), [](const SimLink& l) { return l.routing > 0; }));
    r.recovered = r.links.size();
    r.missing = r.true_links - std::min(r.true_links, r.recovered);
    if (r.links.empty()) {
        r.transition_time_error = std::numeric_limits<double>::quiet_NaN();
        r.topology_distance = std::numeric_limits<double>::quiet_NaN();
    } else {
        r.transition_time_error = transition_time_error(r.links, r.true_links).mean;
        double s = 0;
        for (const auto& l : r.links) s += l.bhattacharyya;
        r.topology_distance = s / static_cast<double>(r.links.size());
    }
    const auto pairs = true_pair_set(truth, pairs_from);
    if (pairs.empty()) {
        r.rank1 = std::numeric_limits<double>::quiet_NaN();
    } else {
        r.rank1 = rank1(matches, pairs);
        r.cmc = cmc(matches, pairs, max_rank);
    }
    return r;
}

namespace {

template <class F>
double median_seconds(int reps, F&& f)
{
    std::vector<double> t;
    for (int i = 0; i < reps; ++i) {
        const auto start = std::chrono::steady_clock::now();
        f();
        t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
}

}  // namespace

BenchmarkTable benchmark_matching(const std::vector<std::size_t>& sizes, int k, const PipelineConfig& cfg,
                                  int repetitions, int dim, std::uint64_t seed)
{
    if (sizes.empty() || k < 1 || repetitions < 1 || dim < 1) {
        throw Error(ErrorCode::InvalidConfig, "benchmark needs sizes, k >= 1, repetitions >= 1 and dim >= 1");
    }
    BenchmarkTable table;
    std::vector<double> forest_t, exhaustive_t;
    for (std::size_t n : sizes) {
        std::mt19937_64 rng(mix_seed(seed, n));
        std::normal_distribution<double> normal(0, 1);
        const auto cols = static_cast<Eigen::Index>(n) * k;
        Gallery g;
        g.features.resize(dim, cols);
        std::vector<FeatureMatrix> probes(n, FeatureMatrix(dim, k));
        for (std::size_t id = 0; id < n; ++id) {
            FeatureVector latent(dim);
            for (int i = 0; i < dim; ++i) latent[i] = normal(rng);
            latent.normalize();
            for (int s = 0; s < k; ++s) {
                FeatureVector a(dim), b(dim);
                for (int i = 0; i < dim; ++i) {
                    a[i] = latent[i] + 0.03 * normal(rng);
                    b[i] = latent[i] + 0.03 * normal(rng);
                }
                g.features.col(static_cast<Eigen::Index>(id) * k + s) = a.normalized();
                probes[id].col(s) = b.normalized();
                g.labels.push_back(static_cast<Label>(id));
                g.timestamps.push_back(static_cast<double>(s));
            }
        }
        const double tf = median_seconds(repetitions, [&] {
            const auto f = train_forest(g, cfg, seed);
            double acc = 0;
            for (const auto& p : probes) {
                const auto r = predict_multishot(f, p);
                acc += similarity(g.features.middleCols(f.index_of(r.label) * k, k), p);
            }
            volatile double sink = acc;
            (void)sink;
        });
        const Eigen::VectorXd gn = g.features.colwise().squaredNorm().transpose();
        const double te = median_seconds(repetitions, [&] {
            double acc = 0;
            for (const auto& p : probes) {
                // one Gram product against the whole gallery, then the minimum per identity block
                const Eigen::RowVectorXd pn = p.colwise().squaredNorm();
                Eigen::MatrixXd d2 = -2.0 * (g.features.transpose() * p);
                d2.colwise() += gn;
                d2.rowwise() += pn;
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t id = 0; id < n; ++id) {
                    best = std::min(best, d2.middleRows(static_cast<Eigen::Index>(id) * k, k).minCoeff());
                }
                acc += best;
            }
            volatile double sink = acc;
            (void)sink;
        });
        table.rows.push_back({n, "forest", tf});
        table.rows.push_back({n, "exhaustive", te});
        forest_t.push_back(tf);
        exhaustive_t.push_back(te);
    }
    for (std::size_t i = 1; i < forest_t.size(); ++i) {
        table.forest_ratios.push_back(forest_t[i] / forest_t[i - 1]);
        table.exhaustive_ratios.push_back(exhaustive_t[i] / exhaustive_t[i - 1]);
    }
    return table;
}

}  // namespace camnet
