#include "camnet/forest.hpp"

#include "camnet/ingest.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace camnet {

namespace {

struct SplitCandidate
{
    int feature = -1;
    double threshold = 0;
    double score = -1;  // sum over children of (sum of squared counts) / child size
    double gap = 0;
};

class TreeBuilder
{
public:
    TreeBuilder(const Eigen::MatrixXd& xt, const std::vector<int>& y, int class_count, const TreeParams& p,
                std::uint64_t seed)
        : xt_(xt), y_(y), classes_(class_count), params_(p), rng_(seed),
          left_(static_cast<std::size_t>(class_count)), right_(static_cast<std::size_t>(class_count)),
          counts_(static_cast<std::size_t>(class_count))
    {
        const auto d = static_cast<int>(xt.cols());
        mtry_ = params_.features_per_node > 0 ? std::min(params_.features_per_node, d)
                                              : std::max(1, static_cast<int>(std::lround(std::sqrt(double(d)))));
        feature_pool_.resize(static_cast<std::size_t>(d));
        std::iota(feature_pool_.begin(), feature_pool_.end(), 0);
    }

    void build(std::vector<int>& idx, std::vector<DecisionTree::Node>& nodes,
               std::vector<DecisionTree::LeafDistribution>& leaves, int& max_depth)
    {
        struct Task
        {
            int node;
            std::size_t begin, end;
            int depth;
        };
        nodes.clear();
        nodes.emplace_back();
        std::vector<Task> stack{{0, 0, idx.size(), 0}};
        while (!stack.empty()) {
            const Task t = stack.back();
            stack.pop_back();
            max_depth = std::max(max_depth, t.depth);
            const std::size_t n = t.end - t.begin;
            std::fill(counts_.begin(), counts_.end(), 0);
            int distinct = 0;
            for (std::size_t i = t.begin; i < t.end; ++i) {
                if (counts_[static_cast<std::size_t>(y_[static_cast<std::size_t>(idx[i])])]++ == 0) ++distinct;
            }
            SplitCandidate split;
            if (distinct > 1 && t.depth < params_.max_depth && n >= static_cast<std::size_t>(params_.min_samples_split)) {
                split = best_split(idx, t.begin, t.end);
            }
            if (split.feature < 0) {
                DecisionTree::LeafDistribution leaf;
                for (int c = 0; c < classes_; ++c) {
                    if (counts_[static_cast<std::size_t>(c)] > 0) {
                        leaf.emplace_back(c, double(counts_[static_cast<std::size_t>(c)]) / double(n));
                    }
                }
                nodes[static_cast<std::size_t>(t.node)].leaf = static_cast<int>(leaves.size());
                leaves.push_back(std::move(leaf));
                continue;
            }
            const auto mid = std::partition(idx.begin() + static_cast<long>(t.begin), idx.begin() + static_cast<long>(t.end),
                                            [&](int s) { return xt_(s, split.feature) <= split.threshold; });
            const auto m = static_cast<std::size_t>(mid - idx.begin());
            const int l = static_cast<int>(nodes.size());
            nodes.emplace_back();
            const int r = static_cast<int>(nodes.size());
            nodes.emplace_back();
            auto& node = nodes[static_cast<std::size_t>(t.node)];
            node.feature = split.feature;
            node.threshold = split.threshold;
            node.left = l;
            node.right = r;
            stack.push_back({r, m, t.end, t.depth + 1});
            stack.push_back({l, t.begin, m, t.depth + 1});
        }
    }

private:
    SplitCandidate best_split(const std::vector<int>& idx, std::size_t begin, std::size_t end)
    {
        const std::size_t n = end - begin;
        const auto d = feature_pool_.size();
        // partial Fisher-Yates draw of mtry distinct features
        for (int k = 0; k < mtry_; ++k) {
            std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), d - 1);
            std::swap(feature_pool_[static_cast<std::size_t>(k)], feature_pool_[pick(rng_)]);
        }
        SplitCandidate best;
        values_.resize(n);
        for (int k = 0; k < mtry_; ++k) {
            const int f = feature_pool_[static_cast<std::size_t>(k)];
            for (std::size_t i = 0; i < n; ++i) {
                const int s = idx[begin + i];
                values_[i] = {xt_(s, f), y_[static_cast<std::size_t>(s)]};
            }
            std::sort(values_.begin(), values_.end());
            if (values_.front().first == values_.back().first) continue;
            std::fill(left_.begin(), left_.end(), 0);
            std::copy(counts_.begin(), counts_.end(), right_.begin());
            double sq_left = 0, sq_right = 0;
            for (auto c : counts_) sq_right += double(c) * double(c);
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const auto c = static_cast<std::size_t>(values_[i].second);
                sq_left += 2.0 * left_[c] + 1.0;
                sq_right += -2.0 * right_[c] + 1.0;
                ++left_[c];
                --right_[c];
                const double a = values_[i].first, b = values_[i + 1].first;
                if (!(a < b)) continue;
                const double nl = double(i + 1), nr = double(n - i - 1);
                const double score = sq_left / nl + sq_right / nr;
                // equal impurity: keep the split with the wider gap
                const bool better = score > best.score + 1e-12 ||
                                    (score > best.score - 1e-12 && b - a > best.gap);
                if (better) {
                    double thr = a + 0.5 * (b - a);
                    if (!(thr < b)) thr = a;
                    best = {f, thr, score, b - a};
                }
            }
        }
        return best;
    }

    const Eigen::MatrixXd& xt_;
    const std::vector<int>& y_;
    int classes_;
    TreeParams params_;
    std::mt19937_64 rng_;
    int mtry_ = 1;
    std::vector<int> feature_pool_;
    std::vector<std::pair<double, int>> values_;
    std::vector<long> left_, right_, counts_;
};

}  // namespace

DecisionTree DecisionTree::train(const Eigen::MatrixXd& xt, const std::vector<int>& y, int class_count,
                                 const TreeParams& params, std::uint64_t seed)
{
    DecisionTree tree;
    const auto n = static_cast<std::size_t>(xt.rows());
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> draw(0, n - 1);
    std::vector<int> idx(n);
    for (auto& i : idx) i = static_cast<int>(draw(rng));
    TreeBuilder builder(xt, y, class_count, params, mix_seed(seed, 7));
    builder.build(idx, tree.nodes_, tree.leaves_, tree.depth_);
    return tree;
}

int RandomForest::index_of(Label label) const
{
    const auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
    if (it == labels_.end() || *it != label) return -1;
    return static_cast<int>(it - labels_.begin());
}

RandomForest train_forest(const Gallery& g, int tree_count, const TreeParams& params, std::uint64_t seed)
{
    if (g.size() == 0 || g.features.cols() == 0) throw Error(ErrorCode::EmptyGallery, "cannot train on an empty gallery");
    if (static_cast<std::size_t>(g.features.cols()) != g.labels.size()) {
        throw Error(ErrorCode::EmptyGallery, "gallery features and labels disagree in size");
    }
    if (tree_count < 1) throw Error(ErrorCode::InvalidConfig, "tree_count must be >= 1");
    RandomForest f;
    f.seed_ = seed;
    f.dim_ = g.features.rows();
    f.labels_ = g.labels;
    std::sort(f.labels_.begin(), f.labels_.end());
    f.labels_.erase(std::unique(f.labels_.begin(), f.labels_.end()), f.labels_.end());
    std::vector<int> y(g.labels.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = f.index_of(g.labels[i]);
    const Eigen::MatrixXd xt = g.features.transpose();
    f.trees_.reserve(static_cast<std::size_t>(tree_count));
    for (int t = 0; t < tree_count; ++t) {
        f.trees_.push_back(DecisionTree::train(xt, y, static_cast<int>(f.labels_.size()), params,
                                               mix_seed(seed, static_cast<std::uint64_t>(t))));
    }
    return f;
}

RandomForest train_forest(const Gallery& g, const PipelineConfig& cfg, std::uint64_t seed)
{
    TreeParams p;
    p.max_depth = cfg.max_tree_depth;
    p.min_samples_split = cfg.min_samples_split;
    return train_forest(g, cfg.tree_count, p, seed);
}

Eigen::VectorXd predict_single(const RandomForest& f, const FeatureVector& v)
{
    if (v.size() != f.dim()) throw Error(ErrorCode::FeatureDimMismatch, "probe dimension differs from forest");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.labels().size()));
    for (const auto& tree : f.trees()) {
        for (const auto& [c, p] : tree.leaf(v)) out[c] += p;
    }
    return out / static_cast<double>(f.trees().size());
}

MultiShotResult predict_multishot(const RandomForest& f, const FeatureMatrix& probe)
{
    if (probe.cols() == 0) throw Error(ErrorCode::EmptyProbe, "multi-shot probe without appearances");
    if (probe.rows() != f.dim()) throw Error(ErrorCode::FeatureDimMismatch, "probe dimension differs from forest");
    MultiShotResult r;
    const auto L = static_cast<Eigen::Index>(f.labels().size());
    r.distribution = Eigen::VectorXd::Zero(L);
    for (Eigen::Index k = 0; k < probe.cols(); ++k) {
        Eigen::VectorXd single = Eigen::VectorXd::Zero(L);
        for (const auto& tree : f.trees()) {
            for (const auto& [c, p] : tree.leaf(probe.col(k))) single[c] += p;
        }
        r.distribution += single / static_cast<double>(f.trees().size());
    }
    r.distribution /= static_cast<double>(probe.cols());
    std::vector<Eigen::Index> order(static_cast<std::size_t>(L));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return r.distribution[a] > r.distribution[b]; });
    r.ranking.reserve(order.size());
    for (auto i : order) r.ranking.push_back(f.labels()[static_cast<std::size_t>(i)]);
    r.label = r.ranking.front();
    r.posterior = r.distribution[order.front()];
    return r;
}

bool WindowedForestSeries::empty() const
{
    return std::none_of(windows.begin(), windows.end(), [](const auto& w) { return w.forest.has_value(); });
}

int WindowedForestSeries::nearest_window(double t) const
{
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (!windows[i].forest) continue;
        const double d = std::abs(windows[i].center - t);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

std::vector<std::pair<double, double>> window_slots(double span_start, double span_end, double window, double stride)
{
    if (!(window > 0) || !(stride > 0) || !(stride < window)) {
        throw Error(ErrorCode::InvalidConfig, "window series needs 0 < stride < window");
    }
    std::vector<std::pair<double, double>> slots;
    for (long k = 0;; ++k) {
        const double start = span_start + static_cast<double>(k) * stride;
        slots.emplace_back(start, start + window);
        if (start + window >= span_end) break;
    }
    return slots;
}

WindowedForestSeries build_series(const std::vector<Tracklet>& gallery, double window, double stride,
                                  const PipelineConfig& cfg, std::uint64_t seed)
{
    WindowedForestSeries s;
    s.window = window;
    s.stride = stride;
    if (!(window > 0) || !(stride > 0) || !(stride < window)) {
        throw Error(ErrorCode::InvalidConfig, "window series needs 0 < stride < window");
    }
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::vector<std::vector<double>> times;
    for (const auto& t : gallery) {
        auto key = select_key_appearances(t, cfg.max_key_appearances);
        for (const auto& o : key.observations) {
            lo = std::min(lo, o.timestamp);
            hi = std::max(hi, o.timestamp);
        }
        s.identities.push_back({key.ref(), key.features(), t.entry_time, t.exit_time});
        // same order as the feature columns
        auto& ts = times.emplace_back();
        for (const auto& o : key.observations) ts.push_back(o.timestamp);
    }
    if (gallery.empty() || !std::isfinite(lo)) return s;
    s.span_start = lo;
    s.span_end = hi;
    const auto dim = s.identities.front().features.rows();
    std::uint64_t stream = 0;
    for (const auto& [start, end] : window_slots(lo, hi, window, stride)) {
        ForestWindow w;
        w.start = start;
        w.end = std::min(end, hi);
        w.center = start + 0.5 * window;
        Gallery g;
        Eigen::Index count = 0;
        for (std::size_t i = 0; i < s.identities.size(); ++i) {
            for (double ts : times[i]) count += (ts >= start && ts <= end) ? 1 : 0;
        }
        if (count > 0) {
            g.features.resize(dim, count);
            Eigen::Index c = 0;
            for (std::size_t i = 0; i < s.identities.size(); ++i) {
                const auto& ts_i = times[i];
                for (std::size_t k = 0; k < ts_i.size(); ++k) {
                    if (ts_i[k] >= start && ts_i[k] <= end) {
                        g.features.col(c++) = s.identities[i].features.col(static_cast<Eigen::Index>(k));
                        g.labels.push_back(static_cast<Label>(i));
                        g.timestamps.push_back(ts_i[k]);
                    }
                }
            }
            g.span_start = start;
            g.span_end = end;
            w.forest = train_forest(g, cfg, mix_seed(seed, stream));
        }
        ++stream;
        s.windows.push_back(std::move(w));
    }
    return s;
}

std::optional<MatchResult> query_window(const WindowedForestSeries& series, std::size_t window, const Tracklet& probe)
{
    const auto& w = series.windows.at(window);
    if (!w.forest || probe.observations.empty()) return std::nullopt;
    const auto feats = probe.features();
    const auto ms = predict_multishot(*w.forest, feats);
    const auto& id = series.identities[static_cast<std::size_t>(ms.label)];
    MatchResult r;
    r.probe = probe.ref();
    r.matched = id.ref;
    r.posterior = ms.posterior;
    r.similarity = similarity(id.features, feats);
    r.delta_t = id.entry_time - probe.exit_time;
    r.window_center = w.center;
    r.ranking.reserve(ms.ranking.size());
    for (auto l : ms.ranking) r.ranking.push_back(series.identities[static_cast<std::size_t>(l)].ref);
    return r;
}

std::optional<MatchResult> query_series(const WindowedForestSeries& series, const Tracklet& probe, double from, double to)
{
    std::optional<MatchResult> best;
    for (std::size_t i = 0; i < series.windows.size(); ++i) {
        const auto& w = series.windows[i];
        if (!w.forest || w.start > to || w.end < from) continue;
        auto r = query_window(series, i, probe);
        if (r && (!best || r->similarity > best->similarity)) best = std::move(r);
    }
    return best;
}

}  // namespace camnet
