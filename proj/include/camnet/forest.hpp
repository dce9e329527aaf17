#pragma once

#include "camnet/core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace camnet {

struct TreeParams
{
    int max_depth = 12;
    int min_samples_split = 3;
    /// Candidate features per node; <= 0 means round(sqrt(d)).
    int features_per_node = 0;
};

/// Axis-aligned binary tree with sparse per-label leaf distributions.
class DecisionTree
{
public:
    struct Node
    {
        int feature = -1;
        double threshold = 0;
        int left = -1;
        int right = -1;
        int leaf = -1;
    };
    /// (class index, probability) pairs summing to one.
    using LeafDistribution = std::vector<std::pair<int, double>>;

    /// `xt` holds one sample per row; `y` holds class indices in [0, class_count).
    static DecisionTree train(const Eigen::MatrixXd& xt, const std::vector<int>& y, int class_count,
                              const TreeParams& params, std::uint64_t seed);

    template <class Derived>
    const LeafDistribution& leaf(const Eigen::MatrixBase<Derived>& v) const
    {
        int n = 0;
        while (nodes_[static_cast<std::size_t>(n)].leaf < 0) {
            const auto& node = nodes_[static_cast<std::size_t>(n)];
            n = v[node.feature] <= node.threshold ? node.left : node.right;
        }
        return leaves_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(n)].leaf)];
    }

    int depth() const { return depth_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<LeafDistribution>& leaves() const { return leaves_; }

private:
    std::vector<Node> nodes_;
    std::vector<LeafDistribution> leaves_;
    int depth_ = 0;
};

struct MultiShotResult
{
    Label label = 0;
    double posterior = 0;
    Eigen::VectorXd distribution;
    /// Labels ordered by decreasing posterior, ties by smaller label.
    std::vector<Label> ranking;
};

class RandomForest
{
public:
    RandomForest() = default;

    const std::vector<Label>& labels() const { return labels_; }
    const std::vector<DecisionTree>& trees() const { return trees_; }
    Eigen::Index dim() const { return dim_; }
    std::uint64_t seed() const { return seed_; }

    /// Position of `label` in labels(), or -1.
    int index_of(Label label) const;

    friend RandomForest train_forest(const Gallery& g, const PipelineConfig& cfg, std::uint64_t seed);
    friend RandomForest train_forest(const Gallery& g, int tree_count, const TreeParams& params, std::uint64_t seed);

private:
    std::vector<DecisionTree> trees_;
    std::vector<Label> labels_;
    Eigen::Index dim_ = 0;
    std::uint64_t seed_ = 0;
};

/// Bagged Gini trees over the gallery; deterministic given seed. Throws EmptyGallery.
RandomForest train_forest(const Gallery& g, const PipelineConfig& cfg, std::uint64_t seed);
RandomForest train_forest(const Gallery& g, int tree_count, const TreeParams& params, std::uint64_t seed);

/// Mean of the tree leaf distributions, indexed like f.labels().
Eigen::VectorXd predict_single(const RandomForest& f, const FeatureVector& v);

/// Mean posterior over the probe columns; argmax ties go to the smallest label.
MultiShotResult predict_multishot(const RandomForest& f, const FeatureMatrix& probe);

/// Minimum Euclidean distance over all cross pairs of columns.
template <class DA, class DB>
double min_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b)
{
    if (a.cols() == 0 || b.cols() == 0) throw Error(ErrorCode::EmptySet, "similarity of an empty set");
    if (a.rows() != b.rows()) throw Error(ErrorCode::FeatureDimMismatch, "similarity across dimensions");
    using Scalar = typename DA::Scalar;
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> na = a.colwise().squaredNorm().transpose();
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> nb = b.colwise().squaredNorm();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> d2 = (-2 * (a.transpose() * b)).eval();
    d2.colwise() += na;
    d2.rowwise() += nb;
    const Scalar coarse = d2.minCoeff();
    // The Gram route loses precision near zero; settle the minimum on exact differences.
    const Scalar slack = Scalar(1e-9) * (Scalar(1) + std::abs(coarse));
    Scalar best = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index j = 0; j < d2.cols(); ++j) {
        for (Eigen::Index i = 0; i < d2.rows(); ++i) {
            if (d2(i, j) <= coarse + slack) best = std::min(best, (a.col(i) - b.col(j)).squaredNorm());
        }
    }
    return std::sqrt(best);
}

/// exp(-min pairwise distance) between two appearance sets, in [0, 1].
template <class DA, class DB>
double similarity(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b)
{
    return std::exp(-min_distance(a, b));
}

struct MatchResult
{
    TrackRef probe;
    TrackRef matched;
    double posterior = 0;
    double similarity = 0;
    double delta_t = 0;
    double window_center = 0;
    /// Gallery tracklets by decreasing score; front() == matched.
    std::vector<TrackRef> ranking;
};

struct ForestWindow
{
    double start = 0;
    double end = 0;
    double center = 0;
    std::optional<RandomForest> forest;
};

/// One identity of the series: the key appearances of one gallery tracklet.
struct SeriesIdentity
{
    TrackRef ref;
    FeatureMatrix features;
    double entry_time = 0;
    double exit_time = 0;
};

struct WindowedForestSeries
{
    std::vector<ForestWindow> windows;
    std::vector<SeriesIdentity> identities;  // indexed by Label
    double window = 0;
    double stride = 0;
    double span_start = 0;
    double span_end = 0;

    bool empty() const;
    /// Index of the trained window whose center is nearest to t, or -1.
    int nearest_window(double t) const;
};

/// Slot start times begin at the span start and advance by stride until a slot reaches the span end.
std::vector<std::pair<double, double>> window_slots(double span_start, double span_end, double window, double stride);

/// Trains one forest per slot over the key appearances whose timestamps fall inside it.
WindowedForestSeries build_series(const std::vector<Tracklet>& gallery, double window, double stride,
                                  const PipelineConfig& cfg, std::uint64_t seed);

/// Tests one window and scores the argmax identity with `similarity`.
std::optional<MatchResult> query_window(const WindowedForestSeries& series, std::size_t window,
                                        const Tracklet& probe);

/// Best match, by similarity, over every trained window overlapping [from, to].
std::optional<MatchResult> query_series(const WindowedForestSeries& series, const Tracklet& probe, double from,
                                        double to);

}  // namespace camnet
