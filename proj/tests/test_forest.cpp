#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "camnet/forest.hpp"

#include <random>

using namespace camnet;

namespace {

Gallery make_gallery(const std::vector<FeatureVector>& cols, const std::vector<Label>& labels)
{
    Gallery g;
    g.features.resize(cols.front().size(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) g.features.col(static_cast<Eigen::Index>(i)) = cols[i];
    g.labels = labels;
    g.timestamps.assign(cols.size(), 0.0);
    return g;
}

struct Toy
{
    std::vector<FeatureVector> centers;
    std::vector<FeatureVector> train;
    std::vector<Label> labels;
};

Toy clustered(int classes, int per_class, int dim, double spread, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Toy t;
    for (int c = 0; c < classes; ++c) {
        FeatureVector m(dim);
        for (auto& x : m) x = 3 * g(rng);
        t.centers.push_back(m);
        for (int k = 0; k < per_class; ++k) {
            FeatureVector v = m;
            for (auto& x : v) x += spread * g(rng);
            t.train.push_back(v);
            t.labels.push_back(100 + c);
        }
    }
    return t;
}

Label nearest_label(const Toy& t, const FeatureVector& v)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.train.size(); ++i)
        if ((t.train[i] - v).squaredNorm() < (t.train[best] - v).squaredNorm()) best = i;
    return t.labels[best];
}

Tracklet tracklet_at(CameraId cam, PersonId id, double t0, const std::vector<FeatureVector>& feats)
{
    Tracklet t;
    t.camera_id = cam;
    t.local_person_id = id;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        Observation o;
        o.camera_id = cam;
        o.timestamp = t0 + static_cast<double>(i);
        o.feature = feats[i];
        t.observations.push_back(o);
    }
    t.entry_time = t.observations.front().timestamp;
    t.exit_time = t.observations.back().timestamp;
    return t;
}

}  // namespace

TEST_CASE("single label gallery")
{
    const auto g = make_gallery({FeatureVector::Unit(3, 0), FeatureVector::Unit(3, 1)}, {7, 7});
    const auto f = train_forest(g, PipelineConfig{}, 1);
    const auto p = predict_multishot(f, FeatureVector::Unit(3, 2));
    CHECK(p.label == 7);
    CHECK(p.posterior == doctest::Approx(1));
}

TEST_CASE("orthogonal labels agree with nearest neighbour")
{
    const FeatureVector a = FeatureVector::Unit(4, 0), b = FeatureVector::Unit(4, 1);
    const auto g = make_gallery({a, a, a, b, b, b}, {1, 1, 1, 2, 2, 2});
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto f = train_forest(g, PipelineConfig{}, seed);
        CHECK(predict_multishot(f, a).label == 1);
        CHECK(predict_multishot(f, b).label == 2);
    }
}

TEST_CASE("training is deterministic given the seed")
{
    const auto t = clustered(6, 10, 16, 0.5, 9);
    const auto g = make_gallery(t.train, t.labels);
    const auto a = train_forest(g, PipelineConfig{}, 42);
    const auto b = train_forest(g, PipelineConfig{}, 42);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (int i = 0; i < 50; ++i) {
        FeatureVector v(16);
        for (auto& x : v) x = 3 * n(rng);
        CHECK(predict_single(a, v) == predict_single(b, v));
    }
}

TEST_CASE("predict_single is the mean of tree leaves and sums to one")
{
    const auto t = clustered(5, 8, 10, 1.0, 4);
    const auto f = train_forest(make_gallery(t.train, t.labels), PipelineConfig{}, 5);
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n;
    for (int i = 0; i < 200; ++i) {
        FeatureVector v(10);
        for (auto& x : v) x = 3 * n(rng);
        const auto p = predict_single(f, v);
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(p.size());
        for (const auto& tree : f.trees())
            for (const auto& [c, w] : tree.leaf(v)) mean[c] += w;
        mean /= static_cast<double>(f.trees().size());
        CHECK((p - mean).cwiseAbs().maxCoeff() <= 1e-15);
        CHECK(std::abs(p.sum() - 1) <= 1e-9);
    }
}

TEST_CASE("separable three class toy set matches 1-NN")
{
    const auto t = clustered(3, 20, 8, 0.3, 12);
    const auto f = train_forest(make_gallery(t.train, t.labels), PipelineConfig{}, 13);
    std::mt19937_64 rng(14);
    std::normal_distribution<double> n;
    int agree = 0, total = 0;
    for (std::size_t c = 0; c < t.centers.size(); ++c) {
        for (int k = 0; k < 30; ++k) {
            FeatureVector v = t.centers[c];
            for (auto& x : v) x += 0.3 * n(rng);
            agree += predict_multishot(f, v).label == nearest_label(t, v);
            ++total;
        }
    }
    CHECK(agree >= 0.9 * total);
}

TEST_CASE("multi-shot averaging")
{
    const auto t = clustered(4, 10, 12, 1.5, 21);
    const auto f = train_forest(make_gallery(t.train, t.labels), PipelineConfig{}, 22);

    SUBCASE("one appearance reduces to predict_single")
    {
        const auto ms = predict_multishot(f, t.train[3]);
        CHECK(ms.distribution == predict_single(f, t.train[3]));
    }
    SUBCASE("thirty appearances average their single predictions")
    {
        std::mt19937_64 rng(23);
        std::normal_distribution<double> n;
        FeatureMatrix probe(12, 30);
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
        for (Eigen::Index k = 0; k < 30; ++k) {
            for (Eigen::Index r = 0; r < 12; ++r) probe(r, k) = 3 * n(rng);
            mean += predict_single(f, probe.col(k));
        }
        mean /= 30.0;
        const auto ms = predict_multishot(f, probe);
        CHECK((ms.distribution - mean).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(ms.posterior == ms.distribution.maxCoeff());
    }
    SUBCASE("empty probe")
    {
        CHECK_THROWS_AS(predict_multishot(f, FeatureMatrix(12, 0)), Error);
    }
    SUBCASE("dimension mismatch")
    {
        CHECK_THROWS_AS(predict_single(f, FeatureVector::Ones(5)), Error);
    }
}

TEST_CASE("multi-shot ties go to the smallest label")
{
    // Too few samples to split: every column reaches the same 0.5/0.5 leaf.
    const auto g = make_gallery({FeatureVector::Unit(2, 0), FeatureVector::Unit(2, 1)}, {4, 9});
    TreeParams p;
    p.features_per_node = 2;
    const auto f = train_forest(g, 1, p, 3);
    FeatureMatrix probe(2, 2);
    probe.col(0) = FeatureVector::Unit(2, 1);
    probe.col(1) = FeatureVector::Unit(2, 0);
    const auto ms = predict_multishot(f, probe);
    CHECK(ms.distribution[0] == doctest::Approx(0.5));
    CHECK(ms.label == 4);
    CHECK(ms.ranking == std::vector<Label>{4, 9});
}

TEST_CASE("a planted gallery vector is returned with at least one tree vote")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto t = clustered(8, 6, 10, 0.5, seed);
        const auto f = train_forest(make_gallery(t.train, t.labels), PipelineConfig{}, seed);
        for (std::size_t i = 0; i < t.train.size(); ++i) {
            const auto ms = predict_multishot(f, t.train[i]);
            CHECK(ms.label == t.labels[i]);
            CHECK(ms.posterior >= 1.0 / static_cast<double>(f.trees().size()));
        }
    }
}

TEST_CASE("similarity")
{
    FeatureMatrix a(3, 2), b(3, 2);
    a << 1, 0, 0, 1, 0, 0;
    b << 0, 1, 0, 0, 1, 0;
    CHECK(similarity(a, b) == doctest::Approx(1));

    // two unit vectors 0.357 apart
    const double angle = 2 * std::asin(0.357 / 2);
    FeatureMatrix u(2, 1), v(2, 1);
    u << 1, 0;
    v << std::cos(angle), std::sin(angle);
    CHECK(similarity(u, v) == doctest::Approx(std::exp(-0.357)).epsilon(1e-12));
    CHECK(similarity(u, v) == doctest::Approx(0.6999).epsilon(1e-4));

    CHECK_THROWS_AS(similarity(FeatureMatrix(3, 0), b), Error);
}

TEST_CASE("similarity is symmetric and grows with the sets")
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 50; ++trial) {
        FeatureMatrix a(6, 4), b(6, 5);
        for (auto& x : a.reshaped()) x = n(rng);
        for (auto& x : b.reshaped()) x = n(rng);
        CHECK(similarity(a, b) == similarity(b, a));
        FeatureMatrix bigger(6, 6);
        bigger.leftCols(5) = b;
        for (auto& x : bigger.col(5)) x = n(rng);
        CHECK(similarity(a, bigger) >= similarity(a, b));

        double brute = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < a.cols(); ++i)
            for (Eigen::Index j = 0; j < b.cols(); ++j) brute = std::min(brute, (a.col(i) - b.col(j)).norm());
        CHECK(min_distance(a, b) == doctest::Approx(brute).epsilon(1e-12));
    }
}

TEST_CASE("window slots")
{
    const auto s = window_slots(0, 100, 60, 30);
    REQUIRE(s.size() == 3);
    CHECK(s[0].first + 30 == 30);
    CHECK(s[1].first + 30 == 60);
    CHECK(s[2].first + 30 == 90);
    CHECK(window_slots(0, 100, 200, 50).size() == 1);
    CHECK_THROWS_AS(window_slots(0, 100, 60, 60), Error);
}

TEST_CASE("build_series places appearances by timestamp")
{
    std::vector<Tracklet> gallery;
    gallery.push_back(tracklet_at(1, 0, 0, {FeatureVector::Unit(3, 0)}));
    gallery.push_back(tracklet_at(1, 1, 10, {FeatureVector::Unit(3, 1)}));
    gallery.push_back(tracklet_at(1, 2, 100, {FeatureVector::Unit(3, 2)}));
    const auto s = build_series(gallery, 60, 30, PipelineConfig{}, 1);
    REQUIRE(s.windows.size() == 3);
    CHECK(s.windows[0].center == 30);
    CHECK(s.windows[2].center == 90);
    const auto count = [&](std::size_t w, Label l) {
        const auto& f = s.windows[w].forest;
        return f && f->index_of(l) >= 0;
    };
    CHECK(count(0, 1));
    CHECK_FALSE(count(1, 1));
    CHECK_FALSE(count(2, 1));
    CHECK(count(2, 2));
    CHECK(s.nearest_window(95) == 2);

    const auto whole = build_series(gallery, 500, 100, PipelineConfig{}, 1);
    REQUIRE(whole.windows.size() == 1);
    CHECK(whole.windows[0].forest->labels().size() == 3);
}

TEST_CASE("query_series picks the most similar window")
{
    // Identity 0 sits in the early windows only; identity 1 (the probe's twin) in the late ones.
    const FeatureVector a = FeatureVector::Unit(4, 0);
    FeatureVector near = FeatureVector::Unit(4, 1);
    FeatureVector twin = near;
    twin[2] = 0.01;
    std::vector<Tracklet> gallery{tracklet_at(1, 0, 0, {a, a, a}), tracklet_at(1, 1, 200, {near, near})};
    const auto s = build_series(gallery, 60, 30, PipelineConfig{}, 1);
    const auto probe = tracklet_at(2, 5, 150, {twin});

    const auto early = query_series(s, probe, 0, 20);
    REQUIRE(early);
    CHECK(early->matched == TrackRef{1, 0});

    const auto all = query_series(s, probe, 0, 300);
    REQUIRE(all);
    CHECK(all->matched == TrackRef{1, 1});
    CHECK(all->similarity == doctest::Approx(std::exp(-0.01)));
    CHECK(all->delta_t == doctest::Approx(200 - 150));

    CHECK_FALSE(query_series(s, probe, 1000, 2000));
}

TEST_CASE("planted identity in three windows returns similarity one")
{
    const FeatureVector x = FeatureVector::Unit(5, 3);
    std::vector<Tracklet> gallery{tracklet_at(1, 0, 0, {FeatureVector::Unit(5, 0)}),
                                  tracklet_at(1, 1, 50, {x, x, x, x, x, x, x, x, x, x, x, x, x, x, x, x, x, x, x, x}),
                                  tracklet_at(1, 2, 120, {FeatureVector::Unit(5, 1)})};
    const auto s = build_series(gallery, 40, 10, PipelineConfig{}, 2);
    int holding = 0;
    for (const auto& w : s.windows) holding += w.forest && w.forest->index_of(1) >= 0;
    CHECK(holding >= 3);
    const auto probe = tracklet_at(2, 9, 20, {x});
    const auto r = query_series(s, probe, 0, 200);
    REQUIRE(r);
    CHECK(r->similarity == 1.0);
    CHECK(r->matched == TrackRef{1, 1});
    CHECK(r->delta_t == 50 - 20);
}
