#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "camnet/io.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>

using namespace camnet;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::EmptySet;
}

ZoneTopology two_camera_topology()
{
    ZoneTopology t;
    Eigen::Matrix2d cov;
    cov << 400, 30, 30, 900;
    t.zones[0] = {{0, 0, {100, 540}, cov, ZoneKind::entry, 12}, {0, 1, {1800, 540}, cov, ZoneKind::exit, 9}};
    t.zones[1] = {{1, 0, {960, 50}, cov * 2, ZoneKind::entry, 7}, {1, 1, {960, 1000}, cov, ZoneKind::exit, 3}};
    LinkState s;
    s.distribution = make_distribution(1.0, 20, 40);
    for (double dt : {25.5, 27.0, 27.2, 31.9, 33.3}) add_sample(s.distribution, dt);
    s.distribution.model = GaussianModel{28.1, 3.2, 0.17};
    s.distribution.confidence = 0.61;
    s.window = 41.25;
    s.lower = 12.5;
    s.upper = 53.75;
    s.iteration = 3;
    s.converged = true;
    t.add_link({0, 1}, {1, 0}, s, true);
    LinkState empty;
    empty.distribution = make_distribution(1.0, -5, 5);
    t.add_link({1, 1}, {0, 0}, empty, false);
    return t;
}

}  // namespace

TEST_CASE("config INI round trip")
{
    PipelineConfig c;
    c.theta_sim = 0.65;
    c.tree_count = 7;
    c.one_to_one = true;
    c.seed = 18446744073709551615ull;
    c.window_stride_fraction = 0.1;
    const auto text = config_to_ini(c);
    CHECK(text.find("[paper_defaults]") != std::string::npos);
    CHECK(text.find("[pipeline]") != std::string::npos);
    const auto back = config_from_ini(text);
    CHECK(config_to_ini(back) == text);
    CHECK(back.theta_sim == 0.65);
    CHECK(back.seed == c.seed);
    CHECK(back.one_to_one);
}

TEST_CASE("config INI overlays only the keys present")
{
    PipelineConfig base;
    base.tree_count = 12;
    const auto c = config_from_ini("# comment\n[paper_defaults]\ntheta_conf = 0.5 ; trailing\n\n", base);
    CHECK(c.theta_conf == 0.5);
    CHECK(c.tree_count == 12);
    CHECK(c.theta_sim == 0.7);
    CHECK(config_from_ini("seed = 9").seed == 9);
}

TEST_CASE("config INI errors")
{
    CHECK(code_of([] { config_from_ini("no_such_key = 1"); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { config_from_ini("[pipeline]\ntheta_sim = 0.5"); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { config_from_ini("tree_count = ten"); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { config_from_ini("theta_sim = 1.5"); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { config_from_ini("one_to_one = maybe"); }) == ErrorCode::InvalidConfig);
    try {
        config_from_ini("[pipeline]\n\njust words\n");
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK(code_of([] { config_from_ini("[pipeline\n"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { read_config("/nonexistent/camnet.ini"); }) == ErrorCode::UnreadableFile);
}

TEST_CASE("distribution JSON round trip")
{
    auto d = make_distribution(0.5, -3, 4);
    for (double dt : {-2.2, 0.1, 0.3, 3.9, 7.7}) add_sample(d, dt);
    d.model = GaussianModel{0.9, 2.1, 0.3};
    d.confidence = 0.42;
    const auto back = distribution_from_json(distribution_to_json(d));
    CHECK(back.bins == d.bins);
    CHECK(back.lo == d.lo);
    CHECK(back.bin_width == d.bin_width);
    CHECK(back.sample_count == 5);
    CHECK(back.model == d.model);
    CHECK(back.confidence == d.confidence);

    const auto bare = distribution_from_json(distribution_to_json(make_distribution(1, 0, 3)));
    CHECK_FALSE(bare.model.has_value());
    CHECK(bare.empty());
    CHECK(code_of([] { distribution_from_json("[1,2"); }) == ErrorCode::ParseError);
}

TEST_CASE("topology JSON round trip")
{
    const auto t = two_camera_topology();
    CameraTopology cams;
    cams.vertices = {0, 1};
    cams.edges[{0, 1}] = t.links()[0].state.distribution;
    cams.valid.insert({0, 1});

    const auto text = topology_to_json(t, &cams);
    CameraTopology cams_back;
    const auto back = topology_from_json(text, &cams_back);
    CHECK(topology_to_json(back, &cams_back) == text);
    REQUIRE(back.links().size() == 2);
    const auto& l = back.links()[0];
    CHECK(l.valid);
    CHECK(l.exit == ZoneKey{0, 1});
    CHECK(l.entry == ZoneKey{1, 0});
    CHECK(l.state.window == 41.25);
    CHECK(l.state.lower == 12.5);
    CHECK(l.state.upper == 53.75);
    CHECK(l.state.converged);
    CHECK(l.state.distribution.bins == t.links()[0].state.distribution.bins);
    CHECK(l.state.distribution.model == t.links()[0].state.distribution.model);
    CHECK_FALSE(back.links()[1].valid);
    CHECK(back.valid_count() == 1);
    CHECK(back.zone({1, 0})->covariance == t.zone({1, 0})->covariance);
    CHECK(back.zone({0, 1})->member_count == 9);
    CHECK(back.zone({0, 1})->kind == ZoneKind::exit);
    CHECK(cams_back.is_valid(1, 0));
    CHECK(cams_back.vertices == cams.vertices);

    const auto file = fs::temp_directory_path() / "camnet_test_io_topology.json";
    write_topology(t, file);
    CHECK(topology_to_json(read_topology(file)) == topology_to_json(t));
    CHECK_FALSE(fs::exists(fs::path(file.string() + ".tmp")));
}

TEST_CASE("match log round trip")
{
    Correspondence a;
    a.exit = {0, 17};
    a.entry = {2, 5};
    a.exit_zone = ZoneKey{0, 3};
    a.entry_zone = ZoneKey{2, 1};
    a.exit_time = 100.25;
    a.entry_time = 131.5;
    a.delta_t = 31.25;
    a.similarity = 0.8125;
    a.posterior = 0.7;
    a.probe = a.entry;
    a.ranking = {{0, 17}, {0, 4}, {0, 9}};
    Correspondence b;
    b.exit = {1, 2};
    b.entry = {3, 8};
    b.path = "exhaustive";
    b.refit = true;
    b.similarity = 0.1 + 0.2;

    const auto back = match_log_from_csv(match_log_to_csv({a, b}));
    REQUIRE(back.size() == 2);
    CHECK(back[0].exit == a.exit);
    CHECK(back[0].exit_zone == a.exit_zone);
    CHECK(back[0].entry_zone == a.entry_zone);
    CHECK(back[0].delta_t == a.delta_t);
    CHECK(back[0].ranking == a.ranking);
    CHECK(back[0].probe == a.probe);
    CHECK_FALSE(back[1].exit_zone.has_value());
    CHECK(back[1].path == "exhaustive");
    CHECK(back[1].refit);
    CHECK(back[1].similarity == b.similarity);
    CHECK(back[1].ranking.empty());
    CHECK(match_log_to_csv(back) == match_log_to_csv({a, b}));

    CHECK(match_log_from_csv(match_log_to_csv({})).empty());
    CHECK(code_of([] { match_log_from_csv("wrong,header\n"); }) == ErrorCode::ParseError);
    auto broken = match_log_to_csv({a});
    broken.replace(broken.find("100.25"), 6, "abc");
    CHECK(code_of([&] { match_log_from_csv(broken); }) == ErrorCode::ParseError);
}

TEST_CASE("report JSON carries non-finite values as null")
{
    EvalReport r;
    r.rank1 = std::nan("");
    r.cmc = {0.5, 0.75, 1.0};
    r.transition_time_error = 0.3;
    r.topology_distance = std::numeric_limits<double>::infinity();
    r.true_links = 8;
    r.recovered = 7;
    r.missing = 1;
    LinkComparison l;
    l.exit = {0, 3};
    l.entry = {1, 0};
    l.mu = 34.4;
    l.mu_gt = 34.7;
    l.bhattacharyya = std::numeric_limits<double>::infinity();
    r.links.push_back(l);
    const auto j = nlohmann::json::parse(report_to_json(r));
    CHECK(j["rank1"].is_null());
    CHECK(j["topology_distance"].is_null());
    CHECK(j["transition_time_error"] == 0.3);
    CHECK(j["cmc"].size() == 3);
    CHECK(j["recovered"] == 7);
    CHECK(j["links"][0]["bhattacharyya"].is_null());
    CHECK(j["links"][0]["mu_gt"] == 34.7);

    const auto csv = report_links_csv(r);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(csv.find("34.4,34.7") != std::string::npos);
}
