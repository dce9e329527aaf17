#include "camnet/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <variant>

namespace camnet {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_text(const fs::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::UnreadableFile, file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& file, const std::string& text)
{
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + tmp.string());
        out << text;
        if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + tmp.string());
    }
    fs::rename(tmp, file);
}

namespace {

std::string format_double(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

using FieldRef = std::variant<double*, int*, bool*, std::uint64_t*>;

struct Field
{
    const char* section;
    const char* key;
    FieldRef ref;
};

std::vector<Field> fields(PipelineConfig& c)
{
    return {
        {"paper_defaults", "theta_sim", &c.theta_sim},
        {"paper_defaults", "theta_conf", &c.theta_conf},
        {"paper_defaults", "initial_window", &c.initial_window},
        {"paper_defaults", "coverage_percent", &c.coverage_percent},
        {"paper_defaults", "tree_count", &c.tree_count},
        {"paper_defaults", "max_key_appearances", &c.max_key_appearances},
        {"paper_defaults", "online_refit_threshold", &c.online_refit_threshold},
        {"pipeline", "bin_width", &c.bin_width},
        {"pipeline", "window_stride_fraction", &c.window_stride_fraction},
        {"pipeline", "convergence_epsilon", &c.convergence_epsilon},
        {"pipeline", "max_iterations", &c.max_iterations},
        {"pipeline", "candidate_rf_threshold", &c.candidate_rf_threshold},
        {"pipeline", "min_link_samples", &c.min_link_samples},
        {"pipeline", "max_tree_depth", &c.max_tree_depth},
        {"pipeline", "min_samples_split", &c.min_samples_split},
        {"pipeline", "max_zones", &c.max_zones},
        {"pipeline", "zone_em_iterations", &c.zone_em_iterations},
        {"pipeline", "normalize_features", &c.normalize_features},
        {"pipeline", "max_window_error", &c.max_window_error},
        {"pipeline", "confidence_time_scale", &c.confidence_time_scale},
        {"pipeline", "one_to_one", &c.one_to_one},
        {"pipeline", "online_refit", &c.online_refit},
        {"pipeline", "threads", &c.threads},
        {"pipeline", "seed", &c.seed},
    };
}

std::string field_value(const FieldRef& ref)
{
    return std::visit(
        [](auto* p) -> std::string {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, double>) return format_double(*p);
            else if constexpr (std::is_same_v<T, bool>) return *p ? "true" : "false";
            else return std::to_string(*p);
        },
        ref);
}

template <class T>
bool parse_number(const std::string& s, T& out)
{
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, out);
    return r.ec == std::errc() && r.ptr == end;
}

void set_field(const Field& f, const std::string& value)
{
    const bool ok = std::visit(
        [&](auto* p) {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, bool>) {
                if (value == "true" || value == "1") return *p = true, true;
                if (value == "false" || value == "0") return *p = false, true;
                return false;
            } else {
                return parse_number(value, *p);
            }
        },
        f.ref);
    if (!ok) throw Error(ErrorCode::InvalidConfig, std::string(f.key) + " has an unreadable value '" + value + "'");
}

}  // namespace

std::string config_to_ini(const PipelineConfig& cfg)
{
    auto copy = cfg;
    std::ostringstream out;
    std::string section;
    for (const auto& f : fields(copy)) {
        if (section != f.section) {
            if (!section.empty()) out << '\n';
            section = f.section;
            out << '[' << section << "]\n";
        }
        out << f.key << " = " << field_value(f.ref) << '\n';
    }
    return out.str();
}

PipelineConfig config_from_ini(const std::string& text, PipelineConfig base)
{
    auto table = fields(base);
    std::istringstream in(text);
    std::string line, section;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find_first_of("#;");
        auto s = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw Error(ErrorCode::ParseError, "line " + std::to_string(number) + ": bad section");
            section = trim(s.substr(1, s.size() - 2));
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(number) + ": expected key = value");
        }
        const auto key = trim(s.substr(0, eq));
        const auto value = trim(s.substr(eq + 1));
        auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
        if (it == table.end()) throw Error(ErrorCode::InvalidConfig, key + " is not a known setting");
        if (!section.empty() && section != it->section) {
            throw Error(ErrorCode::InvalidConfig, key + " belongs in [" + it->section + "], not [" + section + "]");
        }
        set_field(*it, value);
    }
    base.validate();
    return base;
}

PipelineConfig read_config(const fs::path& file, PipelineConfig base)
{
    return config_from_ini(read_text(file), std::move(base));
}

void write_config(const PipelineConfig& cfg, const fs::path& file)
{
    write_text(file, config_to_ini(cfg));
}

namespace {

json zone_key_json(ZoneKey k) { return {{"camera", k.camera}, {"zone", k.zone}}; }

ZoneKey zone_key_from(const json& j) { return {j.at("camera").get<CameraId>(), j.at("zone").get<ZoneId>()}; }

json dist_json(const TransitionDistribution& d)
{
    json j{{"bin_width", d.bin_width},
           {"lo", d.lo},
           {"sample_count", d.sample_count},
           {"confidence", d.confidence},
           {"bins", std::vector<double>(d.bins.data(), d.bins.data() + d.bins.size())}};
    if (d.model) j["model"] = {{"mu", d.model->mu}, {"sigma", d.model->sigma}, {"fit_error", d.model->fit_error}};
    return j;
}

TransitionDistribution dist_from(const json& j)
{
    TransitionDistribution d;
    d.bin_width = j.at("bin_width").get<double>();
    d.lo = j.at("lo").get<double>();
    d.sample_count = j.at("sample_count").get<std::int64_t>();
    d.confidence = j.value("confidence", 0.0);
    const auto bins = j.at("bins").get<std::vector<double>>();
    d.bins = Eigen::Map<const Eigen::VectorXd>(bins.data(), static_cast<Eigen::Index>(bins.size()));
    if (j.contains("model")) {
        const auto& m = j["model"];
        d.model = GaussianModel{m.at("mu").get<double>(), m.at("sigma").get<double>(), m.at("fit_error").get<double>()};
    }
    return d;
}

template <class F>
auto parse_json(const std::string& text, F&& f)
{
    try {
        return f(json::parse(text));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
}

}  // namespace

std::string distribution_to_json(const TransitionDistribution& d)
{
    return dist_json(d).dump(2);
}

TransitionDistribution distribution_from_json(const std::string& text)
{
    return parse_json(text, [](const json& j) { return dist_from(j); });
}

std::string topology_to_json(const ZoneTopology& topo, const CameraTopology* cams)
{
    json zones = json::array();
    for (const auto& [cam, list] : topo.zones) {
        for (const auto& z : list) {
            zones.push_back({{"camera", z.camera_id},
                             {"zone", z.zone_id},
                             {"kind", to_string(z.kind)},
                             {"center", {z.center.x(), z.center.y()}},
                             {"covariance", {z.covariance(0, 0), z.covariance(0, 1), z.covariance(1, 1)}},
                             {"members", z.member_count}});
        }
    }
    json links = json::array();
    for (const auto& l : topo.links()) {
        json j{{"exit", zone_key_json(l.exit)},
               {"entry", zone_key_json(l.entry)},
               {"valid", l.valid},
               {"T", l.state.window},
               {"T_L", l.state.lower},
               {"T_U", l.state.upper},
               {"iteration", l.state.iteration},
               {"converged", l.state.converged},
               {"stagnant", l.state.stagnant},
               {"distribution", dist_json(l.state.distribution)}};
        if (const auto& m = l.state.distribution.model) {
            j["mu"] = m->mu;
            j["sigma"] = m->sigma;
            j["E"] = m->fit_error;
        }
        j["conf"] = l.state.distribution.confidence;
        j["sample_count"] = l.state.distribution.sample_count;
        links.push_back(std::move(j));
    }
    json doc{{"zones", zones}, {"links", links}};
    if (cams) {
        json edges = json::array();
        for (const auto& [pair, d] : cams->edges) {
            edges.push_back({{"from", pair.first},
                             {"to", pair.second},
                             {"valid", cams->valid.count(pair) > 0},
                             {"distribution", dist_json(d)}});
        }
        doc["cameras"] = {{"vertices", cams->vertices}, {"edges", edges}};
    }
    return doc.dump(2);
}

ZoneTopology topology_from_json(const std::string& text, CameraTopology* cams)
{
    return parse_json(text, [&](const json& doc) {
        ZoneTopology topo;
        for (const auto& z : doc.at("zones")) {
            Zone zone;
            zone.camera_id = z.at("camera").get<CameraId>();
            zone.zone_id = z.at("zone").get<ZoneId>();
            zone.kind = zone_kind_from_string(z.at("kind").get<std::string>());
            const auto c = z.at("center").get<std::vector<double>>();
            const auto v = z.at("covariance").get<std::vector<double>>();
            if (c.size() != 2 || v.size() != 3) throw Error(ErrorCode::ParseError, "zone center or covariance");
            zone.center = {c[0], c[1]};
            zone.covariance << v[0], v[1], v[1], v[2];
            zone.member_count = z.value("members", std::int64_t{0});
            topo.zones[zone.camera_id].push_back(zone);
        }
        for (const auto& l : doc.at("links")) {
            LinkState s;
            s.distribution = dist_from(l.at("distribution"));
            s.window = l.at("T").get<double>();
            s.lower = l.at("T_L").get<double>();
            s.upper = l.at("T_U").get<double>();
            s.iteration = l.value("iteration", 0);
            s.converged = l.value("converged", false);
            s.stagnant = l.value("stagnant", 0);
            topo.add_link(zone_key_from(l.at("exit")), zone_key_from(l.at("entry")), std::move(s),
                          l.at("valid").get<bool>());
        }
        if (cams && doc.contains("cameras")) {
            const auto& c = doc["cameras"];
            *cams = CameraTopology{};
            cams->vertices = c.at("vertices").get<std::vector<CameraId>>();
            for (const auto& e : c.at("edges")) {
                const std::pair<CameraId, CameraId> key{e.at("from").get<CameraId>(), e.at("to").get<CameraId>()};
                cams->edges[key] = dist_from(e.at("distribution"));
                if (e.at("valid").get<bool>()) cams->valid.insert(key);
            }
        }
        return topo;
    });
}

void write_topology(const ZoneTopology& topo, const fs::path& file, const CameraTopology* cams)
{
    write_text(file, topology_to_json(topo, cams));
}

ZoneTopology read_topology(const fs::path& file, CameraTopology* cams)
{
    return topology_from_json(read_text(file), cams);
}

namespace {

constexpr const char* match_header =
    "exit_camera,exit_zone,exit_person,exit_time,entry_camera,entry_zone,entry_person,entry_time,delta_t,"
    "similarity,posterior,path,refit,probe_camera,probe_person,ranking";

std::string ref_token(TrackRef r) { return std::to_string(r.camera) + ":" + std::to_string(r.person); }

TrackRef ref_from_token(const std::string& s)
{
    const auto colon = s.find(':');
    TrackRef r;
    if (colon == std::string::npos || !parse_number(s.substr(0, colon), r.camera) ||
        !parse_number(s.substr(colon + 1), r.person)) {
        throw Error(ErrorCode::ParseError, "bad track reference '" + s + "'");
    }
    return r;
}

std::vector<std::string> split(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

}  // namespace

std::string match_log_to_csv(const std::vector<Correspondence>& log)
{
    std::ostringstream out;
    out << match_header << '\n';
    for (const auto& c : log) {
        out << c.exit.camera << ',' << (c.exit_zone ? std::to_string(c.exit_zone->zone) : "") << ',' << c.exit.person
            << ',' << format_double(c.exit_time) << ',' << c.entry.camera << ','
            << (c.entry_zone ? std::to_string(c.entry_zone->zone) : "") << ',' << c.entry.person << ','
            << format_double(c.entry_time) << ',' << format_double(c.delta_t) << ',' << format_double(c.similarity)
            << ',' << format_double(c.posterior) << ',' << c.path << ',' << (c.refit ? 1 : 0) << ','
            << c.probe.camera << ',' << c.probe.person << ',';
        for (std::size_t i = 0; i < c.ranking.size(); ++i) out << (i ? " " : "") << ref_token(c.ranking[i]);
        out << '\n';
    }
    return out.str();
}

std::vector<Correspondence> match_log_from_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != match_header) throw Error(ErrorCode::ParseError, "match log header");
    std::vector<Correspondence> out;
    int number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (trim(line).empty()) continue;
        const auto f = split(trim(line), ',');
        auto bad = [&] { return Error(ErrorCode::ParseError, "match log line " + std::to_string(number)); };
        if (f.size() != 16) throw bad();
        Correspondence c;
        bool ok = parse_number(f[0], c.exit.camera) && parse_number(f[2], c.exit.person) &&
                  parse_number(f[3], c.exit_time) && parse_number(f[4], c.entry.camera) &&
                  parse_number(f[6], c.entry.person) && parse_number(f[7], c.entry_time) &&
                  parse_number(f[8], c.delta_t) && parse_number(f[9], c.similarity) &&
                  parse_number(f[10], c.posterior) && parse_number(f[13], c.probe.camera) &&
                  parse_number(f[14], c.probe.person);
        if (!ok) throw bad();
        ZoneId z = 0;
        if (!f[1].empty()) {
            if (!parse_number(f[1], z)) throw bad();
            c.exit_zone = ZoneKey{c.exit.camera, z};
        }
        if (!f[5].empty()) {
            if (!parse_number(f[5], z)) throw bad();
            c.entry_zone = ZoneKey{c.entry.camera, z};
        }
        c.path = f[11];
        c.refit = f[12] == "1";
        std::istringstream rank(f[15]);
        std::string tok;
        while (rank >> tok) c.ranking.push_back(ref_from_token(tok));
        out.push_back(std::move(c));
    }
    return out;
}

void write_match_log(const std::vector<Correspondence>& log, const fs::path& file)
{
    write_text(file, match_log_to_csv(log));
}

std::vector<Correspondence> read_match_log(const fs::path& file)
{
    return match_log_from_csv(read_text(file));
}

namespace {

json finite_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

}  // namespace

std::string report_to_json(const EvalReport& r)
{
    json links = json::array();
    for (const auto& l : r.links) {
        links.push_back({{"exit", zone_key_json(l.exit)},
                         {"entry", zone_key_json(l.entry)},
                         {"true_link", l.true_link},
                         {"mu", l.mu},
                         {"mu_gt", l.mu_gt},
                         {"sigma", l.sigma},
                         {"sigma_gt", l.sigma_gt},
                         {"bhattacharyya", finite_or_null(l.bhattacharyya)},
                         {"sample_count", l.sample_count}});
    }
    json timing = json::array();
    for (const auto& t : r.timing) timing.push_back({{"n", t.n}, {"path", t.path}, {"median_seconds", t.median_seconds}});
    json j{{"rank1", finite_or_null(r.rank1)},
           {"cmc", r.cmc},
           {"transition_time_error", finite_or_null(r.transition_time_error)},
           {"topology_distance", finite_or_null(r.topology_distance)},
           {"true_links", r.true_links},
           {"recovered", r.recovered},
           {"missing", r.missing},
           {"spurious", r.spurious},
           {"links", links},
           {"timing", timing}};
    return j.dump(2);
}

std::string report_links_csv(const EvalReport& r)
{
    std::ostringstream out;
    out << "exit_camera,exit_zone,entry_camera,entry_zone,true_link,mu,mu_gt,sigma,sigma_gt,bhattacharyya,sample_count\n";
    for (const auto& l : r.links) {
        out << l.exit.camera << ',' << l.exit.zone << ',' << l.entry.camera << ',' << l.entry.zone << ',' << l.true_link
            << ',' << format_double(l.mu) << ',' << format_double(l.mu_gt) << ',' << format_double(l.sigma) << ','
            << format_double(l.sigma_gt) << ',' << format_double(l.bhattacharyya) << ',' << l.sample_count << '\n';
    }
    return out.str();
}

std::string benchmark_to_csv(const BenchmarkTable& t)
{
    std::ostringstream out;
    out << "n,path,median_seconds\n";
    for (const auto& r : t.rows) out << r.n << ',' << r.path << ',' << format_double(r.median_seconds) << '\n';
    return out.str();
}

std::string refits_to_csv(const std::vector<ModelSnapshot>& refits)
{
    std::ostringstream out;
    out << "time,link,mu,sigma,fit_error\n";
    for (const auto& s : refits) {
        out << format_double(s.time) << ',' << s.link << ',' << format_double(s.model.mu) << ','
            << format_double(s.model.sigma) << ',' << format_double(s.model.fit_error) << '\n';
    }
    return out.str();
}

}  // namespace camnet
