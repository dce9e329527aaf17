#include "camnet/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

namespace camnet {
namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <class T>
T parse_number(std::string_view s, const std::string& where)
{
    T v{};
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw Error(ErrorCode::ParseError, where + ": cannot parse '" + std::string(s) + "'");
    }
    return v;
}

void append_double(std::string& out, double v)
{
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

std::ifstream open_in(const fs::path& p)
{
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::UnreadableFile, p.string());
    return in;
}

FeatureMatrix read_features(const fs::path& p, int expected_dim)
{
    auto in = open_in(p);
    std::string line;
    long d = -1, n = -1;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        std::istringstream hs{std::string(t)};
        hs >> d >> n;
        break;
    }
    if (d < 0 || n < 0) throw Error(ErrorCode::ParseError, p.string() + ": missing 'd n' header");
    if (expected_dim > 0 && d != expected_dim) {
        throw Error(ErrorCode::FeatureDimMismatch,
                    p.string() + ": dimension " + std::to_string(d) + " != manifest " + std::to_string(expected_dim));
    }
    FeatureMatrix m(d, n);
    long row = 0;
    while (row < n && std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        long col = 0;
        std::size_t pos = 0;
        while (pos < t.size()) {
            const auto next = t.find_first_of(" \t,", pos);
            const auto tok = t.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
            if (!tok.empty()) {
                if (col >= d) {
                    throw Error(ErrorCode::FeatureDimMismatch, p.string() + ": row " + std::to_string(row) + " too long");
                }
                m(col++, row) = parse_number<double>(tok, p.string());
            }
            if (next == std::string_view::npos) break;
            pos = next + 1;
        }
        if (col != d) {
            throw Error(ErrorCode::FeatureDimMismatch, p.string() + ": row " + std::to_string(row) + " has " +
                                                           std::to_string(col) + " values, expected " + std::to_string(d));
        }
        ++row;
    }
    if (row != n) throw Error(ErrorCode::ParseError, p.string() + ": expected " + std::to_string(n) + " rows");
    return m;
}

}  // namespace

std::size_t Dataset::tracklet_count() const
{
    std::size_t n = 0;
    for (const auto& [cam, ts] : cameras) n += ts.size();
    return n;
}

const Tracklet* Dataset::find(TrackRef ref) const
{
    auto it = cameras.find(ref.camera);
    if (it == cameras.end()) return nullptr;
    for (const auto& t : it->second) {
        if (t.local_person_id == ref.person) return &t;
    }
    return nullptr;
}

DatasetManifest read_manifest(const fs::path& file)
{
    auto in = open_in(file);
    DatasetManifest m;
    m.base_dir = file.parent_path();
    std::string line;
    bool in_cameras = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const std::string where = file.string() + ":" + std::to_string(lineno);
        if (t == "[cameras]") {
            in_cameras = true;
            continue;
        }
        if (in_cameras) {
            const auto f = split(t, ',');
            if (f.size() != 3) throw Error(ErrorCode::ParseError, where + ": expected 'camera_id, tracklets, features'");
            m.cameras.push_back({parse_number<CameraId>(f[0], where), std::string(f[1]), std::string(f[2])});
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) throw Error(ErrorCode::ParseError, where + ": expected key = value");
        const auto key = trim(t.substr(0, eq));
        const auto val = trim(t.substr(eq + 1));
        if (key == "epoch") m.epoch = parse_number<double>(val, where);
        else if (key == "feature_dim") m.feature_dim = parse_number<int>(val, where);
        else throw Error(ErrorCode::ParseError, where + ": unknown key '" + std::string(key) + "'");
    }
    std::vector<CameraId> ids;
    for (const auto& c : m.cameras) ids.push_back(c.camera_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw Error(ErrorCode::ParseError, file.string() + ": duplicate camera id");
    }
    return m;
}

void write_manifest(const DatasetManifest& m, const fs::path& file)
{
    std::ofstream out(file);
    if (!out) throw Error(ErrorCode::UnreadableFile, file.string());
    out.precision(17);
    out << "# camnet dataset manifest\n";
    out << "epoch = " << m.epoch << "\n";
    out << "feature_dim = " << m.feature_dim << "\n";
    out << "[cameras]\n# camera_id, tracklet_file, feature_file\n";
    for (const auto& c : m.cameras) out << c.camera_id << ", " << c.tracklet_file << ", " << c.feature_file << "\n";
}

Dataset load_dataset(const DatasetManifest& manifest, bool normalize)
{
    Dataset ds;
    ds.epoch = manifest.epoch;
    ds.feature_dim = manifest.feature_dim;
    for (const auto& cam : manifest.cameras) {
        const auto feats = read_features(manifest.base_dir / cam.feature_file, manifest.feature_dim);
        if (ds.feature_dim <= 0) ds.feature_dim = static_cast<int>(feats.rows());
        if (feats.rows() != ds.feature_dim) {
            throw Error(ErrorCode::FeatureDimMismatch, cam.feature_file);
        }
        const auto path = manifest.base_dir / cam.tracklet_file;
        auto in = open_in(path);
        std::map<PersonId, Tracklet> tracks;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto t = trim(line);
            if (t.empty() || t.front() == '#') continue;
            const std::string where = path.string() + ":" + std::to_string(lineno);
            const auto f = split(t, ',');
            if (f.size() != 8) throw Error(ErrorCode::ParseError, where + ": expected 8 fields");
            if (f[1].empty()) throw Error(ErrorCode::MissingLabel, where);
            const auto cid = parse_number<CameraId>(f[0], where);
            if (cid != cam.camera_id) {
                throw Error(ErrorCode::ParseError, where + ": camera id does not match manifest");
            }
            const auto pid = parse_number<PersonId>(f[1], where);
            Observation o;
            o.camera_id = cid;
            o.timestamp = parse_number<double>(f[2], where) - manifest.epoch;
            o.box = Box{parse_number<double>(f[3], where), parse_number<double>(f[4], where),
                        parse_number<double>(f[5], where), parse_number<double>(f[6], where)};
            const auto fi = parse_number<long>(f[7], where);
            if (fi < 0 || fi >= feats.cols()) throw Error(ErrorCode::ParseError, where + ": feature index out of range");
            o.feature = normalize ? normalize_feature(feats.col(fi)) : FeatureVector(feats.col(fi));
            auto& tr = tracks[pid];
            tr.camera_id = cid;
            tr.local_person_id = pid;
            tr.observations.push_back(std::move(o));
        }
        auto& list = ds.cameras[cam.camera_id];
        for (auto& [pid, tr] : tracks) {
            auto checked = validate_tracklet(std::move(tr));
            for (auto& w : checked.warnings) ds.warnings.push_back(std::move(w));
            list.push_back(std::move(checked.tracklet));
        }
    }
    return ds;
}

Dataset load_dataset(const fs::path& manifest_file, bool normalize)
{
    return load_dataset(read_manifest(manifest_file), normalize);
}

void write_dataset(const Dataset& ds, const fs::path& dir)
{
    fs::create_directories(dir);
    DatasetManifest m;
    m.epoch = ds.epoch;
    m.feature_dim = ds.feature_dim;
    for (const auto& [cam, tracks] : ds.cameras) {
        CameraFiles files{cam, "cam" + std::to_string(cam) + "_tracklets.csv",
                          "cam" + std::to_string(cam) + "_features.txt"};
        std::string tbuf, fbuf;
        tbuf += "# camera_id,person_id,frame_timestamp,x,y,w,h,feature_index\n";
        long rows = 0;
        for (const auto& t : tracks) rows += static_cast<long>(t.observations.size());
        fbuf += std::to_string(ds.feature_dim) + " " + std::to_string(rows) + "\n";
        long index = 0;
        for (const auto& t : tracks) {
            for (const auto& o : t.observations) {
                const Box b = o.box.value_or(Box{0, 0, 1, 1});
                tbuf += std::to_string(cam) + "," + std::to_string(t.local_person_id) + ",";
                append_double(tbuf, o.timestamp + ds.epoch);
                for (double v : {b.x, b.y, b.w, b.h}) {
                    tbuf += ',';
                    append_double(tbuf, v);
                }
                tbuf += "," + std::to_string(index++) + "\n";
                for (Eigen::Index k = 0; k < o.feature.size(); ++k) {
                    if (k) fbuf += ' ';
                    append_double(fbuf, o.feature[k]);
                }
                fbuf += '\n';
            }
        }
        std::ofstream(dir / files.tracklet_file) << tbuf;
        std::ofstream(dir / files.feature_file) << fbuf;
        m.cameras.push_back(files);
    }
    write_manifest(m, dir / "manifest.txt");
}

Tracklet select_key_appearances(const Tracklet& t, int k_max)
{
    if (k_max < 1) throw Error(ErrorCode::InvalidConfig, "k_max must be >= 1");
    const auto n = t.observations.size();
    if (static_cast<std::size_t>(k_max) >= n) return t;

    const auto feats = t.features();
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    std::vector<char> chosen(n, 0);
    std::vector<std::size_t> picked;
    picked.reserve(static_cast<std::size_t>(k_max));
    std::size_t next = 0;  // temporally first
    for (int k = 0; k < k_max; ++k) {
        chosen[next] = 1;
        picked.push_back(next);
        const auto c = feats.col(static_cast<Eigen::Index>(next));
        std::size_t best = n;
        double best_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (chosen[i]) continue;
            const double d2 = (feats.col(static_cast<Eigen::Index>(i)) - c).squaredNorm();
            min_d2[i] = std::min(min_d2[i], d2);
            // strict '>' keeps the earliest observation on ties
            if (min_d2[i] > best_d) {
                best_d = min_d2[i];
                best = i;
            }
        }
        if (best == n) break;
        next = best;
    }
    std::sort(picked.begin(), picked.end());
    Tracklet out = t;
    out.observations.clear();
    for (auto i : picked) out.observations.push_back(t.observations[i]);
    return out;
}

Dataset with_key_appearances(const Dataset& ds, int k_max)
{
    Dataset out;
    out.epoch = ds.epoch;
    out.feature_dim = ds.feature_dim;
    out.warnings = ds.warnings;
    for (const auto& [cam, tracks] : ds.cameras) {
        auto& list = out.cameras[cam];
        list.reserve(tracks.size());
        for (const auto& t : tracks) list.push_back(select_key_appearances(t, k_max));
    }
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double t)
{
    Dataset a, b;
    a.epoch = b.epoch = ds.epoch;
    a.feature_dim = b.feature_dim = ds.feature_dim;
    for (const auto& [cam, tracks] : ds.cameras) {
        auto& la = a.cameras[cam];
        auto& lb = b.cameras[cam];
        for (const auto& tr : tracks) (tr.entry_time < t ? la : lb).push_back(tr);
    }
    return {std::move(a), std::move(b)};
}

}  // namespace camnet
