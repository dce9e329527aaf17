#include "camnet/online.hpp"

#include "camnet/forest.hpp"
#include "camnet/ingest.hpp"
#include "camnet/zones.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace camnet {

namespace {

void apply_bounds(LinkState& s, const PipelineConfig& cfg)
{
    if (!s.distribution.model) return;
    const auto b = update_time_window(*s.distribution.model, cfg.coverage_percent, cfg.max_window_error);
    s.lower = b.lower;
    s.upper = b.upper;
    s.window = b.window;
}

}  // namespace

OnlineLink make_online_link(const ZoneLink& link)
{
    OnlineLink l;
    l.link = link;
    l.accumulated = link.state.distribution;
    return l;
}

std::vector<const Tracklet*> gate_candidates(const LinkState& state, double exit_time,
                                             const std::vector<const Tracklet*>& entries)
{
    const double from = exit_time + state.lower;
    const double to = exit_time + state.upper;
    auto first = std::lower_bound(entries.begin(), entries.end(), from,
                                  [](const Tracklet* t, double v) { return t->entry_time < v; });
    std::vector<const Tracklet*> out;
    for (auto it = first; it != entries.end() && (*it)->entry_time <= to; ++it) out.push_back(*it);
    return out;
}

std::optional<Correspondence> match_online(const Tracklet& probe, const std::vector<const Tracklet*>& candidates,
                                           const PipelineConfig& cfg, std::uint64_t seed)
{
    if (candidates.empty()) return std::nullopt;
    if (probe.observations.empty()) throw Error(ErrorCode::EmptyProbe, "probe has no observations");
    const auto pf = probe.features();
    Correspondence c;
    c.exit = probe.ref();
    c.probe = probe.ref();
    c.exit_time = probe.exit_time;
    std::size_t best = 0;
    if (static_cast<int>(candidates.size()) >= cfg.candidate_rf_threshold) {
        Gallery g;
        Eigen::Index cols = 0;
        for (const auto* t : candidates) cols += static_cast<Eigen::Index>(t->size());
        g.features.resize(pf.rows(), cols);
        Eigen::Index k = 0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            for (const auto& o : candidates[i]->observations) {
                g.features.col(k++) = o.feature;
                g.labels.push_back(static_cast<Label>(i));
                g.timestamps.push_back(o.timestamp);
            }
        }
        const auto f = train_forest(g, cfg, seed);
        const auto r = predict_multishot(f, pf);
        best = static_cast<std::size_t>(r.label);
        c.posterior = r.posterior;
        c.similarity = similarity(candidates[best]->features(), pf);
        for (auto l : r.ranking) c.ranking.push_back(candidates[static_cast<std::size_t>(l)]->ref());
        c.path = "forest";
    } else {
        std::vector<double> s(candidates.size());
        for (std::size_t i = 0; i < candidates.size(); ++i) s[i] = similarity(candidates[i]->features(), pf);
        std::vector<std::size_t> order(candidates.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
        best = order.front();
        c.similarity = s[best];
        c.posterior = 1.0;
        for (auto i : order) c.ranking.push_back(candidates[i]->ref());
        c.path = "exhaustive";
    }
    const auto& e = *candidates[best];
    c.entry = e.ref();
    c.entry_time = e.entry_time;
    c.delta_t = e.entry_time - probe.exit_time;
    return c;
}

bool update_distribution(OnlineLink& l, const Correspondence& c, const PipelineConfig& cfg)
{
    if (!(c.similarity > cfg.theta_sim)) return false;
    add_sample(l.accumulated, c.delta_t);
    l.drift = l1_difference(l.link.state.distribution, l.accumulated);
    return true;
}

bool maybe_refit(OnlineLink& l, const PipelineConfig& cfg)
{
    if (!(l.drift > cfg.online_refit_threshold)) return false;
    auto& s = l.link.state;
    const auto model = fit_gaussian(l.accumulated);
    s.distribution = l.accumulated;
    s.distribution.model = model;
    apply_bounds(s, cfg);
    const double scale = cfg.confidence_time_scale > 0 ? cfg.confidence_time_scale : s.window;
    s.distribution.confidence = connectivity_confidence(model, scale);
    l.accumulated.model = model;
    l.accumulated.confidence = s.distribution.confidence;
    l.drift = 0;
    ++l.refits;
    return true;
}

OnlineResult run_online(const ZoneTopology& init, const Dataset& raw, const PipelineConfig& cfg)
{
    cfg.validate();
    const auto ds = with_key_appearances(raw, cfg.max_key_appearances);
    OnlineResult out;
    std::vector<OnlineLink> links;
    for (const auto& l : init.links()) {
        links.push_back(make_online_link(l));
        apply_bounds(links.back().link.state, cfg);
    }

    std::map<ZoneKey, std::vector<const Tracklet*>> entries;
    std::vector<std::pair<const Tracklet*, ZoneKey>> exits;
    for (const auto& [cam, tracks] : ds.cameras) {
        auto it = init.zones.find(cam);
        if (it == init.zones.end() || it->second.empty()) continue;
        const auto& zs = it->second;
        const bool has_entry = std::any_of(zs.begin(), zs.end(), [](const Zone& z) { return z.kind != ZoneKind::exit; });
        const bool has_exit = std::any_of(zs.begin(), zs.end(), [](const Zone& z) { return z.kind != ZoneKind::entry; });
        for (const auto& t : tracks) {
            if (has_entry) entries[{cam, assign_zone(zs, t.entry_point, ZoneKind::entry)}].push_back(&t);
            if (has_exit) exits.emplace_back(&t, ZoneKey{cam, assign_zone(zs, t.exit_point, ZoneKind::exit)});
        }
    }
    for (auto& [key, v] : entries) {
        std::stable_sort(v.begin(), v.end(), [](const Tracklet* a, const Tracklet* b) {
            return a->entry_time < b->entry_time;
        });
    }
    std::stable_sort(exits.begin(), exits.end(), [](const auto& a, const auto& b) {
        return std::tie(a.first->exit_time, a.first->camera_id, a.first->local_person_id) <
               std::tie(b.first->exit_time, b.first->camera_id, b.first->local_person_id);
    });

    std::set<TrackRef> taken;
    std::uint64_t event = 0;
    static const std::vector<const Tracklet*> none;
    for (const auto& [probe, zone] : exits) {
        for (std::size_t i = 0; i < links.size(); ++i) {
            auto& l = links[i];
            if (!l.link.valid || l.link.exit != zone) continue;
            auto it = entries.find(l.link.entry);
            auto cands = gate_candidates(l.link.state, probe->exit_time, it == entries.end() ? none : it->second);
            if (cfg.one_to_one) {
                std::erase_if(cands, [&](const Tracklet* t) { return taken.count(t->ref()) > 0; });
            }
            auto c = match_online(*probe, cands, cfg, mix_seed(cfg.seed, 700000 + event++));
            if (!c) continue;
            c->exit_zone = l.link.exit;
            c->entry_zone = l.link.entry;
            if (update_distribution(l, *c, cfg)) {
                if (cfg.one_to_one) taken.insert(c->entry);
                if (cfg.online_refit && maybe_refit(l, cfg)) {
                    c->refit = true;
                    out.refits.push_back({probe->exit_time, i, *l.link.state.distribution.model});
                }
            }
            out.log.push_back(std::move(*c));
        }
    }
    out.topology.zones = init.zones;
    for (const auto& l : links) out.topology.add_link(l.link.exit, l.link.entry, l.link.state, l.link.valid);
    return out;
}

}  // namespace camnet
