#pragma once

#include "camnet/core.hpp"
#include "camnet/eval.hpp"
#include "camnet/online.hpp"
#include "camnet/topology.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace camnet {

/// Key/value text with a [paper_defaults] section and a [pipeline] section.
std::string config_to_ini(const PipelineConfig& cfg);
/// Overlays the keys found in `text` on `base`. Unknown keys and bad values throw InvalidConfig
/// naming the key; malformed lines throw ParseError with the line number.
PipelineConfig config_from_ini(const std::string& text, PipelineConfig base = {});
PipelineConfig read_config(const std::filesystem::path& file, PipelineConfig base = {});
void write_config(const PipelineConfig& cfg, const std::filesystem::path& file);

std::string distribution_to_json(const TransitionDistribution& d);
TransitionDistribution distribution_from_json(const std::string& text);

/// Zones, links with (mu, sigma, E, conf, T_L, T_U, T, sample_count) and raw histograms, plus
/// the camera edges when `cams` is given.
std::string topology_to_json(const ZoneTopology& topo, const CameraTopology* cams = nullptr);
ZoneTopology topology_from_json(const std::string& text, CameraTopology* cams = nullptr);
void write_topology(const ZoneTopology& topo, const std::filesystem::path& file, const CameraTopology* cams = nullptr);
ZoneTopology read_topology(const std::filesystem::path& file, CameraTopology* cams = nullptr);

/// One line per correspondence; ranking as space separated camera:person tokens.
std::string match_log_to_csv(const std::vector<Correspondence>& log);
std::vector<Correspondence> match_log_from_csv(const std::string& text);
void write_match_log(const std::vector<Correspondence>& log, const std::filesystem::path& file);
std::vector<Correspondence> read_match_log(const std::filesystem::path& file);

std::string report_to_json(const EvalReport& r);
/// Per-link table: exit, entry, mu, mu_gt, sigma, sigma_gt, d_B, samples.
std::string report_links_csv(const EvalReport& r);
std::string benchmark_to_csv(const BenchmarkTable& t);
std::string refits_to_csv(const std::vector<ModelSnapshot>& refits);

std::string read_text(const std::filesystem::path& file);
/// Writes through a temporary sibling and renames it into place.
void write_text(const std::filesystem::path& file, const std::string& text);

}  // namespace camnet
