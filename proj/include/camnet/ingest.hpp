#pragma once

#include "camnet/core.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace camnet {

struct CameraFiles
{
    CameraId camera_id = 0;
    std::string tracklet_file;
    std::string feature_file;
};

struct DatasetManifest
{
    std::vector<CameraFiles> cameras;
    double epoch = 0;
    int feature_dim = 0;
    /// Directory relative file names resolve against.
    std::filesystem::path base_dir;
};

struct Dataset
{
    double epoch = 0;
    int feature_dim = 0;
    std::map<CameraId, std::vector<Tracklet>> cameras;
    std::vector<std::string> warnings;

    std::size_t tracklet_count() const;
    const Tracklet* find(TrackRef ref) const;
};

DatasetManifest read_manifest(const std::filesystem::path& file);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& file);

/// Loads, validates and (when `normalize`) unit-normalizes every camera of the manifest.
Dataset load_dataset(const DatasetManifest& manifest, bool normalize = true);
Dataset load_dataset(const std::filesystem::path& manifest_file, bool normalize = true);

/// Writes manifest.txt plus per-camera tracklet and feature files into `dir`.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Greedy farthest-point subset of at most k_max observations, seeded with the
/// temporally first one; returned in time order.
Tracklet select_key_appearances(const Tracklet& t, int k_max);

/// Applies select_key_appearances to every tracklet.
Dataset with_key_appearances(const Dataset& ds, int k_max);

/// Tracklets entering before `t` go to the first dataset, the rest to the second.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double t);

}  // namespace camnet
