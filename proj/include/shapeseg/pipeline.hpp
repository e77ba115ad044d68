#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "shapeseg/model.hpp"
#include "shapeseg/phantom.hpp"
#include "shapeseg/volgrid.hpp"

namespace shapeseg {

/// Paths of one case inside a generated dataset tree.
struct CasePaths {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path mask;
};

/// Cases of one split ("train", "val" or "test") listed in `<data_dir>/manifest.json`.
std::vector<CasePaths> split_cases(const std::filesystem::path& data_dir, const std::string& split);

/// One training sample per z-slice, with the normalized per-slice SDF as the
/// regression target. Slices are reflect-padded to a multiple of `divisor`.
std::vector<TrainSample> slice_samples(const VolumeGrid& image, const VolumeGrid& mask, std::size_t divisor);

std::vector<TrainSample> load_split_samples(const std::filesystem::path& data_dir, const std::string& split,
                                            std::size_t divisor);

/// Loss weight presets: "a" segmentation only, "c" adds L1, "d" adds the Laplacian term.
LossWeights ablation_weights(const std::string& name);

/// Per-epoch history as JSON. Wall time is left out so reruns are byte-identical.
std::string train_report_to_json(const TrainReport& report, const NetConfig& net, const TrainConfig& cfg);

}  // namespace shapeseg
