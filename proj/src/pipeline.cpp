#include "shapeseg/pipeline.hpp"

#include <json.hpp>

#include "shapeseg/errors.hpp"
#include "shapeseg/sdf.hpp"

namespace shapeseg {

using nlohmann::json;

std::vector<CasePaths> split_cases(const std::filesystem::path& data_dir, const std::string& split) {
  const DatasetManifest manifest = load_manifest(data_dir / "manifest.json");
  const std::vector<std::string>* ids = nullptr;
  if (split == "train") ids = &manifest.train;
  else if (split == "val") ids = &manifest.val;
  else if (split == "test") ids = &manifest.test;
  else throw ArgumentError("unknown split '" + split + "' (expected train, val or test)");

  std::vector<CasePaths> out;
  out.reserve(ids->size());
  for (const auto& id : *ids) {
    out.push_back({id, data_dir / split / (id + "_image.svol.json"), data_dir / split / (id + "_mask.svol.json")});
  }
  return out;
}

std::vector<TrainSample> slice_samples(const VolumeGrid& image, const VolumeGrid& mask, std::size_t divisor) {
  if (!image.same_geometry(mask)) throw ShapeError("image and mask geometry differ");
  if (!mask.is_mask()) throw ValidationError("slice_samples: mask volume is not binary");
  if (divisor == 0) throw ArgumentError("slice_samples: divisor must be positive");
  const VolumeGrid sdf = sdf_volume(mask);
  const std::size_t pw = (image.nx() + divisor - 1) / divisor * divisor;
  const std::size_t ph = (image.ny() + divisor - 1) / divisor * divisor;

  std::vector<TrainSample> out;
  out.reserve(image.nz());
  for (std::size_t z = 0; z < image.nz(); ++z) {
    out.push_back({reflect_pad(extract_slice(image, z), pw, ph), reflect_pad(extract_slice(mask, z), pw, ph),
                   reflect_pad(extract_slice(sdf, z), pw, ph)});
  }
  return out;
}

std::vector<TrainSample> load_split_samples(const std::filesystem::path& data_dir, const std::string& split,
                                            std::size_t divisor) {
  std::vector<TrainSample> out;
  for (const auto& c : split_cases(data_dir, split)) {
    auto s = slice_samples(load_volume(c.image), load_volume(c.mask), divisor);
    std::move(s.begin(), s.end(), std::back_inserter(out));
  }
  return out;
}

LossWeights ablation_weights(const std::string& name) {
  if (name == "a") return {1.0, 1.0, 0.0, 0.0};
  if (name == "c") return {1.0, 1.0, 1.0, 0.0};
  if (name == "d") return {1.0, 1.0, 1.0, 1.0};
  throw ConfigError("unknown ablation '" + name + "' (expected a, c or d)");
}

namespace {

json breakdown_json(const LossBreakdown& b) {
  return {{"bce", b.bce},           {"dice", b.dice},           {"l1", b.l1},      {"laplacian", b.laplacian},
          {"seg_total", b.seg_total}, {"reg_total", b.reg_total}, {"total", b.total}};
}

}  // namespace

std::string train_report_to_json(const TrainReport& report, const NetConfig& net, const TrainConfig& cfg) {
  json epochs = json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"learning_rate", e.learning_rate},
                      {"train_loss", breakdown_json(e.train_loss)},
                      {"val_dice", e.val_dice}});
  }
  const auto& w = cfg.loss.weights;
  json doc{{"best_epoch", report.best_epoch},
           {"best_val_dice", report.epochs.empty() ? 0.0
                                                   : report.epochs[static_cast<std::size_t>(report.best_epoch)].val_dice},
           {"net", {{"depth", net.depth}, {"base_channels", net.base_channels}, {"seed", net.seed}}},
           {"train",
            {{"learning_rate", cfg.learning_rate},
             {"decay_factor", cfg.decay_factor},
             {"epochs", cfg.epochs},
             {"batch_size", cfg.batch_size},
             {"seed", cfg.seed}}},
           {"loss_weights", {{"bce", w.bce}, {"dice", w.dice}, {"l1", w.l1}, {"laplacian", w.laplacian}}},
           {"epochs", epochs}};
  return doc.dump(2) + "\n";
}

}  // namespace shapeseg
