// shapeseg command-line tool: phantom -> sdf -> train -> predict -> reconstruct -> evaluate -> report.
//
// Exit codes: 0 success, 2 usage or validation error, 3 runtime or numeric failure.
// stdout carries written paths or JSON only; diagnostics go to stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "shapeseg/errors.hpp"
#include "shapeseg/mesh.hpp"
#include "shapeseg/metrics.hpp"
#include "shapeseg/model.hpp"
#include "shapeseg/phantom.hpp"
#include "shapeseg/pipeline.hpp"
#include "shapeseg/sdf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace shapeseg;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_exists(const fs::path& path, const char* what) {
  if (!fs::exists(path)) throw ArgumentError(std::string(what) + " not found: " + path.string());
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be
/// written to slot i so output order never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------- phantom

struct PhantomArgs {
  PhantomSpec spec;
  std::string family = "ellipsoid";
  std::vector<double> fractions{0.6, 0.2, 0.2};
  fs::path out;
  int jobs = 1;
};

int cmd_phantom(PhantomArgs& a) {
  a.spec.family = parse_shape_family(a.family);
  if (a.fractions.size() != 3) throw ConfigError("--fractions takes exactly three values");
  const auto manifest = gen_dataset(a.spec, {a.fractions[0], a.fractions[1], a.fractions[2]}, a.out, a.jobs);
  std::cerr << "generated " << manifest.train.size() + manifest.val.size() + manifest.test.size() << " cases\n";
  std::cout << (a.out / "manifest.json").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- sdf

struct SdfArgs {
  fs::path mask;
  fs::path out;
  bool raw = false;
};

int cmd_sdf(const SdfArgs& a) {
  require_exists(a.mask, "mask volume");
  const VolumeGrid mask = load_volume(a.mask);
  save_volume(a.raw ? sdf_volume_raw(mask) : sdf_volume(mask), a.out);
  std::cout << a.out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  fs::path data;
  fs::path config;
  fs::path out;
  fs::path report;
  std::string ablation;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> seed;
  std::optional<int> depth;
  std::optional<int> base_channels;
};

template <typename T>
void overlay(const json& obj, const char* key, T& field) {
  if (obj.contains(key)) field = obj.at(key).get<T>();
}

/// defaults < config file < flags
void apply_config_file(const fs::path& path, NetConfig& net, TrainConfig& cfg) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  try {
    if (doc.contains("net")) {
      const json& n = doc.at("net");
      overlay(n, "depth", net.depth);
      overlay(n, "base_channels", net.base_channels);
      overlay(n, "seed", net.seed);
    }
    if (doc.contains("train")) {
      const json& t = doc.at("train");
      overlay(t, "learning_rate", cfg.learning_rate);
      overlay(t, "decay_factor", cfg.decay_factor);
      overlay(t, "epochs", cfg.epochs);
      overlay(t, "batch_size", cfg.batch_size);
      overlay(t, "seed", cfg.seed);
    }
    if (doc.contains("loss")) {
      const json& l = doc.at("loss");
      overlay(l, "epsilon", cfg.loss.epsilon);
      overlay(l, "clamp_delta", cfg.loss.clamp_delta);
      if (l.contains("weights")) {
        const json& w = l.at("weights");
        overlay(w, "bce", cfg.loss.weights.bce);
        overlay(w, "dice", cfg.loss.weights.dice);
        overlay(w, "l1", cfg.loss.weights.l1);
        overlay(w, "laplacian", cfg.loss.weights.laplacian);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

int cmd_train(const TrainArgs& a) {
  require_exists(a.data, "data directory");
  require_exists(a.data / "manifest.json", "manifest");

  NetConfig net;
  TrainConfig cfg;
  if (!a.config.empty()) {
    require_exists(a.config, "config file");
    apply_config_file(a.config, net, cfg);
  }
  if (!a.ablation.empty()) cfg.loss.weights = ablation_weights(a.ablation);
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.learning_rate) cfg.learning_rate = *a.learning_rate;
  if (a.seed) {
    cfg.seed = *a.seed;
    net.seed = *a.seed;
  }
  if (a.depth) net.depth = *a.depth;
  if (a.base_channels) net.base_channels = *a.base_channels;
  net.validate();
  cfg.validate();

  const std::size_t div = net.divisor();
  const auto train_set = load_split_samples(a.data, "train", div);
  auto val_set = load_split_samples(a.data, "val", div);
  if (train_set.empty()) throw ConfigError("training split is empty");
  if (val_set.empty()) {
    std::cerr << "validation split is empty; selecting on training dice\n";
    val_set = train_set;
  }
  net.width = train_set.front().image.width();
  net.height = train_set.front().image.height();
  std::cerr << "training on " << train_set.size() << " slices, validating on " << val_set.size() << "\n";

  const auto result = train(train_set, val_set, net, cfg, [](const EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << " loss " << r.train_loss.total << " val_dice " << r.val_dice << "\n";
  });
  save_model(result.best, a.out);
  const fs::path report = a.report.empty() ? fs::path(a.out).replace_extension(".report.json") : a.report;
  write_text(report, train_report_to_json(result.report, net, cfg));
  std::cout << json{{"model", a.out.string()}, {"report", report.string()}}.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  fs::path model;
  fs::path image;
  fs::path out_mask;
  fs::path out_sdf;
  fs::path data;
  std::string split = "test";
  fs::path out_dir;
  int jobs = 1;
};

int cmd_predict(const PredictArgs& a) {
  require_exists(a.model, "model");
  const ModelParams params = load_model(a.model);
  if (!a.image.empty()) {
    if (a.out_mask.empty() || a.out_sdf.empty()) throw ArgumentError("--image needs --out-mask and --out-sdf");
    require_exists(a.image, "image volume");
    const auto pred = predict_volume_padded(params, load_volume(a.image));
    save_volume(pred.mask, a.out_mask);
    save_volume(pred.sdf, a.out_sdf);
    std::cout << json{{"mask", a.out_mask.string()}, {"sdf", a.out_sdf.string()}}.dump() << "\n";
    return 0;
  }
  if (a.data.empty() || a.out_dir.empty()) throw ArgumentError("predict needs --image or --data with --out-dir");
  require_exists(a.data, "data directory");
  const auto cases = split_cases(a.data, a.split);
  fs::create_directories(a.out_dir);
  parallel_for(cases.size(), a.jobs, [&](std::size_t i) {
    const auto pred = predict_volume_padded(params, load_volume(cases[i].image));
    save_volume(pred.mask, a.out_dir / (cases[i].id + "_pred_mask.svol.json"));
    save_volume(pred.sdf, a.out_dir / (cases[i].id + "_pred_sdf.svol.json"));
  });
  for (const auto& c : cases) std::cout << (a.out_dir / (c.id + "_pred_mask.svol.json")).string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- reconstruct

MeshFormat format_for(const fs::path& path, const std::string& flag) {
  std::string f = flag;
  if (f.empty()) {
    f = path.extension().string();
    if (!f.empty()) f.erase(0, 1);
  }
  if (f == "obj") return MeshFormat::Obj;
  if (f == "stl") return MeshFormat::StlBinary;
  if (f == "ply") return MeshFormat::PlyWithScalar;
  throw ArgumentError("cannot infer mesh format from '" + path.string() + "' (use --format obj|stl|ply)");
}

struct ReconstructArgs {
  fs::path input;
  std::string from = "mask";
  std::optional<double> iso;
  fs::path out;
  std::string format;
};

int cmd_reconstruct(const ReconstructArgs& a) {
  require_exists(a.input, "input volume");
  const VolumeGrid vol = load_volume(a.input);
  TriangleMesh mesh;
  if (a.from == "mask") {
    if (a.iso && *a.iso != 0.5) {
      mesh = marching_cubes(mask_to_field(vol), *a.iso);
      flip_orientation(mesh);
    } else {
      mesh = mesh_from_mask(vol);
    }
  } else {
    if (vol.is_mask()) throw ValidationError("--from sdf expects a scalar volume");
    // SDF is negative inside, so increasing values point outward already.
    mesh = marching_cubes(vol, a.iso.value_or(0.0));
  }
  export_mesh(mesh, a.out, format_for(a.out, a.format));
  const auto topo = mesh_topology_report(mesh);
  std::cerr << topo.vertices << " vertices, " << topo.triangles << " triangles, euler " << topo.euler << "\n";
  std::cout << a.out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- evaluate

std::string case_id_from_path(const fs::path& path) {
  std::string name = path.filename().string();
  for (const char* suffix : {".svol.json", "_pred_mask", "_mask"}) {
    const std::string s = suffix;
    if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) name.resize(name.size() - s.size());
  }
  return name;
}

struct EvaluateArgs {
  fs::path pred;
  fs::path truth;
  std::string id;
  fs::path pred_dir;
  fs::path data;
  std::string split = "test";
  double tolerance = 1.0;
  fs::path json_out;
  fs::path csv_out;
  fs::path ply_out;
  int jobs = 1;
};

int cmd_evaluate(const EvaluateArgs& a) {
  if (!(a.tolerance >= 0.0)) throw ArgumentError("--tolerance must be >= 0");
  std::vector<MetricsRecord> records;
  if (!a.pred.empty()) {
    if (a.truth.empty()) throw ArgumentError("--pred needs --truth");
    require_exists(a.pred, "prediction");
    require_exists(a.truth, "ground truth");
    const VolumeGrid pred = load_volume(a.pred);
    const VolumeGrid truth = load_volume(a.truth);
    const std::string id = a.id.empty() ? case_id_from_path(a.pred) : a.id;
    records.push_back(evaluate_pair(pred, truth, a.tolerance, id));
    if (!a.ply_out.empty()) {
      const auto colored = vertex_distance_channel(mesh_from_mask(pred), extract_surface_voxels(truth));
      export_mesh(colored, a.ply_out, MeshFormat::PlyWithScalar);
    }
  } else {
    if (a.pred_dir.empty() || a.data.empty()) throw ArgumentError("evaluate needs --pred/--truth or --pred-dir/--data");
    if (!a.ply_out.empty()) throw ArgumentError("--ply is only available for a single case");
    require_exists(a.pred_dir, "prediction directory");
    require_exists(a.data, "data directory");
    const auto cases = split_cases(a.data, a.split);
    records.resize(cases.size());
    parallel_for(cases.size(), a.jobs, [&](std::size_t i) {
      const VolumeGrid pred = load_volume(a.pred_dir / (cases[i].id + "_pred_mask.svol.json"));
      records[i] = evaluate_pair(pred, load_volume(cases[i].mask), a.tolerance, cases[i].id);
    });
  }
  const std::string doc = metrics_to_json(records);
  if (!a.json_out.empty()) write_text(a.json_out, doc);
  if (!a.csv_out.empty()) write_text(a.csv_out, metrics_to_csv(records));
  if (a.json_out.empty() && a.csv_out.empty()) {
    std::cout << doc;
  } else {
    for (const auto* p : {&a.json_out, &a.csv_out, &a.ply_out}) {
      if (!p->empty()) std::cout << p->string() << "\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::vector<std::string> inputs;  // label=path or path
  fs::path out;
};

int cmd_report(const ReportArgs& a) {
  std::vector<std::pair<std::string, AggregateReport>> rows;
  for (const auto& spec : a.inputs) {
    const auto eq = spec.find('=');
    const fs::path path = eq == std::string::npos ? fs::path(spec) : fs::path(spec.substr(eq + 1));
    const std::string label = eq == std::string::npos ? path.stem().string() : spec.substr(0, eq);
    require_exists(path, "metrics file");
    rows.emplace_back(label, aggregate(metrics_from_json(read_text(path))));
  }
  const std::string table = format_report_table(rows);
  if (a.out.empty()) {
    std::cout << table;
  } else {
    write_text(a.out, table);
    std::cout << a.out.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shape-aware 2D segmentation with signed distance regression and surface reconstruction"};
  app.require_subcommand(1);

  PhantomArgs phantom;
  auto* sp = app.add_subcommand("phantom", "generate a synthetic dataset with train/val/test splits");
  sp->add_option("--count", phantom.spec.count, "number of cases")->capture_default_str();
  sp->add_option("--size", phantom.spec.size, "in-plane size (nx = ny)")->capture_default_str();
  sp->add_option("--slices", phantom.spec.slices, "number of z-slices")->capture_default_str();
  sp->add_option("--seed", phantom.spec.seed, "master seed")->capture_default_str();
  sp->add_option("--family", phantom.family, "sphere | ellipsoid | two_lobe")->capture_default_str();
  sp->add_option("--noise", phantom.spec.noise_sigma, "Gaussian noise sigma")->capture_default_str();
  sp->add_option("--contrast", phantom.spec.contrast, "foreground intensity")->capture_default_str();
  sp->add_option("--fractions", phantom.fractions, "train val test fractions")->expected(3);
  sp->add_option("--out", phantom.out, "output directory")->required();
  sp->add_option("--jobs", phantom.jobs, "worker threads")->check(CLI::PositiveNumber);

  SdfArgs sdf;
  auto* ss = app.add_subcommand("sdf", "per-slice signed distance field of a mask volume");
  ss->add_option("--mask", sdf.mask, "input mask volume")->required();
  ss->add_option("--out", sdf.out, "output scalar volume")->required();
  ss->add_flag("--raw", sdf.raw, "skip per-slice normalization");

  TrainArgs tr;
  auto* st = app.add_subcommand("train", "train the two-head network on a generated dataset");
  st->add_option("--data", tr.data, "dataset directory with manifest.json")->required();
  st->add_option("--config", tr.config, "JSON config file");
  st->add_option("--out", tr.out, "output model file")->required();
  st->add_option("--report", tr.report, "training report JSON (default: <out>.report.json)");
  st->add_option("--ablation", tr.ablation, "loss preset a | c | d")->check(CLI::IsMember({"a", "c", "d"}));
  st->add_option("--epochs", tr.epochs);
  st->add_option("--lr", tr.learning_rate);
  st->add_option("--seed", tr.seed, "seed for init and shuffling");
  st->add_option("--depth", tr.depth);
  st->add_option("--base-channels", tr.base_channels);

  PredictArgs pr;
  auto* sq = app.add_subcommand("predict", "predict mask and SDF volumes");
  sq->add_option("--model", pr.model)->required();
  sq->add_option("--image", pr.image, "single image volume");
  sq->add_option("--out-mask", pr.out_mask);
  sq->add_option("--out-sdf", pr.out_sdf);
  sq->add_option("--data", pr.data, "dataset directory (batch mode)");
  sq->add_option("--split", pr.split)->capture_default_str();
  sq->add_option("--out-dir", pr.out_dir);
  sq->add_option("--jobs", pr.jobs)->check(CLI::PositiveNumber);

  ReconstructArgs rc;
  auto* sr = app.add_subcommand("reconstruct", "marching cubes surface from a mask or SDF volume");
  sr->add_option("--in", rc.input)->required();
  sr->add_option("--from", rc.from)->check(CLI::IsMember({"mask", "sdf"}))->capture_default_str();
  sr->add_option("--iso", rc.iso, "iso level (default 0.5 for mask, 0 for sdf)");
  sr->add_option("--out", rc.out)->required();
  sr->add_option("--format", rc.format)->check(CLI::IsMember({"obj", "stl", "ply"}));

  EvaluateArgs ev;
  auto* se = app.add_subcommand("evaluate", "volumetric and surface metrics");
  se->add_option("--pred", ev.pred);
  se->add_option("--truth", ev.truth);
  se->add_option("--id", ev.id);
  se->add_option("--pred-dir", ev.pred_dir);
  se->add_option("--data", ev.data);
  se->add_option("--split", ev.split)->capture_default_str();
  se->add_option("--tolerance", ev.tolerance, "surface dice tolerance (physical units)")->capture_default_str();
  se->add_option("--json", ev.json_out);
  se->add_option("--csv", ev.csv_out);
  se->add_option("--ply", ev.ply_out, "prediction mesh colored by distance to truth");
  se->add_option("--jobs", ev.jobs)->check(CLI::PositiveNumber);

  ReportArgs rp;
  auto* sm = app.add_subcommand("report", "mean ± std table from metrics JSON files");
  sm->add_option("inputs", rp.inputs, "label=metrics.json")->required();
  sm->add_option("--out", rp.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*sp) return cmd_phantom(phantom);
    if (*ss) return cmd_sdf(sdf);
    if (*st) return cmd_train(tr);
    if (*sq) return cmd_predict(pr);
    if (*sr) return cmd_reconstruct(rc);
    if (*se) return cmd_evaluate(ev);
    if (*sm) return cmd_report(rp);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
