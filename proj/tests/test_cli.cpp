#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "doctest.h"
#include "shapeseg/metrics.hpp"
#include "shapeseg/mesh.hpp"
#include "shapeseg/model.hpp"
#include "shapeseg/phantom.hpp"
#include "shapeseg/sdf.hpp"
#include "test_util.hpp"

using namespace shapeseg;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt";
  const std::string cmd = std::string(SHAPESEG_CLI) + " " + args + " > " + out.string() + " 2> " +
                          (scratch / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, testutil::read_file(out)};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("phantom writes cases and a manifest, reproducibly") {
  testutil::TempDir t("cli_phantom");
  const auto r = run("phantom --count 4 --size 16 --slices 10 --seed 7 --out " + q(t / "a"), t.path());
  REQUIRE(r.code == 0);
  CHECK(r.out == (t / "a" / "manifest.json").string() + "\n");
  const auto m = load_manifest(t / "a" / "manifest.json");
  CHECK(m.train.size() + m.val.size() + m.test.size() == 4);

  REQUIRE(run("phantom --count 4 --size 16 --slices 10 --seed 7 --jobs 2 --out " + q(t / "b"), t.path()).code == 0);
  for (const auto& e : fs::recursive_directory_iterator(t / "a")) {
    if (e.is_regular_file()) {
      CHECK(testutil::read_file(e.path()) == testutil::read_file(t / "b" / fs::relative(e.path(), t / "a")));
    }
  }
}

TEST_CASE("usage and validation errors exit with 2") {
  testutil::TempDir t("cli_err");
  CHECK(run("phantom --count 0 --out " + q(t / "x"), t.path()).code == 2);
  CHECK(run("phantom --out " + q(t / "x") + " --family cube", t.path()).code == 2);
  CHECK(run("sdf --mask " + q(t / "missing.svol.json") + " --out " + q(t / "o.svol.json"), t.path()).code == 2);
  CHECK(run("train --data " + q(t / "nowhere") + " --out " + q(t / "m.cfx"), t.path()).code == 2);
  CHECK(run("train --data x --out y --ablation b", t.path()).code == 2);
  CHECK(run("nonsense", t.path()).code == 2);
  CHECK(run("", t.path()).code == 2);
  CHECK(run("reconstruct --in " + q(t / "none.svol.json") + " --out " + q(t / "m.obj"), t.path()).code == 2);

  testutil::write_file(t / "bad.svol.json", "{not json");
  CHECK(run("sdf --mask " + q(t / "bad.svol.json") + " --out " + q(t / "o.svol.json"), t.path()).code == 2);
}

TEST_CASE("sdf keeps geometry and the raw output normalizes to the default") {
  testutil::TempDir t("cli_sdf");
  const PhantomSpec spec{.size = 24, .slices = 10, .seed = 3};
  const auto c = gen_case(spec, 0);
  save_volume(c.mask, t / "mask.svol.json");
  REQUIRE(run("sdf --mask " + q(t / "mask.svol.json") + " --out " + q(t / "n.svol.json"), t.path()).code == 0);
  REQUIRE(run("sdf --raw --mask " + q(t / "mask.svol.json") + " --out " + q(t / "r.svol.json"), t.path()).code == 0);
  const auto n = load_volume(t / "n.svol.json");
  const auto r = load_volume(t / "r.svol.json");
  CHECK(n.same_geometry(c.mask));
  CHECK(n.kind() == ElementKind::ScalarF32);
  CHECK(n == sdf_volume(c.mask));
  for (std::size_t z = 0; z < r.nz(); ++z) {
    const auto slice = extract_slice(r, z);
    double scale = 0.0;
    for (double v : slice.values()) scale = std::max(scale, std::abs(v));
    for (std::size_t y = 0; y < r.ny(); ++y) {
      for (std::size_t x = 0; x < r.nx(); ++x) {
        // Raw values pass through float storage, so agreement is to float rounding.
        CHECK(std::abs(slice.at(x, y) / scale - n.at(x, y, z)) <= 1e-6);
      }
    }
  }
}

TEST_CASE("config overlay: file values override defaults, flags override the file") {
  testutil::TempDir t("cli_cfg");
  REQUIRE(run("phantom --count 3 --size 16 --slices 10 --seed 1 --fractions 0.34 0.33 0.33 --out " + q(t / "d"),
              t.path())
              .code == 0);
  testutil::write_file(t / "cfg.json",
                       R"({"net": {"depth": 1, "base_channels": 2}, "train": {"epochs": 3, "learning_rate": 0.01},)"
                       R"( "loss": {"weights": {"laplacian": 0.5}}})");
  const auto r = run("train --data " + q(t / "d") + " --config " + q(t / "cfg.json") + " --epochs 2 --out " +
                         q(t / "m.cfx") + " --report " + q(t / "rep.json"),
                     t.path());
  REQUIRE(r.code == 0);
  const auto rep = nlohmann::json::parse(testutil::read_file(t / "rep.json"));
  CHECK(rep["epochs"].size() == 2);
  CHECK(rep["train"]["learning_rate"] == 0.01);
  CHECK(rep["net"]["depth"] == 1);
  CHECK(rep["loss_weights"]["laplacian"] == 0.5);
  CHECK(rep["loss_weights"]["l1"] == 1.0);
  const auto model = load_model(t / "m.cfx");
  CHECK(model.config.base_channels == 2);

  testutil::write_file(t / "bad.json", R"({"train": {"epochs": "many"}})");
  CHECK(run("train --data " + q(t / "d") + " --config " + q(t / "bad.json") + " --out " + q(t / "m2.cfx"), t.path())
            .code == 2);
}

TEST_CASE("ablation a leaves the regression head out of the loss") {
  testutil::TempDir t("cli_abl");
  REQUIRE(run("phantom --count 3 --size 16 --slices 10 --seed 2 --fractions 0.34 0.33 0.33 --out " + q(t / "d"),
              t.path())
              .code == 0);
  REQUIRE(run("train --data " + q(t / "d") + " --ablation a --epochs 2 --depth 1 --base-channels 2 --out " +
                  q(t / "m.cfx"),
              t.path())
              .code == 0);
  const auto rep = nlohmann::json::parse(testutil::read_file(t / "m.report.json"));
  for (const auto& e : rep["epochs"]) {
    CHECK(e["train_loss"]["reg_total"] == 0.0);
    CHECK(e["train_loss"]["l1"].get<double>() > 0.0);
  }
}

TEST_CASE("evaluate of a mask against itself is perfect") {
  testutil::TempDir t("cli_eval");
  const auto c = gen_case(PhantomSpec{.size = 24, .slices = 10, .seed = 4}, 1);
  save_volume(c.mask, t / "m_mask.svol.json");
  const auto r = run("evaluate --pred " + q(t / "m_mask.svol.json") + " --truth " + q(t / "m_mask.svol.json") +
                         " --json " + q(t / "e.json") + " --csv " + q(t / "e.csv") + " --ply " + q(t / "e.ply"),
                     t.path());
  REQUIRE(r.code == 0);
  const auto recs = metrics_from_json(testutil::read_file(t / "e.json"));
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].case_id == "m");
  CHECK(recs[0].vol_dice == 1.0);
  CHECK(recs[0].surf_dice == 1.0);
  CHECK(recs[0].hd == 0.0);
  CHECK(recs[0].hd95 == 0.0);
  CHECK(recs[0].assd == 0.0);
  CHECK(testutil::read_file(t / "e.csv").rfind("case,vol_dice,surf_dice,hd,hd95,assd\n", 0) == 0);
  CHECK(testutil::read_file(t / "e.ply").rfind("ply\n", 0) == 0);
}

TEST_CASE("reconstruct from an analytic sphere sdf stays within half a voxel") {
  testutil::TempDir t("cli_rec");
  const Vec3 c{16, 16, 16};
  save_volume(analytic_sphere_sdf({32, 32, 32}, {1, 1, 1}, c, 10.0), t / "s.svol.json");
  REQUIRE(run("reconstruct --in " + q(t / "s.svol.json") + " --from sdf --iso 0 --out " + q(t / "s.obj"), t.path())
              .code == 0);
  std::istringstream in(testutil::read_file(t / "s.obj"));
  std::string line;
  std::size_t vertices = 0;
  while (std::getline(in, line)) {
    if (line.rfind("v ", 0) != 0) continue;
    std::istringstream ls(line.substr(2));
    double x, y, z;
    ls >> x >> y >> z;
    CHECK(std::abs(std::hypot(x - c[0], y - c[1], z - c[2]) - 10.0) <= 0.5);
    ++vertices;
  }
  CHECK(vertices > 100);

  REQUIRE(run("reconstruct --in " + q(t / "s.svol.json") + " --from sdf --out " + q(t / "s.stl"), t.path()).code == 0);
  CHECK(run("reconstruct --in " + q(t / "s.svol.json") + " --from sdf --out " + q(t / "s.xyz"), t.path()).code == 2);
}

TEST_CASE("report over one case reproduces that case") {
  testutil::TempDir t("cli_rep");
  MetricsRecord rec{"case_0000", 0.9, 0.8, 3.0, 2.0, 0.5};
  testutil::write_file(t / "m.json", metrics_to_json({rec}));
  const auto r = run("report one=" + q(t / "m.json"), t.path());
  REQUIRE(r.code == 0);
  CHECK(r.out == format_report_table({{"one", aggregate({rec})}}));
  CHECK(r.out.find("0.9000±0.0000") != std::string::npos);
  CHECK(r.out.find("3.0000±0.0000") != std::string::npos);
}
