#include "shapeseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "shapeseg/errors.hpp"
#include "shapeseg/rng.hpp"

namespace shapeseg {

namespace {

using nlohmann::json;

constexpr double kMargin = 2.0;

std::vector<float> box_filter3(const VolumeGrid& mask) {
  const std::size_t nx = mask.nx();
  const std::size_t ny = mask.ny();
  const std::size_t nz = mask.nz();
  std::vector<float> out(mask.size());
  for (std::size_t z = 0; z < nz; ++z) {
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t x = 0; x < nx; ++x) {
        double sum = 0.0;
        int n = 0;
        for (std::size_t zz = z == 0 ? 0 : z - 1; zz <= std::min(nz - 1, z + 1); ++zz) {
          for (std::size_t yy = y == 0 ? 0 : y - 1; yy <= std::min(ny - 1, y + 1); ++yy) {
            for (std::size_t xx = x == 0 ? 0 : x - 1; xx <= std::min(nx - 1, x + 1); ++xx) {
              sum += mask.at(xx, yy, zz);
              ++n;
            }
          }
        }
        out[mask.index(x, y, z)] = static_cast<float>(sum / n);
      }
    }
  }
  return out;
}

void write_case(const PhantomSpec& spec, std::size_t index, const std::filesystem::path& dir) {
  const auto c = gen_case(spec, index);
  const std::string id = case_id(index);
  save_volume(c.image, dir / (id + "_image.svol.json"));
  save_volume(c.mask, dir / (id + "_mask.svol.json"));
}

}  // namespace

ShapeFamily parse_shape_family(const std::string& name) {
  if (name == "sphere") return ShapeFamily::Sphere;
  if (name == "ellipsoid") return ShapeFamily::Ellipsoid;
  if (name == "two-lobe" || name == "two_lobe") return ShapeFamily::TwoLobe;
  throw ConfigError("unknown shape family '" + name + "' (expected sphere, ellipsoid or two-lobe)");
}

std::string to_string(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::Sphere:
      return "sphere";
    case ShapeFamily::Ellipsoid:
      return "ellipsoid";
    case ShapeFamily::TwoLobe:
      return "two-lobe";
  }
  return "unknown";
}

bool Ellipsoid::contains(const Vec3& p) const {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double d = (p[a] - center[a]) / semi_axes[a];
    s += d * d;
  }
  return s <= 1.0;
}

bool PhantomShape::contains(const Vec3& p) const {
  return std::any_of(lobes.begin(), lobes.end(), [&](const Ellipsoid& e) { return e.contains(p); });
}

void PhantomSpec::validate() const {
  if (count < 1) throw ConfigError("phantom count must be >= 1");
  if (size_multiple < 1 || size % size_multiple != 0) {
    throw ConfigError("phantom size " + std::to_string(size) + " must be a multiple of " +
                      std::to_string(size_multiple));
  }
  // Room for a shape of a few voxels plus the 2-voxel margin on both sides.
  if (size < 12) throw ConfigError("phantom size must be >= 12");
  if (slices < 10) throw ConfigError("phantom slice count must be >= 10");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise sigma must be >= 0");
  if (!std::isfinite(contrast)) throw ConfigError("contrast must be finite");
  for (double s : spacing) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("phantom spacing must be positive");
  }
}

PhantomShape sample_shape(const PhantomSpec& spec, std::size_t index) {
  Pcg32 rng(spec.seed, 2 * static_cast<std::uint64_t>(index) + 1);
  const double cx = (static_cast<double>(spec.size) - 1.0) / 2.0;
  const double cz = (static_cast<double>(spec.slices) - 1.0) / 2.0;
  // Largest semi-axis that keeps a centered lobe inside the margin.
  const double hx = cx - kMargin - 0.5;
  const double hz = cz - kMargin - 0.5;

  auto jitter = [&](double room) { return rng.uniform(-0.5, 0.5) * std::max(0.0, room); };

  PhantomShape shape;
  switch (spec.family) {
    case ShapeFamily::Sphere: {
      const double r = rng.uniform(0.6, 0.9) * std::min(hx, hz);
      shape.lobes.push_back({{cx + jitter(hx - r), cx + jitter(hx - r), cz + jitter(hz - r)}, {r, r, r}});
      break;
    }
    case ShapeFamily::Ellipsoid: {
      const Vec3 s{rng.uniform(0.55, 0.9) * hx, rng.uniform(0.55, 0.9) * hx, rng.uniform(0.6, 0.95) * hz};
      shape.lobes.push_back({{cx + jitter(hx - s[0]), cx + jitter(hx - s[1]), cz + jitter(hz - s[2])}, s});
      break;
    }
    case ShapeFamily::TwoLobe: {
      const double offset_scale = rng.uniform(0.5, 0.8);
      const double zc = cz + jitter(0.1 * hz);
      for (int side : {-1, 1}) {
        const Vec3 s{rng.uniform(0.35, 0.5) * hx, rng.uniform(0.55, 0.85) * hx, rng.uniform(0.6, 0.85) * hz};
        const double yc = cx + jitter(0.2 * (hx - s[1]));
        shape.lobes.push_back({{cx + side * offset_scale * s[0], yc, zc}, s});
      }
      break;
    }
  }
  return shape;
}

void check_margin(const PhantomShape& shape, Dims3 dims) {
  for (const auto& e : shape.lobes) {
    for (int a = 0; a < 3; ++a) {
      const double hi = static_cast<double>(dims[a]) - 1.0 - kMargin;
      if (!(e.semi_axes[a] > 0.0) || e.center[a] - e.semi_axes[a] < kMargin || e.center[a] + e.semi_axes[a] > hi) {
        throw ConfigError("phantom shape does not fit inside the grid with a 2-voxel margin");
      }
    }
  }
}

VolumeGrid rasterize_shape(const PhantomShape& shape, Dims3 dims, Vec3 spacing) {
  std::vector<float> data(dims[0] * dims[1] * dims[2]);
  std::size_t i = 0;
  for (std::size_t z = 0; z < dims[2]; ++z) {
    for (std::size_t y = 0; y < dims[1]; ++y) {
      for (std::size_t x = 0; x < dims[0]; ++x, ++i) {
        const Vec3 p{static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)};
        data[i] = shape.contains(p) ? 1.0f : 0.0f;
      }
    }
  }
  return VolumeGrid(dims, spacing, {0.0, 0.0, 0.0}, ElementKind::BinaryMask, std::move(data));
}

PhantomCase gen_case(const PhantomSpec& spec, std::size_t index) {
  spec.validate();
  const Dims3 dims{spec.size, spec.size, spec.slices};
  const PhantomShape shape = sample_shape(spec, index);
  check_margin(shape, dims);
  VolumeGrid mask = rasterize_shape(shape, dims, spec.spacing);

  std::vector<float> image = box_filter3(mask);
  Pcg32 noise(spec.seed ^ 0x9e3779b97f4a7c15ULL, 2 * static_cast<std::uint64_t>(index) + 2);
  for (float& v : image) {
    double value = spec.contrast * static_cast<double>(v);
    if (spec.noise_sigma > 0.0) value += spec.noise_sigma * noise.normal();
    v = static_cast<float>(value);
  }
  VolumeGrid img(dims, spec.spacing, {0.0, 0.0, 0.0}, ElementKind::ScalarF32, std::move(image));
  return {std::move(img), std::move(mask)};
}

VolumeGrid analytic_sphere_sdf(Dims3 dims, Vec3 spacing, Vec3 center, double radius) {
  std::vector<float> data(dims[0] * dims[1] * dims[2]);
  std::size_t i = 0;
  for (std::size_t z = 0; z < dims[2]; ++z) {
    for (std::size_t y = 0; y < dims[1]; ++y) {
      for (std::size_t x = 0; x < dims[0]; ++x, ++i) {
        const double dx = static_cast<double>(x) * spacing[0] - center[0];
        const double dy = static_cast<double>(y) * spacing[1] - center[1];
        const double dz = static_cast<double>(z) * spacing[2] - center[2];
        data[i] = static_cast<float>(std::sqrt(dx * dx + dy * dy + dz * dz) - radius);
      }
    }
  }
  return VolumeGrid(dims, spacing, {0.0, 0.0, 0.0}, ElementKind::ScalarF32, std::move(data));
}

std::string case_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%04zu", index);
  return buf;
}

std::array<std::size_t, 3> split_counts(std::size_t count, std::array<double, 3> fractions) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("split fractions must be nonnegative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  const auto n = static_cast<double>(count);
  const auto train = static_cast<std::size_t>(std::llround(fractions[0] * n));
  const auto val = std::min(count - std::min(train, count), static_cast<std::size_t>(std::llround(fractions[1] * n)));
  const std::size_t train_c = std::min(train, count);
  return {train_c, val, count - train_c - val};
}

DatasetManifest gen_dataset(const PhantomSpec& spec, std::array<double, 3> fractions,
                            const std::filesystem::path& out_dir, unsigned jobs) {
  spec.validate();
  const auto counts = split_counts(spec.count, fractions);
  const std::array<const char*, 3> names{"train", "val", "test"};

  DatasetManifest manifest;
  std::array<std::vector<std::string>*, 3> lists{&manifest.train, &manifest.val, &manifest.test};
  std::vector<std::pair<std::size_t, std::filesystem::path>> work;
  std::size_t index = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto dir = out_dir / names[s];
    std::filesystem::create_directories(dir);
    for (std::size_t k = 0; k < counts[s]; ++k, ++index) {
      lists[s]->push_back(case_id(index));
      work.emplace_back(index, dir);
    }
  }

  // Each case writes its own files, so the split of work over threads cannot
  // change any output byte.
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(work.size())));
  if (jobs == 1) {
    for (const auto& [i, dir] : work) write_case(spec, i, dir);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(jobs);
    for (unsigned t = 0; t < jobs; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t w = t; w < work.size(); w += jobs) write_case(spec, work[w].first, work[w].second);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  json doc;
  doc["seed"] = spec.seed;
  doc["count"] = spec.count;
  doc["size"] = spec.size;
  doc["slices"] = spec.slices;
  doc["family"] = to_string(spec.family);
  doc["contrast"] = spec.contrast;
  doc["noise_sigma"] = spec.noise_sigma;
  doc["spacing"] = spec.spacing;
  doc["fractions"] = fractions;
  doc["splits"] = {{"train", manifest.train}, {"val", manifest.val}, {"test", manifest.test}};
  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (out_dir / "manifest.json").string());
  out << doc.dump(2) << '\n';
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("cannot open manifest " + manifest_path.string());
  DatasetManifest m;
  try {
    const json doc = json::parse(in);
    const json& splits = doc.at("splits");
    m.train = splits.at("train").get<std::vector<std::string>>();
    m.val = splits.at("val").get<std::vector<std::string>>();
    m.test = splits.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace shapeseg
