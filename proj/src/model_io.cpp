#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "shapeseg/errors.hpp"
#include "shapeseg/model.hpp"

namespace shapeseg {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'C', 'F', 'X', '1'};

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

void put_u32(std::string& out, std::uint32_t v) {
  v = to_le(v);
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return to_le(v);
}

json manifest(const ModelParams& params) {
  json header;
  const NetConfig& c = params.config;
  header["config"] = {{"depth", c.depth},
                      {"base_channels", c.base_channels},
                      {"width", c.width},
                      {"height", c.height},
                      {"seed", c.seed}};
  json tensors = json::array();
  for (const auto& l : params.layers) {
    tensors.push_back({{"name", l.name + ".weight"},
                       {"shape", {l.out_channels, l.in_channels, l.kernel, l.kernel}}});
    tensors.push_back({{"name", l.name + ".bias"}, {"shape", {l.out_channels}}});
  }
  header["tensors"] = std::move(tensors);
  header["parameter_count"] = params.parameter_count();
  return header;
}

}  // namespace

void save_model(const ModelParams& params, const std::filesystem::path& path) {
  const std::string header = manifest(params).dump();
  std::string bytes(kMagic, 4);
  put_u32(bytes, static_cast<std::uint32_t>(header.size()));
  bytes += header;
  for (const auto& l : params.layers) {
    for (const auto* values : {&l.weight, &l.bias}) {
      for (double v : *values) put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model file " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing model file " + path.string());
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("model file " + path.string() + " does not start with CFX1");
  }
  const std::uint32_t header_len = get_u32(bytes.data() + 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(header_len)) throw FormatError("model header is truncated");

  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model header is not valid JSON: ") + e.what());
  }

  ModelParams params;
  try {
    const json& c = header.at("config");
    params.config.depth = c.at("depth").get<int>();
    params.config.base_channels = c.at("base_channels").get<int>();
    params.config.width = c.at("width").get<std::size_t>();
    params.config.height = c.at("height").get<std::size_t>();
    params.config.seed = c.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model header: bad config: ") + e.what());
  }
  params.layers = layer_layout(params.config);

  const json& tensors = header.contains("tensors") ? header["tensors"] : json();
  if (!tensors.is_array() || tensors.size() != 2 * params.layers.size()) {
    throw FormatError("model header: tensor manifest does not match the architecture");
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    const json& w = tensors[2 * l];
    const json& b = tensors[2 * l + 1];
    const std::vector<std::size_t> wshape{layer.out_channels, layer.in_channels, layer.kernel, layer.kernel};
    const std::vector<std::size_t> bshape{layer.out_channels};
    if (w.value("name", "") != layer.name + ".weight" || w.value("shape", std::vector<std::size_t>{}) != wshape ||
        b.value("name", "") != layer.name + ".bias" || b.value("shape", std::vector<std::size_t>{}) != bshape) {
      throw FormatError("model header: tensor entry for layer '" + layer.name + "' does not match the architecture");
    }
  }

  const std::size_t expected = 8 + header_len + 4 * params.parameter_count();
  if (bytes.size() != expected) {
    throw SizeError("model file " + path.string() + " has " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(expected));
  }
  const char* p = bytes.data() + 8 + header_len;
  for (auto& l : params.layers) {
    for (auto* values : {&l.weight, &l.bias}) {
      for (double& v : *values) {
        v = static_cast<double>(std::bit_cast<float>(get_u32(p)));
        p += 4;
      }
    }
  }
  if (!params.all_finite()) throw ValidationError("model file contains non-finite parameters");
  return params;
}

}  // namespace shapeseg
