#include "shapeseg/volgrid.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <json.hpp>

#include "shapeseg/errors.hpp"

namespace shapeseg {

namespace {

using nlohmann::json;

constexpr std::string_view kHeaderSuffix = ".svol.json";

void validate_geometry(const Dims3& dims, const Vec3& spacing) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] == 0) throw ValidationError("volume dims must be positive");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw ValidationError("volume spacing must be positive and finite");
    }
  }
}

void validate_mask_values(std::span<const float> data) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i] != 0.0f && data[i] != 1.0f) {
      throw ValidationError("binary mask value at element " + std::to_string(i) +
                            " is not 0 or 1");
    }
  }
}

std::filesystem::path payload_path_for(const std::filesystem::path& header_path) {
  std::string name = header_path.filename().string();
  if (name.size() > kHeaderSuffix.size() &&
      name.compare(name.size() - kHeaderSuffix.size(), kHeaderSuffix.size(), kHeaderSuffix) == 0) {
    name.resize(name.size() - kHeaderSuffix.size());
  }
  return header_path.parent_path() / (name + ".raw");
}

template <typename T, std::size_t N>
std::array<T, N> read_triple(const json& header, const char* field) {
  if (!header.contains(field)) throw FormatError(std::string("volume header: missing field '") + field + "'");
  const json& node = header.at(field);
  if (!node.is_array() || node.size() != N) {
    throw FormatError(std::string("volume header: field '") + field + "' must be an array of 3 numbers");
  }
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!node[i].is_number()) {
      throw FormatError(std::string("volume header: field '") + field + "' must be an array of 3 numbers");
    }
    if constexpr (std::is_integral_v<T>) {
      if (!node[i].is_number_integer() || node[i].get<long long>() <= 0) {
        throw FormatError(std::string("volume header: field '") + field + "' must hold positive integers");
      }
    }
    out[i] = node[i].get<T>();
  }
  return out;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace

VolumeGrid::VolumeGrid(Dims3 dims, Vec3 spacing, Vec3 origin, ElementKind kind,
                       std::vector<float> data)
    : dims_(dims), spacing_(spacing), origin_(origin), kind_(kind), data_(std::move(data)) {
  validate_geometry(dims_, spacing_);
  if (data_.size() != dims_[0] * dims_[1] * dims_[2]) {
    throw SizeError("volume data length " + std::to_string(data_.size()) + " does not match dims product " +
                    std::to_string(dims_[0] * dims_[1] * dims_[2]));
  }
  if (kind_ == ElementKind::BinaryMask) validate_mask_values(data_);
}

VolumeGrid VolumeGrid::zeros(Dims3 dims, Vec3 spacing, Vec3 origin, ElementKind kind) {
  return VolumeGrid(dims, spacing, origin, kind, std::vector<float>(dims[0] * dims[1] * dims[2], 0.0f));
}

SliceField::SliceField(std::size_t width, std::size_t height, SliceKind kind, std::vector<double> values)
    : width_(width), height_(height), kind_(kind), values_(std::move(values)) {
  if (width_ == 0 || height_ == 0) throw ShapeError("slice dims must be positive");
  if (values_.size() != width_ * height_) {
    throw SizeError("slice value count " + std::to_string(values_.size()) + " does not match " +
                    std::to_string(width_) + "x" + std::to_string(height_));
  }
  if (kind_ == SliceKind::Binary) {
    for (double v : values_) {
      if (v != 0.0 && v != 1.0) throw ValidationError("binary slice contains a value other than 0 or 1");
    }
  }
}

SliceField SliceField::zeros(std::size_t width, std::size_t height, SliceKind kind) {
  return SliceField(width, height, kind, std::vector<double>(width * height, 0.0));
}

VolumeGrid load_volume(const std::filesystem::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw FormatError("cannot open volume header " + header_path.string());
  json header;
  try {
    header = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("volume header " + header_path.string() + " is not valid JSON: " + e.what());
  }
  if (!header.is_object()) throw FormatError("volume header must be a JSON object");

  const auto dims = read_triple<std::size_t, 3>(header, "dims");
  const auto spacing = read_triple<double, 3>(header, "spacing");
  const auto origin = read_triple<double, 3>(header, "origin");

  if (!header.contains("kind") || !header["kind"].is_string()) {
    throw FormatError("volume header: missing field 'kind'");
  }
  const std::string kind_name = header["kind"].get<std::string>();
  ElementKind kind;
  if (kind_name == "mask") {
    kind = ElementKind::BinaryMask;
  } else if (kind_name == "f32") {
    kind = ElementKind::ScalarF32;
  } else {
    throw FormatError("volume header: field 'kind' must be \"mask\" or \"f32\", got \"" + kind_name + "\"");
  }
  if (!header.contains("data") || !header["data"].is_string()) {
    throw FormatError("volume header: missing field 'data'");
  }
  const auto payload = header_path.parent_path() / header["data"].get<std::string>();

  std::ifstream raw(payload, std::ios::binary);
  if (!raw) throw FormatError("volume header: field 'data' names unreadable file " + payload.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(raw)), std::istreambuf_iterator<char>());

  const std::size_t count = dims[0] * dims[1] * dims[2];
  const std::size_t elem = kind == ElementKind::BinaryMask ? 1 : 4;
  if (bytes.size() != count * elem) {
    throw SizeError("volume payload " + payload.string() + " holds " + std::to_string(bytes.size() / elem) +
                    " elements (" + std::to_string(bytes.size()) + " bytes), dims require " +
                    std::to_string(count));
  }

  std::vector<float> data(count);
  if (kind == ElementKind::BinaryMask) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto v = static_cast<unsigned char>(bytes[i]);
      if (v > 1) {
        throw ValidationError("binary mask payload element " + std::to_string(i) + " has value " +
                              std::to_string(v));
      }
      data[i] = static_cast<float>(v);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t word;
      std::memcpy(&word, bytes.data() + 4 * i, 4);
      data[i] = std::bit_cast<float>(to_le(word));
    }
  }
  return VolumeGrid(dims, spacing, origin, kind, std::move(data));
}

void save_volume(const VolumeGrid& grid, const std::filesystem::path& header_path) {
  const auto payload = payload_path_for(header_path);
  json header;
  header["dims"] = {grid.nx(), grid.ny(), grid.nz()};
  header["spacing"] = {grid.spacing()[0], grid.spacing()[1], grid.spacing()[2]};
  header["origin"] = {grid.origin()[0], grid.origin()[1], grid.origin()[2]};
  header["kind"] = grid.is_mask() ? "mask" : "f32";
  header["data"] = payload.filename().string();

  std::string bytes;
  if (grid.is_mask()) {
    bytes.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) bytes[i] = static_cast<char>(grid.data()[i] != 0.0f);
  } else {
    bytes.resize(grid.size() * 4);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const std::uint32_t word = to_le(std::bit_cast<std::uint32_t>(grid.data()[i]));
      std::memcpy(bytes.data() + 4 * i, &word, 4);
    }
  }

  std::ofstream raw(payload, std::ios::binary | std::ios::trunc);
  if (!raw) throw IoError("cannot write volume payload " + payload.string());
  raw.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!raw) throw IoError("failed writing volume payload " + payload.string());

  std::ofstream out(header_path, std::ios::trunc);
  if (!out) throw IoError("cannot write volume header " + header_path.string());
  out << header.dump(2) << '\n';
  if (!out) throw IoError("failed writing volume header " + header_path.string());
}

SliceField extract_slice(const VolumeGrid& grid, std::size_t z) {
  if (z >= grid.nz()) {
    throw IndexError("slice index " + std::to_string(z) + " out of range for nz=" + std::to_string(grid.nz()));
  }
  const std::size_t plane = grid.nx() * grid.ny();
  const auto src = grid.data().subspan(z * plane, plane);
  std::vector<double> values(src.begin(), src.end());
  return SliceField(grid.nx(), grid.ny(), grid.is_mask() ? SliceKind::Binary : SliceKind::Real,
                    std::move(values));
}

VolumeGrid stack_slices(std::span<const SliceField> slices, Vec3 spacing, Vec3 origin) {
  if (slices.empty()) throw ArgumentError("stack_slices needs at least one slice");
  const auto& first = slices.front();
  std::vector<float> data;
  data.reserve(first.size() * slices.size());
  for (const auto& s : slices) {
    if (s.width() != first.width() || s.height() != first.height() || s.kind() != first.kind()) {
      throw ShapeError("stack_slices: slices differ in dims or kind");
    }
    for (double v : s.values()) data.push_back(static_cast<float>(v));
  }
  return VolumeGrid({first.width(), first.height(), slices.size()}, spacing, origin,
                    first.is_binary() ? ElementKind::BinaryMask : ElementKind::ScalarF32, std::move(data));
}

}  // namespace shapeseg
