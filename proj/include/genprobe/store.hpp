#pragma once

// Weight container and run-manifest persistence.
//
// Container layout (all integers little-endian):
//
//   offset 0   4 bytes   magic "GPRB"
//   offset 4   u32       format version (1)
//   offset 8   u64       index_len, byte length of the JSON index
//   offset 16  index_len UTF-8 JSON object: name -> {dtype, shape, offset, nbytes}
//   ...        payload   raw little-endian tensor data, row-major
//
// `offset` is relative to the start of the payload. Writers emit the index
// sorted by tensor name with the payload laid out in the same order and the
// JSON in compact form, so identical tensor sets give byte-identical files.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "genprobe/error.hpp"
#include "genprobe/spectra.hpp"

namespace genprobe::store {

inline constexpr std::array<char, 4> kMagic = {'G', 'P', 'R', 'B'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 16;

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(p[i]) << (8 * i);
  return value;
}

inline std::string_view dtype_name(DType d) { return d == DType::F32 ? "f32" : "f64"; }

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed for '" + path.string() + "'");
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot create '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_container(std::span<const WeightTensor> tensors) {
  std::vector<const WeightTensor*> sorted;
  sorted.reserve(tensors.size());
  for (const auto& t : tensors) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->name() < b->name(); });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->name() == sorted[i - 1]->name()) {
      throw Error(ErrorCode::DuplicateName, "tensor '" + sorted[i]->name() + "' appears twice");
    }
  }

  nlohmann::json index = nlohmann::json::object();
  std::vector<std::uint8_t> payload;
  for (const auto* t : sorted) {
    const std::size_t nbytes = element_size(t->dtype()) * t->size();
    index[t->name()] = {{"dtype", detail::dtype_name(t->dtype())},
                        {"shape", t->shape()},
                        {"offset", payload.size()},
                        {"nbytes", nbytes}};
    for (double v : t->data()) {
      if (t->dtype() == DType::F32) {
        detail::put_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        detail::put_le(payload, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  const std::string index_text = index.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + index_text.size() + payload.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  detail::put_le(out, kVersion);
  detail::put_le(out, static_cast<std::uint64_t>(index_text.size()));
  out.insert(out.end(), index_text.begin(), index_text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

// Parses and validates a container image. Tensors come back in index (name)
// order. Every malformed input maps to a typed Error.
inline std::vector<WeightTensor> decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= kMagic.size() && !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::BadMagic, "not a GPRB container");
  }
  if (bytes.size() < kHeaderSize) throw Error(ErrorCode::TruncatedPayload, "file shorter than header");
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kVersion) throw Error(ErrorCode::UnsupportedVersion, "version " + std::to_string(version));
  const auto index_len = detail::get_le<std::uint64_t>(bytes.data() + 8);
  if (index_len > bytes.size() - kHeaderSize) throw Error(ErrorCode::TruncatedPayload, "index extends past end of file");

  const auto* index_begin = reinterpret_cast<const char*>(bytes.data() + kHeaderSize);
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(index_begin, index_begin + index_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptIndex, e.what());
  }
  if (!index.is_object()) throw Error(ErrorCode::CorruptIndex, "index is not a JSON object");

  const std::uint8_t* payload = bytes.data() + kHeaderSize + index_len;
  const std::uint64_t payload_size = bytes.size() - kHeaderSize - index_len;

  struct Extent {
    std::uint64_t begin, end;
    std::string name;
  };
  std::vector<Extent> extents;
  std::vector<WeightTensor> out;
  out.reserve(index.size());
  for (const auto& [name, entry] : index.items()) {
    const auto corrupt = [&](const std::string& why) { return Error(ErrorCode::CorruptIndex, name + ": " + why); };
    if (!entry.is_object()) throw corrupt("entry is not an object");
    const auto dtype_it = entry.find("dtype");
    const auto shape_it = entry.find("shape");
    const auto offset_it = entry.find("offset");
    const auto nbytes_it = entry.find("nbytes");
    if (dtype_it == entry.end() || shape_it == entry.end() || offset_it == entry.end() || nbytes_it == entry.end()) {
      throw corrupt("missing field");
    }
    DType dtype;
    if (*dtype_it == "f32") dtype = DType::F32;
    else if (*dtype_it == "f64") dtype = DType::F64;
    else throw corrupt("unknown dtype");
    if (!shape_it->is_array() || shape_it->empty()) throw corrupt("shape must be a non-empty array");
    if (!offset_it->is_number_unsigned() || !nbytes_it->is_number_unsigned()) throw corrupt("bad offset/nbytes");

    std::vector<std::size_t> shape;
    std::uint64_t count = 1;
    for (const auto& dim : *shape_it) {
      if (!dim.is_number_unsigned() || dim.get<std::uint64_t>() == 0) throw corrupt("shape entries must be positive");
      const auto d = dim.get<std::uint64_t>();
      if (count > std::numeric_limits<std::uint64_t>::max() / d) throw corrupt("shape overflows");
      count *= d;
      shape.push_back(static_cast<std::size_t>(d));
    }
    const std::uint64_t esize = element_size(dtype);
    if (count > std::numeric_limits<std::uint64_t>::max() / esize) throw corrupt("shape overflows");
    const auto offset = offset_it->get<std::uint64_t>();
    const auto nbytes = nbytes_it->get<std::uint64_t>();
    if (nbytes != count * esize) throw corrupt("nbytes does not match dtype and shape");
    if (offset > payload_size || nbytes > payload_size - offset) {
      throw Error(ErrorCode::TruncatedPayload, name + ": tensor data extends past end of file");
    }
    extents.push_back({offset, offset + nbytes, name});

    std::vector<double> data(static_cast<std::size_t>(count));
    const std::uint8_t* p = payload + offset;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (dtype == DType::F32) {
        data[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p + 4 * i));
      } else {
        data[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(p + 8 * i));
      }
    }
    out.emplace_back(name, std::move(shape), std::move(data), dtype);
  }

  std::sort(extents.begin(), extents.end(), [](const auto& a, const auto& b) { return a.begin < b.begin; });
  for (std::size_t i = 1; i < extents.size(); ++i) {
    if (extents[i].begin < extents[i - 1].end) {
      throw Error(ErrorCode::CorruptIndex, extents[i].name + " overlaps " + extents[i - 1].name);
    }
  }
  return out;
}

inline void write_container(std::span<const WeightTensor> tensors, const std::filesystem::path& path) {
  detail::write_file(path, encode_container(tensors));
}

inline std::vector<WeightTensor> read_container(const std::filesystem::path& path) {
  return decode_container(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Run manifest: JSON lines, one RunRecord per line.

struct RunRecord {
  std::string model_id;
  std::uint64_t epoch = 0;
  std::string optimizer;
  std::string dataset;
  std::map<std::string, std::string> hyperparams;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::string weights_path;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline nlohmann::json to_json(const RunRecord& r) {
  return {{"model_id", r.model_id},
          {"epoch", r.epoch},
          {"optimizer", r.optimizer},
          {"dataset", r.dataset},
          {"hyperparams", r.hyperparams},
          {"train_accuracy", r.train_accuracy},
          {"test_accuracy", r.test_accuracy},
          {"weights_path", r.weights_path}};
}

inline RunRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  RunRecord r;
  r.model_id = j.at("model_id").get<std::string>();
  if (!j.at("epoch").is_number_unsigned()) throw std::invalid_argument("epoch must be a non-negative integer");
  r.epoch = j.at("epoch").get<std::uint64_t>();
  r.optimizer = j.value("optimizer", std::string{});
  r.dataset = j.value("dataset", std::string{});
  if (auto it = j.find("hyperparams"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw std::invalid_argument("hyperparams must be an object");
    for (const auto& [k, v] : it->items()) r.hyperparams[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  r.train_accuracy = j.at("train_accuracy").get<double>();
  r.test_accuracy = j.at("test_accuracy").get<double>();
  r.weights_path = j.at("weights_path").get<std::string>();
  for (double acc : {r.train_accuracy, r.test_accuracy}) {
    if (!std::isfinite(acc) || acc < 0.0 || acc > 100.0) throw std::invalid_argument("accuracy must lie in [0, 100]");
  }
  return r;
}

inline std::vector<RunRecord> parse_manifest(std::istream& in) {
  std::vector<RunRecord> records;
  std::set<std::pair<std::string, std::uint64_t>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    RunRecord r;
    try {
      r = record_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.emplace(r.model_id, r.epoch).second) {
      throw Error(ErrorCode::DuplicateKey, "line " + std::to_string(line_no) + ": (" + r.model_id + ", " +
                                               std::to_string(r.epoch) + ") already present");
    }
    records.push_back(std::move(r));
  }

  // Accuracies are either all fractions (<= 1) or all percentages (> 1).
  bool any_fraction = false, any_percent = false;
  for (const auto& r : records) {
    for (double acc : {r.train_accuracy, r.test_accuracy}) (acc <= 1.0 ? any_fraction : any_percent) = true;
  }
  if (any_fraction && any_percent) throw Error(ErrorCode::ScaleMixing, "manifest mixes fraction and percent accuracies");
  return records;
}

inline std::vector<RunRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open manifest '" + path.string() + "'");
  return parse_manifest(in);
}

// Appends one line with a single write so concurrent readers never observe a
// partial record. One writer per file.
inline void append_record(const std::filesystem::path& path, const RunRecord& r) {
  const std::string line = to_json(r).dump() + "\n";
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::IoError, "cannot open manifest '" + path.string() + "' for append");
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "append failed for '" + path.string() + "'");
}

// Relative weight paths are resolved against the manifest's directory.
inline std::filesystem::path resolve_weights(const std::filesystem::path& manifest, const RunRecord& r) {
  std::filesystem::path p(r.weights_path);
  if (p.is_absolute()) return p;
  return manifest.parent_path() / p;
}

}  // namespace genprobe::store
