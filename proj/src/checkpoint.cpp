// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

#include "egru/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "egru/errors.hpp"
#include "json.hpp"

namespace egru {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'E', 'G', 'R', 'U', 'C', 'K', 'P', 'T'};
constexpr int kFormatVersion = 1;

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int k = 0; k < bytes; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int k = 0; k < bytes; ++k) v |= static_cast<std::uint64_t>(p[k]) << (8 * k);
  return v;
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

const StoredTensor& TensorFile::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw DataError("checkpoint has no tensor '" + name + "'");
}

bool TensorFile::contains(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

StoredTensor pack_floats(const std::string& name, std::vector<std::size_t> shape,
                         const std::vector<double>& row_major, bool as_f64) {
  if (element_count(shape) != row_major.size()) throw ShapeError("pack_floats: shape/value mismatch for " + name);
  StoredTensor t{name, as_f64 ? "f64" : "f32", std::move(shape), {}};
  t.bytes.reserve(row_major.size() * (as_f64 ? 8 : 4));
  for (double v : row_major) {
    if (as_f64) {
      put_le(t.bytes, std::bit_cast<std::uint64_t>(v), 8);
    } else {
      put_le(t.bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    }
  }
  return t;
}

std::vector<double> unpack_floats(const StoredTensor& t) {
  const std::size_t n = element_count(t.shape);
  const int width = t.dtype == "f64" ? 8 : t.dtype == "f32" ? 4 : 0;
  if (width == 0) throw DataError("tensor '" + t.name + "' has dtype " + t.dtype + ", expected f32/f64");
  if (t.bytes.size() != n * static_cast<std::size_t>(width)) {
    throw DataError("tensor '" + t.name + "' payload size does not match its shape");
  }
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto bits = get_le(t.bytes.data() + k * width, width);
    out[k] = width == 8 ? std::bit_cast<double>(bits)
                        : static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(bits)));
  }
  return out;
}

StoredTensor pack_bits(const std::string& name, std::vector<std::size_t> shape,
                       const std::vector<std::uint8_t>& row_major) {
  if (element_count(shape) != row_major.size()) throw ShapeError("pack_bits: shape/value mismatch for " + name);
  StoredTensor t{name, "bitset", std::move(shape), {}};
  t.bytes.assign((row_major.size() + 7) / 8, 0);
  for (std::size_t k = 0; k < row_major.size(); ++k) {
    if (row_major[k]) t.bytes[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
  }
  return t;
}

std::vector<std::uint8_t> unpack_bits(const StoredTensor& t) {
  if (t.dtype != "bitset") throw DataError("tensor '" + t.name + "' is not a bitset");
  const std::size_t n = element_count(t.shape);
  if (t.bytes.size() != (n + 7) / 8) throw DataError("bitset '" + t.name + "' has wrong payload size");
  std::vector<std::uint8_t> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = (t.bytes[k / 8] >> (k % 8)) & 1u;
  return out;
}

void write_tensor_file(const std::string& path, const TensorFile& file) {
  json header;
  try {
    header = json::parse(file.metadata_json);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  if (!header.is_object()) throw UsageError("checkpoint metadata must be a JSON object");
  json index = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : file.tensors) {
    index.push_back({{"name", t.name},
                     {"dtype", t.dtype},
                     {"shape", t.shape},
                     {"offset", offset},
                     {"nbytes", t.bytes.size()}});
    offset += t.bytes.size();
  }
  header["tensors"] = std::move(index);
  const std::string text = header.dump();

  std::vector<std::uint8_t> prefix(kMagic, kMagic + 8);
  put_le(prefix, text.size(), 8);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path);
  f.write(reinterpret_cast<const char*>(prefix.data()), static_cast<std::streamsize>(prefix.size()));
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : file.tensors) {
    f.write(reinterpret_cast<const char*>(t.bytes.data()), static_cast<std::streamsize>(t.bytes.size()));
  }
  if (!f) throw IoError("failed writing checkpoint " + path);
}

TensorFile read_tensor_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (data.size() < 16 || std::memcmp(data.data(), kMagic, 8) != 0) {
    throw DataError(path + " is not a checkpoint file");
  }
  const std::uint64_t header_len = get_le(data.data() + 8, 8);
  if (16 + header_len > data.size()) throw DataError(path + ": truncated header");
  json header;
  try {
    header = json::parse(data.begin() + 16, data.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::parse_error& e) {
    throw DataError(path + ": malformed header: " + e.what());
  }
  const std::size_t payload = 16 + header_len;
  TensorFile out;
  for (const auto& entry : header.at("tensors")) {
    StoredTensor t;
    t.name = entry.at("name").get<std::string>();
    t.dtype = entry.at("dtype").get<std::string>();
    t.shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
    if (payload + offset + nbytes > data.size()) throw DataError(path + ": tensor '" + t.name + "' truncated");
    t.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(payload + offset),
                   data.begin() + static_cast<std::ptrdiff_t>(payload + offset + nbytes));
    out.tensors.push_back(std::move(t));
  }
  header.erase("tensors");
  out.metadata_json = header.dump();
  return out;
}

namespace {

// Row-major values of a parameter slot. Masked matrices are stored
// column-major; the embedding/decoder buffers already are row-major V x E.
template <typename T>
std::vector<double> slot_row_major(const ParamSlot<T>& slot) {
  std::vector<double> out;
  if (slot.matrix) {
    for (T v : slot.matrix->dense().to_row_major()) out.push_back(v);
  } else {
    out.assign(slot.value.begin(), slot.value.end());
  }
  return out;
}

template <typename T>
std::vector<std::size_t> slot_shape(const ParamSlot<T>& slot) {
  if (slot.cols == 1 && !slot.matrix) return {slot.rows};
  return {slot.rows, slot.cols};
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const LanguageModel<T>& model, const CheckpointMeta& meta) {
  json header;
  header["format"] = "egru-checkpoint";
  header["version"] = kFormatVersion;
  header["code_version"] = kCodeVersion;
  header["config"] = json::parse(config_to_json(meta.config));
  header["vocab_size"] = model.config().vocab_size;
  header["seed"] = meta.seed;
  header["step"] = meta.step;
  header["epoch"] = meta.epoch;
  header["vocab"] = meta.vocab_text;

  TensorFile file;
  file.metadata_json = header.dump();
  const bool f64 = sizeof(T) == 8;
  for (const auto& slot : const_cast<LanguageModel<T>&>(model).parameters()) {
    file.tensors.push_back(pack_floats(slot.name, slot_shape(slot), slot_row_major(slot), f64));
    if (slot.matrix) {
      const auto& m = *slot.matrix;
      std::vector<std::uint8_t> bits(m.size());
      for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) bits[i * m.cols() + j] = m.kept(i, j);
      }
      file.tensors.push_back(pack_bits(slot.name + ".mask", {m.rows(), m.cols()}, bits));
    }
  }
  write_tensor_file(path, file);
}

namespace {

CheckpointMeta parse_meta(const TensorFile& file, const std::string& path) {
  const json header = json::parse(file.metadata_json);
  if (header.value("format", "") != "egru-checkpoint") throw DataError(path + ": not an egru checkpoint");
  if (header.value("version", 0) != kFormatVersion) throw DataError(path + ": unsupported checkpoint version");
  CheckpointMeta meta;
  try {
    meta.config = config_from_json_text(header.at("config").dump());
  } catch (const ConfigError& e) {
    throw DataError(path + ": bad stored config: " + e.what());
  }
  meta.vocab_size = header.at("vocab_size").get<std::size_t>();
  meta.seed = header.at("seed").get<std::uint64_t>();
  meta.step = header.at("step").get<std::uint64_t>();
  meta.epoch = header.at("epoch").get<int>();
  meta.vocab_text = header.value("vocab", "");
  return meta;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  return parse_meta(read_tensor_file(path), path);
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  const TensorFile file = read_tensor_file(path);
  CheckpointMeta meta = parse_meta(file, path);

  Rng rng(0);
  LanguageModel<T> model(meta.config.lm_config(meta.vocab_size), rng);
  for (auto& slot : model.parameters()) {
    const auto& stored = file.find(slot.name);
    if (stored.shape != slot_shape(slot)) throw DataError(path + ": shape mismatch for " + slot.name);
    const auto values = unpack_floats(stored);
    if (slot.matrix) {
      auto& m = *slot.matrix;
      std::vector<T> row_major(values.begin(), values.end());
      DenseMatrix<T> dense = DenseMatrix<T>::from_row_major(m.rows(), m.cols(), std::span<const T>(row_major));
      const auto bits = unpack_bits(file.find(slot.name + ".mask"));
      std::vector<std::uint8_t> mask(m.size());
      for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) mask[j * m.rows() + i] = bits[i * m.cols() + j];
      }
      m = MaskedMatrix<T>(std::move(dense), std::move(mask));
    } else {
      for (std::size_t k = 0; k < values.size(); ++k) slot.value[k] = static_cast<T>(values[k]);
    }
  }
  return {std::move(model), meta};
}

template void save_checkpoint(const std::string&, const LanguageModel<float>&, const CheckpointMeta&);
template void save_checkpoint(const std::string&, const LanguageModel<double>&, const CheckpointMeta&);
template LoadedCheckpoint<float> load_checkpoint(const std::string&);
template LoadedCheckpoint<double> load_checkpoint(const std::string&);

}  // namespace egru
