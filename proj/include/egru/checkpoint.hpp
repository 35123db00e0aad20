// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint container.
//
//   bytes 0..7   magic "EGRUCKPT"
//   bytes 8..15  header length H (uint64, little-endian)
//   next H bytes UTF-8 JSON header
//   remainder    payload
//
// The header holds free-form metadata plus a "tensors" array of
// {name, dtype, shape, offset, nbytes}; offsets are relative to the payload
// start. dtype "f32"/"f64" payloads are row-major little-endian IEEE values;
// dtype "bitset" payloads are row-major bits, least significant bit first.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egru/config.hpp"
#include "egru/language_model.hpp"

namespace egru {

struct StoredTensor {
  std::string name;
  std::string dtype;  // "f32", "f64" or "bitset"
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> bytes;
};

struct TensorFile {
  std::string metadata_json = "{}";  // object; "tensors" is filled on write
  std::vector<StoredTensor> tensors;

  const StoredTensor& find(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_tensor_file(const std::string& path, const TensorFile& file);
TensorFile read_tensor_file(const std::string& path);

StoredTensor pack_floats(const std::string& name, std::vector<std::size_t> shape,
                         const std::vector<double>& row_major, bool as_f64);
std::vector<double> unpack_floats(const StoredTensor& t);
StoredTensor pack_bits(const std::string& name, std::vector<std::size_t> shape,
                       const std::vector<std::uint8_t>& row_major);
std::vector<std::uint8_t> unpack_bits(const StoredTensor& t);

struct CheckpointMeta {
  RunConfig config;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  int epoch = 0;
  std::size_t vocab_size = 0;
  std::string vocab_text;  // serialized vocabulary; may be empty
};

template <typename T>
void save_checkpoint(const std::string& path, const LanguageModel<T>& model, const CheckpointMeta& meta);

template <typename T>
struct LoadedCheckpoint {
  LanguageModel<T> model;
  CheckpointMeta meta;
};

// Values are converted to T whatever the stored element type.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path);

CheckpointMeta read_checkpoint_meta(const std::string& path);

}  // namespace egru
