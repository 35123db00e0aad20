// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// Word-level corpus handling: vocabulary, encoding, and continuous batching
// for truncated BPTT.
//
// Text is whitespace tokenized; each newline contributes an <eos> token.
// Ids are dense: <unk> = 0, <eos> = 1, then training tokens in order of first
// occurrence.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace egru {

class Vocab {
 public:
  static constexpr std::int32_t kUnk = 0;
  static constexpr std::int32_t kEos = 1;
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kEosToken = "<eos>";

  Vocab();

  // Builds the vocabulary from training text. Throws DataError when the text
  // holds no tokens.
  static Vocab build(std::string_view train_text);
  static Vocab load(const std::string& path);
  // Parses the serialized form; `path` only labels error messages.
  static Vocab parse(std::string_view text, const std::string& path = "<vocab>");
  void save(const std::string& path) const;
  // One token per line, line number = id.
  std::string serialize() const;

  std::size_t size() const { return tokens_.size(); }
  std::int32_t id(std::string_view token) const;  // <unk> when unseen
  const std::string& token(std::int32_t id) const;
  bool contains(std::string_view token) const;

  std::vector<std::int32_t> encode(std::string_view text) const;
  std::string decode(std::span<const std::int32_t> ids) const;

 private:
  std::int32_t add(std::string_view token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

std::string read_text_file(const std::string& path);

// Row-major B x L token block.
struct Batch {
  std::size_t batch_size = 0;
  std::size_t length = 0;
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;

  std::span<const std::int32_t> input_row(std::size_t b) const {
    return {inputs.data() + b * length, length};
  }
  std::span<const std::int32_t> target_row(std::size_t b) const {
    return {targets.data() + b * length, length};
  }
};

// Splits the id stream into B contiguous streams of floor(len / B) tokens
// (the remainder is dropped) and walks them in segments of L. Stream b of
// one batch continues stream b of the previous batch, so recurrent state is
// carried across batches per stream. Each stream yields floor((S - 1) / L)
// full segments; a trailing partial segment is dropped.
class BatchCursor {
 public:
  BatchCursor(std::span<const std::int32_t> ids, std::size_t batch_size, std::size_t length);

  std::size_t num_batches() const { return num_batches_; }
  std::size_t stream_length() const { return stream_length_; }
  std::size_t position() const { return next_; }

  std::optional<Batch> next();
  void reset() { next_ = 0; }

 private:
  std::vector<std::int32_t> ids_;
  std::size_t batch_size_;
  std::size_t length_;
  std::size_t stream_length_;
  std::size_t num_batches_;
  std::size_t next_ = 0;
};

std::vector<Batch> continuous_batches(std::span<const std::int32_t> ids, std::size_t batch_size,
                                      std::size_t length);

}  // namespace egru
