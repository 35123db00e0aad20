// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

#include "egru/corpus.hpp"

#include <fstream>
#include <sstream>

#include "egru/errors.hpp"

namespace egru {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

// Calls on_token for each whitespace-separated token and on_newline per '\n'.
template <typename Token, typename Newline>
void tokenize(std::string_view text, Token on_token, Newline on_newline) {
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      on_newline();
      ++i;
    } else if (is_space(c)) {
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && text[j] != '\n' && !is_space(text[j])) ++j;
      on_token(text.substr(i, j - i));
      i = j;
    }
  }
}

}  // namespace

Vocab::Vocab() {
  add(kUnkToken);
  add(kEosToken);
}

std::int32_t Vocab::add(std::string_view token) {
  auto [it, inserted] = index_.emplace(std::string(token), static_cast<std::int32_t>(tokens_.size()));
  if (inserted) tokens_.emplace_back(token);
  return it->second;
}

Vocab Vocab::build(std::string_view train_text) {
  Vocab v;
  std::size_t count = 0;
  tokenize(
      train_text,
      [&](std::string_view tok) {
        v.add(tok);
        ++count;
      },
      [&] {});
  if (count == 0) throw DataError("cannot build a vocabulary from an empty corpus");
  return v;
}

std::string Vocab::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write vocabulary file " + path);
  f << serialize();
  if (!f) throw IoError("failed writing vocabulary file " + path);
}

Vocab Vocab::load(const std::string& path) { return parse(read_text_file(path), path); }

Vocab Vocab::parse(std::string_view text, const std::string& path) {
  Vocab v;
  v.tokens_.clear();
  v.index_.clear();
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) throw DataError("vocabulary file " + path + " has an empty line");
    const auto before = v.tokens_.size();
    v.add(line);
    if (v.tokens_.size() == before) throw DataError("duplicate token '" + line + "' in " + path);
  }
  if (v.tokens_.size() < 2 || v.tokens_[kUnk] != kUnkToken || v.tokens_[kEos] != kEosToken) {
    throw DataError("vocabulary file " + path + " must start with <unk> and <eos>");
  }
  return v;
}

std::int32_t Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> Vocab::encode(std::string_view text) const {
  std::vector<std::int32_t> ids;
  tokenize(
      text, [&](std::string_view tok) { ids.push_back(id(tok)); }, [&] { ids.push_back(kEos); });
  return ids;
}

std::string Vocab::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  bool line_start = true;
  for (const auto id : ids) {
    if (id == kEos) {
      out += '\n';
      line_start = true;
      continue;
    }
    if (!line_start) out += ' ';
    out += token(id);
    line_start = false;
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

BatchCursor::BatchCursor(std::span<const std::int32_t> ids, std::size_t batch_size,
                         std::size_t length)
    : ids_(ids.begin(), ids.end()), batch_size_(batch_size), length_(length) {
  if (batch_size == 0 || length == 0) throw UsageError("batch size and segment length must be positive");
  if (ids.size() < batch_size * (length + 1)) {
    throw DataError("corpus of " + std::to_string(ids.size()) + " tokens is too small for " +
                    std::to_string(batch_size) + " streams of segment length " + std::to_string(length));
  }
  stream_length_ = ids.size() / batch_size;
  num_batches_ = (stream_length_ - 1) / length;
}

std::optional<Batch> BatchCursor::next() {
  if (next_ >= num_batches_) return std::nullopt;
  Batch b;
  b.batch_size = batch_size_;
  b.length = length_;
  b.inputs.resize(batch_size_ * length_);
  b.targets.resize(batch_size_ * length_);
  const std::size_t start = next_ * length_;
  for (std::size_t s = 0; s < batch_size_; ++s) {
    const std::size_t base = s * stream_length_ + start;
    for (std::size_t t = 0; t < length_; ++t) {
      b.inputs[s * length_ + t] = ids_[base + t];
      b.targets[s * length_ + t] = ids_[base + t + 1];
    }
  }
  ++next_;
  return b;
}

std::vector<Batch> continuous_batches(std::span<const std::int32_t> ids, std::size_t batch_size,
                                      std::size_t length) {
  BatchCursor cursor(ids, batch_size, length);
  std::vector<Batch> out;
  while (auto b = cursor.next()) out.push_back(std::move(*b));
  return out;
}

}  // namespace egru
