/*
 * Copyright 2026 The fedsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDSIM_IO_HPP_
#define FEDSIM_IO_HPP_

// File formats.
//
// Dataset (.fsim), little-endian:
//   char[4] "FSIM" | u32 version | u64 D | u32 input_dim | u32 num_classes
//   | f64[D * input_dim] features (row-major) | u32[D] labels
//
// Parameter vector (.fspv), little-endian:
//   char[4] "FSPV" | u32 version | u64 d | u32 L | L x (u64 rows, u64 cols)
//   | f64[d] values
//
// Partition plans are JSON: {"num_clients", "with_replacement",
// "clients": {"<id>": [indices...]}}.

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedsim/param_vector.hpp"
#include "fedsim/partition.hpp"

namespace fedsim {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr std::uint32_t kParamFormatVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }

  template <class T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

  const std::vector<char>& buffer() const noexcept { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  void bytes(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }

  template <class T>
  T uint() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

  void expect_end() const {
    if (pos_ != data_.size()) throw IoError(path_ + ": trailing bytes after payload");
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw IoError(path_ + ": truncated file");
  }

  std::vector<char> data_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<char>(text.begin(), text.end()));
}

inline void check_magic(ByteReader& r, const char (&magic)[5], const std::string& path) {
  char got[4];
  r.bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0) throw IoError(path + ": bad magic, expected " + magic);
}

}  // namespace detail

inline std::vector<char> encode_dataset(const LabeledDataset& ds) {
  ds.validate();
  detail::ByteWriter w;
  w.bytes("FSIM", 4);
  w.uint<std::uint32_t>(kDatasetFormatVersion);
  w.uint<std::uint64_t>(ds.size());
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ds.input_dim));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ds.num_classes));
  for (double v : ds.features) w.f64(v);
  for (int y : ds.labels) w.uint<std::uint32_t>(static_cast<std::uint32_t>(y));
  return w.buffer();
}

inline LabeledDataset decode_dataset(std::vector<char> bytes, const std::string& origin = "<memory>") {
  detail::ByteReader r(std::move(bytes), origin);
  detail::check_magic(r, "FSIM", origin);
  const auto version = r.uint<std::uint32_t>();
  if (version != kDatasetFormatVersion) throw IoError(origin + ": unsupported dataset version " + std::to_string(version));
  LabeledDataset ds;
  const auto D = r.uint<std::uint64_t>();
  ds.input_dim = r.uint<std::uint32_t>();
  ds.num_classes = r.uint<std::uint32_t>();
  ds.features.resize(D * ds.input_dim);
  for (auto& v : ds.features) v = r.f64();
  ds.labels.resize(D);
  for (auto& y : ds.labels) y = static_cast<int>(r.uint<std::uint32_t>());
  r.expect_end();
  ds.validate();
  return ds;
}

inline void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  detail::write_file(path, encode_dataset(ds));
}

inline LabeledDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(detail::read_file(path), path.string());
}

inline std::vector<char> encode_params(const ParamVector& p) {
  detail::ByteWriter w;
  w.bytes("FSPV", 4);
  w.uint<std::uint32_t>(kParamFormatVersion);
  w.uint<std::uint64_t>(p.size());
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(p.layer_shapes().size()));
  for (const auto& s : p.layer_shapes()) {
    w.uint<std::uint64_t>(s.rows);
    w.uint<std::uint64_t>(s.cols);
  }
  for (double v : p.values()) w.f64(v);
  return w.buffer();
}

inline ParamVector decode_params(std::vector<char> bytes, const std::string& origin = "<memory>") {
  detail::ByteReader r(std::move(bytes), origin);
  detail::check_magic(r, "FSPV", origin);
  const auto version = r.uint<std::uint32_t>();
  if (version != kParamFormatVersion) throw IoError(origin + ": unsupported parameter version " + std::to_string(version));
  const auto d = r.uint<std::uint64_t>();
  const auto layers = r.uint<std::uint32_t>();
  std::vector<LayerShape> shapes(layers);
  for (auto& s : shapes) {
    s.rows = r.uint<std::uint64_t>();
    s.cols = r.uint<std::uint64_t>();
  }
  std::vector<double> values(d);
  for (auto& v : values) v = r.f64();
  r.expect_end();
  return ParamVector(std::move(values), std::move(shapes));
}

inline void save_params(const std::filesystem::path& path, const ParamVector& p) {
  detail::write_file(path, encode_params(p));
}

inline ParamVector load_params(const std::filesystem::path& path) {
  return decode_params(detail::read_file(path), path.string());
}

inline nlohmann::json plan_to_json(const PartitionPlan& plan) {
  nlohmann::json clients = nlohmann::json::object();
  for (std::size_t i = 0; i < plan.num_clients(); ++i) clients[std::to_string(i)] = plan.assignments[i];
  return {{"num_clients", plan.num_clients()}, {"with_replacement", plan.with_replacement}, {"clients", clients}};
}

inline PartitionPlan plan_from_json(const nlohmann::json& j) {
  PartitionPlan plan;
  plan.with_replacement = j.at("with_replacement").get<bool>();
  const auto m = j.at("num_clients").get<std::size_t>();
  plan.assignments.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    plan.assignments[i] = j.at("clients").at(std::to_string(i)).get<std::vector<std::size_t>>();
  }
  return plan;
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace fedsim

#endif  // FEDSIM_IO_HPP_
