// Copyright 2026 The sner Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sner/common.hpp"

namespace sner {

// Learning-rate group a tensor belongs to.
enum class ParamGroup { kEncoder, kHead };

struct Parameter {
  std::string name;
  Mat value;
  ParamGroup group = ParamGroup::kHead;
};

using Gradients = std::vector<Mat>;

// Flat, ordered registry of every trainable tensor of a model. Modules keep
// indices into the store; forward passes read it, backward passes write into
// a Gradients vector with the same layout.
class ParamStore {
 public:
  std::size_t add(std::string name, Mat init, ParamGroup group) {
    params_.push_back({std::move(name), std::move(init), group});
    return params_.size() - 1;
  }

  Mat& operator[](std::size_t i) { return params_[i].value; }
  const Mat& operator[](std::size_t i) const { return params_[i].value; }

  std::size_t size() const { return params_.size(); }
  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  Gradients zero_gradients() const {
    Gradients g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    return g;
  }

  bool all_finite() const {
    for (const auto& p : params_) {
      if (!p.value.allFinite()) return false;
    }
    return true;
  }

  // Bitwise equality of every value, used for trajectory comparisons.
  bool bitwise_equal(const ParamStore& o) const {
    if (o.params_.size() != params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& a = params_[i].value;
      const auto& b = o.params_[i].value;
      if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
      if (std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) != 0)
        return false;
    }
    return true;
  }

  // Binary blob: magic, tensor count, then per tensor name, shape and raw
  // little-endian doubles.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out.write(kMagic, 8);
    write_u32(out, static_cast<std::uint32_t>(params_.size()));
    for (const auto& p : params_) {
      write_u32(out, static_cast<std::uint32_t>(p.name.size()));
      out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      write_u32(out, static_cast<std::uint32_t>(p.value.rows()));
      write_u32(out, static_cast<std::uint32_t>(p.value.cols()));
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.value.size())));
    }
  }

  // Loads values into an already-laid-out store; names and shapes must agree.
  void load_values(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw ArtifactMismatch(path + ": bad magic");
    const auto n = read_u32(in);
    if (n != params_.size()) throw ArtifactMismatch(path + ": tensor count mismatch");
    for (auto& p : params_) {
      std::string name(read_u32(in), '\0');
      in.read(name.data(), static_cast<std::streamsize>(name.size()));
      const auto rows = read_u32(in);
      const auto cols = read_u32(in);
      if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) {
        throw ArtifactMismatch(path + ": tensor '" + name + "' does not match model layout");
      }
      in.read(reinterpret_cast<char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.value.size())));
      if (!in) throw ArtifactMismatch(path + ": truncated");
    }
  }

 private:
  static constexpr char kMagic[8] = {'S', 'N', 'E', 'R', 'P', 'R', 'M', '1'};

  static void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  static std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4] = {};
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::vector<Parameter> params_;
};

inline Mat gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

}  // namespace sner
