// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint layout (little-endian):
//
//   "I2PREFCK"  u32 version  u64 config_hash
//   str model_config_json  str variant  i64 epoch  u8 scalar_bytes
//   u32 n_params { str name  u32 rows  u32 cols  raw values }
//   u8 has_optimizer [ i64 steps  { raw m } { raw v } ]
//   str train_state_json
//   u64 fnv1a checksum of everything above
//
// Strings are u64 length + bytes. Parameters appear in declaration order.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "i2pref/train/config.hpp"
#include "i2pref/train/optimizer.hpp"

namespace i2pref::train {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'I', '2', 'P', 'R', 'E', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  std::uint32_t rows = 0, cols = 0;
  std::vector<double> values;  // widened on read; exact for float and double payloads
};

struct CheckpointData {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  model::ModelConfig model;
  model::Variant variant = model::Variant::Full;
  std::int64_t epoch = 0;
  std::uint8_t scalar_bytes = 4;
  std::vector<TensorRecord> params;
  std::optional<std::int64_t> optimizer_steps;
  std::vector<TensorRecord> adam_m, adam_v;
  json train_state = json::object();
};

namespace detail {

class Writer {
 public:
  template <typename V>
  void pod(const V& v) {
    static_assert(std::is_trivially_copyable_v<V>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_ += s;
  }
  template <typename T>
  void values(const ag::Mat<T>& m, std::uint8_t scalar_bytes) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (scalar_bytes == 4)
        pod(static_cast<float>(m.data()[i]));
      else
        pod(static_cast<double>(m.data()[i]));
    }
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}

  template <typename V>
  V pod() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, buf_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> values(std::size_t n, std::uint8_t scalar_bytes) {
    std::vector<double> out(n);
    for (auto& v : out) v = scalar_bytes == 4 ? static_cast<double>(pod<float>()) : pod<double>();
    return out;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::uint64_t n) const {
    if (n > end_ - pos_) throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint truncated");
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Serializes a model (and optionally its optimizer state) to bytes.
template <typename T>
std::string encode_checkpoint(const model::CompletionModel<T>& m, std::int64_t epoch, const Adam<T>* opt,
                              const json& train_state) {
  constexpr std::uint8_t sb = sizeof(T) == 4 ? 4 : 8;
  detail::Writer w;
  w.buffer().append(kCheckpointMagic, 8);
  w.pod(kCheckpointVersion);
  w.pod(config_hash(m.config()));
  w.str(to_json(m.config()).dump());
  w.str(model::to_string(m.variant()));
  w.pod(epoch);
  w.pod(sb);
  w.pod(static_cast<std::uint32_t>(m.params().size()));
  for (const auto& p : m.params()) {
    w.str(p->name);
    w.pod(static_cast<std::uint32_t>(p->value.rows()));
    w.pod(static_cast<std::uint32_t>(p->value.cols()));
    w.values(p->value, sb);
  }
  w.pod(static_cast<std::uint8_t>(opt ? 1 : 0));
  if (opt) {
    w.pod(static_cast<std::int64_t>(opt->steps()));
    for (const auto& mm : opt->first_moments()) w.values(mm, sb);
    for (const auto& vv : opt->second_moments()) w.values(vv, sb);
  }
  w.str(train_state.dump());
  const std::uint64_t sum = fnv1a(w.buffer());
  w.pod(sum);
  return std::move(w.buffer());
}

inline CheckpointData decode_checkpoint(const std::string& bytes) {
  using K = CheckpointError::Kind;
  if (bytes.size() < 8 + 4 + 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw CheckpointError(K::Corrupt, "not a checkpoint file (bad magic)");
  CheckpointData d;
  std::memcpy(&d.version, bytes.data() + 8, 4);
  if (d.version != kCheckpointVersion)
    throw CheckpointError(K::Version, "unsupported checkpoint version " + std::to_string(d.version) + " (expected " +
                                          std::to_string(kCheckpointVersion) + ")");
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  const std::size_t body = bytes.size() - 8;
  if (fnv1a(std::string_view(bytes.data(), body)) != stored)
    throw CheckpointError(K::Corrupt, "checkpoint checksum mismatch");

  detail::Reader r(bytes, body);
  r.pod<std::uint64_t>();  // magic
  r.pod<std::uint32_t>();
  d.config_hash = r.pod<std::uint64_t>();
  try {
    d.model = model_config_from_json(json::parse(r.str()));
    d.variant = model::parse_variant(r.str());
  } catch (const std::exception& e) {
    throw CheckpointError(K::Corrupt, std::string("checkpoint header: ") + e.what());
  }
  d.epoch = r.pod<std::int64_t>();
  d.scalar_bytes = r.pod<std::uint8_t>();
  if (d.scalar_bytes != 4 && d.scalar_bytes != 8) throw CheckpointError(K::Corrupt, "bad scalar width");
  const auto n = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    TensorRecord t;
    t.name = r.str();
    t.rows = r.pod<std::uint32_t>();
    t.cols = r.pod<std::uint32_t>();
    t.values = r.values(std::size_t(t.rows) * t.cols, d.scalar_bytes);
    d.params.push_back(std::move(t));
  }
  if (r.pod<std::uint8_t>()) {
    d.optimizer_steps = r.pod<std::int64_t>();
    for (auto* dst : {&d.adam_m, &d.adam_v})
      for (const auto& p : d.params) {
        TensorRecord t{p.name, p.rows, p.cols, r.values(std::size_t(p.rows) * p.cols, d.scalar_bytes)};
        dst->push_back(std::move(t));
      }
  }
  try {
    d.train_state = json::parse(r.str());
  } catch (const json::exception& e) {
    throw CheckpointError(K::Corrupt, std::string("checkpoint train state: ") + e.what());
  }
  if (!r.done()) throw CheckpointError(K::Corrupt, "trailing bytes in checkpoint");
  return d;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const model::CompletionModel<T>& m, std::int64_t epoch,
                     const Adam<T>* opt = nullptr, const json& train_state = json::object()) {
  const std::string bytes = encode_checkpoint(m, epoch, opt, train_state);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write then rename so a crash never leaves a half-written checkpoint behind.
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

namespace detail {

inline std::string join_names(const std::vector<std::string>& names, std::size_t limit = 12) {
  std::string s;
  for (std::size_t i = 0; i < names.size() && i < limit; ++i) s += (i ? ", " : "") + names[i];
  if (names.size() > limit) s += ", ... (" + std::to_string(names.size()) + " total)";
  return s;
}

template <typename T>
void copy_into(ag::Mat<T>& dst, const TensorRecord& src) {
  for (Eigen::Index i = 0; i < dst.size(); ++i) dst.data()[i] = static_cast<T>(src.values[static_cast<std::size_t>(i)]);
}

}  // namespace detail

/// Copies checkpoint parameters into a model built from a compatible config.
/// Throws CheckpointError(Incompatible) naming every missing, unexpected or
/// mis-shaped parameter.
template <typename T>
void restore(model::CompletionModel<T>& m, const CheckpointData& d, Adam<T>* opt = nullptr) {
  using K = CheckpointError::Kind;
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& t : d.params) by_name[t.name] = &t;
  std::vector<std::string> missing, shape, unexpected;
  std::set<std::string> model_names;
  for (const auto& p : m.params()) {
    model_names.insert(p->name);
    auto it = by_name.find(p->name);
    if (it == by_name.end())
      missing.push_back(p->name);
    else if (it->second->rows != p->value.rows() || it->second->cols != p->value.cols())
      shape.push_back(p->name + " (checkpoint " + std::to_string(it->second->rows) + "x" +
                      std::to_string(it->second->cols) + ", model " + std::to_string(p->value.rows()) + "x" +
                      std::to_string(p->value.cols()) + ")");
  }
  for (const auto& t : d.params)
    if (!model_names.count(t.name)) unexpected.push_back(t.name);
  if (!missing.empty() || !shape.empty() || !unexpected.empty()) {
    std::string msg = "checkpoint (variant " + model::to_string(d.variant) + ") is incompatible with model (variant " +
                      model::to_string(m.variant()) + ")";
    if (!missing.empty()) msg += "; missing parameters: " + detail::join_names(missing);
    if (!unexpected.empty()) msg += "; unexpected parameters: " + detail::join_names(unexpected);
    if (!shape.empty()) msg += "; shape mismatch: " + detail::join_names(shape);
    throw CheckpointError(K::Incompatible, msg);
  }
  if (d.config_hash != config_hash(m.config()))
    throw CheckpointError(K::Incompatible, "checkpoint config hash does not match the model configuration");
  for (std::size_t i = 0; i < m.params().size(); ++i) detail::copy_into(m.params()[i].value, *by_name[m.params()[i].name]);
  if (opt && d.optimizer_steps) {
    std::map<std::string, std::size_t> order;
    for (std::size_t i = 0; i < d.params.size(); ++i) order[d.params[i].name] = i;
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      const auto j = order[m.params()[i].name];
      detail::copy_into(opt->first_moments()[i], d.adam_m[j]);
      detail::copy_into(opt->second_moments()[i], d.adam_v[j]);
    }
    opt->set_steps(*d.optimizer_steps);
  }
}

}  // namespace i2pref::train
