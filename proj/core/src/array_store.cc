// array_store.cc

// Copyright 2026  The avsr-cmfe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "avsr/array_store.h"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "avsr/error.h"

namespace avsr {

static_assert(std::endian::native == std::endian::little,
              "named-array container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'V', 'S', 'R', 'N', 'A', 'C', '\0'};

size_t DTypeSize(DType t) {
  switch (t) {
    case DType::kF32:
    case DType::kI32:
      return 4;
    case DType::kF64:
    case DType::kI64:
      return 8;
    case DType::kU8:
      return 1;
  }
  throw IoError("unknown dtype");
}

template <typename T>
void Append(std::vector<uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& b) : b_(b) {}
  template <typename T>
  T Take() {
    if (pos_ + sizeof(T) > b_.size()) throw IoError("named-array container truncated");
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string TakeString(size_t n) {
    if (pos_ + n > b_.size()) throw IoError("named-array container truncated");
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }

 private:
  const std::vector<uint8_t>& b_;
  size_t pos_ = 0;
};

}  // namespace

int64_t NamedArray::NumElements() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

void ArrayStore::PutF32(const std::string& name, const nn::Tensor& t) {
  NamedArray a;
  a.dtype = DType::kF32;
  a.shape = t.shape();
  a.bytes.resize(t.size() * 4);
  for (int64_t i = 0; i < t.size(); ++i) {
    const float f = static_cast<float>(t[i]);
    std::memcpy(a.bytes.data() + i * 4, &f, 4);
  }
  arrays_[name] = std::move(a);
}

void ArrayStore::PutF64(const std::string& name, const nn::Tensor& t) {
  NamedArray a;
  a.dtype = DType::kF64;
  a.shape = t.shape();
  a.bytes.resize(t.size() * 8);
  if (t.size()) std::memcpy(a.bytes.data(), t.data(), t.size() * 8);
  arrays_[name] = std::move(a);
}

void ArrayStore::PutI64(const std::string& name, std::vector<int64_t> shape,
                        const std::vector<int64_t>& values) {
  NamedArray a;
  a.dtype = DType::kI64;
  a.shape = std::move(shape);
  if (a.NumElements() != static_cast<int64_t>(values.size()))
    throw IoError("PutI64: shape does not match value count for " + name);
  a.bytes.resize(values.size() * 8);
  if (!values.empty()) std::memcpy(a.bytes.data(), values.data(), values.size() * 8);
  arrays_[name] = std::move(a);
}

void ArrayStore::PutString(const std::string& name, const std::string& value) {
  NamedArray a;
  a.dtype = DType::kU8;
  a.shape = {static_cast<int64_t>(value.size())};
  a.bytes.assign(value.begin(), value.end());
  arrays_[name] = std::move(a);
}

const NamedArray& ArrayStore::Get(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw IoError("array '" + name + "' not found in container");
  return it->second;
}

nn::Tensor ArrayStore::GetTensor(const std::string& name) const {
  const NamedArray& a = Get(name);
  nn::Tensor t(a.shape);
  const int64_t n = a.NumElements();
  if (a.dtype == DType::kF32) {
    for (int64_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, a.bytes.data() + i * 4, 4);
      t[i] = f;
    }
  } else if (a.dtype == DType::kF64) {
    if (n) std::memcpy(t.data(), a.bytes.data(), n * 8);
  } else {
    throw IoError("array '" + name + "' is not floating point");
  }
  return t;
}

std::vector<int64_t> ArrayStore::GetI64(const std::string& name) const {
  const NamedArray& a = Get(name);
  if (a.dtype != DType::kI64) throw IoError("array '" + name + "' is not i64");
  std::vector<int64_t> v(a.NumElements());
  if (!v.empty()) std::memcpy(v.data(), a.bytes.data(), v.size() * 8);
  return v;
}

std::string ArrayStore::GetString(const std::string& name) const {
  const NamedArray& a = Get(name);
  if (a.dtype != DType::kU8) throw IoError("array '" + name + "' is not a byte string");
  return std::string(a.bytes.begin(), a.bytes.end());
}

std::vector<std::string> ArrayStore::Names() const {
  std::vector<std::string> names;
  for (const auto& [k, v] : arrays_) names.push_back(k);
  return names;
}

std::vector<uint8_t> ArrayStore::Serialize() const {
  std::vector<uint8_t> header;
  header.insert(header.end(), kMagic, kMagic + 8);
  Append<uint32_t>(header, kVersion);
  Append<uint32_t>(header, static_cast<uint32_t>(arrays_.size()));
  size_t header_size = header.size();
  for (const auto& [name, a] : arrays_)
    header_size += 2 + name.size() + 1 + 1 + 8 * a.shape.size() + 8 + 8;

  uint64_t offset = header_size;
  for (const auto& [name, a] : arrays_) {
    if (name.size() > 0xFFFF) throw IoError("array name too long");
    Append<uint16_t>(header, static_cast<uint16_t>(name.size()));
    header.insert(header.end(), name.begin(), name.end());
    Append<uint8_t>(header, static_cast<uint8_t>(a.dtype));
    Append<uint8_t>(header, static_cast<uint8_t>(a.shape.size()));
    for (int64_t d : a.shape) Append<uint64_t>(header, static_cast<uint64_t>(d));
    Append<uint64_t>(header, offset);
    Append<uint64_t>(header, a.bytes.size());
    offset += a.bytes.size();
  }
  for (const auto& [name, a] : arrays_) header.insert(header.end(), a.bytes.begin(), a.bytes.end());
  return header;
}

ArrayStore ArrayStore::Deserialize(const std::vector<uint8_t>& bytes) {
  Reader r(bytes);
  if (r.TakeString(8) != std::string(kMagic, 8)) throw IoError("bad named-array magic");
  const auto version = r.Take<uint32_t>();
  if (version != kVersion)
    throw IoError("unsupported named-array version " + std::to_string(version));
  const auto count = r.Take<uint32_t>();
  ArrayStore store;
  for (uint32_t i = 0; i < count; ++i) {
    const auto len = r.Take<uint16_t>();
    std::string name = r.TakeString(len);
    NamedArray a;
    const auto dt = r.Take<uint8_t>();
    if (dt > 4) throw IoError("unknown dtype code " + std::to_string(dt));
    a.dtype = static_cast<DType>(dt);
    const auto nd = r.Take<uint8_t>();
    for (int d = 0; d < nd; ++d) a.shape.push_back(static_cast<int64_t>(r.Take<uint64_t>()));
    const auto off = r.Take<uint64_t>();
    const auto nbytes = r.Take<uint64_t>();
    if (nbytes != a.NumElements() * DTypeSize(a.dtype))
      throw IoError("array '" + name + "' payload size mismatch");
    if (off + nbytes > bytes.size()) throw IoError("array '" + name + "' payload out of range");
    a.bytes.assign(bytes.begin() + off, bytes.begin() + off + nbytes);
    store.arrays_[name] = std::move(a);
  }
  return store;
}

void ArrayStore::Save(const std::string& path) const { WriteFileBytes(path, Serialize()); }

ArrayStore ArrayStore::Load(const std::string& path) { return Deserialize(ReadFileBytes(path)); }

ArrayStore ParamsToStore(const nn::ParamStore& params) {
  ArrayStore s;
  for (const auto& [name, t] : params.items()) s.PutF64(name, t);
  return s;
}

nn::ParamStore StoreToParams(const ArrayStore& store, const std::string& prefix_filter) {
  nn::ParamStore p;
  for (const std::string& name : store.Names()) {
    if (name.rfind("meta.", 0) == 0) continue;
    if (!prefix_filter.empty() && name.rfind(prefix_filter, 0) != 0) continue;
    const NamedArray& a = store.Get(name);
    if (a.dtype != DType::kF64 && a.dtype != DType::kF32) continue;
    p.Add(name, store.GetTensor(name));
  }
  return p;
}

std::vector<uint8_t> ReadFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void WriteFileBytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace avsr
