// avsr/array_store.h

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

#ifndef AVSR_ARRAY_STORE_H_
#define AVSR_ARRAY_STORE_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avsr/nn/autograd.h"
#include "avsr/nn/tensor.h"

namespace avsr {

// Named-array container ("NAC"), all fields little-endian:
//
//   char[8]  magic      "AVSRNAC\0"
//   u32      version    1
//   u32      count      number of arrays
//   count x {
//     u16    name_len
//     char   name[name_len]
//     u8     dtype      0=f32 1=f64 2=i32 3=i64 4=u8
//     u8     ndim
//     u64    dims[ndim]
//     u64    offset     byte offset of the payload from file start
//     u64    nbytes
//   }
//   payloads, in table order, tightly packed
//
// Arrays are written in name order so identical content gives identical bytes.

enum class DType : uint8_t { kF32 = 0, kF64 = 1, kI32 = 2, kI64 = 3, kU8 = 4 };

struct NamedArray {
  DType dtype = DType::kF64;
  std::vector<int64_t> shape;
  std::vector<uint8_t> bytes;  // little-endian payload

  int64_t NumElements() const;
};

class ArrayStore {
 public:
  static constexpr uint32_t kVersion = 1;

  void PutF32(const std::string& name, const nn::Tensor& t);
  void PutF64(const std::string& name, const nn::Tensor& t);
  void PutI64(const std::string& name, std::vector<int64_t> shape,
              const std::vector<int64_t>& values);
  void PutString(const std::string& name, const std::string& value);

  bool Contains(const std::string& name) const { return arrays_.count(name) != 0; }
  /// Any floating dtype, widened to double.
  nn::Tensor GetTensor(const std::string& name) const;
  std::vector<int64_t> GetI64(const std::string& name) const;
  std::string GetString(const std::string& name) const;
  const NamedArray& Get(const std::string& name) const;
  std::vector<std::string> Names() const;

  std::vector<uint8_t> Serialize() const;
  static ArrayStore Deserialize(const std::vector<uint8_t>& bytes);

  void Save(const std::string& path) const;
  static ArrayStore Load(const std::string& path);

 private:
  std::map<std::string, NamedArray> arrays_;
};

/// Parameters as f64 arrays (names kept verbatim) plus optional metadata.
ArrayStore ParamsToStore(const nn::ParamStore& params);
nn::ParamStore StoreToParams(const ArrayStore& store, const std::string& prefix_filter = "");

std::vector<uint8_t> ReadFileBytes(const std::string& path);
void WriteFileBytes(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace avsr

#endif  // AVSR_ARRAY_STORE_H_
