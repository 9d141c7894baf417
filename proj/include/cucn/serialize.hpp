// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cucn/tensor.hpp"

namespace cucn {

/// Element type codes of the CUTN container.
enum class ElementType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

/// A decoded CUTN record. The payload is kept as the little-endian bytes read
/// from disk so that re-encoding is bit-exact for every element type.
struct TensorBlob {
  ElementType type = ElementType::f32;
  Shape shape;
  std::vector<std::uint8_t> payload;

  std::size_t element_size() const;
  bool operator==(const TensorBlob&) const = default;
};

// CUTN layout: "CUTN" | u32 version=1 | u8 dtype | u8 ndim | ndim x u32 extent |
// row-major payload, all little-endian.
std::vector<std::uint8_t> encode_cutn(const TensorBlob& blob);
std::vector<std::uint8_t> encode_cutn(const Tensor& tensor);
/// Decodes one record starting at bytes[0]; *consumed receives its length.
TensorBlob decode_cutn(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

TensorBlob to_blob(const Tensor& tensor);
TensorBlob u8_blob(Shape shape, std::span<const std::uint8_t> values);
/// u8 payloads are scaled by 1/255; float payloads are converted to `dtype`.
Tensor to_tensor(const TensorBlob& blob, DType dtype);
/// Float payloads keep their stored precision.
Tensor to_tensor(const TensorBlob& blob);

struct NamedBlob {
  std::string name;
  TensorBlob blob;
  bool operator==(const NamedBlob&) const = default;
};

// CUCK layout: "CUCK" | u32 version=1 | u32 count | count x (u16 name length |
// UTF-8 name | CUTN record).
std::vector<std::uint8_t> encode_cuck(std::span<const NamedBlob> entries);
std::vector<NamedBlob> decode_cuck(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace cucn
