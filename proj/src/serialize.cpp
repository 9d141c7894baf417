// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace cucn {

namespace {

constexpr std::array<std::uint8_t, 4> kCutnMagic{0x43, 0x55, 0x54, 0x4E};
constexpr std::array<std::uint8_t, 4> kCuckMagic{0x43, 0x55, 0x43, 0x4B};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (in_.size() - pos_ < n) throw FormatError("unexpected end of data");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T read_le(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (int i = static_cast<int>(sizeof(T)) - 1; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<T>(bits);
}

}  // namespace

std::size_t TensorBlob::element_size() const {
  switch (type) {
    case ElementType::f32: return 4;
    case ElementType::f64: return 8;
    case ElementType::u8: return 1;
  }
  return 0;
}

std::vector<std::uint8_t> encode_cutn(const TensorBlob& blob) {
  if (blob.shape.size() > std::numeric_limits<std::uint8_t>::max())
    throw FormatError("CUTN: too many dimensions");
  if (blob.payload.size() != static_cast<std::size_t>(numel(blob.shape)) * blob.element_size())
    throw FormatError("CUTN: payload size does not match shape " + shape_str(blob.shape));
  std::vector<std::uint8_t> out;
  out.reserve(12 + 4 * blob.shape.size() + blob.payload.size());
  Writer w(out);
  w.bytes(kCutnMagic);
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(blob.type));
  w.u8(static_cast<std::uint8_t>(blob.shape.size()));
  for (auto e : blob.shape) {
    if (e <= 0 || e > std::numeric_limits<std::uint32_t>::max())
      throw FormatError("CUTN: extent out of range");
    w.u32(static_cast<std::uint32_t>(e));
  }
  w.bytes(blob.payload);
  return out;
}

std::vector<std::uint8_t> encode_cutn(const Tensor& tensor) { return encode_cutn(to_blob(tensor)); }

TensorBlob decode_cutn(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kCutnMagic.begin()))
    throw FormatError("CUTN: bad magic");
  if (const auto version = r.u32(); version != kVersion)
    throw FormatError("CUTN: unsupported version " + std::to_string(version));
  TensorBlob blob;
  const auto code = r.u8();
  if (code > 2) throw FormatError("CUTN: unknown dtype code " + std::to_string(code));
  blob.type = static_cast<ElementType>(code);
  const auto ndim = r.u8();
  for (int i = 0; i < ndim; ++i) {
    const auto e = r.u32();
    if (e == 0) throw FormatError("CUTN: zero extent");
    blob.shape.push_back(e);
  }
  const auto n = static_cast<std::size_t>(numel(blob.shape)) * blob.element_size();
  auto payload = r.take(n);
  blob.payload.assign(payload.begin(), payload.end());
  if (consumed) *consumed = r.position();
  return blob;
}

TensorBlob to_blob(const Tensor& tensor) {
  TensorBlob blob;
  blob.shape = tensor.shape();
  dispatch(tensor.dtype(), [&]<typename T>(T) {
    blob.type = std::is_same_v<T, float> ? ElementType::f32 : ElementType::f64;
    blob.payload.reserve(tensor.numel() * sizeof(T));
    for (const T v : tensor.data<T>()) append_le(blob.payload, v);
  });
  return blob;
}

TensorBlob u8_blob(Shape shape, std::span<const std::uint8_t> values) {
  if (static_cast<std::int64_t>(values.size()) != numel(shape))
    throw ShapeError("u8_blob: value count does not match " + shape_str(shape));
  return {ElementType::u8, std::move(shape), {values.begin(), values.end()}};
}

Tensor to_tensor(const TensorBlob& blob, DType dtype) {
  Tensor t = Tensor::zeros(blob.shape, dtype);
  dispatch(dtype, [&]<typename T>(T) {
    auto out = t.mutable_data<T>();
    const std::uint8_t* p = blob.payload.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      switch (blob.type) {
        case ElementType::u8: out[i] = static_cast<T>(p[i]) / T(255); break;
        case ElementType::f32: out[i] = static_cast<T>(read_le<float>(p + 4 * i)); break;
        case ElementType::f64: out[i] = static_cast<T>(read_le<double>(p + 8 * i)); break;
      }
    }
  });
  return t;
}

Tensor to_tensor(const TensorBlob& blob) {
  return to_tensor(blob, blob.type == ElementType::f64 ? DType::f64 : DType::f32);
}

std::vector<std::uint8_t> encode_cuck(std::span<const NamedBlob> entries) {
  std::vector<std::uint8_t> out;
  Writer w(out);
  w.bytes(kCuckMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max())
      throw FormatError("CUCK: entry name too long");
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes({reinterpret_cast<const std::uint8_t*>(e.name.data()), e.name.size()});
    w.bytes(encode_cutn(e.blob));
  }
  return out;
}

std::vector<NamedBlob> decode_cuck(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kCuckMagic.begin()))
    throw FormatError("CUCK: bad magic");
  if (const auto version = r.u32(); version != kVersion)
    throw FormatError("CUCK: unsupported version " + std::to_string(version));
  const auto count = r.u32();
  std::vector<NamedBlob> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u16();
    auto name = r.take(len);
    NamedBlob e;
    e.name.assign(reinterpret_cast<const char*>(name.data()), name.size());
    std::size_t used = 0;
    e.blob = decode_cutn(bytes.subspan(r.position()), &used);
    r.take(used);
    entries.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("CUCK: trailing bytes after last entry");
  return entries;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace cucn
