// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cucn/keyvalue.hpp"
#include "cucn/serialize.hpp"

namespace cucn::data {

void Dataset::validate() const {
  if (labels.empty()) throw Error("dataset: empty");
  if (!images.defined() || images.ndim() != 4 || images.dim(0) != size())
    throw ShapeError("dataset: image batch does not match label count");
  std::int64_t total = 0;
  for (const auto c : class_counts) total += c;
  if (total != size()) throw Error("dataset: class counts do not sum to the sample count");
  for (const auto y : labels)
    if (y < 0 || y >= num_classes()) throw Error("dataset: label out of range");
}

std::vector<std::int64_t> count_classes(std::span<const std::int64_t> labels,
                                        std::int64_t num_classes) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (const auto y : labels) {
    if (y < 0 || y >= num_classes)
      throw Error("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) +
                  ")");
    ++counts[y];
  }
  return counts;
}

Dataset load_dataset(const std::filesystem::path& manifest,
                     std::optional<std::int64_t> num_classes) {
  std::ifstream in(manifest);
  if (!in) throw Error("cannot open manifest " + manifest.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "path,label")
    throw FormatError(manifest.string() + ": header 'path,label' required");
  const auto root = manifest.parent_path();

  std::vector<std::int64_t> labels;
  std::vector<float> pixels;
  Shape sample_shape;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw FormatError(manifest.string() + ":" + std::to_string(line_no) + ": expected path,label");
    const std::string rel = trim(std::string_view(line).substr(0, comma));
    const auto label = parse_int(std::string_view(line).substr(comma + 1));
    if (label < 0) throw Error("negative label at line " + std::to_string(line_no));
    if (num_classes && label >= *num_classes)
      throw Error("label " + std::to_string(label) + " at line " + std::to_string(line_no) +
                  " exceeds declared class count " + std::to_string(*num_classes));
    const auto path = root / rel;
    if (!std::filesystem::exists(path)) throw Error("missing image file " + path.string());
    const auto blob = decode_cutn(read_file(path));
    if (blob.type == ElementType::f64)
      throw FormatError(path.string() + ": images must be u8 or f32");
    if (blob.shape.size() != 3)
      throw ShapeError(path.string() + ": expected ch x H x W, got " + shape_str(blob.shape));
    if (sample_shape.empty()) {
      sample_shape = blob.shape;
    } else if (blob.shape != sample_shape) {
      throw ShapeError(path.string() + ": shape " + shape_str(blob.shape) + " differs from " +
                       shape_str(sample_shape));
    }
    const Tensor image = to_tensor(blob, DType::f32);
    const auto values = image.data<float>();
    pixels.insert(pixels.end(), values.begin(), values.end());
    labels.push_back(label);
  }
  if (labels.empty()) throw Error(manifest.string() + ": dataset is empty");

  Dataset ds;
  Shape shape{static_cast<std::int64_t>(labels.size())};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  ds.images = Tensor::from_storage(shape, std::move(pixels));
  const auto classes =
      num_classes.value_or(*std::max_element(labels.begin(), labels.end()) + 1);
  ds.class_counts = count_classes(labels, classes);
  ds.labels = std::move(labels);
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  dataset.validate();
  std::filesystem::create_directories(dir / "images");
  const Shape sample(dataset.images.shape().begin() + 1, dataset.images.shape().end());
  const auto per = numel(sample);
  const auto pixels = dataset.images.data<float>();
  std::ostringstream manifest;
  manifest << "path,label\n";
  for (std::int64_t i = 0; i < dataset.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06lld.cutn", static_cast<long long>(i));
    std::vector<float> values(pixels.begin() + i * per, pixels.begin() + (i + 1) * per);
    write_file(dir / name, encode_cutn(Tensor::from_storage(sample, std::move(values))));
    manifest << name << ',' << dataset.labels[i] << '\n';
  }
  const std::string text = manifest.str();
  write_file(dir / "manifest.csv",
             {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void SynthSpec::validate() const {
  if (class_counts.size() < 2) throw Error("synth: at least two classes required");
  for (const auto c : class_counts)
    if (c < 1) throw Error("synth: every class count must be >= 1");
  if (image_size < static_cast<std::int64_t>(class_counts.size()))
    throw Error("synth: image_size must be at least the number of classes");
  if (channels < 1) throw Error("synth: channels must be >= 1");
  if (!(noise_std >= 0)) throw Error("synth: noise_std must be >= 0");
}

Tensor class_template(std::int64_t label, std::int64_t num_classes, std::int64_t size,
                      std::int64_t channels) {
  if (label < 0 || label >= num_classes) throw Error("class_template: label out of range");
  if (size < num_classes) throw Error("class_template: image smaller than class count");
  std::vector<double> values(static_cast<std::size_t>(channels * size * size),
                             kTemplateBackground);
  const auto first = label * size / num_classes;
  const auto last = (label + 1) * size / num_classes;
  for (std::int64_t c = 0; c < channels; ++c)
    for (auto r = first; r < last; ++r)
      for (std::int64_t col = 0; col < size; ++col)
        values[(c * size + r) * size + col] += kTemplateContrast;
  return Tensor::from_values({channels, size, size}, values, DType::f32);
}

Dataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  const auto classes = static_cast<std::int64_t>(spec.class_counts.size());
  const auto per = spec.channels * spec.image_size * spec.image_size;
  std::int64_t total = 0;
  for (const auto c : spec.class_counts) total += c;

  nn::Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0 ? spec.noise_std : 1.0);
  std::vector<float> pixels;
  pixels.reserve(static_cast<std::size_t>(total * per));
  Dataset ds;
  for (std::int64_t label = 0; label < classes; ++label) {
    const Tensor tmpl_tensor = class_template(label, classes, spec.image_size, spec.channels);
    const auto tmpl = tmpl_tensor.data<float>();
    for (std::int64_t k = 0; k < spec.class_counts[label]; ++k) {
      for (std::int64_t p = 0; p < per; ++p) {
        double v = tmpl[p];
        if (spec.noise_std > 0) v += noise(rng);
        pixels.push_back(static_cast<float>(std::clamp(v, 0.0, 1.0)));
      }
      ds.labels.push_back(label);
    }
  }
  ds.images = Tensor::from_storage({total, spec.channels, spec.image_size, spec.image_size},
                                   std::move(pixels));
  ds.class_counts = spec.class_counts;
  ds.validate();
  return ds;
}

void hflip(std::span<float> image, std::int64_t channels, std::int64_t height, std::int64_t width) {
  if (static_cast<std::int64_t>(image.size()) != channels * height * width)
    throw ShapeError("hflip: image size does not match geometry");
  for (std::int64_t row = 0; row < channels * height; ++row) {
    auto begin = image.begin() + row * width;
    std::reverse(begin, begin + width);
  }
}

Tensor augment(const Tensor& image, nn::Rng& rng, double flip_prob) {
  if (!(flip_prob >= 0 && flip_prob <= 1)) throw Error("augment: flip_prob must lie in [0, 1]");
  if (image.ndim() != 3) throw ShapeError("augment: expected ch x H x W");
  Tensor out = image.to(DType::f32);
  std::bernoulli_distribution coin(flip_prob);
  if (coin(rng)) hflip(out.mutable_data<float>(), image.dim(0), image.dim(1), image.dim(2));
  return out;
}

Tensor gather_images(const Dataset& dataset, std::span<const std::int64_t> indices) {
  Shape shape = dataset.images.shape();
  const auto per = numel(shape) / shape[0];
  shape[0] = static_cast<std::int64_t>(indices.size());
  const auto src = dataset.images.data<float>();
  std::vector<float> out(static_cast<std::size_t>(numel(shape)));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= dataset.size())
      throw Error("gather_images: index out of range");
    std::copy_n(src.begin() + indices[i] * per, per, out.begin() + static_cast<std::int64_t>(i) * per);
  }
  return Tensor::from_storage(shape, std::move(out));
}

}  // namespace cucn::data
