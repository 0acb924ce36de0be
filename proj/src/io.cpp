/* Copyright 2026 The imgt Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "errors.hpp"

namespace imgt {

namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path);
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path);
}

// ---- netpbm ----------------------------------------------------------------

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view b) : b_(b) {}

  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space();
    std::size_t v = 0;
    const char* first = b_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, b_.data() + b_.size(), v);
    if (ec != std::errc() || ptr == first) throw FormatError(std::string("bad PPM ") + what);
    pos_ += static_cast<std::size_t>(ptr - first);
    return v;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_])))
      throw FormatError("malformed netpbm header");
    return pos_ + 1;
  }

 private:
  std::string_view b_;
  std::size_t pos_ = 2;
};

}  // namespace

Image decode_ppm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError("not a netpbm file");
  if (bytes[1] != '6')
    throw FormatError("unsupported netpbm format P" + std::string(1, bytes[1]) +
                      ", expected binary P6");
  HeaderReader h(bytes);
  const std::size_t width = h.number("width");
  const std::size_t height = h.number("height");
  const std::size_t maxval = h.number("maxval");
  if (width == 0 || height == 0) throw FormatError("PPM has zero size");
  if (maxval != 255) throw FormatError("unsupported PPM maxval " + std::to_string(maxval));
  const std::size_t start = h.raster_start();
  const std::size_t need = width * height * kChannels;
  if (bytes.size() - std::min(bytes.size(), start) < need)
    throw FormatError("truncated PPM payload: need " + std::to_string(need) + " bytes");
  std::vector<std::uint8_t> px(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                               bytes.begin() + static_cast<std::ptrdiff_t>(start + need));
  return Image(height, width, std::move(px));
}

std::string encode_ppm(const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) +
                    "\n255\n";
  out.append(img.pixels().begin(), img.pixels().end());
  return out;
}

Image read_ppm(const std::string& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_ppm(const std::string& path, const Image& img) { write_file(path, encode_ppm(img)); }

std::string encode_pgm(std::size_t height, std::size_t width,
                       const std::vector<std::uint8_t>& gray) {
  if (gray.size() != height * width)
    throw ShapeError("graymap has " + std::to_string(gray.size()) + " values for " +
                     std::to_string(height) + "x" + std::to_string(width));
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(gray.begin(), gray.end());
  return out;
}

void write_pgm(const std::string& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& gray) {
  write_file(path, encode_pgm(height, width, gray));
}

// ---- little-endian helpers -------------------------------------------------

namespace {

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u16(std::uint16_t v) { uint(v, 2); }
  void u32(std::uint32_t v) { uint(v, 4); }
  void u64(std::uint64_t v) { uint(v, 8); }
  void f32(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  std::string take() { return std::move(out_); }

 private:
  void uint(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view b, const char* what) : b_(b), what_(what) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(uint(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what_);
  }

 private:
  std::uint64_t uint(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view b_;
  const char* what_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

// ---- packed datasets -------------------------------------------------------

std::string encode_dataset(const std::vector<Image>& images) {
  if (images.empty()) throw ConfigError("cannot pack an empty dataset");
  const std::size_t h = images[0].height(), w = images[0].width();
  if (h > 0xffff || w > 0xffff) throw ShapeError("image too large for a packed dataset");
  Writer out;
  out.bytes("IMDS");
  out.u32(kFormatVersion);
  out.u32(static_cast<std::uint32_t>(images.size()));
  out.u16(static_cast<std::uint16_t>(h));
  out.u16(static_cast<std::uint16_t>(w));
  std::string s = out.take();
  for (const Image& img : images) {
    if (img.height() != h || img.width() != w)
      throw ShapeError("dataset images differ in size: " + std::to_string(img.height()) + "x" +
                       std::to_string(img.width()) + " vs " + std::to_string(h) + "x" +
                       std::to_string(w));
    s.append(img.pixels().begin(), img.pixels().end());
  }
  return s;
}

std::vector<Image> decode_dataset(std::string_view bytes) {
  Reader in(bytes, "dataset");
  if (in.bytes(4) != "IMDS") throw FormatError("not a packed dataset (bad magic)");
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion)
    throw FormatError("unsupported dataset version " + std::to_string(version));
  const std::size_t count = in.u32(), h = in.u16(), w = in.u16();
  const std::size_t each = h * w * kChannels;
  if (in.remaining() != count * each)
    throw FormatError("dataset payload is " + std::to_string(in.remaining()) + " bytes, expected " +
                      std::to_string(count * each));
  if (count > 0 && each == 0) throw FormatError("dataset images have zero size");
  std::vector<Image> images;
  images.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto px = in.bytes(each);
    images.emplace_back(h, w, std::vector<std::uint8_t>(px.begin(), px.end()));
  }
  return images;
}

void save_dataset(const std::string& path, const std::vector<Image>& images) {
  write_file(path, encode_dataset(images));
}

std::vector<Image> load_dataset(const std::string& path) {
  try {
    return decode_dataset(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::vector<Image> read_ppm_dir(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError(dir + " is not a directory");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm")
      names.push_back(entry.path().filename().string());
  if (names.empty()) throw IoError("no .ppm files in " + dir);
  std::sort(names.begin(), names.end());
  std::vector<Image> images;
  for (const auto& n : names) {
    images.push_back(read_ppm((fs::path(dir) / n).string()));
    if (images.back().height() != images[0].height() || images.back().width() != images[0].width())
      throw ShapeError(n + " is " + std::to_string(images.back().height()) + "x" +
                       std::to_string(images.back().width()) + ", expected " +
                       std::to_string(images[0].height()) + "x" +
                       std::to_string(images[0].width()));
  }
  return images;
}

std::size_t pack_dataset(const std::string& dir, const std::string& out) {
  const auto images = read_ppm_dir(dir);
  save_dataset(out, images);
  return images.size();
}

std::vector<Image> load_images(const std::string& path) {
  std::error_code ec;
  if (fs::is_directory(path, ec)) return read_ppm_dir(path);
  return load_dataset(path);
}

std::vector<std::size_t> read_labels(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::size_t> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = line.substr(0, line.find('#'));
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    std::size_t v = 0;
    const char* first = line.data() + b;
    const char* last = line.data() + e + 1;
    auto [ptr, err] = std::from_chars(first, last, v);
    if (err != std::errc() || ptr != last)
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad label");
    labels.push_back(v);
  }
  return labels;
}

// ---- configuration ---------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <class E>
E parse_enum(const std::string& key, const std::string& v,
             std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (v == name) return value;
    names += names.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(key + ": expected one of " + names + ", got '" + v + "'");
}

const std::initializer_list<std::pair<const char*, ModelMode>> kModes = {
    {"decoder-only", ModelMode::kDecoderOnly}, {"encoder-decoder", ModelMode::kEncoderDecoder}};
const std::initializer_list<std::pair<const char*, SchemeKind>> kSchemes = {
    {"full", SchemeKind::kFull}, {"local1d", SchemeKind::kLocal1d}, {"local2d", SchemeKind::kLocal2d}};
const std::initializer_list<std::pair<const char*, DistributionKind>> kDistributions = {
    {"categorical", DistributionKind::kCategorical}, {"dmol", DistributionKind::kDmol}};
const std::initializer_list<std::pair<const char*, CoordinateKind>> kCoords = {
    {"sinusoidal", CoordinateKind::kSinusoidal}, {"learned", CoordinateKind::kLearned}};

template <class E>
const char* enum_name(E v, std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, value] : options)
    if (value == v) return name;
  return "?";
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size_key = [&t](const char* k, auto field) {
      t[k] = [field](RunConfig& c, const std::string& key, const std::string& v) {
        field(c) = parse_size(key, v);
      };
    };
    auto real_key = [&t](const char* k, auto field) {
      t[k] = [field](RunConfig& c, const std::string& key, const std::string& v) {
        field(c) = parse_real(key, v);
      };
    };
    auto bool_key = [&t](const char* k, auto field) {
      t[k] = [field](RunConfig& c, const std::string& key, const std::string& v) {
        field(c) = parse_bool(key, v);
      };
    };
    t["mode"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.mode = parse_enum(k, v, kModes);
    };
    t["scheme"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.scheme.kind = parse_enum(k, v, kSchemes);
    };
    t["distribution"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.distribution = parse_enum(k, v, kDistributions);
    };
    t["coords"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.coord_encoding = parse_enum(k, v, kCoords);
    };
    size_key("layers", [](RunConfig& c) -> std::size_t& { return c.model.layers; });
    size_key("encoder_layers", [](RunConfig& c) -> std::size_t& { return c.model.encoder_layers; });
    size_key("d", [](RunConfig& c) -> std::size_t& { return c.model.d; });
    size_key("heads", [](RunConfig& c) -> std::size_t& { return c.model.heads; });
    size_key("d_ff", [](RunConfig& c) -> std::size_t& { return c.model.d_ff; });
    real_key("dropout", [](RunConfig& c) -> double& { return c.model.dropout; });
    size_key("l_q", [](RunConfig& c) -> std::size_t& { return c.model.scheme.l_q; });
    size_key("l_m", [](RunConfig& c) -> std::size_t& { return c.model.scheme.l_m; });
    size_key("h_q", [](RunConfig& c) -> std::size_t& { return c.model.scheme.h_q; });
    size_key("w_q", [](RunConfig& c) -> std::size_t& { return c.model.scheme.w_q; });
    size_key("h_m", [](RunConfig& c) -> std::size_t& { return c.model.scheme.h_m; });
    size_key("w_m", [](RunConfig& c) -> std::size_t& { return c.model.scheme.w_m; });
    size_key("mixtures", [](RunConfig& c) -> std::size_t& { return c.model.mixtures; });
    size_key("classes", [](RunConfig& c) -> std::size_t& { return c.model.n_classes; });
    size_key("height", [](RunConfig& c) -> std::size_t& { return c.model.height; });
    size_key("width", [](RunConfig& c) -> std::size_t& { return c.model.width; });
    size_key("source_height", [](RunConfig& c) -> std::size_t& { return c.model.source_height; });
    size_key("source_width", [](RunConfig& c) -> std::size_t& { return c.model.source_width; });
    bool_key("per_channel_head", [](RunConfig& c) -> bool& { return c.model.per_channel_head; });
    bool_key("self_inclusive", [](RunConfig& c) -> bool& { return c.model.self_inclusive; });
    size_key("steps", [](RunConfig& c) -> std::size_t& { return c.train.steps; });
    size_key("batch", [](RunConfig& c) -> std::size_t& { return c.train.batch; });
    size_key("warmup", [](RunConfig& c) -> std::size_t& { return c.train.warmup; });
    real_key("beta1", [](RunConfig& c) -> double& { return c.train.beta1; });
    real_key("beta2", [](RunConfig& c) -> double& { return c.train.beta2; });
    real_key("eps", [](RunConfig& c) -> double& { return c.train.eps; });
    real_key("clip", [](RunConfig& c) -> double& { return c.train.clip; });
    size_key("eval_interval", [](RunConfig& c) -> std::size_t& { return c.train.eval_interval; });
    t["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.seed = parse_size(k, v);
    };
    real_key("lr_scale", [](RunConfig& c) -> double& { return c.train.lr_scale; });
    return t;
  }();
  return table;
}

std::string real_text(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::optional<std::string> preset;
  std::size_t lineno = 0, pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    line = line.substr(0, line.find('#'));
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": missing key");
    if (key == "preset") {
      preset = value;
      continue;
    }
    if (!setters().count(key)) throw ConfigError("unknown config key '" + key + "'");
    entries.emplace_back(std::move(key), std::move(value));
  }
  RunConfig c;
  if (preset) c.model = preset_config(*preset);
  for (const auto& [k, v] : entries) setters().at(k)(c, k, v);
  c.model.validate();
  c.train.validate();
  return c;
}

RunConfig read_config(const std::string& path) { return parse_config(read_file(path)); }

std::string format_config(const RunConfig& c) {
  const ModelConfig& m = c.model;
  const TrainConfig& t = c.train;
  std::ostringstream o;
  auto kv = [&o](const char* k, const auto& v) { o << k << " = " << v << "\n"; };
  kv("mode", enum_name(m.mode, kModes));
  kv("layers", m.layers);
  kv("encoder_layers", m.encoder_layers);
  kv("d", m.d);
  kv("heads", m.heads);
  kv("d_ff", m.d_ff);
  kv("dropout", real_text(m.dropout));
  kv("scheme", enum_name(m.scheme.kind, kSchemes));
  kv("l_q", m.scheme.l_q);
  kv("l_m", m.scheme.l_m);
  kv("h_q", m.scheme.h_q);
  kv("w_q", m.scheme.w_q);
  kv("h_m", m.scheme.h_m);
  kv("w_m", m.scheme.w_m);
  kv("distribution", enum_name(m.distribution, kDistributions));
  kv("mixtures", m.mixtures);
  kv("coords", enum_name(m.coord_encoding, kCoords));
  kv("classes", m.n_classes);
  kv("height", m.height);
  kv("width", m.width);
  kv("source_height", m.source_height);
  kv("source_width", m.source_width);
  kv("per_channel_head", m.per_channel_head ? "true" : "false");
  kv("self_inclusive", m.self_inclusive ? "true" : "false");
  kv("steps", t.steps);
  kv("batch", t.batch);
  kv("warmup", t.warmup);
  kv("beta1", real_text(t.beta1));
  kv("beta2", real_text(t.beta2));
  kv("eps", real_text(t.eps));
  kv("clip", real_text(t.clip));
  kv("eval_interval", t.eval_interval);
  kv("seed", t.seed);
  kv("lr_scale", real_text(t.lr_scale));
  return o.str();
}

// ---- checkpoints -----------------------------------------------------------

std::string encode_checkpoint(const RunConfig& config, const ImageTransformer& model) {
  Writer out;
  out.bytes("IMGT");
  out.u32(kFormatVersion);
  const std::string text = format_config(config);
  out.u32(static_cast<std::uint32_t>(text.size()));
  out.bytes(text);
  const ParamSet<float>& p = model.params();
  out.u32(static_cast<std::uint32_t>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    out.u32(static_cast<std::uint32_t>(p.name(i).size()));
    out.bytes(p.name(i));
    const Shape& s = p.value(i).shape();
    out.u32(static_cast<std::uint32_t>(s.size()));
    for (std::size_t dim : s) out.u64(dim);
    for (float v : p.value(i).data()) out.f32(v);
  }
  return out.take();
}

namespace {

struct RawCheckpoint {
  RunConfig config;
  ParamSet<float> params;
};

RawCheckpoint decode_raw(std::string_view bytes) {
  Reader in(bytes, "checkpoint");
  if (in.bytes(4) != "IMGT") throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t text_len = in.u32();
  RawCheckpoint raw;
  try {
    raw.config = parse_config(in.bytes(text_len));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  const std::uint32_t count = in.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name(in.bytes(in.u32()));
    const std::uint32_t rank = in.u32();
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& dim : shape) {
      dim = in.u64();
      if (dim == 0 || dim > bytes.size()) throw FormatError("tensor " + name + " has a bad extent");
      n *= dim;
    }
    in.need(n * 4);
    std::vector<float> values(n);
    for (auto& v : values) v = in.f32();
    raw.params.add(std::move(name), Tensor<float>(std::move(shape), std::move(values)));
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after checkpoint tensors");
  return raw;
}

}  // namespace

Checkpoint decode_checkpoint(std::string_view bytes) {
  RawCheckpoint raw = decode_raw(bytes);
  ImageTransformer model(raw.config.model, std::move(raw.params));
  return Checkpoint{raw.config, std::move(model)};
}

void save_checkpoint(const std::string& path, const RunConfig& config,
                     const ImageTransformer& model) {
  write_file(path, encode_checkpoint(config, model));
}

Checkpoint load_checkpoint(const std::string& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

ImageTransformer load_checkpoint_as(const std::string& path, const ModelConfig& expected) {
  RawCheckpoint raw = decode_raw(read_file(path));
  return ImageTransformer(expected, std::move(raw.params));
}

}  // namespace imgt
