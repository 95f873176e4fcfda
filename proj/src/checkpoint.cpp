// SPDX-License-Identifier: Apache-2.0
#include "wyner/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <vector>

#include "wyner/config.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace wyner {

namespace {

constexpr char kMagic[4] = {'W', 'Y', 'N', 'R'};
constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::uint8_t kDtypeBytes = 1;

struct Array {
  std::string name;
  std::uint8_t dtype = kDtypeF64;
  std::vector<std::uint64_t> dims;
  std::vector<unsigned char> payload;
};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<unsigned char> bytes;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> data) : data_(std::move(data)) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const unsigned char* take(std::size_t n) {
    if (n > data_.size() - pos_) throw CorruptCheckpoint("checkpoint is truncated");
    const unsigned char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }
  const unsigned char* at(std::size_t pos) const { return data_.data() + pos; }

 private:
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

void write_array(Writer& w, const Array& a) {
  const std::size_t start = w.bytes.size();
  w.put(static_cast<std::uint16_t>(a.name.size()));
  w.put_bytes(a.name.data(), a.name.size());
  w.put(a.dtype);
  w.put(static_cast<std::uint8_t>(a.dims.size()));
  for (std::uint64_t d : a.dims) w.put(d);
  w.put_bytes(a.payload.data(), a.payload.size());
  const uLong crc = crc32(0L, w.bytes.data() + start, static_cast<uInt>(w.bytes.size() - start));
  w.put(static_cast<std::uint32_t>(crc));
}

Array read_array(Reader& r) {
  const std::size_t start = r.pos();
  Array a;
  const auto name_len = r.get<std::uint16_t>();
  const unsigned char* name = r.take(name_len);
  a.name.assign(reinterpret_cast<const char*>(name), name_len);
  a.dtype = r.get<std::uint8_t>();
  const auto rank = r.get<std::uint8_t>();
  std::uint64_t count = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    a.dims.push_back(r.get<std::uint64_t>());
    count *= a.dims.back();
  }
  std::uint64_t elem = 0;
  if (a.dtype == kDtypeF64) {
    elem = sizeof(double);
  } else if (a.dtype == kDtypeBytes) {
    elem = 1;
  } else {
    throw CorruptCheckpoint("array " + a.name + " has unknown dtype");
  }
  if (count > (std::uint64_t{1} << 40)) throw CorruptCheckpoint("array " + a.name + " is too large");
  const unsigned char* payload = r.take(count * elem);
  a.payload.assign(payload, payload + count * elem);
  const std::size_t end = r.pos();
  const auto stored = r.get<std::uint32_t>();
  const uLong crc = crc32(0L, r.at(start), static_cast<uInt>(end - start));
  if (static_cast<std::uint32_t>(crc) != stored) {
    throw CorruptCheckpoint("checksum mismatch in array " + a.name);
  }
  return a;
}

Array f64_array(const std::string& name, const Tensor& t) {
  Array a;
  a.name = name;
  a.dtype = kDtypeF64;
  for (std::size_t d : t.shape()) a.dims.push_back(d);
  a.payload.resize(t.size() * sizeof(double));
  std::memcpy(a.payload.data(), t.raw(), a.payload.size());
  return a;
}

Array bytes_array(const std::string& name, const std::string& text) {
  Array a;
  a.name = name;
  a.dtype = kDtypeBytes;
  a.dims = {text.size()};
  a.payload.assign(text.begin(), text.end());
  return a;
}

std::string as_text(const Array& a) {
  if (a.dtype != kDtypeBytes) throw CorruptCheckpoint("array " + a.name + " should hold bytes");
  return std::string(a.payload.begin(), a.payload.end());
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& config_json, const std::string& path) {
  std::vector<Array> arrays;
  arrays.push_back(bytes_array("__model_spec__", model_spec_json(model.spec)));
  arrays.push_back(bytes_array("__config__", config_json));
  arrays.push_back(f64_array("__marginal_ready__",
                             Tensor::row({model.marginal_x_ready ? 1.0 : 0.0,
                                          model.marginal_y_ready ? 1.0 : 0.0})));
  for (const NamedConstParam& p : model.parameters()) arrays.push_back(f64_array(p.name, *p.tensor));

  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(arrays.size()));
  for (const Array& a : arrays) write_array(w, a);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw Error("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCheckpoint("cannot open " + path);
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {}));
  char magic[4];
  std::memcpy(magic, r.take(4), 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw VersionMismatch(path + " is not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint version " + std::to_string(version) + " is not supported");
  }
  const auto count = r.get<std::uint32_t>();
  std::map<std::string, Array> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    Array a = read_array(r);
    const std::string name = a.name;
    if (!arrays.emplace(name, std::move(a)).second) {
      throw CorruptCheckpoint("duplicate array " + name);
    }
  }
  if (!r.done()) throw CorruptCheckpoint("trailing bytes after the last array");

  auto need = [&](const std::string& name) -> const Array& {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw CorruptCheckpoint("missing array " + name);
    return it->second;
  };
  Checkpoint ck;
  ModelSpec spec;
  try {
    spec = parse_model_spec(as_text(need("__model_spec__")));
  } catch (const ConfigInvalid& e) {
    throw CorruptCheckpoint(std::string("bad model spec: ") + e.what());
  }
  ck.config_json = as_text(need("__config__"));
  ck.model = init_model(spec, 0);
  const Array& flags = need("__marginal_ready__");
  if (flags.dtype != kDtypeF64 || flags.payload.size() != 2 * sizeof(double)) {
    throw CorruptCheckpoint("bad readiness flags");
  }
  double f[2];
  std::memcpy(f, flags.payload.data(), sizeof(f));
  ck.model.marginal_x_ready = f[0] != 0.0;
  ck.model.marginal_y_ready = f[1] != 0.0;

  std::size_t params = 0;
  for (const NamedParam& p : ck.model.parameters()) {
    const Array& a = need(p.name);
    std::vector<std::uint64_t> dims(p.tensor->shape().begin(), p.tensor->shape().end());
    if (a.dtype != kDtypeF64 || a.dims != dims) {
      throw CorruptCheckpoint("array " + p.name + " does not match the model shape");
    }
    std::memcpy(p.tensor->raw(), a.payload.data(), a.payload.size());
    ++params;
  }
  if (params + 3 != arrays.size()) throw CorruptCheckpoint("checkpoint holds unexpected arrays");
  return ck;
}

}  // namespace wyner
