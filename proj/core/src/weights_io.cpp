#include "traffic/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "traffic/error.hpp"

namespace traffic {

namespace {

constexpr char kMagic[4] = {'N', 'N', 'W', 'T'};
constexpr uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for writing: " + path.string());
    path_ = path.string();
  }
  void bytes(const void* p, size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u8(uint8_t v) { bytes(&v, 1); }
  void u16(uint16_t v) {
    uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
    bytes(b, 2);
  }
  void u32(uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    bytes(b, 4);
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void close() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    path_ = path.string();
  }
  size_t offset() const { return pos_; }
  void need(size_t n, const char* what) {
    if (pos_ + n > buf_.size())
      throw FormatError(path_ + ": truncated file at byte " + std::to_string(pos_) +
                        " while reading " + what);
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<uint8_t>(buf_[pos_++]);
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = static_cast<uint8_t>(buf_[pos_]) |
                 (static_cast<uint16_t>(static_cast<uint8_t>(buf_[pos_ + 1])) << 8);
    pos_ += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(buf_[pos_ + i]);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(size_t n, const char* what) {
    need(n, what);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  const std::string& path() const { return path_; }

 private:
  std::vector<char> buf_;
  size_t pos_ = 0;
  std::string path_;
};

}  // namespace

void write_weight_container(const std::filesystem::path& path,
                            const std::vector<WeightRecord>& records) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(records.size()));
  for (const auto& rec : records) {
    if (rec.name.size() > 0xFFFF) throw IoError("record name too long: " + rec.name);
    w.u16(static_cast<uint16_t>(rec.name.size()));
    w.bytes(rec.name.data(), rec.name.size());
    w.u8(static_cast<uint8_t>(rec.tensors.size()));
    for (const auto& t : rec.tensors) {
      w.u8(static_cast<uint8_t>(t.rank()));
      for (int64_t d : t.dims) w.u32(static_cast<uint32_t>(d));
      for (float v : t.data) w.f32(v);
    }
  }
  w.close();
}

std::vector<WeightRecord> read_weight_container(const std::filesystem::path& path) {
  Reader r(path);
  std::string magic = r.str(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw FormatError(r.path() + ": bad magic at byte 0 (expected NNWT)");
  uint32_t version = r.u32("version");
  if (version != kVersion)
    throw FormatError(r.path() + ": unsupported version " + std::to_string(version) +
                      " at byte 4");
  uint32_t count = r.u32("record count");
  std::vector<WeightRecord> records;
  records.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    WeightRecord rec;
    uint16_t name_len = r.u16("name length");
    rec.name = r.str(name_len, "record name");
    uint8_t tensors = r.u8("tensor count");
    for (uint8_t t = 0; t < tensors; ++t) {
      uint8_t rank = r.u8("tensor rank");
      if (rank > 4)
        throw FormatError(r.path() + ": tensor rank " + std::to_string(rank) + " at byte " +
                          std::to_string(r.offset() - 1) + " exceeds 4");
      Shape dims;
      for (uint8_t d = 0; d < rank; ++d) dims.push_back(r.u32("tensor dim"));
      Tensor tensor(dims);
      for (auto& v : tensor.data) v = r.f32("tensor data");
      rec.tensors.push_back(std::move(tensor));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_weights(const Model& m, const std::filesystem::path& path) {
  std::vector<WeightRecord> records;
  for (const auto& l : m.layers)
    if (l.tensors.present)
      records.push_back({l.spec.name, {l.tensors.weights, l.tensors.bias}});
  write_weight_container(path, records);
}

void load_weights(Model& m, const std::filesystem::path& path) {
  auto records = read_weight_container(path);
  for (auto& layer : m.layers) {
    if (!layer.tensors.present) continue;
    const WeightRecord* rec = nullptr;
    for (const auto& r : records)
      if (r.name == layer.spec.name) {
        rec = &r;
        break;
      }
    if (!rec)
      throw FormatError(path.string() + ": no record for layer '" + layer.spec.name + "'");
    if (rec->tensors.size() != 2 || rec->tensors[0].dims != layer.tensors.weights.dims ||
        rec->tensors[1].dims != layer.tensors.bias.dims)
      throw FormatError(path.string() + ": shape conflict for layer '" + layer.spec.name + "'");
    layer.tensors.weights = rec->tensors[0];
    layer.tensors.bias = rec->tensors[1];
  }
}

ImportReport import_by_name(Model& m, const std::filesystem::path& path) {
  auto records = read_weight_container(path);
  ImportReport report;
  std::vector<bool> used(records.size(), false);
  for (auto& layer : m.layers) {
    if (!layer.tensors.present) continue;
    bool matched = false;
    for (size_t i = 0; i < records.size(); ++i) {
      if (records[i].name != layer.spec.name) continue;
      const auto& ts = records[i].tensors;
      if (ts.size() != 2 || ts[0].dims != layer.tensors.weights.dims ||
          ts[1].dims != layer.tensors.bias.dims)
        throw FormatError(path.string() + ": shape conflict for matched layer '" +
                          layer.spec.name + "'");
      layer.tensors.weights = ts[0];
      layer.tensors.bias = ts[1];
      used[i] = true;
      matched = true;
      break;
    }
    (matched ? report.matched : report.unmatched_model).push_back(layer.spec.name);
  }
  for (size_t i = 0; i < records.size(); ++i)
    if (!used[i]) report.unmatched_file.push_back(records[i].name);
  return report;
}

}  // namespace traffic
