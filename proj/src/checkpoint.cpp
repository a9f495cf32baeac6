#include "nmn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace nmn {

namespace {

constexpr char kMagic[4] = {'Y', 'A', 'T', 'K'};

template <typename T>
void put(std::vector<char>& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::vector<char>& b, const std::string& path) : b_(b), path_(path) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= T(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(b_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw std::runtime_error(path_ + ": truncated checkpoint");
  }
  const std::vector<char>& b_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::uint32_t float_bits(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  return u;
}

float bits_float(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::vector<char> buf(kMagic, kMagic + 4);
  put<std::uint32_t>(buf, kCheckpointVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    std::uint64_t count = 1;
    for (auto d : t.shape) count *= d;
    if (count != t.data.size()) throw ShapeError("checkpoint: tensor " + t.name + " shape does not match its data");
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.name.size()));
    buf.insert(buf.end(), t.name.begin(), t.name.end());
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(buf, d);
    put<std::uint64_t>(buf, offset);
    offset += 4 * count;
  }
  for (const auto& t : tensors) {
    for (float f : t.data) put<std::uint32_t>(buf, float_bits(f));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  const std::vector<char> b{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  Reader r(b, path);
  if (r.bytes(4) != std::string(kMagic, 4)) throw std::runtime_error(path + ": not a YATK checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out(count);
  std::vector<std::uint64_t> offsets(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    out[i].name = r.bytes(r.get<std::uint32_t>());
    out[i].shape.resize(r.get<std::uint32_t>());
    for (auto& d : out[i].shape) d = r.get<std::uint64_t>();
    offsets[i] = r.get<std::uint64_t>();
  }
  const std::size_t payload = r.pos();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint64_t n = 1;
    for (auto d : out[i].shape) n *= d;
    if (offsets[i] > b.size() - payload || n > (b.size() - payload - offsets[i]) / 4) {
      throw std::runtime_error(path + ": tensor " + out[i].name + " runs past the end of the file");
    }
    r.seek(payload + offsets[i]);
    out[i].data.resize(n);
    for (auto& f : out[i].data) f = bits_float(r.get<std::uint32_t>());
  }
  return out;
}

}  // namespace nmn
