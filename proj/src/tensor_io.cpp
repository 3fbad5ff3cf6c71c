#include "tunnel/tensor_io.hpp"

#include <bit>
#include <cstring>

#include "tunnel/error.hpp"

namespace tunnel {

namespace {

constexpr char kMagic[4] = {'T', 'T', 'N', 'S'};
constexpr std::uint8_t kDtypeF32 = 0;

template <typename T>
void put(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail(ErrorCode::Parse, "tensor container is truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_tensors(const NamedTensors& entries) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kTensorFileVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    if (t.rank() == 0 || t.size() != shape_size(t.shape())) {
      fail(ErrorCode::ShapeMismatch, "entry '" + name + "' has no shape");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, kDtypeF32);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
    for (double v : t.values()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

NamedTensors decode_tensors(const std::string& bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string(kMagic, 4)) fail(ErrorCode::Parse, "not a tensor container (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kTensorFileVersion) fail(ErrorCode::Parse, "unsupported tensor container version");
  const auto count = r.get<std::uint32_t>();
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.take(name_len);
    if (r.get<std::uint8_t>() != kDtypeF32) fail(ErrorCode::Parse, "entry '" + name + "' has an unknown dtype");
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(r.get<std::uint64_t>());
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>()));
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) fail(ErrorCode::Parse, "trailing bytes after the last tensor entry");
  return out;
}

}  // namespace tunnel
