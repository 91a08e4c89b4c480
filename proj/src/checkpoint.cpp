#include "hasr/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hasr/errors.h"

namespace hasr {

namespace {

constexpr char kMagic[4] = {'H', 'C', 'K', 'P'};

void put_uint(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t uint(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const NamedTensor& e : entries) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt, Dtype dtype) {
  std::string out;
  out.push_back(static_cast<char>(kCheckpointVersion));
  out.append(kMagic, 4);
  put_uint(out, ckpt.metadata.size(), 4);
  out += ckpt.metadata;
  put_uint(out, ckpt.entries.size(), 4);
  for (const NamedTensor& e : ckpt.entries) {
    if (e.name.size() > 0xffff) throw ContractError("checkpoint entry name too long");
    put_uint(out, e.name.size(), 2);
    out += e.name;
    out.push_back(static_cast<char>(dtype));
    const Shape& shape = e.tensor.shape();
    put_uint(out, shape.size(), 1);
    for (std::size_t d : shape) put_uint(out, d, 4);
  }
  for (const NamedTensor& e : ckpt.entries) {
    for (double v : e.tensor.data()) {
      if (dtype == Dtype::kFloat64) {
        put_uint(out, std::bit_cast<std::uint64_t>(v), 8);
      } else {
        put_uint(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
      }
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  const auto version = in.uint(1);
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  if (in.bytes(4) != std::string(kMagic, 4)) throw ParseError("not a checkpoint file");
  Checkpoint ckpt;
  ckpt.metadata = in.bytes(in.uint(4));
  const auto count = in.uint(4);
  struct Header {
    std::string name;
    Dtype dtype;
    Shape shape;
  };
  std::vector<Header> headers;
  for (std::uint64_t i = 0; i < count; ++i) {
    Header h;
    h.name = in.bytes(in.uint(2));
    const auto dt = in.uint(1);
    if (dt > 1) throw ParseError("unknown dtype in checkpoint entry " + h.name);
    h.dtype = static_cast<Dtype>(dt);
    const auto rank = in.uint(1);
    for (std::uint64_t r = 0; r < rank; ++r) h.shape.push_back(in.uint(4));
    headers.push_back(std::move(h));
  }
  for (Header& h : headers) {
    Buffer data(shape_numel(h.shape));
    for (double& v : data) {
      v = h.dtype == Dtype::kFloat64 ? std::bit_cast<double>(in.uint(8))
                                     : std::bit_cast<float>(static_cast<std::uint32_t>(in.uint(4)));
    }
    ckpt.entries.push_back({std::move(h.name), Tensor(std::move(h.shape), std::move(data))});
  }
  if (!in.done()) throw ParseError("trailing bytes after checkpoint payload");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt, Dtype dtype) {
  const std::string bytes = encode_checkpoint(ckpt, dtype);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UserError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw UserError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace hasr
