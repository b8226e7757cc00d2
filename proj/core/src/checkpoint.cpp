#include "sdpadv/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "sdpadv/error.hpp"

SDPADV_NAMESPACE_BEGIN

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }
  std::uint64_t pos() const { return pos_; }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    need(4, "tensor data");
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= std::uint32_t(std::uint8_t(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return std::bit_cast<float>(bits);
  }
  std::string_view take(std::uint64_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::uint64_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw ParseError(std::string("truncated checkpoint while reading ") + what, pos_);
  }
  std::string_view bytes_;
  std::uint64_t pos_ = 0;
};

std::string prefixed(std::string_view prefix, const std::string& name) {
  return prefix.empty() ? name : std::string(prefix) + "." + name;
}

}  // namespace

std::string encode_tensors(std::span<const NamedTensor> records) {
  std::string out(kCheckpointMagic);
  for (const auto& r : records) {
    put_u64(out, r.name.size());
    out += r.name;
    put_u64(out, r.tensor.rank());
    for (auto d : r.tensor.shape()) put_u64(out, d);
    for (Real v : r.tensor.data()) put_f32(out, float(v));
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(std::min<std::size_t>(kCheckpointMagic.size(), bytes.size()), "magic") !=
          kCheckpointMagic)
    throw ParseError("bad checkpoint magic", 0);
  std::vector<NamedTensor> records;
  std::set<std::string> seen;
  while (!in.done()) {
    const auto name_pos = in.pos();
    const auto name_len = in.u64("name length");
    NamedTensor r;
    r.name = std::string(in.take(name_len, "name"));
    if (!seen.insert(r.name).second) throw ParseError("duplicate record '" + r.name + "'", name_pos);
    const auto rank = in.u64("rank");
    if (rank > 8) throw ParseError("implausible rank " + std::to_string(rank), in.pos() - 8);
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = in.u64("dims");
      if (d == 0) throw ParseError("zero dimension", in.pos() - 8);
      count *= d;
    }
    if (count > (bytes.size() - in.pos()) / 4)
      throw ParseError("truncated checkpoint while reading tensor data", in.pos());
    std::vector<Real> data(count);
    for (auto& v : data) v = Real(in.f32());
    r.tensor = Tensor(std::move(shape), std::move(data));
    records.push_back(std::move(r));
  }
  return records;
}

void write_tensors(const std::filesystem::path& path, std::span<const NamedTensor> records) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_tensors(records);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_tensors(bytes);
}

std::vector<NamedTensor> to_records(const ParamSet& params, std::string_view prefix) {
  std::vector<NamedTensor> out;
  for (const auto& p : params) out.push_back({prefixed(prefix, p.name), p.value});
  return out;
}

void assign_records(ParamSet& params, std::span<const NamedTensor> records, std::string_view prefix) {
  std::size_t matched = 0;
  for (auto& p : params) {
    const std::string want = prefixed(prefix, p.name);
    const NamedTensor* found = nullptr;
    for (const auto& r : records)
      if (r.name == want) found = &r;
    if (!found) throw LoadError("checkpoint lacks parameter '" + want + "'");
    if (found->tensor.shape() != p.value.shape())
      throw LoadError("parameter '" + want + "' has shape " + to_string(found->tensor.shape()) +
                      ", expected " + to_string(p.value.shape()));
    p.value = found->tensor;
    ++matched;
  }
  if (prefix.empty() && matched != records.size())
    throw LoadError("checkpoint holds " + std::to_string(records.size()) +
                    " records, architecture expects " + std::to_string(matched));
}

void save_params(const std::filesystem::path& path, const ParamSet& params) {
  write_tensors(path, to_records(params));
}

void load_params(const std::filesystem::path& path, ParamSet& params) {
  assign_records(params, read_tensors(path));
}

std::filesystem::path meta_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  p += ".meta";
  return p;
}

void write_meta(const std::filesystem::path& checkpoint, const Meta& meta) {
  std::ofstream out(meta_path(checkpoint));
  for (const auto& [k, v] : meta) out << k << '=' << v << '\n';
  if (!out) throw IoError("cannot write " + meta_path(checkpoint).string());
}

Meta read_meta(const std::filesystem::path& checkpoint) {
  Meta meta;
  std::ifstream in(meta_path(checkpoint));
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

SDPADV_NAMESPACE_END
