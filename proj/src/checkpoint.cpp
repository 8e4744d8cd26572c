#include "s2pnm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "s2pnm/error.hpp"

namespace s2pnm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw DataError("checkpoint is truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensors(std::span<const NamedTensor> tensors) {
  std::vector<std::uint8_t> out = {'S', '2', 'P', 'N'};
  put<std::uint32_t>(out, kCheckpointVersion);
  for (const NamedTensor& nt : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nt.name.size()));
    out.insert(out.end(), nt.name.begin(), nt.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(nt.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nt.value.rank()));
    for (std::size_t d : nt.value.shape()) put<std::uint64_t>(out, d);
    for (double v : nt.value.values()) {
      if (nt.dtype == DType::kF32) put<float>(out, static_cast<float>(v));
      else put<double>(out, v);
    }
  }
  put<std::uint64_t>(out, fnv1a64(out));
  return out;
}

std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw DataError("checkpoint is truncated");
  if (std::memcmp(bytes.data(), "S2PN", 4) != 0) throw DataError("not a checkpoint (bad magic)");
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (fnv1a64(body) != stored) throw DataError("checkpoint checksum mismatch");

  Reader r(body.subspan(4));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<NamedTensor> out;
  while (r.remaining() > 0) {
    NamedTensor nt;
    nt.name = r.get_string(r.get<std::uint32_t>());
    const auto code = r.get<std::uint8_t>();
    if (code != static_cast<std::uint8_t>(DType::kF32) && code != static_cast<std::uint8_t>(DType::kF64)) {
      throw DataError("unknown dtype code " + std::to_string(code) + " for tensor '" + nt.name + "'");
    }
    nt.dtype = static_cast<DType>(code);
    const auto rank = r.get<std::uint32_t>();
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get<std::uint64_t>());
      count *= d;
    }
    const std::size_t width = nt.dtype == DType::kF32 ? 4 : 8;
    if (count > r.remaining() / width) throw DataError("checkpoint is truncated");
    std::vector<double> data(count);
    for (double& v : data) v = nt.dtype == DType::kF32 ? static_cast<double>(r.get<float>()) : r.get<double>();
    nt.value = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(nt));
  }
  return out;
}

void save_tensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  const auto bytes = encode_tensors(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensors(bytes);
}

namespace {

std::vector<NamedTensor> mf_records(const MfParams& p, DType dtype) {
  return {
      {"user_factors", p.user_factors, dtype},
      {"item_factors", p.item_factors, dtype},
      {"user_bias", p.user_bias, dtype},
      {"item_bias", p.item_bias, dtype},
      {"b_g", Tensor::vector({p.global_mean}), DType::kF64},
  };
}

using Records = std::map<std::string, Tensor>;

Records by_name(std::vector<NamedTensor> v) {
  Records m;
  for (auto& nt : v) m.emplace(std::move(nt.name), std::move(nt.value));
  return m;
}

Tensor take(Records& r, const std::string& name) {
  auto it = r.find(name);
  if (it == r.end()) throw DataError("checkpoint has no tensor '" + name + "'");
  return std::move(it->second);
}

MfParams mf_from(Records& r) {
  MfParams p;
  p.user_factors = take(r, "user_factors");
  p.item_factors = take(r, "item_factors");
  p.user_bias = take(r, "user_bias");
  p.item_bias = take(r, "item_bias");
  const Tensor bg = take(r, "b_g");
  if (bg.size() != 1) throw DataError("checkpoint tensor 'b_g' must hold one value");
  p.global_mean = bg[0];
  return p;
}

}  // namespace

void save_checkpoint(const S2pnmParams& params, const std::filesystem::path& path, DType dtype) {
  std::vector<NamedTensor> recs;
  for (const auto& [name, t] : named_tensors(params)) recs.push_back({name, *t, dtype});
  recs.push_back({"b_g", Tensor::vector({params.mf.global_mean}), DType::kF64});
  recs.push_back({"meta.variant", Tensor::vector({static_cast<double>(params.variant)}), DType::kF64});
  recs.push_back({"meta.psi", Tensor::vector({static_cast<double>(params.net.psi)}), DType::kF64});
  save_tensors(path, recs);
}

S2pnmParams load_checkpoint(const std::filesystem::path& path) {
  Records r = by_name(load_tensors(path));
  S2pnmParams p;
  for (auto& [name, t] : named_tensors(p)) *t = take(r, name);
  p.mf.global_mean = take(r, "b_g")[0];
  const int variant = static_cast<int>(take(r, "meta.variant")[0]);
  const int psi = static_cast<int>(take(r, "meta.psi")[0]);
  if (variant < 0 || variant > 2) throw DataError("checkpoint has an unknown model variant");
  if (psi < 0 || psi > 2) throw DataError("checkpoint has an unknown activation");
  p.variant = static_cast<Variant>(variant);
  p.net.psi = static_cast<Activation>(psi);
  return p;
}

void save_mf_checkpoint(const MfParams& params, const std::filesystem::path& path, DType dtype) {
  save_tensors(path, mf_records(params, dtype));
}

MfParams load_mf_checkpoint(const std::filesystem::path& path) {
  Records r = by_name(load_tensors(path));
  return mf_from(r);
}

void check_shapes(const S2pnmParams& expected, const S2pnmParams& actual) {
  const auto e = named_tensors(expected);
  const auto a = named_tensors(actual);
  for (std::size_t k = 0; k < e.size(); ++k) {
    if (!e[k].second->same_shape(*a[k].second)) {
      throw DataError("tensor '" + e[k].first + "' has shape " + a[k].second->shape_string() +
                      ", expected " + e[k].second->shape_string());
    }
  }
}

void check_mf_shapes(std::size_t m, std::size_t n, std::size_t d_user, const MfParams& actual) {
  auto check = [](const std::string& name, const Tensor& t, std::vector<std::size_t> want) {
    if (t.shape() != want) {
      throw DataError("tensor '" + name + "' has shape " + t.shape_string() + ", expected " +
                      Tensor(want).shape_string());
    }
  };
  check("user_factors", actual.user_factors, {m, d_user});
  check("item_factors", actual.item_factors, {n, d_user});
  check("user_bias", actual.user_bias, {m});
  check("item_bias", actual.item_bias, {n});
}

}  // namespace s2pnm
