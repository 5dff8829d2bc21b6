#include "drums/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

namespace drums {

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

template <class U> void put_le(std::vector<std::uint8_t> &out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }

  template <class U> U get(const std::string &ctx) {
    if (!has(sizeof(U)))
      throw TruncatedArchiveError("archive truncated while reading " + ctx);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const std::string &ctx) {
    if (!has(n))
      throw TruncatedArchiveError("archive truncated in " + ctx);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t floats_per_element(DType d) { return d == DType::Complex64 ? 2 : 1; }

} // namespace

Tensor make_tensor(std::string name, const RArray &a) {
  Tensor t{std::move(name), a.shape(), DType::Real32, {}};
  t.data.reserve(a.size());
  for (double v : a.values())
    t.data.push_back(static_cast<float>(v));
  return t;
}

Tensor make_tensor(std::string name, const CArray &a) {
  Tensor t{std::move(name), a.shape(), DType::Complex64, {}};
  t.data.reserve(2 * a.size());
  for (const cx &v : a.values()) {
    t.data.push_back(static_cast<float>(v.real()));
    t.data.push_back(static_cast<float>(v.imag()));
  }
  return t;
}

Tensor make_tensor(std::string name, const MaskArray &a) {
  Tensor t{std::move(name), a.shape(), DType::Real32, {}};
  t.data.reserve(a.size());
  for (auto v : a.values())
    t.data.push_back(static_cast<float>(v));
  return t;
}

Tensor make_scalars(std::string name, const std::vector<double> &values) {
  RArray a({values.size()}, values);
  return make_tensor(std::move(name), a);
}

RArray to_real(const Tensor &t) {
  if (t.dtype != DType::Real32)
    throw DataError("entry '" + t.name + "' is not real");
  return RArray(t.dims, std::vector<double>(t.data.begin(), t.data.end()));
}

CArray to_complex(const Tensor &t) {
  if (t.dtype == DType::Real32)
    return to_complex(to_real(t));
  std::vector<cx> v(t.element_count());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = cx(t.data[2 * i], t.data[2 * i + 1]);
  return CArray(t.dims, std::move(v));
}

MaskArray to_mask(const Tensor &t) {
  if (t.dtype != DType::Real32)
    throw DataError("entry '" + t.name + "' is not a real mask");
  std::vector<unsigned char> v(t.data.size());
  std::transform(t.data.begin(), t.data.end(), v.begin(),
                 [](float f) { return static_cast<unsigned char>(f != 0.0f); });
  return MaskArray(t.dims, std::move(v));
}

std::vector<double> to_scalars(const Tensor &t) {
  if (t.dtype != DType::Real32)
    throw DataError("entry '" + t.name + "' is not real");
  return {t.data.begin(), t.data.end()};
}

std::vector<std::uint8_t> encode_archive(const std::vector<Tensor> &entries) {
  std::set<std::string> names;
  for (const auto &t : entries) {
    if (!names.insert(t.name).second)
      throw DuplicateEntryError("duplicate archive entry '" + t.name + "'");
    if (t.data.size() != floats_per_element(t.dtype) * t.element_count())
      throw DataError("entry '" + t.name + "' payload does not match dims " +
                      shape_string(t.dims));
    for (auto d : t.dims)
      if (d == 0)
        throw DataError("entry '" + t.name + "' has a zero extent");
  }

  std::vector<std::uint8_t> out(std::begin(kArchiveMagic), std::end(kArchiveMagic));
  put_le<std::uint32_t>(out, kArchiveVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto &t : entries) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dtype));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims)
      put_le<std::uint64_t>(out, d);
    for (float f : t.data)
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

std::vector<Tensor> decode_archive(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(8, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kArchiveMagic)))
    throw BadMagicError("not a DRUMTNSR archive (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kArchiveVersion)
    throw UnsupportedVersionError("unsupported archive version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("entry count");

  std::vector<Tensor> entries;
  std::set<std::string> names;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string ctx = "entry #" + std::to_string(e);
    const auto name_len = r.get<std::uint32_t>(ctx + " name length");
    auto name_bytes = r.take(name_len, ctx + " name");
    Tensor t;
    t.name.assign(name_bytes.begin(), name_bytes.end());
    const std::string ectx = "entry '" + t.name + "'";
    const auto code = r.get<std::uint32_t>(ectx + " dtype");
    if (code != 1 && code != 2)
      throw ArchiveError(ectx + " has unknown dtype code " + std::to_string(code));
    t.dtype = static_cast<DType>(code);
    const auto ndim = r.get<std::uint32_t>(ectx + " ndim");
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto extent = r.get<std::uint64_t>(ectx + " dims");
      if (extent == 0)
        throw ArchiveError(ectx + " has a zero extent");
      t.dims.push_back(static_cast<std::size_t>(extent));
    }
    const std::size_t n = floats_per_element(t.dtype) * t.element_count();
    if (!r.has(4 * n))
      throw TruncatedArchiveError("archive truncated in payload of " + ectx);
    auto payload = r.take(4 * n, ectx + " payload");
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (std::size_t b = 0; b < 4; ++b)
        u |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
      t.data[i] = std::bit_cast<float>(u);
    }
    if (!names.insert(t.name).second)
      throw DuplicateEntryError("duplicate archive entry '" + t.name + "'");
    entries.push_back(std::move(t));
  }
  return entries;
}

void write_archive(const std::vector<Tensor> &entries, const std::filesystem::path &path) {
  const auto bytes = encode_archive(entries);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw ArchiveIoError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char *>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os)
    throw ArchiveIoError("write failed for '" + path.string() + "'");
}

std::vector<Tensor> read_archive(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw ArchiveIoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

Archive::Archive(std::vector<Tensor> entries) : entries_(std::move(entries)) {}

Archive Archive::load(const std::filesystem::path &path) { return Archive(read_archive(path)); }

bool Archive::contains(const std::string &name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Tensor &t) { return t.name == name; });
}

const Tensor &Archive::at(const std::string &name) const {
  for (const auto &t : entries_)
    if (t.name == name)
      return t;
  throw DataError("archive has no entry '" + name + "'");
}

void Archive::put(Tensor t) {
  for (auto &e : entries_)
    if (e.name == t.name) {
      e = std::move(t);
      return;
    }
  entries_.push_back(std::move(t));
}

void Archive::save(const std::filesystem::path &path) const { write_archive(entries_, path); }

} // namespace drums
