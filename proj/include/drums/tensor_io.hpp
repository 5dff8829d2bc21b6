#pragma once

#include "drums/core.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace drums {

enum class DType : std::uint32_t { Real32 = 1, Complex64 = 2 };

/// A named on-disk tensor. Complex payloads are interleaved (re, im) float pairs.
struct Tensor {
  std::string name;
  Shape dims;
  DType dtype = DType::Real32;
  std::vector<float> data;

  std::size_t element_count() const { return shape_size(dims); }
  bool operator==(const Tensor &) const = default;
};

Tensor make_tensor(std::string name, const RArray &a);
Tensor make_tensor(std::string name, const CArray &a);
Tensor make_tensor(std::string name, const MaskArray &a);
Tensor make_scalars(std::string name, const std::vector<double> &values);

RArray to_real(const Tensor &t);
CArray to_complex(const Tensor &t);
MaskArray to_mask(const Tensor &t);
std::vector<double> to_scalars(const Tensor &t);

class ArchiveError : public DataError {
public:
  using DataError::DataError;
};
class BadMagicError : public ArchiveError {
public:
  using ArchiveError::ArchiveError;
};
class UnsupportedVersionError : public ArchiveError {
public:
  using ArchiveError::ArchiveError;
};
class TruncatedArchiveError : public ArchiveError {
public:
  using ArchiveError::ArchiveError;
};
class DuplicateEntryError : public ArchiveError {
public:
  using ArchiveError::ArchiveError;
};
class ArchiveIoError : public ArchiveError {
public:
  using ArchiveError::ArchiveError;
};

inline constexpr char kArchiveMagic[8] = {'D', 'R', 'U', 'M', 'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kArchiveVersion = 1;

void write_archive(const std::vector<Tensor> &entries, const std::filesystem::path &path);
std::vector<Tensor> read_archive(const std::filesystem::path &path);

std::vector<std::uint8_t> encode_archive(const std::vector<Tensor> &entries);
std::vector<Tensor> decode_archive(std::span<const std::uint8_t> bytes);

/// Name-indexed access to a read archive.
class Archive {
public:
  Archive() = default;
  explicit Archive(std::vector<Tensor> entries);
  static Archive load(const std::filesystem::path &path);

  bool contains(const std::string &name) const;
  const Tensor &at(const std::string &name) const;
  const std::vector<Tensor> &entries() const { return entries_; }

  void put(Tensor t);
  void save(const std::filesystem::path &path) const;

private:
  std::vector<Tensor> entries_;
};

} // namespace drums
