#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "focus/error.hpp"

namespace focus {

static_assert(std::endian::native == std::endian::little,
              "VTM payloads are written with native little-endian floats");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

using Meta = std::map<std::string, std::string>;

// Dense row-major float32 matrix; row i belongs to token id i.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim, float fill = 0.0f)
      : rows_(rows), dim_(dim), data_(rows * dim, fill) {}
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data, Meta meta = {})
      : rows_(rows), dim_(dim), data_(std::move(data)), meta_(std::move(meta)) {
    if (data_.size() != rows_ * dim_)
      throw InputError("matrix data has " + std::to_string(data_.size()) + " values, expected " +
                       std::to_string(rows_) + "x" + std::to_string(dim_));
  }

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::span<float> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  float& at(std::size_t r, std::size_t c) { return data_[r * dim_ + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * dim_ + c]; }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  Meta& meta() { return meta_; }
  const Meta& meta() const { return meta_; }

  // Index of the first row holding a NaN or infinity, if any.
  std::optional<std::size_t> first_nonfinite_row() const {
    for (std::size_t i = 0; i < data_.size(); ++i)
      if (!std::isfinite(data_[i])) return i / (dim_ == 0 ? 1 : dim_);
    return std::nullopt;
  }

  // Values and shape compared bitwise (so -0.0f != 0.0f); meta included.
  bool bit_equal(const EmbeddingMatrix& o) const {
    return rows_ == o.rows_ && dim_ == o.dim_ && meta_ == o.meta_ &&
           std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(float)) == 0;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  Meta meta_;
};

inline bool rows_bit_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// FNV-1a over the raw bytes of a float span.
inline std::uint64_t checksum(std::span<const float> values) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  for (std::size_t i = 0; i < values.size_bytes(); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

// VTM v1 layout:
//   "VTM1" | u32 little-endian header length | UTF-8 JSON header | f32 LE row-major payload
// Header: {"byte_order":"little","dim":D,"dtype":"f32","meta":{...},"rows":R}
inline constexpr char kVtmMagic[4] = {'V', 'T', 'M', '1'};

inline std::string vtm_header(const EmbeddingMatrix& m) {
  nlohmann::json h;
  h["rows"] = m.rows();
  h["dim"] = m.dim();
  h["dtype"] = "f32";
  h["byte_order"] = "little";
  h["meta"] = m.meta();
  return h.dump();
}

inline void write_matrix(std::ostream& out, const EmbeddingMatrix& m) {
  if (auto bad = m.first_nonfinite_row())
    throw NumericalError("refusing to save matrix: non-finite value in row " + std::to_string(*bad));
  const std::string header = vtm_header(m);
  const auto len = static_cast<std::uint32_t>(header.size());
  unsigned char len_bytes[4] = {static_cast<unsigned char>(len & 0xFF),
                                static_cast<unsigned char>((len >> 8) & 0xFF),
                                static_cast<unsigned char>((len >> 16) & 0xFF),
                                static_cast<unsigned char>((len >> 24) & 0xFF)};
  out.write(kVtmMagic, 4);
  out.write(reinterpret_cast<const char*>(len_bytes), 4);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(m.data().data()),
            static_cast<std::streamsize>(m.data().size_bytes()));
  if (!out) throw InputError("write failed while saving matrix");
}

inline EmbeddingMatrix read_matrix(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kVtmMagic, 4) != 0)
    throw InputError("not a VTM1 file (bad magic)");
  unsigned char len_bytes[4];
  if (!in.read(reinterpret_cast<char*>(len_bytes), 4)) throw InputError("truncated VTM header length");
  const std::uint32_t len = len_bytes[0] | (len_bytes[1] << 8) | (len_bytes[2] << 16) |
                            (static_cast<std::uint32_t>(len_bytes[3]) << 24);
  std::string header(len, '\0');
  if (!in.read(header.data(), len)) throw InputError("truncated VTM header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("malformed VTM header: ") + e.what());
  }
  std::size_t rows = 0, dim = 0;
  Meta meta;
  try {
    if (h.at("dtype").get<std::string>() != "f32") throw InputError("unsupported dtype");
    if (h.at("byte_order").get<std::string>() != "little") throw InputError("unsupported byte order");
    rows = h.at("rows").get<std::size_t>();
    dim = h.at("dim").get<std::size_t>();
    if (h.contains("meta")) meta = h.at("meta").get<Meta>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid VTM header: ") + e.what());
  }
  std::vector<float> data(rows * dim);
  const auto want = static_cast<std::streamsize>(data.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(data.data()), want);
  if (in.gcount() != want)
    throw InputError("VTM payload dimension mismatch: header declares " + std::to_string(rows) + "x" +
                     std::to_string(dim) + " but payload holds " +
                     std::to_string(in.gcount() / static_cast<std::streamsize>(sizeof(float))) +
                     " values");
  if (in.peek() != std::char_traits<char>::eof())
    throw InputError("VTM payload dimension mismatch: trailing bytes after " + std::to_string(rows) +
                     "x" + std::to_string(dim) + " payload");
  EmbeddingMatrix m(rows, dim, std::move(data), std::move(meta));
  if (auto bad = m.first_nonfinite_row())
    throw NumericalError("non-finite value in row " + std::to_string(*bad));
  return m;
}

inline void save_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  write_matrix(out, m);
}

inline EmbeddingMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open matrix file " + path.string());
  try {
    return read_matrix(in);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(path.string() + ": " + e.what());
  }
}

// Whitespace text import: one row per line, blank lines skipped.
inline EmbeddingMatrix parse_text_matrix(std::istream& in) {
  std::vector<float> data;
  std::size_t rows = 0, dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::size_t count = 0;
    std::string field;
    while (ls >> field) {
      char* end = nullptr;
      const float v = std::strtof(field.c_str(), &end);
      if (end == field.c_str() || *end != '\0')
        throw InputError("line " + std::to_string(lineno) + ": not a number '" + field + "'");
      if (!std::isfinite(v))
        throw NumericalError("line " + std::to_string(lineno) + ": non-finite value");
      data.push_back(v);
      ++count;
    }
    if (count == 0) continue;
    if (rows == 0) dim = count;
    if (count != dim)
      throw InputError("line " + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                       " values, found " + std::to_string(count));
    ++rows;
  }
  return EmbeddingMatrix(rows, dim, std::move(data));
}

inline EmbeddingMatrix load_text_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_text_matrix(in);
}

// Loads VTM, or the whitespace text form when the file lacks the VTM magic.
inline EmbeddingMatrix load_any_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open matrix file " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, kVtmMagic, 4) == 0) return load_matrix(path);
  return load_text_matrix(path);
}

struct MatrixStats {
  std::vector<double> mean;  // per dimension
  std::vector<double> std;   // per dimension, population convention
  double global_mean = 0.0;
  double global_std = 0.0;
};

inline MatrixStats matrix_stats(const EmbeddingMatrix& m) {
  if (m.rows() == 0) throw InputError("matrix_stats needs at least one row");
  const std::size_t d = m.dim();
  MatrixStats s;
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += row[c];
  }
  double total = 0.0;
  for (auto& v : s.mean) {
    total += v;
    v /= static_cast<double>(m.rows());
  }
  const double n = static_cast<double>(m.rows()) * static_cast<double>(d);
  s.global_mean = n > 0 ? total / n : 0.0;
  double global_sq = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      const double dc = row[c] - s.mean[c];
      const double dg = row[c] - s.global_mean;
      s.std[c] += dc * dc;
      global_sq += dg * dg;
    }
  }
  for (auto& v : s.std) v = std::sqrt(v / static_cast<double>(m.rows()));
  s.global_std = n > 0 ? std::sqrt(global_sq / n) : 0.0;
  return s;
}

struct SizeReport {
  std::uint64_t old_total = 0;
  std::uint64_t new_total = 0;
  double reduction_fraction = 0.0;
};

// Parameter totals before/after swapping the vocabulary. With an untied output
// head the embedding matrix is counted twice.
inline SizeReport size_report(std::uint64_t non_embedding_params, std::uint64_t dim,
                              std::uint64_t old_vocab, std::uint64_t new_vocab, bool tied_head) {
  if (dim == 0 || old_vocab == 0 || new_vocab == 0)
    throw InputError("size_report: dim and vocabulary sizes must be positive");
  const std::uint64_t copies = tied_head ? 1 : 2;
  SizeReport r;
  r.old_total = non_embedding_params + copies * old_vocab * dim;
  r.new_total = non_embedding_params + copies * new_vocab * dim;
  r.reduction_fraction = 1.0 - static_cast<double>(r.new_total) / static_cast<double>(r.old_total);
  return r;
}

inline nlohmann::json to_json(const SizeReport& r) {
  return {{"old_total", r.old_total}, {"new_total", r.new_total},
          {"reduction_fraction", r.reduction_fraction}};
}

// Copies the listed rows into a new matrix (meta is not carried over).
inline EmbeddingMatrix select_rows(const EmbeddingMatrix& m, std::span<const std::uint32_t> ids) {
  EmbeddingMatrix out(ids.size(), m.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= m.rows()) throw InputError("row id " + std::to_string(ids[i]) + " out of range");
    auto src = m.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace focus
