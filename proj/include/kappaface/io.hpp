#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kappaface/errors.hpp"

// All on-disk binary formats are little-endian; this library targets
// little-endian hosts only.
static_assert(std::endian::native == std::endian::little,
              "binary file formats require a little-endian host");

namespace kappaface::io {

/// Stream wrapper that tracks the byte offset so corrupt files can be
/// reported with the position of the failure.
class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  void read_bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      raise(ErrorKind::FormatError,
            name_ + ": truncated at byte " + std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())));
    }
    offset_ += n;
  }

  std::uint32_t read_u32() {
    std::uint32_t v;
    read_bytes(&v, sizeof v);
    return v;
  }

  float read_f32() {
    float v;
    read_bytes(&v, sizeof v);
    return v;
  }

  double read_f64() {
    double v;
    read_bytes(&v, sizeof v);
    return v;
  }

  void expect_magic(const char (&magic)[5]) {
    char got[4];
    read_bytes(got, 4);
    if (std::string(got, 4) != std::string(magic, 4)) {
      raise(ErrorKind::FormatError,
            name_ + ": expected magic \"" + std::string(magic, 4) + "\" at byte 0, got \"" +
                std::string(got, 4) + "\"");
    }
  }

  std::size_t offset() const { return offset_; }
  const std::string& name() const { return name_; }

 private:
  std::istream& in_;
  std::string name_;
  std::size_t offset_ = 0;
};

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void write_bytes(const void* src, std::size_t n) {
    out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
  }

  void write_u32(std::uint32_t v) { write_bytes(&v, sizeof v); }
  void write_f32(float v) { write_bytes(&v, sizeof v); }
  void write_f64(double v) { write_bytes(&v, sizeof v); }
  void write_magic(const char (&magic)[5]) { write_bytes(magic, 4); }

 private:
  std::ostream& out_;
};

/// Row-major matrix payloads.
void write_matrix_f32(BinaryWriter& w, const Eigen::MatrixXf& m);
void write_matrix_f64(BinaryWriter& w, const Eigen::MatrixXd& m);
Eigen::MatrixXf read_matrix_f32(BinaryReader& r, Eigen::Index rows, Eigen::Index cols);
Eigen::MatrixXd read_matrix_f64(BinaryReader& r, Eigen::Index rows, Eigen::Index cols);

}  // namespace kappaface::io
