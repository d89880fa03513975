#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mainet/tensor.hpp"

namespace mainet::io {

/// Tensor wire format: little-endian u32 rank, u32 dims[rank], f64 payload in
/// row-major order. Used by dataset records and checkpoints.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void write_u32(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32(std::istream& is);
void write_i64(std::ostream& os, std::int64_t v);
std::int64_t read_i64(std::istream& is);
void write_f64(std::ostream& os, double v);
double read_f64(std::istream& is);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace mainet::io
