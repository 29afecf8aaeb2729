#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "lmk/autodiff.hpp"

namespace lmk::io {

void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_matrix(std::ostream& out, const Matrix& m);  // data only
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
void read_matrix(std::istream& in, Matrix& m);  // fills pre-shaped m

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);
std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

// 64-bit FNV-1a; stable across platforms, used to derive per-text seeds.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace lmk::io
