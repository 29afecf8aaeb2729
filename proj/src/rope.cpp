#include "lmk/rope.hpp"

#include <cmath>
#include <stdexcept>

namespace lmk {

std::vector<double> rope_frequencies(std::size_t d_head, double base) {
  if (d_head == 0 || d_head % 2 != 0) {
    throw std::invalid_argument("rope_frequencies: d_head must be even and positive");
  }
  if (!(base > 0.0)) {
    throw std::invalid_argument("rope_frequencies: base must be positive");
  }
  std::vector<double> theta(d_head / 2);
  for (std::size_t j = 0; j < theta.size(); ++j) {
    theta[j] = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(d_head));
  }
  return theta;
}

std::vector<double> rotate(std::span<const double> v, double position,
                           std::span<const double> theta) {
  if (v.size() != 2 * theta.size()) {
    throw std::invalid_argument("rotate: vector size must equal 2 * |theta|");
  }
  std::vector<double> out(v.size());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double angle = position * theta[j];
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double x = v[2 * j];
    const double y = v[2 * j + 1];
    out[2 * j] = x * c - y * s;
    out[2 * j + 1] = x * s + y * c;
  }
  return out;
}

void rotate_block(Matrix& m, std::size_t col_offset, std::span<const double> positions,
                  std::span<const double> theta, double sign) {
  if (static_cast<std::size_t>(m.rows()) != positions.size()) {
    throw std::invalid_argument("rotate_block: one position per row required");
  }
  if (col_offset + 2 * theta.size() > static_cast<std::size_t>(m.cols())) {
    throw std::invalid_argument("rotate_block: column block out of range");
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double* row = m.row(r).data() + col_offset;
    const double p = sign * positions[static_cast<std::size_t>(r)];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double angle = p * theta[j];
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      const double x = row[2 * j];
      const double y = row[2 * j + 1];
      row[2 * j] = x * c - y * s;
      row[2 * j + 1] = x * s + y * c;
    }
  }
}

}  // namespace lmk
