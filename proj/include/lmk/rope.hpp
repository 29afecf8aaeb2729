#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lmk/autodiff.hpp"

namespace lmk {

// theta_j = base^(-2j / d_head), j = 0 .. d_head/2 - 1.
std::vector<double> rope_frequencies(std::size_t d_head, double base);

// Rotates coordinate pair (2j, 2j+1) by position * theta_j.
std::vector<double> rotate(std::span<const double> v, double position,
                           std::span<const double> theta);

// In-place rotation of the d_head-wide column block starting at col_offset,
// row r rotated by sign * positions[r] * theta. sign = -1 applies R^T.
void rotate_block(Matrix& m, std::size_t col_offset, std::span<const double> positions,
                  std::span<const double> theta, double sign = 1.0);

}  // namespace lmk
