#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "lmd/tensor.hpp"

namespace lmd::io {

/// Shortest decimal that parses back to the same double; NaN prints empty.
std::string format_double(double v);
double parse_double(std::string_view text);

std::uint64_t fnv1a(std::string_view text);
std::string hex64(std::uint64_t v);

struct NamedTensor {
  std::string kind;
  Tensor value;
};

/// Plain-text checkpoint: per tensor a `kind=` line, a `shape=` line and one
/// row of values; then an optional `schedule=` line.
void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors, const std::vector<double>& schedule);
void read_checkpoint(std::istream& in, std::vector<NamedTensor>& tensors, std::vector<double>& schedule);

}  // namespace lmd::io
