#include "lmd/io.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace lmd::io {

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && text.front() == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    if (text == "inf") return INFINITY;
    if (text == "-inf") return -INFINITY;
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, 16);
  std::string s(buf, res.ptr);
  return std::string(16 - s.size(), '0') + s;
}

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors, const std::vector<double>& schedule) {
  for (const auto& t : tensors) {
    out << "kind=" << t.kind << '\n' << "shape=";
    const auto& shape = t.value.shape();
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? " " : "") << shape[i];
    out << '\n';
    const auto data = t.value.data();
    for (std::size_t i = 0; i < data.size(); ++i) out << (i ? " " : "") << format_double(data[i]);
    out << '\n';
  }
  if (!schedule.empty()) {
    out << "schedule=";
    for (std::size_t i = 0; i < schedule.size(); ++i) out << (i ? " " : "") << format_double(schedule[i]);
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

void read_checkpoint(std::istream& in, std::vector<NamedTensor>& tensors, std::vector<double>& schedule) {
  tensors.clear();
  schedule.clear();
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error("checkpoint line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("schedule=", 0) == 0) {
      for (const auto& tok : split_ws(line.substr(9))) schedule.push_back(parse_double(tok));
      continue;
    }
    if (line.rfind("kind=", 0) != 0) fail("expected kind=");
    NamedTensor nt;
    nt.kind = line.substr(5);
    if (!std::getline(in, line) || line.rfind("shape=", 0) != 0) {
      ++lineno;
      fail("expected shape=");
    }
    ++lineno;
    Shape shape;
    for (const auto& tok : split_ws(line.substr(6))) shape.push_back(std::stoul(tok));
    if (!std::getline(in, line)) fail("missing data row");
    ++lineno;
    std::vector<double> data;
    for (const auto& tok : split_ws(line)) data.push_back(parse_double(tok));
    if (data.size() != shape_size(shape)) fail("data row length does not match shape");
    nt.value = Tensor(shape, std::move(data));
    tensors.push_back(std::move(nt));
  }
}

}  // namespace lmd::io
