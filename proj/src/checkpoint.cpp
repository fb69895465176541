#include "somgan/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "somgan/error.hpp"

namespace somgan {

std::string format_arrays(const std::vector<nn::NamedArray>& arrays) {
  std::string out = "somgan-arrays " + std::to_string(kArrayFormatVersion) + "\n";
  out += std::to_string(arrays.size()) + "\n";
  char buf[64];
  for (const auto& a : arrays) {
    if (a.name.find_first_of(" \t\n") != std::string::npos)
      fail(ErrorKind::Precondition, "array names may not contain whitespace: " + a.name);
    out += a.name + " " + std::to_string(a.value.rows()) + " " + std::to_string(a.value.cols()) + "\n";
    for (std::size_t r = 0; r < a.value.rows(); ++r) {
      for (std::size_t c = 0; c < a.value.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%a", a.value(r, c));
        if (c) out += ' ';
        out += buf;
      }
      out += '\n';
    }
  }
  return out;
}

std::vector<nn::NamedArray> parse_arrays(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(in >> magic >> version) || magic != "somgan-arrays")
    fail(ErrorKind::Parse, "not a somgan array file");
  if (version != kArrayFormatVersion)
    fail(ErrorKind::Parse, "unsupported array file version " + std::to_string(version));
  if (!(in >> count)) fail(ErrorKind::Parse, "array file: missing array count");
  std::vector<nn::NamedArray> arrays;
  arrays.reserve(count);
  std::string token;
  for (std::size_t k = 0; k < count; ++k) {
    nn::NamedArray a;
    std::size_t rows = 0;
    std::size_t cols = 0;
    if (!(in >> a.name >> rows >> cols)) fail(ErrorKind::Parse, "array file: truncated header");
    a.value = Matrix(rows, cols);
    for (double& v : a.value.values()) {
      if (!(in >> token)) fail(ErrorKind::Parse, "array file: truncated data in " + a.name);
      char* end = nullptr;
      v = std::strtod(token.c_str(), &end);
      if (end != token.c_str() + token.size())
        fail(ErrorKind::Parse, "array file: bad value '" + token + "' in " + a.name);
    }
    arrays.push_back(std::move(a));
  }
  return arrays;
}

void save_arrays(const std::vector<nn::NamedArray>& arrays, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << format_arrays(arrays);
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

std::vector<nn::NamedArray> load_arrays(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_arrays(ss.str());
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

std::map<std::string, Matrix> to_map(const std::vector<nn::NamedArray>& arrays) {
  std::map<std::string, Matrix> out;
  for (const auto& a : arrays) out[a.name] = a.value;
  return out;
}

}  // namespace somgan
