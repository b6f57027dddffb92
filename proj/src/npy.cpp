#include "metainv/npy.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace metainv {

namespace {

constexpr char kMagic[] = "\x93NUMPY";

std::string shape_tuple(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << shape[i] << (shape.size() == 1 ? "," : (i + 1 < shape.size() ? ", " : ""));
  os << ")";
  return os.str();
}

}  // namespace

void save_npy(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_npy: cannot open " + path);

  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " +
                       shape_tuple(t.shape()) + ", }";
  // Total header block (magic + version + length + dict) padded to 64 bytes.
  std::size_t unpadded = 6 + 2 + 2 + header.size() + 1;
  std::size_t padding = (64 - unpadded % 64) % 64;
  header.append(padding, ' ');
  header.push_back('\n');

  out.write(kMagic, 6);
  out.put(1);
  out.put(0);
  std::uint16_t hlen = static_cast<std::uint16_t>(header.size());
  out.put(static_cast<char>(hlen & 0xff));
  out.put(static_cast<char>(hlen >> 8));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(t.flat().data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.size())));
  if (!out) throw std::runtime_error("save_npy: write failed for " + path);
}

Tensor load_npy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_npy: cannot open " + path);

  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, kMagic, 6) != 0)
    throw std::runtime_error("load_npy: " + path + " is not an npy file");
  char major = 0, minor = 0;
  in.get(major).get(minor);
  std::uint32_t hlen = 0;
  if (major == 1) {
    std::uint8_t b0 = static_cast<std::uint8_t>(in.get());
    std::uint8_t b1 = static_cast<std::uint8_t>(in.get());
    hlen = b0 | (static_cast<std::uint32_t>(b1) << 8);
  } else if (major == 2) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    hlen = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  } else {
    throw std::runtime_error("load_npy: unsupported npy version in " + path);
  }
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (!in) throw std::runtime_error("load_npy: truncated header in " + path);

  if (header.find("'<f8'") == std::string::npos && header.find("\"<f8\"") == std::string::npos)
    throw std::runtime_error("load_npy: " + path + " is not little-endian float64");
  if (header.find("'fortran_order': True") != std::string::npos)
    throw std::runtime_error("load_npy: " + path + " is Fortran-ordered; C order required");

  std::size_t spos = header.find("'shape':");
  if (spos == std::string::npos) throw std::runtime_error("load_npy: no shape in " + path);
  std::size_t open = header.find('(', spos);
  std::size_t close = header.find(')', open);
  if (open == std::string::npos || close == std::string::npos)
    throw std::runtime_error("load_npy: malformed shape in " + path);

  Shape shape;
  std::string inner = header.substr(open + 1, close - open - 1);
  std::istringstream ss(inner);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::string trimmed;
    for (char c : tok)
      if (!std::isspace(static_cast<unsigned char>(c))) trimmed += c;
    if (!trimmed.empty()) shape.push_back(std::stoll(trimmed));
  }

  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.flat().data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.size())));
  if (!in) throw std::runtime_error("load_npy: truncated data in " + path);
  return t;
}

}  // namespace metainv
