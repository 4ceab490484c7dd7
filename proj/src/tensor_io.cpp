#include "fdk/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace fdk {

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0x000000ffu) << 24) | ((v & 0x0000ff00u) << 8) | ((v & 0x00ff0000u) >> 8) |
        ((v & 0xff000000u) >> 24);
  }
  return v;
}

}  // namespace

void write_rt4(std::ostream& out, const Tensor& t) {
  const Shape& s = t.shape();
  nlohmann::ordered_json header;
  header["shape"] = {s.n, s.c, s.h, s.w};
  header["dtype"] = "f32";
  out << header.dump() << '\n';

  std::vector<char> bytes(t.numel() * 4);
  auto data = t.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::uint32_t word = to_little_endian(std::bit_cast<std::uint32_t>(data[i]));
    std::memcpy(bytes.data() + 4 * i, &word, 4);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("rt4: write failed");
}

Tensor read_rt4(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("rt4: missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("rt4: malformed header: ") + e.what());
  }
  if (!header.is_object() || !header.contains("shape") || !header.contains("dtype")) {
    throw std::runtime_error("rt4: header requires \"shape\" and \"dtype\"");
  }
  if (header["dtype"] != "f32") throw std::runtime_error("rt4: unsupported dtype");
  const auto& dims = header["shape"];
  if (!dims.is_array() || dims.size() != 4) throw std::runtime_error("rt4: shape must have 4 entries");
  for (const auto& d : dims) {
    if (!d.is_number_unsigned()) throw std::runtime_error("rt4: shape entries must be non-negative integers");
  }
  const Shape shape{dims[0].get<std::size_t>(), dims[1].get<std::size_t>(), dims[2].get<std::size_t>(),
                    dims[3].get<std::size_t>()};

  std::vector<char> bytes(shape.numel() * 4);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw std::runtime_error("rt4: truncated payload");
  }
  std::vector<float> values(shape.numel());
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t word = 0;
    std::memcpy(&word, bytes.data() + 4 * i, 4);
    values[i] = std::bit_cast<float>(to_little_endian(word));
  }
  return Tensor(shape, std::move(values));
}

void save_rt4(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  write_rt4(out, t);
}

Tensor load_rt4(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  return read_rt4(in);
}

void write_pgm(std::ostream& out, const Grid& grid) {
  if (grid.values.size() != grid.height * grid.width) throw std::invalid_argument("pgm: grid size mismatch");
  out << "P2\n" << grid.width << ' ' << grid.height << "\n255\n";
  for (std::size_t y = 0; y < grid.height; ++y) {
    for (std::size_t x = 0; x < grid.width; ++x) {
      const float v = std::clamp(grid.values[y * grid.width + x], 0.0f, 1.0f);
      out << std::lround(static_cast<double>(v) * 255.0) << (x + 1 == grid.width ? '\n' : ' ');
    }
  }
}

void save_pgm(const std::filesystem::path& path, const Grid& grid) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  write_pgm(out, grid);
}

}  // namespace fdk
