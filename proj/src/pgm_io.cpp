#include "fedlab/pgm_io.hpp"

#include <fstream>
#include <vector>

#include "fedlab/errors.hpp"

namespace fedlab {

namespace {

std::pair<int, int> pgm_dims(const Tensor& image) {
  if (image.rank() == 2) return {image.dim(0), image.dim(1)};
  if (image.rank() == 3 && image.dim(2) == 1) return {image.dim(0), image.dim(1)};
  if (image.rank() == 4 && image.dim(0) == 1 && image.dim(3) == 1)
    return {image.dim(1), image.dim(2)};
  throw FormatError("write_pgm: unsupported shape " + shape_str(image.shape));
}

int read_pgm_token(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comment lines between header tokens.
  int c = in.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#')
      while (c != '\n' && c != EOF) c = in.get();
    c = in.get();
  }
  int value = 0;
  bool any = false;
  while (std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw FormatError(path + ": malformed PGM header");
  return value;
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& image) {
  auto [h, w] = pgm_dims(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << "P5\n" << w << " " << h << "\n255\n";
  for (float v : image.data) {
    const float scaled = v * 255.0f + 0.5f;
    out.put(static_cast<char>(
        static_cast<unsigned char>(scaled < 0.0f ? 0.0f : (scaled > 255.0f ? 255.0f : scaled))));
  }
}

Tensor read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  char m0 = static_cast<char>(in.get());
  char m1 = static_cast<char>(in.get());
  if (m0 != 'P' || m1 != '5') throw FormatError(path + ": not a P5 graymap");
  const int w = read_pgm_token(in, path);
  const int h = read_pgm_token(in, path);
  const int maxval = read_pgm_token(in, path);
  if (maxval != 255) throw FormatError(path + ": only maxval 255 is supported");
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw FormatError(path + ": truncated pixel data");
  Tensor t = Tensor::zeros({1, h, w, 1});
  for (std::size_t i = 0; i < raw.size(); ++i) t.data[i] = static_cast<float>(raw[i]) / 255.0f;
  return t;
}

}  // namespace fedlab
