#include "asymcodec/image.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

namespace asymcodec {

namespace {

class PpmHeaderReader {
 public:
  explicit PpmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Next whitespace-delimited token, skipping '#' comments.
  std::string token() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') out.push_back(static_cast<char>(bytes_[pos_++]));
    if (out.empty()) throw ImageError("ppm: truncated header");
    return out;
  }

  Index number(const char* what) {
    const std::string t = token();
    if (t.size() > 9 || t.find_first_not_of("0123456789") != std::string::npos) {
      throw ImageError(std::string("ppm: bad ") + what + " '" + t + "'");
    }
    return std::stol(t);
  }

  // The single whitespace byte that ends the header.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw ImageError("ppm: missing whitespace after maxval");
    ++pos_;
  }

  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image parse_ppm(std::span<const std::uint8_t> bytes) {
  PpmHeaderReader r(bytes);
  if (r.token() != "P6") throw ImageError("ppm: not a binary PPM (P6) file");
  const Index width = r.number("width");
  const Index height = r.number("height");
  const Index maxval = r.number("maxval");
  if (width <= 0 || height <= 0) throw ImageError("ppm: zero image dimension");
  if (maxval != 255) throw ImageError("ppm: only maxval 255 is supported, got " + std::to_string(maxval));
  r.end_of_header();
  const std::size_t need = static_cast<std::size_t>(width * height * 3);
  if (bytes.size() - r.position() < need) {
    throw ImageError("ppm: expected " + std::to_string(need) + " sample bytes, found " +
                     std::to_string(bytes.size() - r.position()));
  }
  Image img(width, height);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(r.position()), need, img.rgb.begin());
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  std::vector<std::uint8_t> out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw std::ios_base::failure("error reading " + path.string());
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::ios_base::failure("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::ios_base::failure("error writing " + path.string());
}

Image read_ppm(const std::filesystem::path& path) { return parse_ppm(read_file(path)); }

void write_ppm(const std::filesystem::path& path, const Image& image) { write_file(path, encode_ppm(image)); }

}  // namespace asymcodec
