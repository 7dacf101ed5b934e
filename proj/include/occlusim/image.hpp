#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace occlusim {

/// Base class for every error raised by the library. The message is a single
/// line so the CLI can forward it verbatim.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Planar float image, channel-major: pixel (c, y, x) lives at
/// `pixels[(c * height + y) * width + x]`.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f);

  float& at(int c, int y, int x) { return pixels[(static_cast<size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return pixels[(static_cast<size_t>(c) * height + y) * width + x]; }

  std::span<float> plane(int c) {
    return {pixels.data() + static_cast<size_t>(c) * height * width, static_cast<size_t>(height) * width};
  }
  std::span<const float> plane(int c) const {
    return {pixels.data() + static_cast<size_t>(c) * height * width, static_cast<size_t>(height) * width};
  }

  size_t size() const { return pixels.size(); }
  size_t plane_size() const { return static_cast<size_t>(height) * width; }
  bool empty() const { return pixels.empty(); }
  bool same_shape(const Image& other) const {
    return channels == other.channels && height == other.height && width == other.width;
  }
  bool operator==(const Image& other) const = default;
};

/// Single-channel float map (alpha fields, masks).
struct Map2D {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  Map2D() = default;
  Map2D(int h, int w, float fill = 0.0f)
      : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

  float& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
  float at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
  bool operator==(const Map2D& other) const = default;
};

void require_same_shape(const Image& a, const Image& b, const char* what);
void require_finite(const Image& img, const char* what);

/// Reflect-101 index (mirror without repeating the edge sample), valid for any
/// offset; n == 1 always maps to 0.
int reflect_index(int i, int n);

/// Counter-based generator with a platform-independent output stream.
/// `std::uniform_*_distribution` are implementation-defined, so all sampling
/// in the library goes through this type.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next();
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  int uniform_int(int lo, int hi);         // inclusive range
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

uint64_t splitmix64(uint64_t x);
uint64_t hash_combine(uint64_t seed, uint64_t value);
uint64_t fnv1a(std::string_view s);

}  // namespace occlusim
