#include "occlusim/image.hpp"

#include <cmath>
#include <numbers>

namespace occlusim {

Image::Image(int c, int h, int w, float fill)
    : channels(c), height(h), width(w), pixels(static_cast<size_t>(c) * h * w, fill) {
  if (c <= 0 || h <= 0 || w <= 0) {
    throw Error("image dimensions must be positive, got " + std::to_string(c) + "x" + std::to_string(h) +
                "x" + std::to_string(w));
  }
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(std::string(what) + ": shape mismatch (" + std::to_string(a.channels) + "x" +
                std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                std::to_string(b.channels) + "x" + std::to_string(b.height) + "x" + std::to_string(b.width) +
                ")");
  }
}

void require_finite(const Image& img, const char* what) {
  for (float v : img.pixels) {
    if (!std::isfinite(v)) throw Error(std::string(what) + ": non-finite value in input");
  }
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t hash_combine(uint64_t seed, uint64_t value) { return splitmix64(seed ^ splitmix64(value)); }

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t Rng::next() {
  state_ += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int lo, int hi) {
  const uint64_t span = static_cast<uint64_t>(static_cast<int64_t>(hi) - lo + 1);
  return lo + static_cast<int>(next() % span);
}

double Rng::normal() {
  // Box-Muller; the second variate is discarded so the stream stays simple.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace occlusim
