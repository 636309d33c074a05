#include "miso/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace miso {

double Rng::uniform() {
  // 53-bit mantissa, in [0, 1)
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // u1 in (0, 1] so log(u1) is finite
  const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
  const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: n must be positive");
  const unsigned __int128 wide = static_cast<unsigned __int128>(gen_()) * n;
  return static_cast<std::size_t>(wide >> 64);
}

std::vector<double> Rng::normal_vec(std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = normal();
  return out;
}

std::vector<double> Rng::uniform_vec(std::size_t n, double lo, double hi) {
  std::vector<double> out(n);
  for (auto& v : out) v = uniform(lo, hi);
  return out;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng r;
  std::istringstream is(text);
  is >> r.gen_;
  if (is.fail()) throw std::invalid_argument("Rng::deserialize: malformed state string");
  return r;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  // FNV-1a over the tag, then splitmix64 finalizer mixing in the base
  std::uint64_t h = 14695981039346656037ull;
  for (const char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace miso
