#pragma once

// Shared helpers for the unit tests: a seeded generator for property
// tests and small tensor builders.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "caaed/tensor.hpp"

namespace caaed::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::size_t size(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  double real(double lo = -1.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  std::vector<double> reals(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = real(lo, hi);
    return v;
  }
  Tensor tensor(Shape shape, bool requires_grad = true, double lo = -1.0,
                double hi = 1.0) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return Tensor::from(std::move(shape), reals(n, lo, hi), requires_grad);
  }
  std::string word(const std::string& alphabet, std::size_t lo, std::size_t hi) {
    std::string w(size(lo, hi), ' ');
    for (char& c : w) c = alphabet[size(0, alphabet.size() - 1)];
    return w;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace caaed::testing
