#pragma once
// Shared vocabulary: vectors, RNG streams, numeric helpers and the binary /
// text primitives used by every on-disk format.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tensormem {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

// Derives an independent seed for a named sub-stream ("train", "negatives",
// "sampler", ...) from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
    return Rng(derive_seed(seed, stream));
}

// Uniform double in [0, 1) built from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

double normal(Rng& rng, double mean, double stddev);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

// log(1 + exp(x)) without overflow.
double softplus(double x);
double sigmoid(double x);

// log(sum(exp(x))) over the finite-or-(-inf) entries of x.
double log_sum_exp(std::span<const double> x);

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double x);
// Strict parse of a decimal literal; the whole string must be consumed.
bool parse_double(std::string_view text, double& out);
bool parse_uint(std::string_view text, std::uint64_t& out);

std::vector<std::string_view> split_tabs(std::string_view line);
std::string_view trim(std::string_view s);

// Little-endian binary primitives.
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
void write_f64s(std::ostream& os, std::span<const double> v);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
Vector read_f64s(std::istream& is, std::size_t n);

}  // namespace tensormem
