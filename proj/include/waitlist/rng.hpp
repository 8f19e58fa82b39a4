#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string_view>

namespace waitlist {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a hash.
std::uint64_t fnv1a(std::string_view bytes);

/// Seed for a named sub-stream (e.g. "bootstrap/7") of a master seed. Adding
/// a new stream name never changes the draws of an existing one.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);

inline Rng make_rng(std::uint64_t master, std::string_view stream) {
  return Rng(derive_seed(master, stream));
}

/// Number of worker threads used by parallel_for; 1 runs inline.
void set_thread_count(int n);
int thread_count();

/// Runs body(i) for i in [0, n). Work is split into contiguous chunks, so
/// results written by index are identical for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace waitlist
