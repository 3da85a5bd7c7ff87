#pragma once

#include <cstdint>
#include <random>

namespace fedlab {

// Purpose tags for derived RNG streams. Every random decision in an
// experiment draws from a stream keyed by (root seed, tag, round, id), so
// results cannot depend on thread scheduling or evaluation order.
enum class Stream : std::uint64_t {
  kInitClassifier = 1,
  kInitGenerator = 2,
  kSelection = 3,
  kClientTrain = 4,
  kAttackTargets = 5,
  kDefense = 6,
  kEval = 7,
  kPartition = 8,
  kSynthData = 9,
  kServerSplit = 10,
  kDump = 11,
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

inline std::uint64_t derive_seed(std::uint64_t root, Stream tag,
                                 std::uint64_t round = 0,
                                 std::uint64_t id = 0) {
  std::uint64_t s = detail::splitmix64(root);
  s = detail::splitmix64(s ^ static_cast<std::uint64_t>(tag));
  s = detail::splitmix64(s ^ round);
  s = detail::splitmix64(s ^ id);
  return s;
}

inline std::mt19937_64 make_stream(std::uint64_t root, Stream tag,
                                   std::uint64_t round = 0,
                                   std::uint64_t id = 0) {
  return std::mt19937_64(derive_seed(root, tag, round, id));
}

}  // namespace fedlab
