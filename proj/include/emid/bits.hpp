#pragma once

#include <cstdint>
#include <vector>

namespace emid {

// Vertex sets are bitmasks over vertex indices. Graphs are capped at 64
// vertices, which covers every block graph this library targets.
using VSet = std::uint64_t;

inline constexpr int kMaxVertices = 64;

inline constexpr VSet bit(int v) { return VSet{1} << v; }
inline constexpr bool has(VSet s, int v) { return (s >> v) & 1; }
inline int popcount(VSet s) { return __builtin_popcountll(s); }
inline int lowest(VSet s) { return __builtin_ctzll(s); }

// Iterates set bits in ascending order.
template <typename F>
inline void for_each_bit(VSet s, F&& f) {
    while (s) {
        int v = lowest(s);
        s &= s - 1;
        f(v);
    }
}

inline std::vector<int> to_vector(VSet s) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(popcount(s)));
    for_each_bit(s, [&](int v) { out.push_back(v); });
    return out;
}

inline VSet from_vector(const std::vector<int>& vs) {
    VSet s = 0;
    for (int v : vs) s |= bit(v);
    return s;
}

}  // namespace emid
