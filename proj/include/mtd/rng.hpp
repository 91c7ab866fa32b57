// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mtd {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a; stable across platforms, used to key named streams.
inline std::uint64_t hash_name(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

using Rng = std::mt19937_64;

/// Independent stream derived from a run seed and a stream name.
inline Rng make_stream(std::uint64_t seed, std::string_view name) {
    return Rng(splitmix64(seed ^ hash_name(name)));
}

/// The four named streams of a training run.
struct RunStreams {
    Rng init;
    Rng data_order;
    Rng augmentation;
    Rng router_noise;

    explicit RunStreams(std::uint64_t seed)
        : init(make_stream(seed, "init")),
          data_order(make_stream(seed, "data_order")),
          augmentation(make_stream(seed, "augmentation")),
          router_noise(make_stream(seed, "router_noise")) {}
};

}  // namespace mtd
