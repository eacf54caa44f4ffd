#pragma once

#include <cstdint>

namespace slowfast {

/* Counter-based generator: each draw is a stateless avalanche of
   (stream key, counter).  Replicas own disjoint streams derived from
   (master seed, stream id), so a sweep can evaluate its replicas in any
   order, or in parallel, and still produce identical output. */
class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
        : key_(derive_key(master_seed, stream_id)) {}

    std::uint64_t next_u64() {
        return scramble(key_ + (counter_++) * 0x9E3779B97F4A7C15ULL);
    }

    /* uniform on [0,1), 53-bit mantissa */
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    std::uint64_t counter() const { return counter_; }

    static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t a = scramble(seed + 0x9E3779B97F4A7C15ULL);
        std::uint64_t b = scramble(stream + 0xD1B54A32D192ED03ULL);
        return scramble(a ^ (b + 0x8CB92BA72F3D8DD7ULL));
    }

private:
    /* SplitMix64 finalizer; full avalanche on 64 bits */
    static std::uint64_t scramble(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace slowfast
