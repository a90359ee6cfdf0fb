#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tamperlab {

/// Incremental SHA-256 (OpenSSL EVP underneath). Hex digest on finish().
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256 &) = delete;
    Sha256 &operator=(const Sha256 &) = delete;

    Sha256 &update(std::string_view bytes);
    Sha256 &update(const void *data, std::size_t size);
    template <class T>
    Sha256 &update_pod(const T &value)
    {
        return update(&value, sizeof(T));
    }
    std::string finish();

private:
    void *ctx_;
};

std::string sha256_hex(std::string_view bytes);

/// SplitMix64 step; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt) noexcept
{
    return mix_seed(parent ^ mix_seed(salt));
}

} // namespace tamperlab
