#ifndef QGRID_GMAC_HPP
#define QGRID_GMAC_HPP

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include <openssl/evp.h>

#include "qgrid/bytes.hpp"
#include "qgrid/errors.hpp"

namespace qgrid {

inline constexpr std::size_t kMacBytes = 16;

using MacTag = std::array<std::uint8_t, kMacBytes>;

namespace detail {

struct EvpCtxDeleter {
    void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using EvpCtx = std::unique_ptr<EVP_CIPHER_CTX, EvpCtxDeleter>;

inline const EVP_CIPHER* gcm_cipher_for(std::size_t key_len) {
    switch (key_len) {
        case 16: return EVP_aes_128_gcm();
        case 24: return EVP_aes_192_gcm();
        case 32: return EVP_aes_256_gcm();
        default: return nullptr;
    }
}

} // namespace detail

// GMAC tag: AES in Galois/Counter mode with empty plaintext and the data
// supplied as associated data, 128-bit tag. Keys of 16/24/32 bytes select
// AES-128/192/256; the IV may be 12 or 16 bytes.
inline MacTag gmac_tag(std::span<const std::uint8_t> key, std::span<const std::uint8_t> iv,
                       std::span<const std::uint8_t> data) {
    const EVP_CIPHER* cipher = detail::gcm_cipher_for(key.size());
    if (!cipher)
        throw BadLengthError("GMAC key must be 16, 24, or 32 bytes, got " +
                             std::to_string(key.size()));
    if (iv.size() != 12 && iv.size() != 16)
        throw BadLengthError("GMAC IV must be 12 or 16 bytes, got " + std::to_string(iv.size()));

    detail::EvpCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx) throw CryptoError("EVP_CIPHER_CTX_new failed");
    if (EVP_EncryptInit_ex(ctx.get(), cipher, nullptr, nullptr, nullptr) != 1)
        throw CryptoError("GCM cipher init failed");
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(iv.size()),
                            nullptr) != 1)
        throw CryptoError("GCM IV length rejected");
    if (EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), iv.data()) != 1)
        throw CryptoError("GCM key/IV init failed");
    int out_len = 0;
    if (!data.empty() &&
        EVP_EncryptUpdate(ctx.get(), nullptr, &out_len, data.data(), static_cast<int>(data.size())) != 1)
        throw CryptoError("GCM AAD update failed");
    std::uint8_t dummy = 0;
    if (EVP_EncryptFinal_ex(ctx.get(), &dummy, &out_len) != 1)
        throw CryptoError("GCM finalization failed");
    MacTag tag{};
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kMacBytes, tag.data()) != 1)
        throw CryptoError("GCM tag extraction failed");
    return tag;
}

// Recomputes the tag and compares in constant time.
inline bool gmac_verify(std::span<const std::uint8_t> key, std::span<const std::uint8_t> iv,
                        std::span<const std::uint8_t> data, std::span<const std::uint8_t> tag) {
    MacTag expected = gmac_tag(key, iv, data);
    return ct_equal(expected, tag);
}

} // namespace qgrid

#endif
