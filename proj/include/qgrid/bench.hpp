#ifndef QGRID_BENCH_HPP
#define QGRID_BENCH_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <openssl/rsa.h>

#include "qgrid/bytes.hpp"
#include "qgrid/errors.hpp"
#include "qgrid/gmac.hpp"
#include "qgrid/ivstore.hpp"
#include "qgrid/random.hpp"

namespace qgrid {

struct BenchConfig {
    std::size_t message_len_bytes = 256;
    std::size_t samples = 512;
    std::size_t warmup = 16;
    std::vector<int> gmac_key_bits = {128, 192, 256};
    std::vector<int> rsa_key_bits = {1024, 2048, 3072, 4096};
    double keygen_budget_s = 120.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (message_len_bytes == 0) throw ConfigError("bench.message_len", "must be positive");
        if (samples < 2) throw ConfigError("bench.samples", "need at least 2 for a standard error");
    }
};

enum class BenchOp { SIGN, VERIFY };

inline const char* bench_op_name(BenchOp op) { return op == BenchOp::SIGN ? "sign" : "verify"; }

struct BenchResult {
    std::string scheme; // "gmac-aes" or "rsa-pkcs1-sha256"
    BenchOp operation{};
    int key_bits = 0;
    double mean_ms = 0;
    double stderr_ms = 0;
    std::size_t samples = 0;
};

namespace detail {

// Mean and standard error (sample stddev / sqrt(n)) of per-op times in ms.
inline std::pair<double, double> mean_stderr(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double sum = 0;
    for (double x : xs) sum += x;
    const double mean = sum / n;
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1));
    return {mean, sd / std::sqrt(n)};
}

template <typename Fn>
inline std::vector<double> time_samples(std::size_t samples, std::size_t warmup, Fn&& op) {
    using clock = std::chrono::steady_clock;
    for (std::size_t i = 0; i < warmup; ++i) op(i);
    std::vector<double> times;
    times.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        auto t0 = clock::now();
        op(warmup + i);
        auto t1 = clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return times;
}

struct EvpKeyDeleter {
    void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
struct EvpKeyCtxDeleter {
    void operator()(EVP_PKEY_CTX* c) const { EVP_PKEY_CTX_free(c); }
};
struct EvpMdCtxDeleter {
    void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
using EvpKey = std::unique_ptr<EVP_PKEY, EvpKeyDeleter>;

inline EvpKey generate_rsa_key(int bits, double budget_s) {
    std::unique_ptr<EVP_PKEY_CTX, EvpKeyCtxDeleter> ctx(
        EVP_PKEY_CTX_new_id(EVP_PKEY_RSA, nullptr));
    if (!ctx) throw CryptoError("RSA keygen context allocation failed");
    if (EVP_PKEY_keygen_init(ctx.get()) != 1 ||
        EVP_PKEY_CTX_set_rsa_keygen_bits(ctx.get(), bits) != 1)
        throw CryptoError("RSA keygen init failed for " + std::to_string(bits) + " bits");

    // Abort via the progress callback once the budget is spent.
    struct Budget {
        std::chrono::steady_clock::time_point deadline;
        bool expired = false;
    } budget{std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                    std::chrono::duration<double>(budget_s))};
    EVP_PKEY_CTX_set_app_data(ctx.get(), &budget);
    EVP_PKEY_CTX_set_cb(ctx.get(), [](EVP_PKEY_CTX* c) -> int {
        auto* b = static_cast<Budget*>(EVP_PKEY_CTX_get_app_data(c));
        if (std::chrono::steady_clock::now() > b->deadline) {
            b->expired = true;
            return 0;
        }
        return 1;
    });

    EVP_PKEY* raw = nullptr;
    if (EVP_PKEY_keygen(ctx.get(), &raw) != 1 || !raw) {
        if (budget.expired)
            throw KeygenTimeoutError("RSA-" + std::to_string(bits) + " key generation exceeded " +
                                     std::to_string(budget_s) + "s budget");
        throw CryptoError("RSA key generation failed for " + std::to_string(bits) + " bits");
    }
    return EvpKey(raw);
}

inline Bytes rsa_sign(EVP_PKEY* key, std::span<const std::uint8_t> msg) {
    std::unique_ptr<EVP_MD_CTX, EvpMdCtxDeleter> ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, EVP_sha256(), nullptr, key) != 1)
        throw CryptoError("RSA sign init failed");
    std::size_t sig_len = 0;
    if (EVP_DigestSign(ctx.get(), nullptr, &sig_len, msg.data(), msg.size()) != 1)
        throw CryptoError("RSA sign sizing failed");
    Bytes sig(sig_len);
    if (EVP_DigestSign(ctx.get(), sig.data(), &sig_len, msg.data(), msg.size()) != 1)
        throw CryptoError("RSA sign failed");
    sig.resize(sig_len);
    return sig;
}

inline bool rsa_verify(EVP_PKEY* key, std::span<const std::uint8_t> msg,
                       std::span<const std::uint8_t> sig) {
    std::unique_ptr<EVP_MD_CTX, EvpMdCtxDeleter> ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, EVP_sha256(), nullptr, key) != 1)
        throw CryptoError("RSA verify init failed");
    return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), msg.data(), msg.size()) == 1;
}

} // namespace detail

// Times GMAC tag creation and verification per key size over pre-generated
// random keys, IVs, and messages; the timed region is the tag operation only.
inline std::vector<BenchResult> bench_gmac(const BenchConfig& cfg) {
    cfg.validate();
    SeededRandomSource rng(cfg.seed);
    std::vector<BenchResult> results;
    const std::size_t total = cfg.samples + cfg.warmup;
    for (int bits : cfg.gmac_key_bits) {
        if (bits != 128 && bits != 192 && bits != 256)
            throw ConfigError("bench.gmac", "unsupported key size " + std::to_string(bits));
        const std::size_t key_len = static_cast<std::size_t>(bits) / 8;
        std::vector<Bytes> keys(total), ivs(total), msgs(total);
        std::vector<MacTag> tags(total);
        for (std::size_t i = 0; i < total; ++i) {
            keys[i].resize(key_len);
            ivs[i].resize(kIvBytes);
            msgs[i].resize(cfg.message_len_bytes);
            rng.read(keys[i]);
            rng.read(ivs[i]);
            rng.read(msgs[i]);
        }

        volatile std::uint8_t sink = 0;
        auto sign_times = detail::time_samples(cfg.samples, cfg.warmup, [&](std::size_t i) {
            tags[i] = gmac_tag(keys[i], ivs[i], msgs[i]);
            sink = sink ^ tags[i][0];
        });
        auto verify_times = detail::time_samples(cfg.samples, cfg.warmup, [&](std::size_t i) {
            sink = sink ^ static_cast<std::uint8_t>(gmac_verify(keys[i], ivs[i], msgs[i], tags[i]));
        });

        auto [sm, se] = detail::mean_stderr(sign_times);
        results.push_back({"gmac-aes", BenchOp::SIGN, bits, sm, se, cfg.samples});
        auto [vm, ve] = detail::mean_stderr(verify_times);
        results.push_back({"gmac-aes", BenchOp::VERIFY, bits, vm, ve, cfg.samples});
    }
    return results;
}

// Times RSA PKCS#1 v1.5 signatures with SHA-256 over the same message size.
// Key generation happens outside the timed region.
inline std::vector<BenchResult> bench_rsa_signature(const BenchConfig& cfg) {
    cfg.validate();
    SeededRandomSource rng(cfg.seed ^ 0x52534100ull);
    std::vector<BenchResult> results;
    for (int bits : cfg.rsa_key_bits) {
        if (bits < 512 || bits > 16384)
            throw ConfigError("bench.rsa", "unsupported key size " + std::to_string(bits));
        auto key = detail::generate_rsa_key(bits, cfg.keygen_budget_s);
        Bytes msg(cfg.message_len_bytes);
        rng.read(msg);
        Bytes sig;
        volatile std::uint8_t sink = 0;
        auto sign_times = detail::time_samples(cfg.samples, cfg.warmup, [&](std::size_t) {
            sig = detail::rsa_sign(key.get(), msg);
            sink = sink ^ sig[0];
        });
        auto verify_times = detail::time_samples(cfg.samples, cfg.warmup, [&](std::size_t) {
            sink = sink ^ static_cast<std::uint8_t>(detail::rsa_verify(key.get(), msg, sig));
        });
        auto [sm, se] = detail::mean_stderr(sign_times);
        results.push_back({"rsa-pkcs1-sha256", BenchOp::SIGN, bits, sm, se, cfg.samples});
        auto [vm, ve] = detail::mean_stderr(verify_times);
        results.push_back({"rsa-pkcs1-sha256", BenchOp::VERIFY, bits, vm, ve, cfg.samples});
    }
    return results;
}

inline void write_bench_csv(std::ostream& out, std::span<const BenchResult> results) {
    if (results.empty()) throw IoError("refusing to export empty benchmark results");
    out << "scheme,operation,key_bits,mean_ms,stderr_ms,samples\n";
    char line[160];
    for (const auto& r : results) {
        std::snprintf(line, sizeof(line), "%s,%s,%d,%.6f,%.6f,%zu\n", r.scheme.c_str(),
                      bench_op_name(r.operation), r.key_bits, r.mean_ms, r.stderr_ms, r.samples);
        out << line;
    }
    if (!out) throw IoError("benchmark CSV write failed");
}

// Chart-ready series grouped by (scheme, operation), key size ascending;
// mirrors the execution-time figure panels.
inline void write_bench_series_csv(std::ostream& out, std::vector<BenchResult> results) {
    if (results.empty()) throw IoError("refusing to export empty benchmark results");
    std::sort(results.begin(), results.end(), [](const BenchResult& a, const BenchResult& b) {
        if (a.scheme != b.scheme) return a.scheme < b.scheme;
        if (a.operation != b.operation) return a.operation < b.operation;
        return a.key_bits < b.key_bits;
    });
    write_bench_csv(out, results);
}

} // namespace qgrid

#endif
