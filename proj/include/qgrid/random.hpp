#ifndef QGRID_RANDOM_HPP
#define QGRID_RANDOM_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>

#include "qgrid/errors.hpp"

namespace qgrid {

// Entropy feed for the IV pool. The protocol only needs uniqueness and
// unpredictability of the values, so the source is pluggable: captured QRNG
// output from a file, the OS generator, or a seeded stream for
// reproducible scenario runs.
class RandomSource {
public:
    virtual ~RandomSource() = default;
    // Fills up to out.size() bytes; returns how many were produced. A short
    // count means the source is exhausted (file sources only).
    virtual std::size_t read(std::span<std::uint8_t> out) = 0;
};

class OsRandomSource : public RandomSource {
public:
    std::size_t read(std::span<std::uint8_t> out) override {
        std::size_t i = 0;
        while (i < out.size()) {
            unsigned int word = rd_();
            for (int b = 0; b < 4 && i < out.size(); ++b, ++i)
                out[i] = static_cast<std::uint8_t>(word >> (8 * b));
        }
        return out.size();
    }

private:
    std::random_device rd_;
};

// Deterministic stream expanded from a seed; stands in for the QRNG when a
// run must be reproducible byte-for-byte.
class SeededRandomSource : public RandomSource {
public:
    explicit SeededRandomSource(std::uint64_t seed) : gen_(seed) {}

    std::size_t read(std::span<std::uint8_t> out) override {
        std::size_t i = 0;
        while (i < out.size()) {
            std::uint64_t word = gen_();
            for (int b = 0; b < 8 && i < out.size(); ++b, ++i)
                out[i] = static_cast<std::uint8_t>(word >> (8 * b));
        }
        return out.size();
    }

private:
    std::mt19937_64 gen_;
};

// Raw bytes from a file of captured generator output. Reads are sequential;
// a short read signals exhaustion rather than an error.
class FileRandomSource : public RandomSource {
public:
    explicit FileRandomSource(const std::filesystem::path& path) : in_(path, std::ios::binary) {
        if (!in_.is_open()) throw IoError("cannot open entropy file " + path.string());
    }

    std::size_t read(std::span<std::uint8_t> out) override {
        in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
        return static_cast<std::size_t>(in_.gcount());
    }

private:
    std::ifstream in_;
};

} // namespace qgrid

#endif
