#ifndef QGRID_IVSTORE_HPP
#define QGRID_IVSTORE_HPP

#include <array>
#include <cstdint>
#include <deque>
#include <mutex>
#include <span>

#include "qgrid/bytes.hpp"
#include "qgrid/errors.hpp"
#include "qgrid/random.hpp"
#include "qgrid/stats.hpp"

namespace qgrid {

inline constexpr std::size_t kIvBytes = 16;

struct InitVector {
    std::uint64_t index = 0;
    std::array<std::uint8_t, kIvBytes> value{};

    bool operator==(const InitVector&) const = default;
};

struct IvCounters {
    std::uint64_t added = 0;
    std::uint64_t available = 0;
    std::uint64_t used = 0;
};

// Pool of single-use 16-byte initialization vectors chunked from an entropy
// stream. next_iv() hands each value out exactly once; running dry raises
// IvExhaustedError because publishing without a fresh nonce is forbidden.
class IvStore {
public:
    IvStore() = default;
    explicit IvStore(StatsRegistry* stats) : stats_(stats) {}

    // Consumes the input in 16-byte chunks; a trailing partial chunk stays
    // buffered until the next call completes it.
    std::size_t chunk(std::span<const std::uint8_t> entropy) {
        std::lock_guard lk(mu_);
        leftover_.insert(leftover_.end(), entropy.begin(), entropy.end());
        std::size_t added = 0;
        std::size_t pos = 0;
        while (leftover_.size() - pos >= kIvBytes) {
            InitVector iv;
            iv.index = next_index_++;
            std::copy_n(leftover_.begin() + static_cast<std::ptrdiff_t>(pos), kIvBytes,
                        iv.value.begin());
            pool_.push_back(iv);
            pos += kIvBytes;
            ++added;
        }
        leftover_.erase(leftover_.begin(), leftover_.begin() + static_cast<std::ptrdiff_t>(pos));
        added_ += added;
        if (stats_ && added) stats_->record_ivs_added(added);
        return added;
    }

    // Pulls count IVs' worth of bytes from a source and chunks them.
    std::size_t fill_from(RandomSource& source, std::size_t count) {
        Bytes buf(count * kIvBytes);
        std::size_t got = source.read(buf);
        buf.resize(got);
        return chunk(buf);
    }

    // Returns the lowest-index unused IV and retires it atomically.
    InitVector next_iv() {
        std::lock_guard lk(mu_);
        if (pool_.empty()) throw IvExhaustedError("initialization vector pool is empty");
        InitVector iv = pool_.front();
        pool_.pop_front();
        ++used_;
        if (stats_) stats_->record_iv_used();
        return iv;
    }

    IvCounters counters() const {
        std::lock_guard lk(mu_);
        return {added_, added_ - used_, used_};
    }

private:
    mutable std::mutex mu_;
    std::deque<InitVector> pool_;
    Bytes leftover_;
    std::uint64_t next_index_ = 0;
    std::uint64_t added_ = 0, used_ = 0;
    StatsRegistry* stats_ = nullptr;
};

} // namespace qgrid

#endif
