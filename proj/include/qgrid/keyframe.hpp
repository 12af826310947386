#ifndef QGRID_KEYFRAME_HPP
#define QGRID_KEYFRAME_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include "qgrid/bytes.hpp"
#include "qgrid/crc32.hpp"
#include "qgrid/errors.hpp"

namespace qgrid {

// Wire layout of one key record in the feed, all integers big-endian:
//   sync(1) | key_id(8) | key_data(32) | key_status(1) | crc32(4)
// The CRC covers key_id, key_data, and the status byte, in wire order.
// Status is carried in the low bit of its byte (0 = unused, 1 = used).
inline constexpr std::uint8_t kFrameSync = 0xA5;
inline constexpr std::size_t kKeyBytes = 32;
inline constexpr std::size_t kFrameSize = 1 + 8 + kKeyBytes + 1 + 4;

struct KeyFrame {
    std::uint64_t key_id = 0;
    Bytes key_data;
    bool key_status = false;

    bool operator==(const KeyFrame&) const = default;
};

enum class FrameError { none, bad_sync, bad_crc, truncated };

inline const char* frame_error_name(FrameError e) {
    switch (e) {
        case FrameError::none: return "none";
        case FrameError::bad_sync: return "bad-sync";
        case FrameError::bad_crc: return "bad-crc";
        case FrameError::truncated: return "truncated";
    }
    return "?";
}

namespace detail {
inline std::uint32_t frame_crc(const std::uint8_t* body41) {
    // body41 points at the 41 bytes key_id..key_status.
    return crc32({body41, 8 + kKeyBytes + 1});
}
} // namespace detail

inline Bytes serialize_frame(const KeyFrame& frame) {
    if (frame.key_data.size() != kKeyBytes)
        throw BadLengthError("key_data must be 32 bytes, got " + std::to_string(frame.key_data.size()));
    Bytes out;
    out.reserve(kFrameSize);
    out.push_back(kFrameSync);
    put_u64_be(out, frame.key_id);
    out.insert(out.end(), frame.key_data.begin(), frame.key_data.end());
    out.push_back(frame.key_status ? 0x01 : 0x00);
    put_u32_be(out, detail::frame_crc(out.data() + 1));
    return out;
}

struct FrameParse {
    std::optional<KeyFrame> frame;
    // Bytes consumed from the front of the input. On `truncated` this stops at
    // the start of the partial candidate so a resumed call can complete it.
    std::size_t consumed = 0;
    // Sync candidates discarded because their CRC failed.
    std::size_t crc_rejected = 0;
    FrameError error = FrameError::none;
};

// Returns the first frame whose sync byte and CRC both check out, scanning
// forward byte-by-byte past garbage and CRC-failing candidates.
inline FrameParse parse_frame(std::span<const std::uint8_t> buf) {
    FrameParse result;
    std::size_t pos = 0;
    while (pos < buf.size()) {
        if (buf[pos] != kFrameSync) {
            ++pos;
            continue;
        }
        if (buf.size() - pos < kFrameSize) {
            result.consumed = pos;
            result.error = FrameError::truncated;
            return result;
        }
        const std::uint8_t* body = buf.data() + pos + 1;
        std::uint32_t stored = get_u32_be(body + 8 + kKeyBytes + 1);
        if (stored != detail::frame_crc(body)) {
            ++result.crc_rejected;
            ++pos;
            continue;
        }
        KeyFrame frame;
        frame.key_id = get_u64_be(body);
        frame.key_data.assign(body + 8, body + 8 + kKeyBytes);
        frame.key_status = (body[8 + kKeyBytes] & 0x01) != 0;
        result.frame = std::move(frame);
        result.consumed = pos + kFrameSize;
        return result;
    }
    result.consumed = buf.size();
    result.error = result.crc_rejected > 0 ? FrameError::bad_crc : FrameError::bad_sync;
    return result;
}

// Incremental frame extraction over an append-only byte stream. Bytes that
// cannot yet form a complete frame stay buffered for the next push.
class FrameExtractor {
public:
    std::vector<KeyFrame> push(std::span<const std::uint8_t> data) {
        pending_.insert(pending_.end(), data.begin(), data.end());
        std::vector<KeyFrame> frames;
        std::size_t pos = 0;
        while (pos < pending_.size()) {
            FrameParse p = parse_frame(std::span(pending_).subspan(pos));
            crc_rejected_ += p.crc_rejected;
            pos += p.consumed;
            if (!p.frame) break;
            frames.push_back(std::move(*p.frame));
        }
        pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(pos));
        return frames;
    }

    std::uint64_t crc_rejected() const { return crc_rejected_; }
    std::size_t pending_bytes() const { return pending_.size(); }

private:
    Bytes pending_;
    std::uint64_t crc_rejected_ = 0;
};

// Tail-follows a key file: each poll() picks up where the previous one
// stopped, so frames appended between polls are seen exactly once. A file
// that does not exist yet reads as empty.
class KeyFileReader {
public:
    explicit KeyFileReader(std::filesystem::path path) : path_(std::move(path)) {}

    std::vector<KeyFrame> poll() {
        std::ifstream in(path_, std::ios::binary);
        if (!in.is_open()) {
            if (std::filesystem::exists(path_))
                throw IoError("cannot open key file " + path_.string() + " at offset " +
                              std::to_string(file_offset_));
            return {};
        }
        in.seekg(static_cast<std::streamoff>(file_offset_));
        Bytes chunk(std::istreambuf_iterator<char>(in), {});
        if (in.bad())
            throw IoError("read failed on " + path_.string() + " at offset " +
                          std::to_string(file_offset_));
        file_offset_ += chunk.size();
        return extractor_.push(chunk);
    }

    std::uint64_t crc_rejected() const { return extractor_.crc_rejected(); }
    std::uint64_t bytes_read() const { return file_offset_; }

private:
    std::filesystem::path path_;
    std::uint64_t file_offset_ = 0;
    FrameExtractor extractor_;
};

// Structural scan for `keys inspect`: reports every sync-aligned frame slot
// with its CRC status instead of skipping bad ones.
struct InspectedFrame {
    std::size_t offset = 0;
    KeyFrame frame;
    bool crc_ok = false;
};

inline std::vector<InspectedFrame> inspect_frames(std::span<const std::uint8_t> buf) {
    std::vector<InspectedFrame> out;
    std::size_t pos = 0;
    while (pos < buf.size()) {
        if (buf[pos] != kFrameSync || buf.size() - pos < kFrameSize) {
            ++pos;
            continue;
        }
        const std::uint8_t* body = buf.data() + pos + 1;
        InspectedFrame f;
        f.offset = pos;
        f.frame.key_id = get_u64_be(body);
        f.frame.key_data.assign(body + 8, body + 8 + kKeyBytes);
        f.frame.key_status = (body[8 + kKeyBytes] & 0x01) != 0;
        f.crc_ok = get_u32_be(body + 8 + kKeyBytes + 1) == detail::frame_crc(body);
        out.push_back(std::move(f));
        pos += kFrameSize;
    }
    return out;
}

} // namespace qgrid

#endif
