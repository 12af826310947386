#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "qgrid/bytes.hpp"

using namespace qgrid;

TEST_CASE("big-endian integer round trips") {
    Bytes buf;
    put_u16_be(buf, 0xBEEF);
    put_u32_be(buf, 0xDEADBEEF);
    put_u64_be(buf, 0x0123456789ABCDEFull);
    REQUIRE(buf.size() == 14);
    CHECK(get_u16_be(buf.data()) == 0xBEEF);
    CHECK(get_u32_be(buf.data() + 2) == 0xDEADBEEF);
    CHECK(get_u64_be(buf.data() + 6) == 0x0123456789ABCDEFull);
    CHECK(buf[0] == 0xBE); // network order: most significant byte first
}

TEST_CASE("hex encode/decode") {
    Bytes data{0x00, 0x0F, 0xA5, 0xFF};
    CHECK(to_hex(data) == "000fa5ff");
    CHECK(from_hex("000fa5ff") == data);
    CHECK(from_hex("000fa5f") == std::nullopt);  // odd length
    CHECK(from_hex("zz") == std::nullopt);       // bad digit
}

TEST_CASE("base64 matches the RFC 4648 vectors") {
    auto enc = [](std::string_view s) {
        return base64_encode({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    };
    CHECK(enc("") == "");
    CHECK(enc("f") == "Zg==");
    CHECK(enc("fo") == "Zm8=");
    CHECK(enc("foo") == "Zm9v");
    CHECK(enc("foob") == "Zm9vYg==");
    CHECK(enc("fooba") == "Zm9vYmE=");
    CHECK(enc("foobar") == "Zm9vYmFy");
}

TEST_CASE("base64 strict decoding rejects malformed input") {
    CHECK(base64_decode("Zm9v") .has_value());
    CHECK_FALSE(base64_decode("Zm9").has_value());    // not a multiple of 4
    CHECK_FALSE(base64_decode("Zm=v").has_value());   // pad in the middle
    CHECK_FALSE(base64_decode("Zm9v\n").has_value()); // whitespace
    CHECK_FALSE(base64_decode("Zm9-").has_value());   // outside alphabet
    CHECK_FALSE(base64_decode("Zh==").has_value());   // non-canonical padding bits
}

TEST_CASE("base64 round trips random binary data") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        Bytes data(rng() % 64);
        for (auto& b : data) b = static_cast<std::uint8_t>(rng());
        auto decoded = base64_decode(base64_encode(data));
        REQUIRE(decoded.has_value());
        CHECK(*decoded == data);
    }
}

TEST_CASE("constant-time comparison") {
    Bytes a{1, 2, 3}, b{1, 2, 3}, c{1, 2, 4};
    CHECK(ct_equal(a, b));
    CHECK_FALSE(ct_equal(a, c));
    CHECK_FALSE(ct_equal(a, Bytes{1, 2}));
}
