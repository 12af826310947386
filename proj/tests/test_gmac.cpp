#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "qgrid/bytes.hpp"
#include "qgrid/gmac.hpp"
#include "reference_gcm.hpp"

using namespace qgrid;

namespace {

Bytes hx(std::string_view hex) {
    auto v = from_hex(hex);
    REQUIRE(v.has_value());
    return *v;
}

// AAD-only AES-256 vectors cross-checked against two further independent
// GCM implementations before being frozen here.
struct Vector {
    const char* key;
    const char* iv;
    const char* aad;
    const char* tag;
};

constexpr Vector kFrozenVectors[] = {
    {"109b228cffbf22b6ef4077c8cd46a92ee6ad2ca13a170debcf2f878642b44833",
     "4ea9fb815a97d4d11d090bcf", "", "b7f740defeb35f44b695f8888fa26bb4"},
    {"8bb9c81b09fcd864c0f804fc1b2c31f6c77873de826b4c6ab6e98eefe8abdbcc",
     "ba48ee6a36a7b451cfae823d24af281d", "a4", "378bd425d293822f4966b34d951e4b06"},
    {"07582c39b6124f38eeee2401d4274240af9e91bdefadaca987cb25b42f2b40d0",
     "6a18120f0300b837f50c83e9", "ea9ed462783a3da5df67436bd7704069",
     "023e622af0db3bfe15ee01be9cf77d10"},
    {"a06c2a209801fa4059640b9288f14e2a3fa2adc710f5250449333f0d55aa482d",
     "07dd4e434df5d86cc76afb5e49b8498c", "f78ad94e4fa8cbd8115a4e8a22c026d105a93bb2",
     "4c5564176b417b3a100795eed79edecf"},
    {"b2df323ecc44c49cbe426910e60d8fe8e72f1dedf40027f72664bb828b0859b7",
     "2ff691b96b92a46fac734b11",
     "8d458d257a3699d8f73b4d33838b58a63eb10a6d88fa60b4b50173897f373174bb063722bc40feaa13abd420d58"
     "01bbd",
     "0950aec08e91223fc325c0a414d3771e"},
    {"391d81a9ba1e1fa2b4dfa0d34cc7683f1df95fc3b873b0aa6aa6063d657ffaea",
     "2ae817269a3b16ee3ebfcd036012dce3",
     "af764042eb8322df83a20b9df5cdd07c170ac34d3359f2b53954337ea3b4b3c5eb391c8e7f160392d267472e9e2"
     "25a69f9ab1d8c7cbaaa0f84ab743c58021695",
     "2548ce8e677db772d3b6f3ea143d3166"},
    {"e2c0f3d3467efefd5ef827e91e9f8138235eddcd979577ca2d227457449097c2",
     "f44b5767ed497a867356f539", "", "b972f9262a4fde0e4862a5170cdd362b"},
    {"b39871d9e08fae4163daab5a757e8c0368fe9d95cc1680f57fa4a585e7a73fbc",
     "9c84277cf1e21363473cee4f745467a1", "7c", "72601eb37b6dc63e4c1faa8b24894a18"},
    {"4e3d7505029caf52baa5e83a0bcc867161a517c7b181fa72c72503cc75bd31df",
     "f41d9b8e3f0eed05f5702f9f", "868d85ca37013b63a2c579a4871d4200",
     "186bd894f022eb3ffc069b3d1acd24a9"},
    {"fb10ae9b49fe74073e404b642fc406b2c30160f09af1468003da5b81abac3548",
     "0525d54732e77bb9f9ce65d068300f52", "2c5752f23cc727a94e5923de5ff15af29b65bbe5",
     "7c2a32162b35a3f1c6cf5a2fda769701"},
    {"dbfbd1ed5b1a43f3fdaf120d5a5b4181d0aeaa431e638687499f73f1678982a6",
     "cede9653e3bf8ed95e9cbecb",
     "b1435f335e327745ace4bb412f24df0f827849df892a0e8276f1d32b4b59efc157f5cb0705e94042c92ad9dc4a8"
     "73844",
     "2cc552d404369b309af7bcdf2bfe4db1"},
    {"431feb51b92e9ae576ac1e6cefab7a5c63d715f47922f527c8e9d0475b524541",
     "036afa7ea89abd5f4c9b475f40379a1f",
     "3531eb9c530cce1b5f07cbf8b6e8e6a811a1d28d435c198cbc8ba78d0ad480dba500ac4627ba4f082f1984445fa"
     "ade4d5f58ef50b66a7b7c18c33868643c1d81",
     "1eef92bc69fe1ca7c94ed53a36b40537"},
};

} // namespace

TEST_CASE("reference oracle reproduces the canonical GCM specification vectors") {
    // Empty plaintext, empty AAD, zero key and IV: the original GCM paper's
    // test cases 1 (AES-128) and 13/14 (AES-256).
    Bytes zero_key128(16, 0x00), zero_key256(32, 0x00), zero_iv(12, 0x00);
    CHECK(to_hex(refgcm::gmac(zero_key128, zero_iv, {})) == "58e2fccefa7e3061367f1d57a4e7455a");
    CHECK(to_hex(refgcm::gmac(zero_key256, zero_iv, {})) == "530f8afbc74536b9a963b4f1c4cb738b");

    Bytes zero_pt(16, 0x00);
    auto out = refgcm::encrypt(zero_key256, zero_iv, {}, zero_pt);
    CHECK(to_hex(out.ciphertext) == "cea7403d4d606b6e074ec5d3baf39d18");
    CHECK(to_hex(out.tag) == "d0d1c8a799996bf0265b98b5d48ab919");
}

TEST_CASE("gmac_tag matches the canonical vectors") {
    Bytes zero_key128(16, 0x00), zero_key256(32, 0x00), zero_iv(12, 0x00);
    CHECK(to_hex(gmac_tag(zero_key128, zero_iv, {})) == "58e2fccefa7e3061367f1d57a4e7455a");
    CHECK(to_hex(gmac_tag(zero_key256, zero_iv, {})) == "530f8afbc74536b9a963b4f1c4cb738b");
}

TEST_CASE("gmac_tag and the reference oracle agree on the frozen AAD-only vectors") {
    for (const auto& v : kFrozenVectors) {
        Bytes key = hx(v.key), iv = hx(v.iv), aad = hx(v.aad), tag = hx(v.tag);
        auto ours = gmac_tag(key, iv, aad);
        auto ref = refgcm::gmac(key, iv, aad);
        CHECK(to_hex(ours) == v.tag);
        CHECK(to_hex(ref) == v.tag);
        CHECK(gmac_verify(key, iv, aad, tag));
    }
}

TEST_CASE("gmac_tag agrees with the reference oracle on random inputs") {
    std::mt19937_64 rng(2024);
    auto fill = [&](Bytes& b) {
        for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    };
    for (int i = 0; i < 150; ++i) {
        Bytes key(i % 3 == 0 ? 16 : (i % 3 == 1 ? 24 : 32));
        Bytes iv(i % 2 == 0 ? 12 : 16);
        Bytes aad(rng() % 300);
        fill(key);
        fill(iv);
        fill(aad);
        CHECK(gmac_tag(key, iv, aad) == refgcm::gmac(key, iv, aad));
    }
}

TEST_CASE("gmac_tag is deterministic and iv-sensitive") {
    Bytes key(32, 0x42), iv(16, 0x01), data{1, 2, 3};
    CHECK(gmac_tag(key, iv, data) == gmac_tag(key, iv, data));
    Bytes iv2 = iv;
    iv2[15] ^= 0x01;
    CHECK(gmac_tag(key, iv, data) != gmac_tag(key, iv2, data));
}

TEST_CASE("gmac_tag rejects bad key and iv lengths") {
    Bytes key(32, 0x00), iv(16, 0x00);
    CHECK_THROWS_AS(gmac_tag(Bytes(31, 0), iv, {}), BadLengthError);
    CHECK_THROWS_AS(gmac_tag(key, Bytes(13, 0), {}), BadLengthError);
    CHECK_THROWS_AS(gmac_tag(Bytes{}, iv, {}), BadLengthError);
}
