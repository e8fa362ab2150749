#include <gtest/gtest.h>

#include "autobahn/core.hpp"

using namespace autobahn;

TEST(Quorum, SizesForThreeFPlusOne) {
    for (uint32_t f = 1; f <= 5; ++f) {
        auto q = quorum_sizes(3 * f + 1);
        EXPECT_EQ(q.f, f);
        EXPECT_EQ(q.poa, f + 1);
        EXPECT_EQ(q.consensus, 2 * f + 1);
        EXPECT_EQ(q.fast, 3 * f + 1);
        // Any two consensus quorums share a correct replica; a PoA always holds one.
        EXPECT_GT(2 * q.consensus, q.n + q.f);
        EXPECT_GT(q.poa, q.f);
    }
    EXPECT_THROW(quorum_sizes(5), std::invalid_argument);
    EXPECT_THROW(quorum_sizes(1), std::invalid_argument);
    EXPECT_THROW(quorum_sizes(0), std::invalid_argument);
}

TEST(Digest, Sha256KnownVectors) {
    EXPECT_EQ(digest(std::string_view("abc")).hex(),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(digest(std::string_view("")).hex(),
              "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Time, UnitConversionRoundsToMicroUnits) {
    EXPECT_EQ(units(1), kUnit);
    EXPECT_EQ(units(0.2), 200'000);
    EXPECT_EQ(units(-0.5), -500'000);
    EXPECT_DOUBLE_EQ(to_units(units(2.75)), 2.75);
}

TEST(Encoder, LittleEndianFixedWidthAndLengthPrefix) {
    Encoder e;
    e.u8(1).u32(0x01020304).u64(5).str("hi");
    std::vector<uint8_t> want{1, 4, 3, 2, 1, 5, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 'h', 'i'};
    EXPECT_EQ(e.data(), want);
    EXPECT_EQ(e.finish(), digest(std::span<const uint8_t>(want)));
}

TEST(KeyRing, SignVerifyAndForgeryRejected) {
    KeyRing keys(4, 99);
    auto m = digest(std::string_view("msg"));
    auto a = keys.sign(2, m);
    EXPECT_EQ(a.signer, 2u);
    EXPECT_TRUE(keys.verify(a, m));
    EXPECT_FALSE(keys.verify(a, digest(std::string_view("other"))));
    auto forged = a;
    forged.signer = 1;
    EXPECT_FALSE(keys.verify(forged, m));
    Authenticator out_of_range{9, a.tag};
    EXPECT_FALSE(keys.verify(out_of_range, m));
    // Same seed, same keys; a different seed does not verify.
    EXPECT_TRUE(KeyRing(4, 99).verify(a, m));
    EXPECT_FALSE(KeyRing(4, 100).verify(a, m));
}
