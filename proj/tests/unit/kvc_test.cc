/* Copyright 2026 The kvsched Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include "kvsched/kvc.h"
#include "support/pool_fuzz.h"

namespace kvsched {
namespace {

constexpr RequestId kA{1};
constexpr RequestId kB{2};
constexpr RequestId kC{3};

TEST(Allocate, RoundsFootprintToBlocks) {
  BlockPool pool(1024, 8, 0);
  ASSERT_TRUE(pool.allocate(kA, 20).ok());
  EXPECT_EQ(pool.at(kA).footprint, 24);
  EXPECT_EQ(pool.at(kA).granted, 20);
  EXPECT_EQ(pool.free_tokens(), 1000);
  EXPECT_EQ(pool.fragmentation_tokens(), 4);
}

TEST(Allocate, RejectsEmptyAndDuplicate) {
  BlockPool pool(1024, 8, 0);
  EXPECT_THROW(pool.allocate(kA, 0), ContractViolation);
  ASSERT_TRUE(pool.allocate(kA, 8).ok());
  EXPECT_THROW(pool.allocate(kA, 8), ContractViolation);
}

TEST(Allocate, ReportsShortfall) {
  BlockPool pool(40, 8, 0);
  ASSERT_TRUE(pool.allocate(kA, 24).ok());
  ASSERT_EQ(pool.free_tokens(), 16);
  const AllocResult r = pool.allocate(kB, 24);
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.missing, 8);
  EXPECT_FALSE(pool.contains(kB));
  EXPECT_EQ(pool.free_tokens(), 16);
}

TEST(Reserve, HeldOutsideFreePool) {
  BlockPool pool(1024, 8, 8);
  EXPECT_EQ(pool.free_tokens(), 1024 - 64);
  EXPECT_EQ(pool.reserve_tokens(), 64);
}

HostState host(RequestId id, Tokens granted, Tokens used) {
  HostState h;
  h.id = id;
  h.granted = granted;
  h.used = used;
  h.ceiling = granted;
  return h;
}

TEST(FindEmbeddingHost, FeasibleHostPlacesGuestAtTheTop) {
  const HostState hosts[] = {host(kA, 500, 100)};
  const auto q = find_embedding_host(hosts, 50, 100, 8);
  ASSERT_TRUE(q.has_value());
  EXPECT_EQ(q->host, kA);
  EXPECT_EQ(q->feasible_slack, 150);
  EXPECT_EQ(q->start_offset, 350);
  EXPECT_EQ(q->granted, 150);
}

TEST(FindEmbeddingHost, InfeasibleHost) {
  const HostState hosts[] = {host(kA, 260, 100)};
  EXPECT_FALSE(find_embedding_host(hosts, 50, 100, 8).has_value());
}

TEST(FindEmbeddingHost, SlackExactlyAtBufferIsFeasible) {
  // 358 - 200 - 150 = 8.
  const HostState hosts[] = {host(kA, 358, 100)};
  EXPECT_TRUE(find_embedding_host(hosts, 50, 100, 8).has_value());
  const HostState tighter[] = {host(kA, 357, 100)};
  EXPECT_FALSE(find_embedding_host(tighter, 50, 100, 8).has_value());
}

TEST(FindEmbeddingHost, PrefersLeastRemainingRoom) {
  // Remaining room 150 and 300; both can take a 10 + 10 guest.
  const HostState hosts[] = {host(kA, 400, 100), host(kB, 250, 100)};
  const auto q = find_embedding_host(hosts, 10, 10, 8);
  ASSERT_TRUE(q.has_value());
  EXPECT_EQ(q->host, kB);
}

TEST(FindEmbeddingHost, HostsWithGuestsNeedStacking) {
  HostState h = host(kA, 1000, 0);
  h.guest_count = 1;
  h.ceiling = 900;
  h.guest_footprint = 104;
  const HostState hosts[] = {h};
  EXPECT_FALSE(find_embedding_host(hosts, 10, 10, 8).has_value());
  const auto q = find_embedding_host(hosts, 10, 10, 8, 1, true);
  ASSERT_TRUE(q.has_value());
  EXPECT_EQ(q->start_offset, 880);
}

class EmbeddedPool : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_TRUE(pool.allocate(kA, 496).ok());
    pool.consume(kA, 100);
    const RequestId hosts[] = {kA};
    const auto q = pool.find_embedding_host(hosts, 50, 100, 8);
    ASSERT_TRUE(q.has_value());
    pool.embed(kB, *q);
  }
  BlockPool pool{1024, 8, 0};
};

TEST_F(EmbeddedPool, GuestHasNoTopLevelFootprint) {
  EXPECT_EQ(pool.free_tokens(), 1024 - 496);
  EXPECT_TRUE(pool.at(kB).is_guest());
  EXPECT_EQ(pool.at(kB).footprint, 0);
  EXPECT_EQ(pool.at(kA).embedded_guests.size(), 1u);
  EXPECT_EQ(pool.headroom(kA), 346 - 100);
  pool.check_invariants();
}

TEST_F(EmbeddedPool, ReleasingGuestLeavesFreePoolUnchanged) {
  EXPECT_EQ(pool.release(kB), 0);
  EXPECT_EQ(pool.free_tokens(), 1024 - 496);
  EXPECT_TRUE(pool.at(kA).embedded_guests.empty());
  pool.check_invariants();
}

TEST_F(EmbeddedPool, ReleasingHostRehomesGuest) {
  const Tokens freed = pool.release(kA);
  EXPECT_EQ(freed, 496 - 152);
  EXPECT_FALSE(pool.at(kB).is_guest());
  EXPECT_EQ(pool.at(kB).footprint, 152);
  EXPECT_EQ(pool.free_tokens(), 1024 - 152);
  pool.check_invariants();
}

TEST_F(EmbeddedPool, HostCannotWriteIntoGuest) {
  EXPECT_THROW(pool.consume(kA, 247), ContractViolation);
  EXPECT_NO_THROW(pool.consume(kA, 246));
  EXPECT_EQ(pool.headroom(kA), 0);
}

TEST_F(EmbeddedPool, HostGrowthSlidesGuestUp) {
  const Tokens before = pool.at(kB).embed_offset;
  ASSERT_TRUE(pool.grow(kA, 16).ok());
  EXPECT_EQ(pool.at(kB).embed_offset, before + 16);
  EXPECT_EQ(pool.headroom(kA), 346 + 16 - 100);
  pool.check_invariants();
}

TEST(Release, PlainGrantReturnsFootprint) {
  BlockPool pool(1024, 8, 0);
  ASSERT_TRUE(pool.allocate(kA, 20).ok());
  EXPECT_EQ(pool.release(kA), 24);
  EXPECT_EQ(pool.free_tokens(), 1024);
  EXPECT_THROW(pool.release(kA), ContractViolation);
  EXPECT_THROW(pool.release(kC), ContractViolation);
}

TEST(DrawReserved, TakesWholeBlocks) {
  BlockPool pool(1024, 8, 8);
  ASSERT_TRUE(pool.allocate(kA, 16).ok());
  ASSERT_TRUE(pool.draw_reserved(kA, 2).ok());
  EXPECT_EQ(pool.reserved_blocks(), 6);
  EXPECT_EQ(pool.at(kA).granted, 32);
  EXPECT_EQ(pool.at(kA).reserved_tokens, 16);
}

TEST(DrawReserved, ShortfallWhenReserveLow) {
  BlockPool pool(1024, 8, 1);
  ASSERT_TRUE(pool.allocate(kA, 16).ok());
  const AllocResult r = pool.draw_reserved(kA, 2);
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(pool.reserved_blocks(), 1);
}

TEST(DrawReserved, ReleaseReplenishesReserve) {
  BlockPool pool(1024, 8, 8);
  ASSERT_TRUE(pool.allocate(kA, 16).ok());
  const Tokens free_before = pool.free_tokens();
  ASSERT_TRUE(pool.draw_reserved(kA, 3).ok());
  pool.release(kA);
  EXPECT_EQ(pool.reserved_blocks(), 8);
  EXPECT_EQ(pool.free_tokens(), free_before + 16);
}

TEST(Grow, PlainGrantGrowsIntoFreePool) {
  BlockPool pool(1024, 8, 0);
  ASSERT_TRUE(pool.allocate(kA, 24).ok());
  ASSERT_TRUE(pool.grow(kA, 8).ok());
  EXPECT_EQ(pool.at(kA).granted, 32);
  EXPECT_EQ(pool.at(kA).footprint, 32);
  EXPECT_EQ(pool.free_tokens(), 1024 - 32);
}

TEST(Grow, WithinRoundingNeedsNoNewBlock) {
  BlockPool pool(1024, 8, 0);
  ASSERT_TRUE(pool.allocate(kA, 20).ok());
  ASSERT_TRUE(pool.grow(kA, 4).ok());
  EXPECT_EQ(pool.free_tokens(), 1000);
}

TEST(Grow, GuestRespectsHostBuffer) {
  BlockPool pool(1024, 8, 0);
  ASSERT_TRUE(pool.allocate(kA, 200).ok());
  pool.consume(kA, 100);
  // Guest sits 10 tokens above the host's usage.
  EmbedQuote q;
  q.host = kA;
  q.start_offset = 110;
  q.granted = 90;
  q.horizon_floor = 110;
  pool.embed(kB, q);
  const AllocResult r = pool.grow(kB, 4, 8);
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(pool.at(kB).granted, 90);
  EXPECT_EQ(pool.max_growth(kB, 8), 2);
  EXPECT_TRUE(pool.grow(kB, 2, 8).ok());
  EXPECT_EQ(pool.at(kB).embed_offset, 108);
  pool.check_invariants();
}

TEST(Grow, UnknownIdRejected) {
  BlockPool pool(1024, 8, 0);
  EXPECT_THROW(pool.grow(kA, 8), ContractViolation);
  EXPECT_THROW(pool.headroom(kA), ContractViolation);
}

TEST(PoolFuzz, InvariantsHoldUnderRandomOperations) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto stats = fuzz::fuzz_pool(seed, 100'000);
    ASSERT_TRUE(stats.violation.empty()) << "seed " << seed << " op " << stats.ops << ": "
                                         << stats.violation;
    EXPECT_GT(stats.embeds, 100);
    EXPECT_GT(stats.releases, 1000);
    EXPECT_GT(stats.failed, 0);
  }
}

TEST(PoolFuzz, SmallBlocksAndTightCapacity) {
  const auto stats = fuzz::fuzz_pool(17, 100'000, 512, 1, 4);
  EXPECT_TRUE(stats.violation.empty()) << stats.violation;
}

}  // namespace
}  // namespace kvsched
