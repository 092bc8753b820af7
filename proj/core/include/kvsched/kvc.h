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

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kvsched/types.h"

namespace kvsched {

// One request's slice of the KV cache.
//
// A plain allocation owns `footprint` top-level tokens (a block multiple
// >= granted). A guest lives inside a host's granted-but-unused tail and
// has zero top-level footprint. Offsets are measured from the start of the
// host region; the host fills [0, used) upward and guests sit above it.
struct AllocationRecord {
  RequestId owner;
  Tokens granted = 0;
  Tokens used = 0;
  Tokens footprint = 0;
  // Portion of footprint drawn from the global reserve.
  Tokens reserved_tokens = 0;
  std::optional<RequestId> host;
  Tokens embed_offset = 0;
  // Guests only: lowest offset validated against the host's growth.
  Tokens embed_floor = 0;
  std::vector<RequestId> embedded_guests;

  bool is_guest() const { return host.has_value(); }
  bool is_host() const { return !embedded_guests.empty(); }
};

struct EmbedQuote {
  RequestId host;
  Tokens start_offset = 0;
  Tokens feasible_slack = 0;
  Tokens granted = 0;
  // Host usage at the guest's completion horizon plus the buffer.
  Tokens horizon_floor = 0;
};

// Host candidate as seen by the embedding search.
struct HostState {
  RequestId id;
  Tokens granted = 0;  // a_j
  Tokens used = 0;     // u_j
  // Top of the free tail: the lowest live guest offset, or granted.
  Tokens ceiling = 0;
  Tokens guest_footprint = 0;  // sum of block-rounded guest regions
  int guest_count = 0;
};

// Among hosts with ceiling - (u + out) - (prompt + out) >= buffer, picks the
// one with the least remaining room (ceiling - u), ties by id, and places the
// guest flush against the ceiling. Hosts already carrying guests are only
// considered when allow_stacking is set. A zero ceiling means "no guests",
// i.e. the ceiling is the grant.
std::optional<EmbedQuote> find_embedding_host(std::span<const HostState> hosts,
                                              Tokens cand_prompt,
                                              Tokens cand_out, Tokens buffer_b,
                                              Tokens block_size = 1,
                                              bool allow_stacking = false);

// Outcome of allocate/grow/draw_reserved: missing == 0 means success.
struct AllocResult {
  Tokens missing = 0;
  bool ok() const { return missing == 0; }
};

class BlockPool {
 public:
  BlockPool(Tokens capacity, Tokens block_size, Tokens reserved_blocks);

  Tokens capacity() const { return capacity_; }
  Tokens block_size() const { return block_size_; }
  Tokens free_tokens() const { return free_; }
  Tokens reserved_blocks() const { return reserved_blocks_; }
  Tokens reserved_level() const { return reserved_level_; }

  // Sum of top-level footprints.
  Tokens allocated_tokens() const { return capacity_ - free_ - reserve_tokens(); }
  Tokens reserve_tokens() const { return reserved_blocks_ * block_size_; }
  Tokens used_tokens() const;
  // Block rounding waste: footprint - granted over top-level allocations.
  Tokens fragmentation_tokens() const;

  bool contains(RequestId id) const { return records_.contains(id); }
  const AllocationRecord* find(RequestId id) const;
  const AllocationRecord& at(RequestId id) const;
  const std::map<RequestId, AllocationRecord>& records() const {
    return records_;
  }

  // Tokens the owner can still write before hitting its grant or a guest.
  Tokens headroom(RequestId id) const;
  // Largest n for which grow(id, n) would currently succeed.
  Tokens max_growth(RequestId id, Tokens buffer_b) const;
  // Tokens allocate(n) would take from the free pool.
  Tokens footprint_for(Tokens n) const { return round_up(n, block_size_); }

  AllocResult allocate(RequestId id, Tokens n_tokens);

  HostState host_state(RequestId id) const;
  std::optional<EmbedQuote> find_embedding_host(
      std::span<const RequestId> hosts, Tokens cand_prompt, Tokens cand_out,
      Tokens buffer_b, bool allow_stacking = false) const;
  void embed(RequestId guest, const EmbedQuote& quote);

  // Returns the top-level tokens handed back to the free pool and reserve.
  Tokens release(RequestId id);

  AllocResult draw_reserved(RequestId id, Tokens n_blocks);
  AllocResult grow(RequestId id, Tokens n_tokens, Tokens buffer_b = 0);

  // Records tokens written by the owner. Throws ContractViolation when the
  // write would exceed the owner's grant or run into a live guest.
  void consume(RequestId id, Tokens n_tokens);

  // Throws ContractViolation describing the first broken invariant.
  void check_invariants() const;

 private:
  AllocationRecord& mut(RequestId id);
  Tokens lowest_guest_offset(const AllocationRecord& host) const;
  Tokens guest_floor_limit(const AllocationRecord& guest) const;
  void return_tokens(Tokens tokens, Tokens reserved_share);

  Tokens capacity_;
  Tokens block_size_;
  Tokens reserved_level_;
  Tokens reserved_blocks_;
  Tokens free_;
  std::map<RequestId, AllocationRecord> records_;
};

}  // namespace kvsched
