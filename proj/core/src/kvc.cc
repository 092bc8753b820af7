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

#include "kvsched/kvc.h"

#include <algorithm>
#include <sstream>

namespace kvsched {

namespace {

[[noreturn]] void violate(const std::string& what) {
  throw ContractViolation("kvc: " + what);
}

std::string describe(RequestId id) {
  std::ostringstream os;
  os << "request " << id;
  return os.str();
}

}  // namespace

std::optional<EmbedQuote> find_embedding_host(std::span<const HostState> hosts,
                                              Tokens cand_prompt,
                                              Tokens cand_out, Tokens buffer_b,
                                              Tokens block_size,
                                              bool allow_stacking) {
  if (buffer_b < 0) violate("find_embedding_host: buffer_b must be >= 0");
  const Tokens need = cand_prompt + cand_out;
  std::optional<HostState> best;
  Tokens best_slack = 0;
  for (const HostState& raw : hosts) {
    HostState h = raw;
    if (h.guest_count == 0 || h.ceiling == 0) h.ceiling = h.granted;
    if (h.guest_count > 0 && !allow_stacking) continue;
    const Tokens slack = h.ceiling - (h.used + cand_out) - need;
    if (slack < buffer_b) continue;
    // Guests are re-homed as plain allocations when the host leaves, so
    // their rounded regions must fit in the host's footprint.
    if (h.guest_footprint + round_up(need, block_size) >
        round_up(h.granted, block_size)) {
      continue;
    }
    const Tokens remaining = h.ceiling - h.used;
    if (!best || remaining < best->ceiling - best->used ||
        (remaining == best->ceiling - best->used && h.id < best->id)) {
      best = h;
      best_slack = slack;
    }
  }
  if (!best) return std::nullopt;
  EmbedQuote q;
  q.host = best->id;
  q.start_offset = best->ceiling - need;
  q.feasible_slack = best_slack;
  q.granted = need;
  q.horizon_floor = best->used + cand_out + buffer_b;
  return q;
}

BlockPool::BlockPool(Tokens capacity, Tokens block_size, Tokens reserved_blocks)
    : capacity_(capacity),
      block_size_(block_size),
      reserved_level_(reserved_blocks),
      reserved_blocks_(reserved_blocks) {
  if (block_size_ < 1) violate("block_size must be >= 1");
  if (reserved_blocks_ < 0) violate("reserved_blocks must be >= 0");
  if (capacity_ < reserved_blocks_ * block_size_) {
    violate("capacity smaller than the reserve");
  }
  free_ = capacity_ - reserved_blocks_ * block_size_;
}

Tokens BlockPool::used_tokens() const {
  Tokens total = 0;
  for (const auto& [id, r] : records_) total += r.used;
  return total;
}

Tokens BlockPool::fragmentation_tokens() const {
  Tokens total = 0;
  for (const auto& [id, r] : records_) {
    if (!r.is_guest()) total += r.footprint - r.granted;
  }
  return total;
}

const AllocationRecord* BlockPool::find(RequestId id) const {
  auto it = records_.find(id);
  return it == records_.end() ? nullptr : &it->second;
}

const AllocationRecord& BlockPool::at(RequestId id) const {
  const AllocationRecord* r = find(id);
  if (r == nullptr) violate("unknown allocation for " + describe(id));
  return *r;
}

AllocationRecord& BlockPool::mut(RequestId id) {
  auto it = records_.find(id);
  if (it == records_.end()) violate("unknown allocation for " + describe(id));
  return it->second;
}

Tokens BlockPool::lowest_guest_offset(const AllocationRecord& host) const {
  Tokens lowest = host.granted;
  for (RequestId g : host.embedded_guests) {
    lowest = std::min(lowest, at(g).embed_offset);
  }
  return lowest;
}

Tokens BlockPool::headroom(RequestId id) const {
  const AllocationRecord& r = at(id);
  return lowest_guest_offset(r) - r.used;
}

// Lowest offset a guest may grow down to: the top of the next guest below
// it, and the host's current usage plus the buffer.
Tokens BlockPool::guest_floor_limit(const AllocationRecord& guest) const {
  const AllocationRecord& host = at(*guest.host);
  Tokens limit = host.used;
  for (RequestId g : host.embedded_guests) {
    const AllocationRecord& other = at(g);
    if (other.owner == guest.owner) continue;
    if (other.embed_offset < guest.embed_offset) {
      limit = std::max(limit, other.embed_offset + other.granted);
    }
  }
  return limit;
}

Tokens BlockPool::max_growth(RequestId id, Tokens buffer_b) const {
  const AllocationRecord& r = at(id);
  if (r.is_guest()) {
    const AllocationRecord& host = at(*r.host);
    const Tokens by_offset =
        r.embed_offset -
        std::max(guest_floor_limit(r), host.used + buffer_b);
    Tokens rounded_others = 0;
    for (RequestId g : host.embedded_guests) {
      if (g != id) rounded_others += round_up(at(g).granted, block_size_);
    }
    // Largest granted whose rounding still fits the host footprint.
    const Tokens by_footprint = host.footprint - rounded_others - r.granted;
    return std::max<Tokens>(0, std::min(by_offset, by_footprint));
  }
  return r.footprint - r.granted + free_;
}

AllocResult BlockPool::allocate(RequestId id, Tokens n_tokens) {
  if (n_tokens < 1) violate("allocate: n_tokens must be >= 1");
  if (contains(id)) violate("allocate: duplicate allocation for " + describe(id));
  const Tokens fp = footprint_for(n_tokens);
  if (fp > free_) return AllocResult{fp - free_};
  AllocationRecord r;
  r.owner = id;
  r.granted = n_tokens;
  r.footprint = fp;
  free_ -= fp;
  records_.emplace(id, std::move(r));
  return {};
}

HostState BlockPool::host_state(RequestId id) const {
  const AllocationRecord& r = at(id);
  HostState h;
  h.id = id;
  h.granted = r.granted;
  h.used = r.used;
  h.ceiling = lowest_guest_offset(r);
  h.guest_count = static_cast<int>(r.embedded_guests.size());
  for (RequestId g : r.embedded_guests) {
    h.guest_footprint += round_up(at(g).granted, block_size_);
  }
  return h;
}

std::optional<EmbedQuote> BlockPool::find_embedding_host(
    std::span<const RequestId> hosts, Tokens cand_prompt, Tokens cand_out,
    Tokens buffer_b, bool allow_stacking) const {
  std::vector<HostState> states;
  states.reserve(hosts.size());
  for (RequestId id : hosts) {
    const AllocationRecord* r = find(id);
    if (r == nullptr || r->is_guest()) continue;
    states.push_back(host_state(id));
  }
  return kvsched::find_embedding_host(states, cand_prompt, cand_out, buffer_b,
                                      block_size_, allow_stacking);
}

void BlockPool::embed(RequestId guest, const EmbedQuote& quote) {
  if (contains(guest)) violate("embed: duplicate allocation for " + describe(guest));
  if (quote.granted < 1) violate("embed: empty guest region");
  AllocationRecord& host = mut(quote.host);
  if (host.is_guest()) violate("embed: a guest cannot host");
  if (quote.start_offset + quote.granted > lowest_guest_offset(host) ||
      quote.start_offset < quote.horizon_floor ||
      quote.horizon_floor < host.used) {
    violate("embed: quote no longer fits host " + describe(quote.host));
  }
  AllocationRecord r;
  r.owner = guest;
  r.granted = quote.granted;
  r.host = quote.host;
  r.embed_offset = quote.start_offset;
  r.embed_floor = quote.horizon_floor;
  host.embedded_guests.push_back(guest);
  records_.emplace(guest, std::move(r));
}

void BlockPool::return_tokens(Tokens tokens, Tokens reserved_share) {
  // Reserve-sourced tokens refill the reserve up to its configured level.
  const Tokens deficit = (reserved_level_ - reserved_blocks_) * block_size_;
  Tokens to_reserve = std::min({tokens, reserved_share, deficit});
  to_reserve -= to_reserve % block_size_;
  reserved_blocks_ += to_reserve / block_size_;
  free_ += tokens - to_reserve;
}

Tokens BlockPool::release(RequestId id) {
  auto it = records_.find(id);
  if (it == records_.end()) violate("release: unknown " + describe(id));
  AllocationRecord rec = std::move(it->second);
  records_.erase(it);

  if (rec.is_guest()) {
    auto& guests = mut(*rec.host).embedded_guests;
    guests.erase(std::find(guests.begin(), guests.end(), id));
    return 0;
  }

  Tokens rehomed = 0;
  for (RequestId g : rec.embedded_guests) {
    AllocationRecord& guest = mut(g);
    guest.host.reset();
    guest.embed_offset = 0;
    guest.embed_floor = 0;
    guest.footprint = round_up(guest.granted, block_size_);
    rehomed += guest.footprint;
  }
  const Tokens freed = rec.footprint - rehomed;
  if (freed < 0) violate("release: guests outgrew host " + describe(id));
  return_tokens(freed, rec.reserved_tokens);
  return freed;
}

AllocResult BlockPool::draw_reserved(RequestId id, Tokens n_blocks) {
  if (n_blocks < 1) violate("draw_reserved: n_blocks must be >= 1");
  AllocationRecord& r = mut(id);
  if (r.is_guest()) violate("draw_reserved: guests cannot draw the reserve");
  if (reserved_blocks_ < n_blocks) {
    return AllocResult{(n_blocks - reserved_blocks_) * block_size_};
  }
  const Tokens n = n_blocks * block_size_;
  reserved_blocks_ -= n_blocks;
  r.footprint += n;
  r.reserved_tokens += n;
  r.granted += n;
  for (RequestId g : r.embedded_guests) mut(g).embed_offset += n;
  return {};
}

AllocResult BlockPool::grow(RequestId id, Tokens n_tokens, Tokens buffer_b) {
  if (n_tokens < 1) violate("grow: n_tokens must be >= 1");
  AllocationRecord& r = mut(id);
  if (r.is_guest()) {
    const Tokens room = max_growth(id, buffer_b);
    if (n_tokens > room) return AllocResult{n_tokens - room};
    r.embed_offset -= n_tokens;
    r.granted += n_tokens;
    r.embed_floor = std::min(r.embed_floor, r.embed_offset);
    return {};
  }
  const Tokens new_fp = round_up(r.granted + n_tokens, block_size_);
  const Tokens delta = std::max<Tokens>(0, new_fp - r.footprint);
  if (delta > free_) return AllocResult{delta - free_};
  free_ -= delta;
  r.footprint += delta;
  r.granted += n_tokens;
  // New space is spliced in below any guests so the host's tail stays
  // contiguous with its used prefix.
  for (RequestId g : r.embedded_guests) mut(g).embed_offset += n_tokens;
  return {};
}

void BlockPool::consume(RequestId id, Tokens n_tokens) {
  if (n_tokens < 0) violate("consume: negative token count");
  AllocationRecord& r = mut(id);
  const Tokens limit = lowest_guest_offset(r);
  if (r.used + n_tokens > limit) {
    std::ostringstream os;
    os << "consume: " << describe(id) << " writes " << n_tokens
       << " tokens with used=" << r.used << " limit=" << limit;
    violate(os.str());
  }
  r.used += n_tokens;
}

void BlockPool::check_invariants() const {
  Tokens top_level = 0;
  for (const auto& [id, r] : records_) {
    if (r.owner != id) violate("record owner mismatch for " + describe(id));
    if (r.used < 0 || r.used > r.granted) {
      violate("used outside [0, granted] for " + describe(id));
    }
    if (r.is_guest()) {
      if (r.footprint != 0) violate("guest with top-level footprint " + describe(id));
      if (!r.embedded_guests.empty()) violate("guest hosting guests " + describe(id));
      const AllocationRecord* host = find(*r.host);
      if (host == nullptr || host->is_guest()) {
        violate("guest with invalid host " + describe(id));
      }
      if (std::find(host->embedded_guests.begin(), host->embedded_guests.end(),
                    id) == host->embedded_guests.end()) {
        violate("guest missing from host list " + describe(id));
      }
      continue;
    }
    if (r.footprint != round_up(r.granted, block_size_)) {
      violate("footprint is not the block-rounded grant for " + describe(id));
    }
    if (r.reserved_tokens > r.footprint) {
      violate("reserved share exceeds footprint for " + describe(id));
    }
    top_level += r.footprint;

    // Guest regions: inside the host, above its usage, pairwise disjoint.
    struct Span {
      Tokens lo, hi;
      RequestId who;
    };
    std::vector<Span> spans;
    Tokens rounded = 0;
    for (RequestId g : r.embedded_guests) {
      const AllocationRecord& guest = at(g);
      if (guest.host != id) violate("host lists foreign guest " + describe(g));
      spans.push_back({guest.embed_offset, guest.embed_offset + guest.granted, g});
      rounded += round_up(guest.granted, block_size_);
      if (guest.embed_offset < guest.embed_floor) {
        violate("guest below its validated floor " + describe(g));
      }
      if (guest.embed_offset < r.used) {
        violate("host usage overlaps guest " + describe(g));
      }
    }
    if (rounded > r.footprint) violate("guests exceed host footprint " + describe(id));
    std::sort(spans.begin(), spans.end(),
              [](const Span& a, const Span& b) { return a.lo < b.lo; });
    for (std::size_t i = 0; i < spans.size(); ++i) {
      if (spans[i].lo < 0 || spans[i].hi > r.granted) {
        violate("guest region outside host " + describe(spans[i].who));
      }
      if (i > 0 && spans[i].lo < spans[i - 1].hi) {
        violate("overlapping guests " + describe(spans[i - 1].who) + " and " +
                describe(spans[i].who));
      }
    }
  }
  if (reserved_blocks_ < 0 || reserved_blocks_ > reserved_level_) {
    violate("reserve outside [0, level]");
  }
  if (free_ < 0) violate("negative free tokens");
  if (top_level + reserve_tokens() + free_ != capacity_) {
    std::ostringstream os;
    os << "conservation broken: allocated=" << top_level
       << " reserve=" << reserve_tokens() << " free=" << free_
       << " capacity=" << capacity_;
    violate(os.str());
  }
}

}  // namespace kvsched
