"""Wait-free stable key-payload radix sort: four 8-bit passes over uint32.

Each pass runs three kernel families in submission order: per-tile digit
histogram (digit-major layout), one hierarchical exclusive scan over the
whole histogram, and a stable scatter. The digit-major layout makes the
scanned histogram value at (digit d, tile t) equal to

    global offset of digit d  +  count of d in tiles before t

simultaneously, so a single scan provides both the global digit base and the
inter-workgroup prefix (proof sketch in docs/CONVENTIONS.md). The scatter
derives each element's intra-tile rank with eight 1-bit stable partition
steps — intra-workgroup scans only. No kernel polls memory written by
another workgroup in the same dispatch and the sort uses no global atomics,
so completion never depends on workgroup scheduling.

Auxiliary storage per sort: the 256*T-counter histogram plus three scan-sum
levels of T, ceil(T/256), and ceil(T/65536) words, T = padded_n / 256.
Pass i orders bits [8*i, 8*i+8); four passes ping-pong and land back in the
caller's buffers.
"""

from __future__ import annotations

import numpy as np

from .device import WG, Buffer, SoftDevice, audited_helper, kernel

SENTINEL = 0xFFFFFFFF
PASSES = 4

# indirect-args word layout (LAYOUTS.md)
ARG_COUNT = 0       # visible/sortable element count
ARG_PADDED = 1      # count rounded up to a tile multiple
ARG_TILES = 2       # padded / 256: grid for pad, histogram, scatter, scan L0
ARG_GRID_S1 = 3     # ceil(tiles / 256): grid for scan L1 and its add-back
ARG_GRID_S2 = 4     # ceil(grid_s1 / 256): grid for scan L2
ARG_LEN_S1 = 5      # element count of scan level 1 (= tiles)
ARG_LEN_S2 = 6      # element count of scan level 2 (= grid_s1)
ARG_DRAW = 8        # 4 words: vertex count, instance count, firsts
ARGS_WORDS = 12


class CapacityExceeded(ValueError):
    """Sort invoked with more elements than its buffers hold."""


@audited_helper
def args_words(count: int) -> np.ndarray:
    """Args-block arithmetic, shared by the device kernel and host writes."""
    padded = -(-count // WG) * WG
    tiles = padded // WG
    grid_s1 = -(-tiles // WG)
    grid_s2 = -(-grid_s1 // WG)
    return np.array([count, padded, tiles, grid_s1, grid_s2,
                     tiles, grid_s1, 0, 4, count, 0, 0], np.uint32)


@kernel
def k_pad_tail(ctx):
    """Fill [count, padded) of keys and payload with the max-key sentinel."""
    args = ctx.u32("args")
    count = int(args[ARG_COUNT])
    padded = int(args[ARG_PADDED])
    gi = ctx.gi
    tail = (gi >= count) & (gi < padded)
    idx = gi[tail]
    ctx.u32("keys")[idx] = np.uint32(SENTINEL)
    ctx.u32("payload")[idx] = np.uint32(SENTINEL)


@kernel
def k_histogram(ctx):
    """Tile-local digit counts into the digit-major histogram.

    Tile t owns histogram[d * T + t] for every digit d, so all 256 counters
    are plain (non-atomic) writes from this workgroup's shared tally.
    """
    args = ctx.u32("args")
    tiles = int(args[ARG_TILES])
    shift = np.uint32(ctx.uniforms["shift"])
    gi = ctx.gi
    digits = ((ctx.u32("keys")[gi] >> shift) & np.uint32(0xFF)).astype(np.int64)
    b = digits.shape[0]
    rows = np.arange(b, dtype=np.int64)[:, None]
    counts = np.bincount((rows * 256 + digits).ravel(),
                         minlength=b * 256).reshape(b, 256)
    dst = np.arange(256, dtype=np.int64)[None, :] * tiles + ctx.wg_ids[:, None]
    ctx.u32("hist")[dst] = counts.astype(np.uint32)


@kernel
def k_scan_tile(ctx):
    """Per-tile exclusive scan in place; tile totals go to the sums level.

    The in-tile scan stands in for the workgroup's up/down-sweep ladder; the
    level-by-level dispatch structure is the hierarchical part.
    """
    args = ctx.u32("args")
    src = ctx.u32(ctx.uniforms["src"])
    sums = ctx.u32(ctx.uniforms["sums"])
    len_slot = ctx.uniforms["len_slot"]
    gi = ctx.gi
    if len_slot is None:
        x = src[gi]
        valid = None
    else:
        length = int(args[len_slot])
        valid = gi < length
        x = np.where(valid, src[np.minimum(gi, length - 1)], np.uint32(0))
    excl = (np.cumsum(x, axis=1, dtype=np.uint64) - x).astype(np.uint32)
    totals = x.sum(axis=1, dtype=np.uint64).astype(np.uint32)
    if valid is None:
        src[gi] = excl
    else:
        src[gi[valid]] = excl[valid]
    sums[ctx.wg_ids] = totals


@kernel
def k_add_base(ctx):
    """Add the scanned parent-level value to every element of this tile."""
    args = ctx.u32("args")
    dst = ctx.u32(ctx.uniforms["dst"])
    base = ctx.u32(ctx.uniforms["base"])[ctx.wg_ids][:, None]
    len_slot = ctx.uniforms["len_slot"]
    gi = ctx.gi
    if len_slot is None:
        dst[gi] = dst[gi] + base
    else:
        length = int(args[len_slot])
        valid = gi < length
        idx = gi[valid]
        dst[idx] = dst[idx] + np.broadcast_to(base, gi.shape)[valid]


@kernel
def k_scatter(ctx):
    """Stable scatter: destination = scanned histogram value + in-tile rank.

    The in-tile rank comes from eight successive 1-bit stable partitions of
    the tile (least significant digit bit first), each realized with an
    intra-workgroup exclusive scan — after which elements of equal digit are
    contiguous and rank = sorted position - digit start.
    """
    args = ctx.u32("args")
    tiles = int(args[ARG_TILES])
    shift = np.uint32(ctx.uniforms["shift"])
    gi = ctx.gi
    keys = ctx.u32("keys_in")[gi]
    payload = ctx.u32("pay_in")[gi]
    digits = ((keys >> shift) & np.uint32(0xFF)).astype(np.int64)
    b = digits.shape[0]
    lane = np.arange(WG, dtype=np.int64)[None, :]

    perm = np.broadcast_to(lane, (b, WG)).copy()
    for bit in range(8):
        cur = np.take_along_axis(digits, perm, axis=1)
        is_one = (cur >> bit) & 1
        ones_before = np.cumsum(is_one, axis=1) - is_one
        zeros_total = WG - is_one.sum(axis=1, keepdims=True)
        zeros_before = lane - ones_before
        pos = np.where(is_one == 0, zeros_before, zeros_total + ones_before)
        nxt = np.empty_like(perm)
        np.put_along_axis(nxt, pos, perm, axis=1)
        perm = nxt

    rows = np.arange(b, dtype=np.int64)[:, None]
    counts = np.bincount((rows * 256 + digits).ravel(),
                         minlength=b * 256).reshape(b, 256)
    starts = np.cumsum(counts, axis=1) - counts
    sorted_digits = np.take_along_axis(digits, perm, axis=1)
    ranks_sorted = lane - np.take_along_axis(starts, sorted_digits, axis=1)
    rank_local = np.empty_like(perm)
    np.put_along_axis(rank_local, perm, ranks_sorted, axis=1)

    base = ctx.u32("hist")[digits * tiles + ctx.wg_ids[:, None]]
    dst = base.astype(np.int64) + rank_local
    ctx.u32("keys_out")[dst] = keys
    ctx.u32("pay_out")[dst] = payload


class RadixSorter:
    """Reusable sort over caller-owned key/payload buffers.

    The caller's buffers must hold padded capacity (a tile multiple); the
    sorter owns the ping-pong pair and scan scratch. Grid sizes come from an
    args buffer, so a device-resident counter can drive the sort without any
    host readback.
    """

    def __init__(self, device: SoftDevice, capacity: int):
        self.device = device
        self.capacity = int(capacity)
        padded_cap = -(-self.capacity // WG) * WG
        tiles_max = padded_cap // WG
        s2_len = -(-tiles_max // WG)
        s3_len = -(-s2_len // WG)
        word = lambda n: max(n, 1) * 4
        self.keys_b = device.create_buffer("sort.keys_b", word(padded_cap))
        self.pay_b = device.create_buffer("sort.pay_b", word(padded_cap))
        self.hist = device.create_buffer("sort.hist", word(256 * tiles_max))
        self.sums1 = device.create_buffer("sort.sums1", word(tiles_max))
        self.sums2 = device.create_buffer("sort.sums2", word(s2_len))
        self.sums3 = device.create_buffer("sort.sums3", word(s3_len))
        self.args = device.create_buffer("sort.args", ARGS_WORDS * 4)

    def buffers(self) -> list[Buffer]:
        return [self.keys_b, self.pay_b, self.hist, self.sums1, self.sums2,
                self.sums3, self.args]

    def destroy(self) -> None:
        for buf in self.buffers():
            buf.destroy()

    def record(self, keys: Buffer, payload: Buffer, args: Buffer) -> None:
        """Submit the pad + four-pass dispatch sequence against `args`.

        29 dispatches total: pad, then per pass histogram, three scan levels,
        two add-backs, scatter. Even pass count returns results to `keys`
        and `payload`.
        """
        dev = self.device
        dev.dispatch(k_pad_tail, 0, {"keys": keys, "payload": payload,
                                     "args": args},
                     indirect=(args, ARG_TILES))
        ping = [(keys, payload), (self.keys_b, self.pay_b)]
        for p in range(PASSES):
            src, dst = ping[p % 2], ping[(p + 1) % 2]
            shift = {"shift": 8 * p}
            dev.dispatch(k_histogram, 0,
                         {"keys": src[0], "hist": self.hist, "args": args},
                         shift, indirect=(args, ARG_TILES))
            dev.dispatch(k_scan_tile, 0,
                         {"hist": self.hist, "sums1": self.sums1,
                          "args": args},
                         {"src": "hist", "sums": "sums1", "len_slot": None},
                         indirect=(args, ARG_TILES))
            dev.dispatch(k_scan_tile, 0,
                         {"sums1": self.sums1, "sums2": self.sums2,
                          "args": args},
                         {"src": "sums1", "sums": "sums2",
                          "len_slot": ARG_LEN_S1},
                         indirect=(args, ARG_GRID_S1))
            dev.dispatch(k_scan_tile, 0,
                         {"sums2": self.sums2, "sums3": self.sums3,
                          "args": args},
                         {"src": "sums2", "sums": "sums3",
                          "len_slot": ARG_LEN_S2},
                         indirect=(args, ARG_GRID_S2))
            dev.dispatch(k_add_base, 0,
                         {"sums1": self.sums1, "sums2": self.sums2,
                          "args": args},
                         {"dst": "sums1", "base": "sums2",
                          "len_slot": ARG_LEN_S1},
                         indirect=(args, ARG_GRID_S1))
            dev.dispatch(k_add_base, 0,
                         {"hist": self.hist, "sums1": self.sums1,
                          "args": args},
                         {"dst": "hist", "base": "sums1", "len_slot": None},
                         indirect=(args, ARG_TILES))
            dev.dispatch(k_scatter, 0,
                         {"keys_in": src[0], "pay_in": src[1],
                          "keys_out": dst[0], "pay_out": dst[1],
                          "hist": self.hist, "args": args},
                         shift, indirect=(args, ARG_TILES))

    def sort(self, keys: Buffer, payload: Buffer, count: int) -> None:
        """Standalone host-counted sort (the args words are host-written)."""
        if count > self.capacity:
            raise CapacityExceeded(f"{count} > capacity {self.capacity}")
        if keys.nbytes < args_words(count)[ARG_PADDED] * 4:
            raise CapacityExceeded("key buffer smaller than padded count")
        self.args.write(args_words(count))
        self.record(keys, payload, self.args)


def sort_dispatch_count(passes: int = PASSES) -> int:
    """Dispatches one recorded sort submits: pad + passes * 7."""
    return 1 + passes * 7
