"""Software compute device with an explicit GPU execution contract.

Kernels see the machine the way a compute shader does: a grid of 256-thread
workgroups, storage buffers, uniforms, and one global atomic counter. A kernel
body is written as vectorized phases over a (B, 256) lane block; every numpy
statement plays the role of one barrier-separated step executed by all lanes,
so a body with no data-dependent loop is wait-free by construction.

Two schedulers run the same kernel bodies:

* "batched" executes all workgroups of a dispatch as one block (fast path);
* "serial" executes one workgroup at a time in forward, reverse, or shuffled
  order, providing no inter-workgroup concurrency at all — the harness for
  proving kernels never rely on another workgroup's progress.

Dispatches execute in submission order. Indirect dispatches read their grid
size from a device buffer at execution time, never through host code.
"""

from __future__ import annotations

import os
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

WG = 256  # threads per workgroup, fixed across every kernel


class DeviceLost(RuntimeError):
    """The device is gone; resources are invalid until re-init."""


class OutOfDeviceMemory(RuntimeError):
    """Allocation would exceed the device memory budget."""


class ExceedsBufferLimit(RuntimeError):
    """Single buffer larger than the per-buffer limit."""


class UnsupportedDevice(RuntimeError):
    """Adapter lacks a mandatory limit or feature."""


KERNEL_REGISTRY: dict[str, object] = {}
AUDITED_HELPERS: dict[str, object] = {}


def kernel(fn):
    """Register a compute kernel body for dispatch and for the source audit."""
    KERNEL_REGISTRY[fn.__name__] = fn
    return fn


def audited_helper(fn):
    """Mark a pure helper callable from kernels; audited like kernel bodies."""
    AUDITED_HELPERS[fn.__name__] = fn
    return fn


@dataclass(frozen=True)
class DeviceLimits:
    max_buffer_bytes: int = 1 << 31        # 2 GiB per binding
    memory_budget: int = 3 << 30           # 3 GiB total
    max_workgroups: int = 1 << 16          # per dispatch
    timestamps: bool = True


@dataclass
class DeviceStats:
    dispatches: Counter = field(default_factory=Counter)
    draws: int = 0
    fragments_evaluated: int = 0
    atomic_ops: int = 0

    @property
    def total_dispatches(self) -> int:
        return sum(self.dispatches.values())


class Buffer:
    """Device-resident storage; create via SoftDevice.create_buffer."""

    __slots__ = ("device", "name", "nbytes", "_u8", "alive")

    def __init__(self, device, name: str, nbytes: int):
        self.device = device
        self.name = name
        self.nbytes = nbytes
        self._u8 = np.zeros(nbytes, np.uint8)
        self.alive = True

    def _check(self):
        if not self.alive:
            raise DeviceLost(f"buffer {self.name} was destroyed")

    @property
    def u8(self) -> np.ndarray:
        self._check()
        return self._u8

    @property
    def u32(self) -> np.ndarray:
        self._check()
        return self._u8.view(np.uint32)

    @property
    def f32(self) -> np.ndarray:
        self._check()
        return self._u8.view(np.float32)

    def write(self, data, offset: int = 0) -> None:
        """Host upload (queue-ordered: before any later dispatch)."""
        raw = np.ascontiguousarray(data).view(np.uint8).ravel()
        self._u8[offset:offset + raw.size] = raw

    def read(self, dtype=np.uint8, count: int | None = None,
             offset: int = 0) -> np.ndarray:
        """Host readback copy; test and CLI use only, never mid-frame."""
        view = self._u8[offset:].view(dtype)
        return np.array(view if count is None else view[:count])

    def destroy(self) -> None:
        if self.alive:
            self.alive = False
            self.device._release(self)


class Ctx:
    """Per-dispatch kernel context: one block of workgroups."""

    __slots__ = ("device", "wg_ids", "buffers", "uniforms")

    def __init__(self, device, wg_ids: np.ndarray, buffers, uniforms):
        self.device = device
        self.wg_ids = wg_ids
        self.buffers = buffers
        self.uniforms = uniforms

    @property
    def gi(self) -> np.ndarray:
        """(B, 256) global thread indices."""
        return self.wg_ids[:, None] * WG + np.arange(WG, dtype=np.int64)[None, :]

    def u32(self, name: str) -> np.ndarray:
        return self.buffers[name].u32

    def f32(self, name: str) -> np.ndarray:
        return self.buffers[name].f32

    def atomic_fetch_add(self, name: str, index: int,
                         amounts: np.ndarray) -> np.ndarray:
        """Global fetch-add; each lane observes the value before its own add.

        Lanes are serialized in (workgroup, lane) order within this block;
        across blocks the scheduler's execution order decides — exactly the
        'unspecified but atomic' ordering real hardware gives.
        """
        buf = self.buffers[name].u32
        flat = amounts.astype(np.uint64).ravel()
        exclusive = np.cumsum(flat) - flat
        old = np.uint64(buf[index])
        buf[index] = np.uint32(old + flat.sum())
        self.device.stats.atomic_ops += 1
        return (old + exclusive).astype(np.uint32).reshape(amounts.shape)


class SoftDevice:
    """Software adapter: deterministic, schedule-configurable, accounted."""

    def __init__(self, scheduler: str = "batched", order: str = "forward",
                 seed: int = 0, limits: DeviceLimits = DeviceLimits(),
                 fail_after_dispatches: int | None = None):
        if scheduler not in ("batched", "serial"):
            raise UnsupportedDevice(f"unknown scheduler {scheduler!r}")
        if order not in ("forward", "reverse", "shuffled"):
            raise UnsupportedDevice(f"unknown workgroup order {order!r}")
        self.scheduler = scheduler
        self.order = order
        self.seed = seed
        self.limits = limits
        self.stats = DeviceStats()
        self.lost = False
        self._ledger: dict[str, int] = {}
        self._fail_after = fail_after_dispatches
        self._dispatch_serial = 0

    @property
    def adapter_name(self) -> str:
        tail = "" if self.scheduler == "batched" else f"-{self.order}"
        return f"software-{self.scheduler}{tail}"

    # -- memory ledger: the single accounting chokepoint --

    def create_buffer(self, name: str, nbytes: int) -> Buffer:
        if nbytes % 4 != 0:
            raise ValueError(f"buffer {name}: size {nbytes} not 4-aligned")
        if nbytes > self.limits.max_buffer_bytes:
            raise ExceedsBufferLimit(
                f"buffer {name}: {nbytes} bytes exceeds per-buffer limit "
                f"{self.limits.max_buffer_bytes}")
        if self.total_allocated + nbytes > self.limits.memory_budget:
            raise OutOfDeviceMemory(
                f"buffer {name}: {nbytes} bytes would exceed budget "
                f"{self.limits.memory_budget}")
        buf = Buffer(self, name, nbytes)
        self._ledger[name] = self._ledger.get(name, 0) + nbytes
        return buf

    def _release(self, buf: Buffer) -> None:
        remaining = self._ledger.get(buf.name, 0) - buf.nbytes
        if remaining:
            self._ledger[buf.name] = remaining
        else:
            self._ledger.pop(buf.name, None)

    @property
    def total_allocated(self) -> int:
        return sum(self._ledger.values())

    def memory_report(self) -> dict[str, int]:
        return dict(self._ledger)

    # -- execution --

    def _pre_exec(self):
        if self.lost:
            raise DeviceLost("device was lost")
        if self._fail_after is not None:
            if self._fail_after <= 0:
                self.lost = True
                raise DeviceLost("injected device loss")
            self._fail_after -= 1

    def dispatch(self, fn, grid, buffers: dict, uniforms: dict | None = None,
                 indirect: tuple | None = None) -> None:
        """Run a kernel over `grid` workgroups (submission-ordered).

        indirect = (args_buffer, u32_index): the grid size is read from the
        device buffer when this dispatch executes, not when it is recorded.
        """
        self._pre_exec()
        if indirect is not None:
            args_buf, slot = indirect
            grid = int(args_buf.u32[slot])
        name = getattr(fn, "__name__", str(fn))
        self.stats.dispatches[name] += 1
        self._dispatch_serial += 1
        if grid == 0:
            return
        if grid > self.limits.max_workgroups:
            raise UnsupportedDevice(f"dispatch {name}: grid {grid} exceeds "
                                    f"{self.limits.max_workgroups}")
        uniforms = uniforms or {}
        if self.scheduler == "batched":
            # blocks of 1024 workgroups bound the per-dispatch scratch;
            # ascending block order keeps atomic claim order identical to a
            # single block, so results do not depend on the chunking
            for lo in range(0, grid, 1024):
                ids = np.arange(lo, min(lo + 1024, grid), dtype=np.int64)
                fn(Ctx(self, ids, buffers, uniforms))
            return
        order = np.arange(grid, dtype=np.int64)
        if self.order == "reverse":
            order = order[::-1]
        elif self.order == "shuffled":
            rng = np.random.default_rng((self.seed, self._dispatch_serial))
            order = rng.permutation(order)
        for wg in order:
            fn(Ctx(self, np.array([wg], np.int64), buffers, uniforms))

    def begin_draw(self) -> None:
        """Draw-call bookkeeping; the raster module emulates the pass itself."""
        self._pre_exec()
        self.stats.draws += 1

    def count_fragments(self, n: int) -> None:
        self.stats.fragments_evaluated += int(n)

    def now_ms(self) -> float | None:
        """Timestamp in milliseconds, None when the feature is absent."""
        if not self.limits.timestamps:
            return None
        return time.perf_counter() * 1000.0


def create_device(override: str | None = None) -> SoftDevice:
    """Build a device from an override string or SPLAT_BACKEND_OVERRIDE.

    Grammar: software[-batched|-serial[-forward|-reverse|-shuffled[:seed]]]
    (e.g. "software-serial-shuffled:7"). SPLAT_DEVICE_FAIL_AFTER=<k> injects
    a device loss after k dispatches — a CI hook for loss-path testing.
    """
    spec = override if override is not None \
        else os.environ.get("SPLAT_BACKEND_OVERRIDE", "")
    spec = (spec or "software-batched").strip().lower()
    fail_env = os.environ.get("SPLAT_DEVICE_FAIL_AFTER")
    fail_after = int(fail_env) if fail_env else None
    parts = spec.split("-")
    if parts[0] != "software":
        raise UnsupportedDevice(f"unknown backend {spec!r}")
    scheduler = parts[1] if len(parts) > 1 else "batched"
    order = "forward"
    seed = 0
    if len(parts) > 2:
        order = parts[2]
        if ":" in order:
            order, seed_text = order.split(":", 1)
            seed = int(seed_text)
    return SoftDevice(scheduler=scheduler, order=order, seed=seed,
                      fail_after_dispatches=fail_after)
