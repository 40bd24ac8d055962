"""Frame orchestration: preprocess, args build, sort, draw on one device.

The renderer owns every device resource for a scene and submits one frame at
a time. Work sizing never touches the host: the preprocess kernel bumps the
device-resident visible counter, a single-workgroup kernel expands it into
dispatch and draw argument words, and the sort and draw consume those words
indirectly. The host reads the counter back only after the frame, for stats.

Buffer sizes follow LAYOUTS.md exactly; buffer_plan reproduces them without
allocating so tests can check the ledger against pure arithmetic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .camera import Camera
from .device import WG, Buffer, SoftDevice, UnsupportedDevice, kernel
from .gpu_preprocess import (SPLAT_WORDS, SceneBuffers, k_preprocess,
                             scene_buffer_bytes, upload_scene)
from .gpu_raster import DrawConfig, draw_splats
from .gpu_sort import ARGS_WORDS, RadixSorter, args_words, sort_dispatch_count
from .reference import frame_params
from .scene_io import Scene

MAX_SPLATS = (1 << 16) * WG      # grid limit times workgroup size


@kernel
def k_build_args(ctx):
    """Single-workgroup kernel: visible counter to the full args block.

    Writes count, padded count, tile count, per-level scan grids and lengths,
    and the four instanced-draw words. Arithmetic shared with the host-side
    args_words so a host-written block is indistinguishable.
    """
    count = int(ctx.u32("counter")[0])
    ctx.u32("args")[:ARGS_WORDS] = args_words(count)


@dataclass(frozen=True)
class FrameStats:
    """Per-frame timings in milliseconds plus the visible-survivor count.

    total_ms is host wall clock and is always present; the stage fields are
    device timestamps and read zero when timestamp_valid is False.
    """

    preprocess_ms: float
    sort_ms: float
    render_ms: float
    total_ms: float
    visible_count: int
    timestamp_valid: bool


@dataclass(frozen=True)
class MemoryReport:
    """Accounted device bytes, per buffer name and in total."""

    total_bytes: int
    buffers: dict

    @classmethod
    def from_sizes(cls, sizes: dict) -> "MemoryReport":
        return cls(sum(sizes.values()), dict(sizes))


def buffer_plan(count: int, sh_degree: int, width: int,
                height: int) -> dict[str, int]:
    """Byte cost of every buffer a renderer will create, without a device.

    Mirrors the allocation sites one for one; tests hold this against the
    device ledger after a real init.
    """
    word = lambda n: max(n, 1) * 4
    padded_cap = -(-count // WG) * WG
    tiles = padded_cap // WG
    s2 = -(-tiles // WG)
    s3 = -(-s2 // WG)
    plan = dict(scene_buffer_bytes(count, sh_degree))
    plan["visible.splats"] = max(count, 1) * SPLAT_WORDS * 4
    plan["visible.keys"] = word(padded_cap)
    plan["visible.sort_pay"] = word(padded_cap)
    plan["visible.src_idx"] = word(count)
    plan["counter"] = 4
    plan["args"] = ARGS_WORDS * 4
    plan["sort.keys_b"] = word(padded_cap)
    plan["sort.pay_b"] = word(padded_cap)
    plan["sort.hist"] = word(256 * tiles)
    plan["sort.sums1"] = word(tiles)
    plan["sort.sums2"] = word(s2)
    plan["sort.sums3"] = word(s3)
    plan["sort.args"] = ARGS_WORDS * 4
    plan["target"] = 16 * width * height
    plan["readback"] = 4 * width * height
    return plan


def plan_memory(count: int, sh_degree: int, width: int,
                height: int) -> MemoryReport:
    return MemoryReport.from_sizes(buffer_plan(count, sh_degree, width,
                                               height))


class Renderer:
    """Single-owner frame renderer over a retained host scene.

    One frame in flight; not shareable across threads of control. The scene
    stays on the host for the whole lifetime so a lost device can be replaced
    with recover() without touching the caller's data.
    """

    def __init__(self, device: SoftDevice, scene: Scene, width: int,
                 height: int, background=(0.0, 0.0, 0.0, 0.0),
                 flip_sh: bool = False):
        if width < 1 or height < 1:
            raise ValueError("viewport must be at least 1x1")
        if scene.count > MAX_SPLATS:
            raise UnsupportedDevice(
                f"{scene.count} splats exceed the {MAX_SPLATS} dispatch "
                "capacity of this device")
        self.scene = scene
        self.width = int(width)
        self.height = int(height)
        self.background = tuple(float(c) for c in background)
        self.flip_sh = bool(flip_sh)
        self.no_cull = False
        self.no_radius = False
        self.device = device
        self._alloc(device)

    def _alloc(self, device: SoftDevice) -> None:
        word = lambda n: max(n, 1) * 4
        n = self.scene.count
        padded_cap = -(-n // WG) * WG
        self.scene_bufs: SceneBuffers = upload_scene(device, self.scene)
        self.splats = device.create_buffer("visible.splats",
                                           max(n, 1) * SPLAT_WORDS * 4)
        self.keys = device.create_buffer("visible.keys", word(padded_cap))
        self.sort_pay = device.create_buffer("visible.sort_pay",
                                             word(padded_cap))
        self.src_idx = device.create_buffer("visible.src_idx", word(n))
        self.counter = device.create_buffer("counter", 4)
        self.args = device.create_buffer("args", ARGS_WORDS * 4)
        self.sorter = RadixSorter(device, capacity=n)
        self.target = device.create_buffer("target",
                                           16 * self.width * self.height)
        self.readback = device.create_buffer("readback",
                                             4 * self.width * self.height)

    def _own_buffers(self) -> list[Buffer]:
        return (self.scene_bufs.all_buffers()
                + [self.splats, self.keys, self.sort_pay, self.src_idx,
                   self.counter, self.args, self.target, self.readback]
                + self.sorter.buffers())

    # -- frame ----------------------------------------------------------

    def render_frame(self, camera: Camera) -> FrameStats:
        """Submit one frame; returns stage timings and the visible count.

        Submission order: preprocess, args build, pad, four sort passes,
        instanced draw. The visible counter is read back only afterwards.
        Raises DeviceLost if the device dies mid-frame; the renderer is then
        unusable until recover().
        """
        if camera.width != self.width or camera.height != self.height:
            raise ValueError(
                f"camera viewport {camera.width}x{camera.height} does not "
                f"match renderer {self.width}x{self.height}")
        dev = self.device
        n = self.scene.count
        wall0 = time.perf_counter()

        t0 = dev.now_ms()
        self.counter.write(np.zeros(1, np.uint32))
        dev.dispatch(k_preprocess, -(-n // WG),
                     {"scene.positions": self.scene_bufs.positions,
                      "scene.rotations": self.scene_bufs.rotations,
                      "scene.scales": self.scene_bufs.scales,
                      "scene.opacities": self.scene_bufs.opacities,
                      "scene.sh": self.scene_bufs.sh,
                      "splats": self.splats, "keys": self.keys,
                      "sort_pay": self.sort_pay, "src_idx": self.src_idx,
                      "counter": self.counter},
                     {"params": frame_params(camera), "n": n,
                      "sh_degree": self.scene.sh_degree,
                      "no_cull": self.no_cull, "no_radius": self.no_radius,
                      "flip_sh": self.flip_sh})
        t1 = dev.now_ms()
        dev.dispatch(k_build_args, 1,
                     {"counter": self.counter, "args": self.args})
        self.sorter.record(self.keys, self.sort_pay, self.args)
        t2 = dev.now_ms()
        draw_splats(dev, self.target, self.splats, self.sort_pay, self.args,
                    self.width, self.height,
                    DrawConfig(self.background, self.no_radius))
        t3 = dev.now_ms()

        total_ms = (time.perf_counter() - wall0) * 1000.0
        visible = int(self.counter.read(np.uint32, 1)[0])
        valid = t0 is not None
        return FrameStats(
            preprocess_ms=(t1 - t0) if valid else 0.0,
            sort_ms=(t2 - t1) if valid else 0.0,
            render_ms=(t3 - t2) if valid else 0.0,
            total_ms=total_ms, visible_count=visible, timestamp_valid=valid)

    @staticmethod
    def frame_dispatch_count() -> int:
        """Compute dispatches per frame: preprocess + args + recorded sort."""
        return 2 + sort_dispatch_count()

    # -- readback -------------------------------------------------------

    def read_target_f32(self) -> np.ndarray:
        """(height, width, 4) float32 copy of the render target, rows
        bottom-up."""
        flat = self.target.read(np.float32, self.width * self.height * 4)
        return flat.reshape(self.height, self.width, 4)

    def read_target_rgba8(self) -> np.ndarray:
        """Display readback: quantized RGBA8 rows via the staging buffer.

        Rows are tightly packed (pitch = width * 4, trivially aligned here).
        """
        frame = self.read_target_f32()
        q = np.clip(frame, 0.0, 1.0) * np.float32(255.0)
        q = np.floor(q + np.float32(0.5)).astype(np.uint8)
        self.readback.write(q)
        out = self.readback.read(np.uint8, self.width * self.height * 4)
        return out.reshape(self.height, self.width, 4)

    # -- control --------------------------------------------------------

    def set_ablation(self, no_cull: bool | None = None,
                     no_radius: bool | None = None) -> None:
        """Toggle the screen-bounds cull and the dynamic quad radius."""
        if no_cull is not None:
            self.no_cull = bool(no_cull)
        if no_radius is not None:
            self.no_radius = bool(no_radius)

    def memory_report(self) -> MemoryReport:
        return MemoryReport.from_sizes(
            {b.name: b.nbytes for b in self._own_buffers()})

    def destroy(self) -> None:
        """Release every owned buffer; the ledger returns to its prior state."""
        for b in self._own_buffers():
            b.destroy()

    def recover(self, device: SoftDevice) -> None:
        """Rebuild all device state on a fresh device after DeviceLost.

        The retained host scene is re-uploaded; ablation flags and viewport
        carry over. The old device's resources are abandoned (it is lost).
        """
        self.device = device
        self._alloc(device)
