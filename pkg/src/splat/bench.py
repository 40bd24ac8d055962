"""Frame-time statistics and the headless benchmark loop.

Statistic definitions are pinned so numbers are comparable across
implementations: median takes the lower middle of an even-length sample,
p99 is nearest-rank, stddev is the population form. All three operate on
the post-warmup frames only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .camera import CameraPath, sample_path
from .device import DeviceLost
from .pipeline import FrameStats, Renderer

SCHEMA_VERSION = 1


def mean(samples) -> float:
    xs = list(samples)
    return sum(xs) / len(xs) if xs else 0.0


def median(samples) -> float:
    """Sorted lower-middle element: index (n-1)//2."""
    xs = sorted(samples)
    if not xs:
        return 0.0
    return float(xs[(len(xs) - 1) // 2])


def p99(samples) -> float:
    """Nearest-rank 99th percentile: sorted[ceil(0.99 n) - 1]."""
    xs = sorted(samples)
    if not xs:
        return 0.0
    rank = max(math.ceil(0.99 * len(xs)), 1)
    return float(xs[rank - 1])


def stddev(samples) -> float:
    """Population standard deviation."""
    xs = list(samples)
    if not xs:
        return 0.0
    m = mean(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))


def summarize(samples) -> dict:
    return {"mean": mean(samples), "median": median(samples),
            "stddev": stddev(samples), "p99": p99(samples)}


@dataclass
class BenchReport:
    """Benchmark result; to_json() matches schemas/bench_report.schema.json."""

    adapter: str
    scene_path: str
    splat_count: int
    width: int
    height: int
    frames: int
    warmup: int
    frames_completed: int
    device_lost: bool
    timestamp_valid: bool
    memory_total_bytes: int
    ablation: dict
    stages: dict
    total: dict
    schema_version: int = SCHEMA_VERSION
    notes: tuple = field(default_factory=tuple)

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "adapter": self.adapter,
            "scene_path": self.scene_path,
            "splat_count": self.splat_count,
            "width": self.width,
            "height": self.height,
            "frames": self.frames,
            "warmup": self.warmup,
            "frames_completed": self.frames_completed,
            "device_lost": self.device_lost,
            "timestamp_valid": self.timestamp_valid,
            "memory_total_bytes": self.memory_total_bytes,
            "ablation": dict(self.ablation),
            "stages": {k: dict(v) for k, v in self.stages.items()},
            "total": dict(self.total),
            "notes": list(self.notes),
        }


def run_bench(renderer: Renderer, path: CameraPath, frames: int, warmup: int,
              scene_path: str = "") -> BenchReport:
    """Warmup then measured frames along the camera path.

    Frame i renders pose i modulo the path length. Device loss mid-run stops
    measurement and flags the report as partial; statistics then cover the
    completed frames only. Headless timings measure compute, never
    presentation — no compositor or V-Sync is involved.
    """
    stats: list[FrameStats] = []
    lost = False

    def pose(i: int):
        return sample_path(path, i % path.frame_count, renderer.width,
                           renderer.height)

    try:
        for i in range(warmup):
            renderer.render_frame(pose(i))
        for i in range(frames):
            stats.append(renderer.render_frame(pose(warmup + i)))
    except DeviceLost:
        lost = True

    return BenchReport(
        adapter=renderer.device.adapter_name,
        scene_path=scene_path,
        splat_count=renderer.scene.count,
        width=renderer.width,
        height=renderer.height,
        frames=frames,
        warmup=warmup,
        frames_completed=len(stats),
        device_lost=lost,
        timestamp_valid=all(s.timestamp_valid for s in stats) if stats
        else False,
        memory_total_bytes=renderer.memory_report().total_bytes,
        ablation={"no_cull": renderer.no_cull,
                  "no_radius": renderer.no_radius},
        stages={
            "preprocess": summarize([s.preprocess_ms for s in stats]),
            "sort": summarize([s.sort_ms for s in stats]),
            "render": summarize([s.render_ms for s in stats]),
        },
        total=summarize([s.total_ms for s in stats]),
        notes=("headless compute timing; no presentation or V-Sync",),
    )
