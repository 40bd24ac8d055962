"""Command-line harness: golden renders, benchmarks, sort verification.

Exit codes: 0 success; 1 sort-test mismatch; 2 file or validation errors;
3 device errors. Diagnostics go to standard error; each command's machine
output is a single JSON document on standard out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import images
from .bench import BenchReport, median, run_bench
from .camera import Camera, PathFormatError, path_from_json, sample_path
from .device import (DeviceLost, ExceedsBufferLimit, OutOfDeviceMemory,
                     SoftDevice, UnsupportedDevice, create_device)
from .gpu_sort import RadixSorter
from .pipeline import Renderer
from .reference import rasterize_reference, stable_sort_oracle
from .scene_io import Scene, parse_ply, splitmix64

DEVICE_ERRORS = (DeviceLost, OutOfDeviceMemory, ExceedsBufferLimit,
                 UnsupportedDevice)
SORT_DISTRIBUTIONS = ("uniform", "duplicate-heavy", "sorted",
                      "reverse-sorted")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _load_scene(path: str, skip_bad: bool) -> Scene:
    with open(path, "rb") as f:
        scene = parse_ply(f.read(), skip_bad=skip_bad)
    if scene.dropped:
        print(f"note: dropped {scene.dropped} bad records", file=sys.stderr)
    return scene


def _load_camera(path: str, frame: int, width: int, height: int) -> Camera:
    """Accept a single pose object or a full path file plus --frame."""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise PathFormatError(f"not valid JSON: {e}") from None
    if isinstance(doc, dict) and "keyframes" not in doc:
        doc = {"frame_count": 1, "keyframes": [doc]}
        text = json.dumps(doc)
        frame = 0
    cam_path = path_from_json(text)
    return sample_path(cam_path, frame, width, height)


# -- render -----------------------------------------------------------------

def cmd_render(args) -> int:
    if args.width < 1 or args.height < 1:
        _err("--width and --height must be positive")
        return 2
    try:
        scene = _load_scene(args.ply, args.skip_bad)
        camera = _load_camera(args.camera, args.frame, args.width,
                              args.height)
    except (OSError, ValueError, LookupError) as e:
        _err(str(e))
        return 2

    stats = {"adapter": None, "backend": args.backend,
             "scene": args.ply, "splat_count": scene.count,
             "width": args.width, "height": args.height}
    try:
        if args.backend == "cpu":
            t0 = time.perf_counter()
            frame = rasterize_reference(scene, camera, mode="exact")
            stats.update(adapter="reference-cpu", visible_count=None,
                         total_ms=(time.perf_counter() - t0) * 1000.0,
                         timestamp_valid=False)
            images.write_png(args.out, frame)
        else:
            device = create_device()
            renderer = Renderer(device, scene, args.width, args.height)
            fs = renderer.render_frame(camera)
            images.write_png(args.out, renderer.read_target_rgba8())
            stats.update(adapter=device.adapter_name,
                         visible_count=fs.visible_count,
                         preprocess_ms=fs.preprocess_ms, sort_ms=fs.sort_ms,
                         render_ms=fs.render_ms, total_ms=fs.total_ms,
                         timestamp_valid=fs.timestamp_valid)
            renderer.destroy()
    except DEVICE_ERRORS as e:
        _err(f"device: {e}")
        return 3
    except OSError as e:
        _err(str(e))
        return 2
    print(json.dumps(stats))
    return 0


# -- bench ------------------------------------------------------------------

def cmd_bench(args) -> int:
    if args.width < 1 or args.height < 1:
        _err("--width and --height must be positive")
        return 2
    if args.frames < 1 or args.warmup < 0:
        _err("--frames must be >= 1 and --warmup >= 0")
        return 2
    try:
        scene = _load_scene(args.ply, args.skip_bad)
        with open(args.camera_path, "r", encoding="utf-8") as f:
            path = path_from_json(f.read())
    except (OSError, ValueError, LookupError) as e:
        _err(str(e))
        return 2

    try:
        device = create_device()
        renderer = Renderer(device, scene, args.width, args.height)
    except DEVICE_ERRORS as e:
        _err(f"device: {e}")
        return 3
    renderer.set_ablation(no_cull=args.no_cull, no_radius=args.no_radius)

    report = run_bench(renderer, path, frames=args.frames,
                       warmup=args.warmup, scene_path=args.ply)
    doc = json.dumps(report.to_json(), indent=2)
    if args.report:
        try:
            with open(args.report, "w", encoding="utf-8") as f:
                f.write(doc + "\n")
        except OSError as e:
            _err(str(e))
            return 2
    print(doc)
    if report.device_lost:
        _err("device lost mid-run; report is partial")
        return 3
    renderer.destroy()
    return 0


# -- sort-test ----------------------------------------------------------------

def _sort_keys(dist: str, n: int, seed: int) -> np.ndarray:
    """Deterministic key sets per distribution (counter-based generator)."""
    raw = splitmix64(seed, 0, n)
    uniform = (raw & np.uint64(0xFFFFFFFF)).astype(np.uint32)
    if dist == "uniform":
        return uniform
    if dist == "duplicate-heavy":
        pool = (splitmix64(seed, n, 16)
                & np.uint64(0xFFFFFFFF)).astype(np.uint32)
        return pool[(raw % np.uint64(16)).astype(np.int64)]
    if dist == "sorted":
        return np.sort(uniform)
    if dist == "reverse-sorted":
        return np.sort(uniform)[::-1].copy()
    raise ValueError(f"unknown distribution {dist!r}")


def cmd_sort_test(args) -> int:
    if args.n < 0:
        _err("--n must be >= 0")
        return 2
    fault = os.environ.get("SPLAT_SORT_FAULT")  # self-test hook
    try:
        device = create_device()
        sorter = RadixSorter(device, capacity=max(args.n, 1))
        pad = -(-max(args.n, 1) // 256) * 256 * 4
        keys_buf = device.create_buffer("test.keys", pad)
        pay_buf = device.create_buffer("test.pay", pad)
    except DEVICE_ERRORS as e:
        _err(f"device: {e}")
        return 3

    results = {}
    failure = None
    for dist in SORT_DISTRIBUTIONS:
        keys = _sort_keys(dist, args.n, args.seed)
        payload = np.arange(args.n, dtype=np.uint32)
        want_k, want_p = stable_sort_oracle(keys, payload)
        times = []
        ok = True
        for _ in range(max(args.iters, 1)):
            keys_buf.write(keys)
            pay_buf.write(payload)
            t0 = time.perf_counter()
            try:
                sorter.sort(keys_buf, pay_buf, args.n)
            except DEVICE_ERRORS as e:
                _err(f"device: {e}")
                return 3
            times.append((time.perf_counter() - t0) * 1000.0)
            got_k = keys_buf.read(np.uint32, args.n)
            got_p = pay_buf.read(np.uint32, args.n)
            if fault == "flip" and args.n > 0:
                got_k[0] ^= 1
            if not (np.array_equal(got_k, want_k)
                    and np.array_equal(got_p, want_p)):
                ok = False
                break
        results[dist] = {"ok": ok, "median_ms": median(times)}
        if not ok and failure is None:
            failure = {"n": args.n, "seed": args.seed, "distribution": dist}

    print(json.dumps({"n": args.n, "seed": args.seed,
                      "adapter": device.adapter_name, "results": results,
                      "pass": failure is None}))
    if failure is not None:
        _err("sort mismatch; reproduce with: splat sort-test "
             f"--n {failure['n']} --seed {failure['seed']} "
             f"(distribution: {failure['distribution']})")
        return 1
    return 0


# -- entry --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="splat",
                                description="Gaussian-splat renderer harness")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render one pose to a PNG")
    r.add_argument("--ply", required=True)
    r.add_argument("--camera", required=True,
                   help="pose JSON or camera path JSON")
    r.add_argument("--frame", type=int, default=0,
                   help="frame index when --camera is a path file")
    r.add_argument("--width", type=int, default=512)
    r.add_argument("--height", type=int, default=512)
    r.add_argument("--backend", choices=("gpu", "cpu"), default="gpu")
    r.add_argument("--out", required=True)
    r.add_argument("--skip-bad", action="store_true",
                   help="drop non-finite records instead of rejecting")
    r.set_defaults(fn=cmd_render)

    b = sub.add_parser("bench", help="frame-time statistics along a path")
    b.add_argument("--ply", required=True)
    b.add_argument("--camera-path", required=True)
    b.add_argument("--width", type=int, default=512)
    b.add_argument("--height", type=int, default=512)
    b.add_argument("--frames", type=int, default=200)
    b.add_argument("--warmup", type=int, default=20)
    b.add_argument("--no-cull", action="store_true")
    b.add_argument("--no-radius", action="store_true")
    b.add_argument("--report", help="also write the JSON report here")
    b.add_argument("--skip-bad", action="store_true")
    b.set_defaults(fn=cmd_bench)

    s = sub.add_parser("sort-test", help="sort vs oracle across distributions")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--iters", type=int, default=1)
    s.set_defaults(fn=cmd_sort_test)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
