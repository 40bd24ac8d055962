"""Gaussian-splat renderer: software GPU pipeline, CPU oracle, bench tools."""

from .bench import BenchReport, mean, median, p99, run_bench, stddev, summarize
from .camera import (Camera, CameraPath, Keyframe, focal, look_at,
                     path_from_json, path_to_json, sample_path)
from .device import (DeviceLost, ExceedsBufferLimit, OutOfDeviceMemory,
                     SoftDevice, UnsupportedDevice, create_device)
from .gpu_sort import RadixSorter
from .images import psnr, quantize_u8, read_png, read_raw, write_png, write_raw
from .pipeline import (FrameStats, MemoryReport, Renderer, buffer_plan,
                       plan_memory)
from .reference import rasterize_reference, stable_sort_oracle
from .scene_io import (Scene, SynthSpec, parse_ply, sh_coeff_count,
                       splitmix64, synth_scene, write_ply)
from .sh import eval_sh, eval_sh_f32

__version__ = "0.1.0"

__all__ = [
    "BenchReport", "Camera", "CameraPath", "DeviceLost",
    "ExceedsBufferLimit", "FrameStats", "Keyframe", "MemoryReport",
    "OutOfDeviceMemory", "RadixSorter", "Renderer", "Scene", "SoftDevice",
    "SynthSpec", "UnsupportedDevice", "buffer_plan", "create_device",
    "eval_sh", "eval_sh_f32", "focal", "look_at", "mean", "median", "p99",
    "parse_ply", "path_from_json", "path_to_json", "plan_memory", "psnr",
    "quantize_u8", "rasterize_reference", "read_png", "read_raw",
    "run_bench", "sample_path", "sh_coeff_count", "splitmix64",
    "stable_sort_oracle", "stddev", "summarize", "synth_scene", "write_png",
    "write_ply", "write_raw", "__version__",
]
