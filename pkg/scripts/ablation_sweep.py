#!/usr/bin/env python3
"""Stage-time table for the culling and quad-sizing ablations.

Renders the same synthetic orbit under the full pipeline, with screen-space
culling disabled, and with opacity-derived quad sizing disabled, then
prints per-stage medians plus visible-splat and fragment counters. The
expected direction: each ablation costs at least as much as the full
pipeline on its sensitive stage, with counters moving the same way.
"""

import argparse
import math
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from splat.bench import median  # noqa: E402
from splat.camera import CameraPath, Keyframe, sample_path  # noqa: E402
from splat.device import SoftDevice  # noqa: E402
from splat.pipeline import Renderer  # noqa: E402
from splat.scene_io import SynthSpec, synth_scene  # noqa: E402

CONFIGS = (
    ("full", {}),
    ("no-cull", {"no_cull": True}),
    ("no-radius", {"no_radius": True}),
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--splats", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=6)
    ap.add_argument("--frames", type=int, default=12)
    ap.add_argument("--side", type=int, default=256)
    args = ap.parse_args()

    # lateral offset pushes a large fraction off screen so culling has work
    scene = synth_scene(args.seed, args.splats,
                        SynthSpec(sh_degree=1, extent=1.0,
                                  opacity_range=(0.05, 0.6)))
    shifted = (scene.positions + np.array([1.5, 0.0, 0.0])).astype(np.float32)
    scene = type(scene)(shifted, scene.rotations, scene.scales,
                        scene.opacities, scene.sh, scene.sh_degree)
    orbit = CameraPath(tuple(
        Keyframe((3.5 * math.cos(a), 0.6, 3.5 * math.sin(a)),
                 (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), math.radians(50.0))
        for a in (0.0, 1.1, 2.2)), frame_count=args.frames)

    print(f"{'config':>10} {'visible':>9} {'fragments':>12} "
          f"{'pre ms':>8} {'sort ms':>8} {'draw ms':>8}")
    for name, flags in CONFIGS:
        renderer = Renderer(SoftDevice(), scene, args.side, args.side)
        for attr, val in flags.items():
            setattr(renderer, attr, val)
        pre, sort, draw, vis = [], [], [], 0
        frag0 = renderer.device.stats.fragments_evaluated
        for i in range(args.frames):
            cam = sample_path(orbit, i, args.side, args.side)
            st = renderer.render_frame(cam)
            pre.append(st.preprocess_ms)
            sort.append(st.sort_ms)
            draw.append(st.render_ms)
            vis = st.visible_count
        frags = renderer.device.stats.fragments_evaluated - frag0
        print(f"{name:>10} {vis:>9} {frags:>12} {median(pre):>8.2f} "
              f"{median(sort):>8.2f} {median(draw):>8.2f}")
        renderer.destroy()
    return 0


if __name__ == "__main__":
    sys.exit(main())
