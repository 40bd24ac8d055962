#!/usr/bin/env python3
"""Regenerate the browser viewer's golden fixtures.

Renders a small deterministic scene through the GPU pipeline and writes,
into frontend/test/fixtures/: the scene PLY, one camera pose JSON per
view, the expected RGBA8 frame as raw bytes (rows bottom-up, matching
LAYOUTS.md), a meta.json describing all of it, and a PNG per frame for
eyeballing. The viewer's parity tests compare its own CPU rasterizer
against these bytes within one quantization step per channel.
"""

import argparse
import json
import math
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from splat.camera import look_at  # noqa: E402
from splat.device import SoftDevice  # noqa: E402
from splat.images import write_png  # noqa: E402
from splat.pipeline import Renderer  # noqa: E402
from splat.scene_io import SynthSpec, synth_scene, write_ply  # noqa: E402

POSES = [
    # name, position, target, up, fov_y_deg; oblique sits close with a
    # narrow fov so a chunk of the cloud lands outside the viewport
    ("front", (0.0, 0.15, 3.2), (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), 50.0),
    ("oblique", (1.0, 0.7, 1.1), (-0.2, -0.1, 0.0), (0.0, 1.0, 0.0), 38.0),
]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    default_out = pathlib.Path(__file__).resolve().parents[1] / "frontend" \
        / "test" / "fixtures"
    ap.add_argument("--out", type=pathlib.Path, default=default_out)
    ap.add_argument("--width", type=int, default=160)
    ap.add_argument("--height", type=int, default=120)
    ap.add_argument("--splats", type=int, default=150)
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    scene = synth_scene(args.seed, args.splats,
                        SynthSpec(sh_degree=2, extent=0.9,
                                  opacity_range=(0.2, 0.95),
                                  scale_range=(0.02, 0.16)))
    (args.out / "scene.ply").write_bytes(write_ply(scene))

    device = SoftDevice()
    renderer = Renderer(device, scene, args.width, args.height)
    frames = []
    for name, pos, tgt, up, fov_deg in POSES:
        cam = look_at(pos, tgt, up, math.radians(fov_deg),
                      args.width, args.height)
        stats = renderer.render_frame(cam)
        img = renderer.read_target_rgba8()
        raw = args.out / f"expected_{name}.bin"
        raw.write_bytes(img.tobytes())
        write_png(str(args.out / f"expected_{name}.png"), img)
        pose_doc = {"position": list(pos), "target": list(tgt),
                    "up": list(up), "fov_y_deg": fov_deg}
        (args.out / f"pose_{name}.json").write_text(
            json.dumps(pose_doc, indent=2) + "\n")
        frames.append({"name": name, "pose": f"pose_{name}.json",
                       "expected": raw.name,
                       "visible_count": stats.visible_count})
        print(f"{name}: visible {stats.visible_count} of {scene.count}")

    meta = {
        "scene": "scene.ply",
        "splat_count": scene.count,
        "sh_degree": scene.sh_degree,
        "width": args.width,
        "height": args.height,
        "background": [0.0, 0.0, 0.0, 0.0],
        "row_order": "bottom-up",
        "frames": frames,
    }
    (args.out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    renderer.destroy()
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
