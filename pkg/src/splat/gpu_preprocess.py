"""Preprocess stage: one thread per splat — cull, project, shade, compact.

The kernel re-implements the float32 projection/cull chain pinned in
docs/CONVENTIONS.md (the reference module carries the independent copy; the
cull booleans and quantized opacity byte must agree bit for bit). Survivors
claim compact slots through the single global atomic counter and write a
24-byte ProjectedSplat, a far-to-near depth key, and their source index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .device import Buffer, SoftDevice, audited_helper, kernel
from .reference import DILATION, FrameParams
from .scene_io import Scene
from .sh import eval_sh_f32

audited_helper(eval_sh_f32)

HALF_MAX = 65504.0              # largest finite binary16 magnitude
SPLAT_WORDS = 6                 # 24-byte ProjectedSplat record, in uint32
R_MAX = float(np.sqrt(np.log(np.float32(255.0))))  # quad radius at sigma = 1


@audited_helper
def pack_rgba8(rgb, sigma) -> np.ndarray:
    """Pack color and opacity bytes: R in the least significant byte, A = sigma.

    Channels are clamped to [0, 1]; byte = floor(x * 255 + 0.5) in float32.
    """
    rgb = np.atleast_2d(np.asarray(rgb, np.float32))
    sigma = np.asarray(sigma, np.float32).reshape(-1, 1)
    both = np.concatenate([rgb, sigma], axis=1)
    both = np.minimum(np.maximum(both, np.float32(0.0)), np.float32(1.0))
    byte = np.floor(both * np.float32(255.0) + np.float32(0.5))
    byte = byte.astype(np.uint32)
    return (byte[:, 0] | (byte[:, 1] << np.uint32(8))
            | (byte[:, 2] << np.uint32(16)) | (byte[:, 3] << np.uint32(24)))


@audited_helper
def pack_half2(v) -> np.ndarray:
    """Two float32 components into one word as binary16: x low, y high.

    Round-to-nearest-even via the IEEE half conversion; magnitudes beyond
    the half range clamp to +-65504 first so nothing becomes infinite.
    """
    v = np.atleast_2d(np.asarray(v, np.float32))
    v = np.minimum(np.maximum(v, np.float32(-HALF_MAX)), np.float32(HALF_MAX))
    h = v.astype(np.float16).view(np.uint16).astype(np.uint32)
    return h[:, 0] | (h[:, 1] << np.uint32(16))


def unpack_half2(words) -> np.ndarray:
    words = np.asarray(words, np.uint32)
    lo = (words & np.uint32(0xFFFF)).astype(np.uint16).view(np.float16)
    hi = (words >> np.uint32(16)).astype(np.uint16).view(np.float16)
    return np.stack([lo.astype(np.float32), hi.astype(np.float32)], axis=-1)


def unpack_rgba8(words) -> np.ndarray:
    """Bytes of each packed color word: (n, 4) uint32 r, g, b, a."""
    words = np.asarray(words, np.uint32)
    return np.stack([words & np.uint32(0xFF),
                     (words >> np.uint32(8)) & np.uint32(0xFF),
                     (words >> np.uint32(16)) & np.uint32(0xFF),
                     words >> np.uint32(24)], axis=-1)


@dataclass(frozen=True, eq=False)
class SceneBuffers:
    """Device-resident structure-of-arrays scene (layout in LAYOUTS.md)."""

    positions: Buffer      # 12 bytes per splat: x, y, z float32
    rotations: Buffer      # 16 bytes: unit quaternion w, x, y, z
    scales: Buffer         # 12 bytes
    opacities: Buffer      # 4 bytes
    sh: Buffer             # 12 * (degree+1)^2 bytes, coefficient-major
    count: int
    sh_degree: int

    def all_buffers(self) -> list[Buffer]:
        return [self.positions, self.rotations, self.scales, self.opacities,
                self.sh]

    @property
    def total_bytes(self) -> int:
        return sum(b.nbytes for b in self.all_buffers())


def scene_buffer_bytes(n: int, sh_degree: int) -> dict[str, int]:
    """Per-buffer byte arithmetic for a scene upload."""
    coeffs = (sh_degree + 1) ** 2
    return {"scene.positions": 12 * n, "scene.rotations": 16 * n,
            "scene.scales": 12 * n, "scene.opacities": 4 * n,
            "scene.sh": 12 * coeffs * n}


def upload_scene(device: SoftDevice, scene: Scene) -> SceneBuffers:
    """Allocate and fill the scene buffers; bytes land in the memory ledger."""
    sizes = scene_buffer_bytes(scene.count, scene.sh_degree)
    bufs = {name: device.create_buffer(name, size)
            for name, size in sizes.items()}
    bufs["scene.positions"].write(scene.positions)
    bufs["scene.rotations"].write(scene.rotations)
    bufs["scene.scales"].write(scene.scales)
    bufs["scene.opacities"].write(scene.opacities)
    bufs["scene.sh"].write(scene.sh)
    return SceneBuffers(bufs["scene.positions"], bufs["scene.rotations"],
                        bufs["scene.scales"], bufs["scene.opacities"],
                        bufs["scene.sh"], scene.count, scene.sh_degree)


@kernel
@np.errstate(over="ignore", invalid="ignore", divide="ignore")
def k_preprocess(ctx):
    """Cull + project + shade + compact, one thread per source splat.

    Float32 throughout with the pinned operation order; masked lanes compute
    on placeholder values and never write. Survivors take compact slots from
    the one global atomic counter; survivor order is whatever the claim
    order happens to be — consumers may not rely on it.
    """
    u = ctx.uniforms
    p: FrameParams = u["params"]
    n = u["n"]
    f32 = np.float32
    gi = ctx.gi
    lanes = np.minimum(gi, max(n - 1, 0))
    in_range = gi < n

    pos = ctx.f32("scene.positions").reshape(-1, 3)[lanes]
    quat = ctx.f32("scene.rotations").reshape(-1, 4)[lanes]
    scale = ctx.f32("scene.scales").reshape(-1, 3)[lanes]
    sigma = ctx.f32("scene.opacities")[lanes]
    w = p.w_rot
    t = p.trans

    px, py, pz = pos[..., 0], pos[..., 1], pos[..., 2]
    x = ((w[0, 0] * px + w[0, 1] * py) + w[0, 2] * pz) + t[0]
    y = ((w[1, 0] * px + w[1, 1] * py) + w[1, 2] * pz) + t[1]
    z = ((w[2, 0] * px + w[2, 1] * py) + w[2, 2] * pz) + t[2]

    frustum_ok = z > p.near
    sigma_ok = sigma >= (f32(1.0) / f32(255.0))
    byte = np.minimum(np.floor(sigma * f32(255.0) + f32(0.5)), f32(255.0))

    qw, qx, qy, qz = quat[..., 0], quat[..., 1], quat[..., 2], quat[..., 3]
    two = f32(2.0)
    one = f32(1.0)
    r00 = one - two * (qy * qy + qz * qz)
    r01 = two * (qx * qy - qw * qz)
    r02 = two * (qx * qz + qw * qy)
    r10 = two * (qx * qy + qw * qz)
    r11 = one - two * (qx * qx + qz * qz)
    r12 = two * (qy * qz - qw * qx)
    r20 = two * (qx * qz - qw * qy)
    r21 = two * (qy * qz + qw * qx)
    r22 = one - two * (qx * qx + qy * qy)
    sx, sy, sz = scale[..., 0], scale[..., 1], scale[..., 2]
    m = [[r00 * sx, r01 * sy, r02 * sz],
         [r10 * sx, r11 * sy, r12 * sz],
         [r20 * sx, r21 * sy, r22 * sz]]
    c = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(i, 3):
            c[i][j] = ((m[i][0] * m[j][0] + m[i][1] * m[j][1])
                       + m[i][2] * m[j][2])
            c[j][i] = c[i][j]
    a = [[((w[i, 0] * c[0][j] + w[i, 1] * c[1][j]) + w[i, 2] * c[2][j])
          for j in range(3)] for i in range(3)]
    v00 = (a[0][0] * w[0, 0] + a[0][1] * w[0, 1]) + a[0][2] * w[0, 2]
    v01 = (a[0][0] * w[1, 0] + a[0][1] * w[1, 1]) + a[0][2] * w[1, 2]
    v02 = (a[0][0] * w[2, 0] + a[0][1] * w[2, 1]) + a[0][2] * w[2, 2]
    v11 = (a[1][0] * w[1, 0] + a[1][1] * w[1, 1]) + a[1][2] * w[1, 2]
    v12 = (a[1][0] * w[2, 0] + a[1][1] * w[2, 1]) + a[1][2] * w[2, 2]
    v22 = (a[2][0] * w[2, 0] + a[2][1] * w[2, 1]) + a[2][2] * w[2, 2]

    z_safe = np.where(frustum_ok, z, one)
    iz = one / z_safe
    iz2 = iz * iz
    j00 = p.fx * iz
    j02 = -(p.fx * x) * iz2
    j11 = p.fy * iz
    j12 = -(p.fy * y) * iz2
    t00 = j00 * v00 + j02 * v02
    t01 = j00 * v01 + j02 * v12
    t02 = j00 * v02 + j02 * v22
    t11 = j11 * v11 + j12 * v12
    t12 = j11 * v12 + j12 * v22
    s00 = (t00 * j00 + t02 * j02) + f32(DILATION)
    s01 = t01 * j11 + t02 * j12
    s11 = (t11 * j11 + t12 * j12) + f32(DILATION)

    cx_px = p.cx + p.fx * (x * iz)
    cy_px = p.cy + p.fy * (y * iz)

    mid = f32(0.5) * (s00 + s11)
    hd = f32(0.5) * (s00 - s11)
    sq = np.sqrt(hd * hd + s01 * s01)
    l1 = mid + sq
    l2 = np.maximum(mid - sq, f32(1e-12))
    len1 = np.sqrt(two * l1)
    len2 = np.sqrt(two * l2)
    ev = np.where(s01 == 0, np.where(s00 >= s11, one, f32(0.0)), l1 - s11)
    ey = np.where(s01 == 0, np.where(s00 >= s11, f32(0.0), one), s01)
    # squared norm can underflow for near-diagonal input; same fallback
    # as the reference chain so cull bits and axes stay bit-identical
    en2 = ev * ev + ey * ey
    ev = np.where(en2 == 0, np.where(s00 >= s11, one, f32(0.0)), ev)
    ey = np.where(en2 == 0, np.where(s00 >= s11, f32(0.0), one), ey)
    inv_n = one / np.sqrt(np.where(en2 == 0, one, en2))
    a1x = (ev * inv_n) * len1
    a1y = (ey * inv_n) * len1
    a2x = -(ey * inv_n) * len2
    a2y = (ev * inv_n) * len2

    radius = np.sqrt(np.log(np.maximum(byte, one)))
    if u["no_radius"]:
        radius = np.full_like(radius, f32(R_MAX))
    ex = np.abs(a1x) + np.abs(a2x)
    eyv = np.abs(a1y) + np.abs(a2y)
    hx = radius * ex
    hy = radius * eyv
    aabb_ok = ((cx_px + hx >= f32(0.0)) & (cx_px - hx <= p.width)
               & (cy_px + hy >= f32(0.0)) & (cy_px - hy <= p.height))

    survive = in_range & frustum_ok & sigma_ok
    if not u["no_cull"]:
        survive = survive & aabb_ok

    slots = ctx.atomic_fetch_add("counter", 0, survive.astype(np.uint32))
    if not survive.any():
        return
    idx = slots[survive].astype(np.int64)

    # view-dependent color for survivors only
    sel = lanes[survive]
    pos_s = pos[survive]
    d = pos_s - p.eye
    dot = (d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]) + d[:, 2] * d[:, 2]
    inv_len = one / np.sqrt(np.maximum(dot, f32(1e-24)))
    dirs = d * inv_len[:, None]
    if u["flip_sh"]:
        dirs = -dirs
    coeffs = ctx.f32("scene.sh").reshape(n, -1, 3)[sel]
    rgb = eval_sh_f32(coeffs, dirs, u["sh_degree"], clamp=True)
    color = pack_rgba8(rgb, byte[survive] / f32(255.0))

    rec = ctx.u32("splats").reshape(-1, SPLAT_WORDS)
    rec[idx, 0] = cx_px[survive].view(np.uint32)
    rec[idx, 1] = cy_px[survive].view(np.uint32)
    rec[idx, 2] = pack_half2(np.stack([a1x[survive], a1y[survive]], axis=-1))
    rec[idx, 3] = pack_half2(np.stack([a2x[survive], a2y[survive]], axis=-1))
    rec[idx, 4] = color

    z_sel = np.ascontiguousarray(z[survive])
    bits = z_sel.view(np.uint32)
    monotone = np.where(bits >> np.uint32(31) == 0,
                        bits ^ np.uint32(0x80000000), ~bits)
    ctx.u32("keys")[idx] = ~monotone
    ctx.u32("sort_pay")[idx] = idx.astype(np.uint32)   # slot identity
    ctx.u32("src_idx")[idx] = gi[survive].astype(np.uint32)
