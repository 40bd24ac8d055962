"""Rasterization stage: opacity-sized instanced quads, blended far to near.

This module plays the part of the hardware render pipeline: an indirect
instanced draw (4-vertex triangle strip per instance) whose instance count
comes from the args buffer and whose instance order comes from the sorted
payload. vertex_expand and fragment_shade are the per-vertex and
per-fragment programs written out as plain functions; draw_splats executes
them one instance at a time because blending order is the contract.

Coverage is closed: a pixel center exactly on the quad edge (|u| == r) is
rasterized. The reference rasterizer tests the same closed interval, so the
two paths agree on every fragment before any opacity threshold applies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .device import Buffer, SoftDevice
from .gpu_preprocess import R_MAX, SPLAT_WORDS, unpack_half2, unpack_rgba8
from .gpu_sort import ARG_DRAW

ALPHA_FLOOR = np.float32(1.0) / np.float32(255.0)

# triangle-strip corner order: (-,-) (+,-) (-,+) (+,+)
CORNER_SIGNS = ((-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0))


def radius_from_byte(byte: int, no_radius: bool = False) -> np.float32:
    """Quad half-extent in ellipse units for a quantized opacity byte.

    sqrt(log(byte)) shrinks the quad to the iso-contour where opacity falls
    to one 8-bit step; byte <= 1 collapses the quad entirely. no_radius
    pins the largest possible radius instead (the sizing ablation).
    """
    if no_radius:
        return np.float32(R_MAX)
    if byte <= 1:
        return np.float32(0.0)
    return np.sqrt(np.log(np.float32(byte)))


@dataclass(frozen=True)
class QuadVertex:
    """One expanded corner: viewport position, clip position, ellipse uv."""

    pos_px: tuple[float, float]
    clip: tuple[float, float]
    uv: tuple[float, float]


def vertex_expand(center, a1, a2, byte: int, corner: int, width: int,
                  height: int, no_radius: bool = False) -> QuadVertex:
    """Vertex program: place strip corner `corner` of one splat's quad.

    The corner at signs (s_u, s_v) sits at center + s_u*r*a1 + s_v*r*a2 in
    pixels and carries uv = (s_u*r, s_v*r), so the fragment interpolator
    hands every pixel its own ellipse coordinates. Clip space maps pixel 0
    to -1 and the full extent to +1 on both axes (rows bottom-up).
    """
    f = np.float32
    s_u, s_v = (f(s) for s in CORNER_SIGNS[corner])
    r = radius_from_byte(byte, no_radius)
    cx, cy = f(center[0]), f(center[1])
    px = cx + (s_u * r) * f(a1[0]) + (s_v * r) * f(a2[0])
    py = cy + (s_u * r) * f(a1[1]) + (s_v * r) * f(a2[1])
    clip_x = f(2.0) * (px / f(width)) - f(1.0)
    clip_y = f(2.0) * (py / f(height)) - f(1.0)
    return QuadVertex((float(px), float(py)),
                      (float(clip_x), float(clip_y)),
                      (float(s_u * r), float(s_v * r)))


def fragment_shade(u, v, color_word: int):
    """Fragment program: Gaussian falloff opacity with an 8-bit floor.

    Returns (rgb, alpha, keep); keep is False when alpha < 1/255 and the
    fragment is discarded before blending. alpha = sigma_q * exp(-(u^2+v^2))
    evaluated in float32, sigma_q and rgb from the packed color word.
    """
    f = np.float32
    u, v = f(u), f(v)
    rgba = unpack_rgba8(np.uint32(color_word)).reshape(4)
    sigma_q = f(rgba[3]) / f(255.0)
    alpha = sigma_q * np.exp(-(u * u + v * v))
    rgb = tuple(float(f(ch) / f(255.0)) for ch in rgba[:3])
    return rgb, float(alpha), bool(alpha >= ALPHA_FLOOR)


@dataclass(frozen=True)
class DrawConfig:
    """Fixed-function state for the splat pass.

    Over blending (src alpha, one-minus-src alpha), no depth test; order
    comes entirely from the sorted instance stream.
    """

    background: tuple = (0.0, 0.0, 0.0, 0.0)
    no_radius: bool = False


@np.errstate(over="ignore", invalid="ignore", divide="ignore")
def draw_splats(device: SoftDevice, target: Buffer, splats: Buffer,
                payload: Buffer, args: Buffer, width: int, height: int,
                config: DrawConfig = DrawConfig()) -> int:
    """Execute the indirect instanced draw; returns the instance count.

    Clears `target` to the configured background, then blends instances in
    payload order (far to near). The instance count is read from the draw
    words of `args` at execution time, never from the host. Every pixel
    center inside an instance's quad counts as an evaluated fragment,
    whether or not the opacity floor later discards it.
    """
    device.begin_draw()
    f = np.float32
    tgt = target.f32.reshape(height, width, 4)
    tgt[:] = np.asarray(config.background, np.float32)

    icount = int(args.u32[ARG_DRAW + 1])
    if icount == 0:
        return 0
    order = payload.u32[:icount].astype(np.int64)
    rec = splats.u32.reshape(-1, SPLAT_WORDS)[order]

    centers = rec[:, 0:2].copy().view(np.float32)
    a1 = unpack_half2(rec[:, 2])
    a2 = unpack_half2(rec[:, 3])
    rgba = unpack_rgba8(rec[:, 4])
    bytes_a = rgba[:, 3]
    src_rgb = rgba[:, :3].astype(np.float32) / f(255.0)
    sigma_q = bytes_a.astype(np.float32) / f(255.0)
    if config.no_radius:
        radius = np.full(icount, f(R_MAX), np.float32)
    else:
        radius = np.where(bytes_a > 1,
                          np.sqrt(np.log(bytes_a.astype(np.float32))),
                          f(0.0))

    xs = np.arange(width, dtype=np.float32) + f(0.5)
    ys = np.arange(height, dtype=np.float32) + f(0.5)

    for i in range(icount):
        r = radius[i]
        if r == 0.0:
            continue
        a1x, a1y = a1[i]
        a2x, a2y = a2[i]
        det = a1x * a2y - a2x * a1y
        if det == 0.0:
            continue
        cx, cy = centers[i]
        ext_x = r * (abs(a1x) + abs(a2x))
        ext_y = r * (abs(a1y) + abs(a2y))
        x0 = max(int(np.ceil(float(cx - ext_x) - 0.5)), 0)
        x1 = min(int(np.floor(float(cx + ext_x) - 0.5)), width - 1)
        y0 = max(int(np.ceil(float(cy - ext_y) - 0.5)), 0)
        y1 = min(int(np.floor(float(cy + ext_y) - 0.5)), height - 1)
        if x0 > x1 or y0 > y1:
            continue
        dx = xs[x0:x1 + 1][None, :] - cx
        dy = ys[y0:y1 + 1][:, None] - cy
        inv_det = f(1.0) / det
        u = (a2y * dx - a2x * dy) * inv_det
        v = (a1x * dy - a1y * dx) * inv_det
        quad = (np.abs(u) <= r) & (np.abs(v) <= r)
        device.count_fragments(int(quad.sum()))
        alpha = sigma_q[i] * np.exp(-(u * u + v * v))
        mask = quad & (alpha >= ALPHA_FLOOR)
        if not mask.any():
            continue
        alpha = np.where(mask, alpha, f(0.0))[:, :, None]
        src = src_rgb[i][None, None, :]
        window = tgt[y0:y1 + 1, x0:x1 + 1]
        window[:, :, :3] = src * alpha + window[:, :, :3] * (f(1.0) - alpha)
        window[:, :, 3:4] = (alpha[:, :, 0:1]
                             + window[:, :, 3:4] * (f(1.0) - alpha[:, :, 0:1]))
    return icount
