"""Instanced-quad rasterizer: vertex placement, fragment rule, blending."""

import numpy as np
import pytest

from splat.device import SoftDevice
from splat.gpu_preprocess import SPLAT_WORDS, pack_half2, pack_rgba8
from splat.gpu_raster import (
    ALPHA_FLOOR,
    CORNER_SIGNS,
    DrawConfig,
    R_MAX,
    draw_splats,
    fragment_shade,
    radius_from_byte,
    vertex_expand,
)
from splat.gpu_sort import args_words
from splat.reference import rasterize_reference
from splat.scene_io import SynthSpec, synth_scene

from conftest import isotropic_scene, make_camera

F = np.float32


class TestRadiusFromByte:
    def test_degenerate_bytes(self):
        assert radius_from_byte(0) == 0.0
        assert radius_from_byte(1) == 0.0

    def test_full_opacity(self):
        assert radius_from_byte(255) == F(R_MAX)

    def test_monotone(self):
        rs = [radius_from_byte(b) for b in range(1, 256)]
        assert all(b >= a for a, b in zip(rs, rs[1:]))
        assert rs[0] == 0.0 and rs[-1] > 2.35

    def test_no_radius_override(self):
        for b in (1, 7, 255):
            assert radius_from_byte(b, no_radius=True) == F(R_MAX)


class TestVertexExpand:
    def test_corner_sign_table(self):
        assert CORNER_SIGNS == ((-1.0, -1.0), (1.0, -1.0),
                                (-1.0, 1.0), (1.0, 1.0))

    def test_offset_arithmetic_fixture(self):
        """center (100,100), a1 (4,0), a2 (0,2), r = 2: the (+,+) strip
        corner lands at (108, 104); the table alone fixes the offsets."""
        center, a1, a2, r = (100.0, 100.0), (4.0, 0.0), (0.0, 2.0), 2.0
        for corner, (s_u, s_v) in enumerate(CORNER_SIGNS):
            px = center[0] + s_u * r * a1[0] + s_v * r * a2[0]
            py = center[1] + s_u * r * a1[1] + s_v * r * a2[1]
            if corner == 3:
                assert (px, py) == (108.0, 104.0)
        # the vertex program computes the same expression with its own
        # byte-derived radius
        v = vertex_expand(center, a1, a2, 255, 3, 200, 200)
        r255 = radius_from_byte(255)
        assert v.pos_px[0] == float(F(center[0]) + (F(1) * r255) * F(a1[0])
                                    + (F(1) * r255) * F(a2[0]))
        assert v.uv == (float(r255), float(r255))

    def test_uv_carries_signed_radius(self):
        v = vertex_expand((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), 200, 2, 64, 64)
        r = float(radius_from_byte(200))
        assert v.uv == (-r, r)

    def test_clip_mapping_endpoints(self):
        # byte 1 collapses the quad to its center: px == cx exactly
        left = vertex_expand((0.0, 32.0), (1, 0), (0, 1), 1, 0, 64, 64)
        right = vertex_expand((64.0, 32.0), (1, 0), (0, 1), 1, 0, 64, 64)
        assert left.clip[0] == -1.0 and right.clip[0] == 1.0
        assert left.clip[1] == 0.0

    def test_rows_bottom_up_convention(self):
        bottom = vertex_expand((32.0, 0.0), (1, 0), (0, 1), 1, 0, 64, 64)
        top = vertex_expand((32.0, 64.0), (1, 0), (0, 1), 1, 0, 64, 64)
        assert bottom.clip[1] == -1.0 and top.clip[1] == 1.0


class TestFragmentShade:
    WORD_HALF = int(pack_rgba8(np.float32([[1.0, 0.0, 0.0]]),
                               np.float32([128.0 / 255.0]))[0])

    def test_center_alpha_is_sigma(self):
        rgb, alpha, keep = fragment_shade(0.0, 0.0, self.WORD_HALF)
        assert alpha == float(F(128.0) / F(255.0))
        assert keep
        assert rgb == (1.0, 0.0, 0.0)

    def test_rgb_normalization(self):
        word = int(pack_rgba8(np.float32([[1.0, 0.5, 0.0]]),
                              np.float32([1.0]))[0])
        rgb, _, _ = fragment_shade(0.0, 0.0, word)
        assert rgb == (1.0, float(F(128.0) / F(255.0)), 0.0)

    def test_boundary_alpha_on_axis(self):
        """At (u, v) = (r, 0) the continuous rule gives alpha exactly 1/255;
        in float32 it lands ~2e-10 below, so the closed test discards it.
        Both pipelines share this arithmetic, so they agree either way."""
        word = int(pack_rgba8(np.zeros((1, 3), np.float32),
                              np.float32([1.0]))[0])
        r = radius_from_byte(255)
        _, alpha, keep = fragment_shade(float(r), 0.0, word)
        assert abs(alpha - 1.0 / 255.0) <= 1e-9
        assert not keep

    def test_corner_always_discarded(self):
        word = int(pack_rgba8(np.zeros((1, 3), np.float32),
                              np.float32([1.0]))[0])
        r = float(radius_from_byte(255))
        _, alpha, keep = fragment_shade(r, r, word)
        assert not keep
        assert alpha < 1.0 / 255.0 / 100.0

    def test_interior_kept(self):
        _, alpha, keep = fragment_shade(0.5, -0.5, self.WORD_HALF)
        assert keep and 0 < alpha < 1

    def test_floor_constant(self):
        assert ALPHA_FLOOR == F(1.0) / F(255.0)


def draw_records(records, payload, count, width, height, background=(0, 0, 0, 0),
                 device=None, no_radius=False):
    """Hand-packed records through the real draw path."""
    dev = device or SoftDevice()
    n = max(len(records), 1)
    splats = dev.create_buffer("visible.splats", n * SPLAT_WORDS * 4)
    if records:
        splats.write(np.concatenate([np.asarray(r, np.uint32)
                                     for r in records]))
    pay = dev.create_buffer("visible.sort_pay", max(len(payload), 1) * 4)
    if len(payload):
        pay.write(np.asarray(payload, np.uint32))
    args = dev.create_buffer("sort.args", len(args_words(0)) * 4)
    args.write(args_words(count))
    target = dev.create_buffer("target", width * height * 16)
    config = DrawConfig(background=background, no_radius=no_radius)
    drawn = draw_splats(dev, target, splats, pay, args, width, height, config)
    img = target.read(np.float32, width * height * 4).reshape(height, width, 4)
    return img, drawn, dev


def pack_record(cx, cy, a1, a2, rgb, sigma):
    byte = int(np.floor(F(sigma) * F(255.0) + F(0.5)))
    word_c = int(pack_rgba8(np.float32([rgb]), np.float32([byte / 255.0]))[0])
    return [np.float32(cx).view(np.uint32),
            np.float32(cy).view(np.uint32),
            int(pack_half2(np.float32([a1]))[0]),
            int(pack_half2(np.float32([a2]))[0]),
            word_c, 0]


class TestDrawSplats:
    def test_zero_instances_background_only(self):
        img, drawn, dev = draw_records([], [], 0, 8, 6,
                                       background=(0.1, 0.2, 0.3, 1.0))
        assert drawn == 0
        assert np.allclose(img, np.float32([0.1, 0.2, 0.3, 1.0]), atol=0)
        assert dev.stats.draws == 1

    def test_red_green_overlap_pixel(self):
        """Two half-opacity splats on the same center: far green, near red.
        The blend leaves (alpha, alpha*(1-alpha), 0) at the shared center."""
        rec_g = pack_record(16.5, 16.5, (8, 0), (0, 8), (0, 1, 0), 0.5)
        rec_r = pack_record(16.5, 16.5, (8, 0), (0, 8), (1, 0, 0), 0.5)
        img, drawn, _ = draw_records([rec_g, rec_r], [0, 1], 2, 33, 33)
        assert drawn == 2
        alpha = F(128.0) / F(255.0)
        px = img[16, 16]
        assert px[0] == alpha
        assert px[1] == alpha * (F(1.0) - alpha)
        assert px[2] == 0.0
        assert px[3] == alpha + (F(1.0) - alpha) * alpha
        from splat.images import quantize_u8
        q = quantize_u8(img[16:17, 16:17])
        assert q.reshape(4).tolist() == [128, 64, 0, 192]

    def test_instance_count_from_args(self):
        rec = pack_record(4.5, 4.5, (2, 0), (0, 2), (1, 1, 1), 0.9)
        img, drawn, _ = draw_records([rec, rec], [0, 1], 1, 9, 9)
        assert drawn == 1  # second record exists but args say one instance

    def test_fragments_counted_before_discard(self):
        # axis-aligned quad: coverage is a full pixel rectangle
        rec = pack_record(8.5, 8.5, (2.0, 0.0), (0.0, 2.0), (1, 1, 1), 1.0)
        img, _, dev = draw_records([rec], [0], 1, 17, 17)
        r = float(radius_from_byte(255))
        ext = 2.0 * r  # quad half-width in pixels (|a1|*r)
        xs = [x for x in range(17) if abs((x + 0.5 - 8.5) / 2.0) <= r]
        expect = len(xs) ** 2
        assert dev.stats.fragments_evaluated == expect
        assert ext > 4.0  # sanity: the quad spans several pixels

    def test_single_splat_matches_reference_bits(self):
        # channel values sit away from the 1/510 quantization boundaries so
        # the float32 and float64 shading routes agree on the packed bytes
        scene = isotropic_scene([(0.0, 0.0, 0.0)], [0.8], [(0.75, 0.25, 0.125)],
                                scale=0.25)
        cam = make_camera(width=48, height=40)
        ref = rasterize_reference(scene, cam, mode="half")
        from splat.pipeline import Renderer
        dev = SoftDevice()
        ren = Renderer(dev, scene, 48, 40)
        ren.render_frame(cam)
        got = ren.read_target_f32()
        assert got.tobytes() == ref.astype(np.float32).tobytes()
        ren.destroy()

    def test_background_behind_partial_cover(self):
        rec = pack_record(8.5, 8.5, (1.5, 0), (0, 1.5), (1, 1, 1), 0.6)
        img, _, _ = draw_records([rec], [0], 1, 17, 17,
                                 background=(0.0, 0.0, 1.0, 1.0))
        # far corner keeps pure background
        assert np.array_equal(img[0, 0], np.float32([0, 0, 1, 1]))
        # covered center blends toward white but alpha stays 1 over opaque bg
        assert img[8, 8, 0] > 0.5 and img[8, 8, 3] == 1.0

    def test_no_radius_covers_more(self):
        rec = pack_record(8.5, 8.5, (3.0, 0.0), (0.0, 3.0), (1, 1, 1), 0.02)
        img_a, _, dev_a = draw_records([rec], [0], 1, 17, 17)
        img_b, _, dev_b = draw_records([rec], [0], 1, 17, 17, no_radius=True)
        assert dev_b.stats.fragments_evaluated > \
            dev_a.stats.fragments_evaluated

    def test_quad_tightness(self):
        """Blended pixels stay inside the closed |u|,|v| <= r box, and every
        kept pixel also passes the radial cutoff that sized the box."""
        a1, a2 = (2.5, 1.0), (-0.6, 1.5)
        rec = pack_record(16.5, 16.5, a1, a2, (1, 1, 1), 0.8)
        img, _, _ = draw_records([rec], [0], 1, 33, 33)
        byte = int(np.floor(F(0.8) * F(255.0) + F(0.5)))
        r = float(radius_from_byte(byte))
        # invert pixel -> (u, v) through the axis basis
        m = np.array([[a1[0], a2[0]], [a1[1], a2[1]]], np.float64)
        minv = np.linalg.inv(m)
        touched = np.argwhere(img[:, :, 3] != 0)
        assert len(touched) > 4
        for y, x in touched:
            d = np.array([x + 0.5 - 16.5, y + 0.5 - 16.5])
            u, v = minv @ d
            assert abs(u) <= r + 1e-3 and abs(v) <= r + 1e-3
            assert u * u + v * v <= r * r + 1e-3
