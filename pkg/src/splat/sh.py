"""Real spherical harmonics evaluation, bands 0 through 3.

Constants are the closed-form normalization factors of the real SH basis,
written out to full double precision (17 significant digits; see
docs/CONVENTIONS.md for the basis ordering). eval_sh is the double-precision
reference; eval_sh_f32 is the single-precision twin used by the compute
kernels, same expression structure with every step rounded to float32.
"""

from __future__ import annotations

import numpy as np

from .device import audited_helper

SH_C0 = 0.28209479177387814
SH_C1 = 0.48860251190291992
SH_C2 = (1.0925484305920792,
         -1.0925484305920792,
         0.31539156525252005,
         -1.0925484305920792,
         0.54627421529603959)
SH_C3 = (-0.59004358992664352,
         2.8906114426405538,
         -0.45704579946446580,
         0.37317633259011539,
         -0.45704579946446580,
         1.4453057213202769,
         -0.59004358992664352)


@audited_helper
def _eval(coeffs: np.ndarray, dirs: np.ndarray, degree: int, dt) -> np.ndarray:
    """Shared basis expansion; dt picks the arithmetic precision."""
    c = np.asarray(coeffs, dt)
    if c.ndim == 2:
        c = c[None]
    d = np.asarray(dirs, dt)
    if d.ndim == 1:
        d = d[None]
    need = (degree + 1) ** 2
    if degree not in (0, 1, 2, 3) or c.shape[1] < need:
        raise ValueError(f"degree {degree} needs {need} coefficients, "
                         f"got {c.shape[1]}")
    one = dt(1.0)
    rgb = dt(SH_C0) * c[:, 0]
    if degree >= 1:
        x = d[:, 0:1]
        y = d[:, 1:2]
        z = d[:, 2:3]
        rgb = rgb - dt(SH_C1) * y * c[:, 1]
        rgb = rgb + dt(SH_C1) * z * c[:, 2]
        rgb = rgb - dt(SH_C1) * x * c[:, 3]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        rgb = rgb + dt(SH_C2[0]) * xy * c[:, 4]
        rgb = rgb + dt(SH_C2[1]) * yz * c[:, 5]
        rgb = rgb + dt(SH_C2[2]) * (dt(2.0) * zz - xx - yy) * c[:, 6]
        rgb = rgb + dt(SH_C2[3]) * xz * c[:, 7]
        rgb = rgb + dt(SH_C2[4]) * (xx - yy) * c[:, 8]
    if degree >= 3:
        rgb = rgb + dt(SH_C3[0]) * y * (dt(3.0) * xx - yy) * c[:, 9]
        rgb = rgb + dt(SH_C3[1]) * xy * z * c[:, 10]
        rgb = rgb + dt(SH_C3[2]) * y * (dt(4.0) * zz - xx - yy) * c[:, 11]
        rgb = rgb + dt(SH_C3[3]) * z * (dt(2.0) * zz - dt(3.0) * xx
                                        - dt(3.0) * yy) * c[:, 12]
        rgb = rgb + dt(SH_C3[4]) * x * (dt(4.0) * zz - xx - yy) * c[:, 13]
        rgb = rgb + dt(SH_C3[5]) * z * (xx - yy) * c[:, 14]
        rgb = rgb + dt(SH_C3[6]) * x * (xx - dt(3.0) * yy) * c[:, 15]
    return rgb + dt(0.5), one


def eval_sh(coeffs, dirs, degree: int, clamp: bool = True) -> np.ndarray:
    """Double-precision SH color: 0.5 + sum of basis terms, per channel.

    coeffs: (n, m, 3) or (m, 3); dirs: (n, 3) or (3,) unit vectors from the
    camera position toward each center. clamp bounds channels to [0, 1].
    """
    rgb, one = _eval(coeffs, dirs, degree, np.float64)
    if clamp:
        rgb = np.minimum(np.maximum(rgb, 0.0), one)
    return rgb


def eval_sh_f32(coeffs, dirs, degree: int, clamp: bool = True) -> np.ndarray:
    """Single-precision twin of eval_sh; the kernel-side color path."""
    rgb, one = _eval(coeffs, dirs, degree, np.float32)
    if clamp:
        rgb = np.minimum(np.maximum(rgb, np.float32(0.0)), one)
    return rgb
