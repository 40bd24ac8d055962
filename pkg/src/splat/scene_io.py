"""Gaussian scene loading, activation, synthesis, and PLY round-tripping.

Scenes are stored as structure-of-arrays float32 numpy arrays with parameter
activations already applied (sigmoid opacity, exp scale, normalized rotation).
The on-disk format is the de-facto binary little-endian splat PLY layout; the
exact header grammar is documented in docs/FORMATS.md.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TILE = 256  # referenced here only for docs cross-links; sort owns the value

# Property names of one vertex record, in mandatory order. f_rest_* slots in
# between, K of them, K in {0, 9, 24, 45}.
_PRE_REST = ("x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2")
_POST_REST = ("opacity", "scale_0", "scale_1", "scale_2",
              "rot_0", "rot_1", "rot_2", "rot_3")
_REST_COUNTS = {0: 0, 9: 1, 24: 2, 45: 3}  # K -> SH degree


class MalformedHeader(ValueError):
    """PLY magic, format line, or header structure is wrong."""


class UnsupportedLayout(ValueError):
    """Header parses but the property schema is not the splat layout."""


class TruncatedPayload(ValueError):
    """Payload holds fewer records than the header declares."""


class NonFiniteRecord(ValueError):
    """A record contains NaN/Inf and the skip policy is off."""


class DegenerateRotation(ValueError):
    """Raw quaternion norm below 1e-12; cannot normalize."""


class InvalidSpec(ValueError):
    """Synthetic scene spec has an empty or negative range."""


@dataclass(frozen=True, eq=False)
class RawGaussian:
    """One pre-activation record as stored in a splat PLY."""

    position: np.ndarray     # (3,) float32
    normal: np.ndarray       # (3,) float32, carried but ignored
    f_dc: np.ndarray         # (3,) float32, SH band 0 per channel
    f_rest: np.ndarray       # (K,) float32, channel-major higher bands
    opacity_raw: float       # pre-sigmoid logit
    scale_raw: np.ndarray    # (3,) float32, log-scale
    rot_raw: np.ndarray      # (4,) float32, unnormalized (w, x, y, z)


@dataclass(frozen=True, eq=False)
class Gaussian:
    """One activated splat primitive."""

    position: np.ndarray     # (3,) float32
    rotation: np.ndarray     # (4,) float32 unit quaternion (w, x, y, z)
    scale: np.ndarray        # (3,) float32, > 0
    opacity: float           # sigma in (0, 1)
    sh: np.ndarray           # ((degree+1)^2, 3) float32


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable activated scene, structure-of-arrays."""

    positions: np.ndarray    # (n, 3) float32
    rotations: np.ndarray    # (n, 4) float32, unit (w, x, y, z)
    scales: np.ndarray       # (n, 3) float32, > 0
    opacities: np.ndarray    # (n,)  float32, in (0, 1)
    sh: np.ndarray           # (n, (degree+1)^2, 3) float32
    sh_degree: int
    dropped: int = 0         # records skipped by the non-finite policy
    world_aabb: tuple = field(init=False)

    def __post_init__(self):
        for arr in (self.positions, self.rotations, self.scales,
                    self.opacities, self.sh):
            arr.setflags(write=False)
        n = self.positions.shape[0]
        if n:
            aabb = (self.positions.min(axis=0), self.positions.max(axis=0))
        else:
            aabb = (np.zeros(3, np.float32), np.zeros(3, np.float32))
        object.__setattr__(self, "world_aabb", aabb)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(self.positions[i], self.rotations[i], self.scales[i],
                        float(self.opacities[i]), self.sh[i])

    def __iter__(self):
        return (self[i] for i in range(self.count))


def sh_coeff_count(degree: int) -> int:
    """Coefficients per channel for a given SH degree."""
    return (degree + 1) ** 2


def _property_names(degree: int) -> list[str]:
    k = (sh_coeff_count(degree) - 1) * 3
    return list(_PRE_REST) + [f"f_rest_{i}" for i in range(k)] + list(_POST_REST)


# --- activation -------------------------------------------------------------

def _activate_arrays(raw: np.ndarray, degree: int, skip_bad: bool) -> Scene:
    """Activate a (n, 17+K) float32 record matrix into a Scene."""
    dropped = 0
    if raw.size:
        finite = np.isfinite(raw).all(axis=1)
        if not finite.all():
            if not skip_bad:
                bad = int((~finite).sum())
                raise NonFiniteRecord(f"{bad} non-finite record(s); "
                                      "pass skip_bad to drop them")
            dropped = int((~finite).sum())
            raw = raw[finite]
    n = raw.shape[0]
    m = sh_coeff_count(degree) - 1

    positions = np.ascontiguousarray(raw[:, 0:3])
    f_dc = raw[:, 6:9]
    f_rest = raw[:, 9:9 + 3 * m]
    opacity_raw = raw[:, 9 + 3 * m]
    scale_raw = raw[:, 10 + 3 * m:13 + 3 * m]
    rot_raw = raw[:, 13 + 3 * m:17 + 3 * m]

    norms = np.sqrt((rot_raw * rot_raw).sum(axis=1))
    if np.any(norms < np.float32(1e-12)):
        raise DegenerateRotation("quaternion norm below 1e-12")
    rotations = rot_raw / norms[:, None]

    with np.errstate(over="ignore"):
        opacities = np.float32(1.0) / (np.float32(1.0) + np.exp(-opacity_raw))
        scales = np.exp(scale_raw)

    sh = np.zeros((n, m + 1, 3), np.float32)
    sh[:, 0, :] = f_dc
    if m:
        # channel-major: all band>=1 coefficients for R, then G, then B
        sh[:, 1:, :] = f_rest.reshape(n, 3, m).transpose(0, 2, 1)

    return Scene(positions.astype(np.float32),
                 rotations.astype(np.float32),
                 np.ascontiguousarray(scales, np.float32),
                 np.ascontiguousarray(opacities, np.float32),
                 sh, degree, dropped)


def activate(raw: RawGaussian) -> Gaussian:
    """Activate one record: sigmoid opacity, exp scale, normalized rotation."""
    k = np.asarray(raw.f_rest, np.float32).size
    if k not in _REST_COUNTS:
        raise UnsupportedLayout(f"illegal f_rest count {k}")
    row = np.concatenate([
        np.asarray(raw.position, np.float32),
        np.asarray(raw.normal, np.float32),
        np.asarray(raw.f_dc, np.float32),
        np.asarray(raw.f_rest, np.float32).ravel(),
        np.float32([raw.opacity_raw]),
        np.asarray(raw.scale_raw, np.float32),
        np.asarray(raw.rot_raw, np.float32),
    ])
    scene = _activate_arrays(row[None, :], _REST_COUNTS[k], skip_bad=False)
    return scene[0]


# --- PLY --------------------------------------------------------------------

def parse_ply(data: bytes, skip_bad: bool = False) -> Scene:
    """Parse a binary little-endian splat PLY into an activated Scene.

    skip_bad drops records with NaN/Inf fields and reports them via
    Scene.dropped; the default rejects the whole file.
    """
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise MalformedHeader("missing 'ply' magic or end_header")
    header_lines = data[:end].decode("ascii", "replace").split("\n")
    payload = data[end + len(b"end_header\n"):]

    lines = [ln.strip() for ln in header_lines[1:] if ln.strip()]
    lines = [ln for ln in lines if not ln.startswith("comment")]
    if not lines or lines[0] != "format binary_little_endian 1.0":
        raise MalformedHeader("unknown format; need binary_little_endian 1.0")

    count = None
    props: list[str] = []
    for ln in lines[1:]:
        tok = ln.split()
        if tok[0] == "element":
            if count is not None:
                raise UnsupportedLayout(f"unexpected second element {tok[1]!r}")
            if len(tok) != 3 or tok[1] != "vertex" or not tok[2].isdigit():
                raise MalformedHeader(f"bad element line {ln!r}")
            count = int(tok[2])
        elif tok[0] == "property":
            if count is None:
                raise MalformedHeader("property before element")
            if len(tok) != 3 or tok[1] not in ("float", "float32"):
                raise UnsupportedLayout(f"unsupported property {ln!r}")
            props.append(tok[2])
        else:
            raise MalformedHeader(f"unexpected header line {ln!r}")
    if count is None:
        raise MalformedHeader("missing element vertex line")

    k = len(props) - len(_PRE_REST) - len(_POST_REST)
    if k not in _REST_COUNTS or props != _property_names(_REST_COUNTS[k]):
        raise UnsupportedLayout("property schema is not the splat layout")
    degree = _REST_COUNTS[k]

    stride = len(props)
    need = count * stride * 4
    if len(payload) < need:
        raise TruncatedPayload(f"payload holds {len(payload)} bytes, "
                               f"need {need} for {count} records")
    raw = np.frombuffer(payload[:need], dtype="<f4").reshape(count, stride)
    return _activate_arrays(raw.astype(np.float32), degree, skip_bad)


def write_ply(scene: Scene) -> bytes:
    """Serialize a Scene back to the splat PLY layout.

    Activations are inverted (logit opacity, log scale); normals written as
    zeros. parse_ply(write_ply(s)) reproduces s within inversion round-off.
    """
    n = scene.count
    m = sh_coeff_count(scene.sh_degree) - 1
    props = _property_names(scene.sh_degree)
    header = ["ply", "format binary_little_endian 1.0",
              f"element vertex {n}"]
    header += [f"property float {p}" for p in props]
    header.append("end_header")

    rec = np.zeros((n, len(props)), np.float32)
    rec[:, 0:3] = scene.positions
    rec[:, 6:9] = scene.sh[:, 0, :]
    if m:
        rec[:, 9:9 + 3 * m] = scene.sh[:, 1:, :].transpose(0, 2, 1).reshape(n, 3 * m)
    op = scene.opacities.astype(np.float64)
    with np.errstate(divide="ignore"):
        rec[:, 9 + 3 * m] = np.log(op / (1.0 - op))
        rec[:, 10 + 3 * m:13 + 3 * m] = np.log(scene.scales.astype(np.float64))
    rec[:, 13 + 3 * m:17 + 3 * m] = scene.rotations
    return ("\n".join(header) + "\n").encode("ascii") + rec.astype("<f4").tobytes()


# --- synthetic scenes -------------------------------------------------------

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_MUL2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, offset: int, count: int) -> np.ndarray:
    """Counter-based SplitMix64 stream: mix(seed + (offset+i+1)*gamma).

    Bit-exact on every platform; the generator contract all implementations
    of the synthetic fixtures share (see docs/CONVENTIONS.md).
    """
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    z = (np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * _SM_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * _SM_MUL1
    z = (z ^ (z >> np.uint64(27))) * _SM_MUL2
    return z ^ (z >> np.uint64(31))


def _uniform01(seed: int, offset: int, count: int) -> np.ndarray:
    # 53-bit mantissa draw in [0, 1)
    return (splitmix64(seed, offset, count) >> np.uint64(11)) * 2.0 ** -53


@dataclass(frozen=True)
class SynthSpec:
    """Parameter ranges for deterministic synthetic scenes."""

    extent: float = 1.0                       # positions in [-extent, extent]^3
    scale_range: tuple = (0.01, 0.2)          # activated scale, > 0
    opacity_range: tuple = (0.05, 0.98)       # activated opacity, in (0, 1)
    sh_degree: int = 0
    dc_range: tuple = (-1.7724538509055159, 1.7724538509055159)
    rest_range: tuple = (-0.25, 0.25)

    def validate(self) -> None:
        if not (self.extent > 0):
            raise InvalidSpec("extent must be positive")
        for name in ("scale_range", "opacity_range", "dc_range", "rest_range"):
            lo, hi = getattr(self, name)
            if not (lo <= hi):
                raise InvalidSpec(f"{name} is empty: {lo} > {hi}")
        if self.scale_range[0] <= 0:
            raise InvalidSpec("scale_range must be positive")
        if not (0 < self.opacity_range[0] and self.opacity_range[1] < 1):
            raise InvalidSpec("opacity_range must stay inside (0, 1)")
        if self.sh_degree not in (0, 1, 2, 3):
            raise InvalidSpec(f"sh_degree {self.sh_degree} not in 0..3")


def synth_scene(seed: int, n: int, spec: SynthSpec = SynthSpec()) -> Scene:
    """Deterministic synthetic scene; identical bytes for fixed (seed, spec).

    Stream consumption order: positions (3n), rotations (4n), scales (3n),
    opacities (n), SH band 0 (3n), SH bands >=1 (3*m*n), one block each,
    consumed from a single SplitMix64 counter stream.
    """
    spec.validate()
    if n < 0:
        raise InvalidSpec("n must be >= 0")
    m = sh_coeff_count(spec.sh_degree) - 1

    off = 0

    def block(count):
        nonlocal off
        u = _uniform01(seed, off, count)
        off += count
        return u

    def in_range(u, lo, hi):
        return (lo + u * (hi - lo)).astype(np.float32)

    positions = in_range(block(3 * n), -spec.extent, spec.extent).reshape(n, 3)
    q = in_range(block(4 * n), -1.0, 1.0).reshape(n, 4).astype(np.float64)
    norms = np.sqrt((q * q).sum(axis=1))
    degenerate = norms < 1e-6
    q[degenerate] = (1.0, 0.0, 0.0, 0.0)
    norms[degenerate] = 1.0
    rotations = (q / norms[:, None]).astype(np.float32)
    scales = in_range(block(3 * n), *spec.scale_range).reshape(n, 3)
    opacities = in_range(block(n), *spec.opacity_range)
    sh = np.zeros((n, m + 1, 3), np.float32)
    sh[:, 0, :] = in_range(block(3 * n), *spec.dc_range).reshape(n, 3)
    if m:
        sh[:, 1:, :] = in_range(block(3 * m * n), *spec.rest_range).reshape(n, m, 3)
    return Scene(positions, rotations, scales, opacities, sh, spec.sh_degree)
