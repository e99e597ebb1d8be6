"""Synthetic PDE datasets: exact transport, viscous flow, and diffusion.

Three steppers produce frame sequences on periodic or bounded grids:

- :func:`advect_exact` solves constant-speed transport by shifting the
  initial field, using the spectral phase shift for fractional cell offsets
  so band-limited fields advance without interpolation error.
- :func:`burgers_step` advances a 2-component velocity field with first-order
  upwind convection plus central diffusion, sub-stepped to stay inside the
  explicit stability region.
- :func:`heat_step` is an explicit central-difference diffusion step for
  scalar fields with periodic, zero-extension, or insulated boundaries.

Datasets serialize to a little-endian binary container (see
:func:`write_dataset`) that round-trips every float bit-exactly.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

import numpy as np

from .errors import (
    DomainError,
    FormatError,
    RankError,
    ShapeMismatchError,
    StabilityError,
    UnsupportedBoundary,
)
from .tensor import BatchTensor, Shape

BOUNDARIES = ("periodic", "zero-extension", "insulated")
DATASET_MAGIC = b"DDLD"
DATASET_VERSION = 1
_KIND_CODES = {"advection": 0, "burgers": 1, "heat": 2, "external": 3}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_MAX_SUBSTEPS = 10**7


@dataclass(frozen=True)
class GridPde:
    """Physical parameters of a grid-discretized PDE instance.

    ``c`` is the per-dimension transport speed (length/time), ``nu`` the
    momentum diffusivity, ``alpha`` the thermal diffusivity (length^2/time).
    """

    dx: float
    dt: float
    c: tuple[float, ...] | None = None
    nu: float = 0.0
    alpha: float = 0.0
    boundary: str = "periodic"

    def __post_init__(self):
        if self.dx <= 0 or self.dt <= 0:
            raise DomainError(f"dx and dt must be positive, got {self.dx}, {self.dt}")
        if self.nu < 0 or self.alpha < 0:
            raise DomainError("diffusivities must be non-negative")
        if self.boundary not in BOUNDARIES:
            raise UnsupportedBoundary(f"unknown boundary {self.boundary!r}")
        if self.c is not None:
            object.__setattr__(self, "c", tuple(float(v) for v in self.c))


@dataclass(frozen=True)
class InitialCondition:
    """Declarative initial-field recipe consumed by :func:`generate_dataset`.

    kind "sine": diagonal plane wave at ``freq`` cycles per unit length.
    kind "bumps": ``n_bumps`` random Gaussian bumps per batch item/channel;
    ``center_margin`` and ``width_fraction_range`` control how far bumps stay
    from the boundary and how wide they are, as fractions of the extent.
    kind "harmonics": octave-spaced sine mixture from ``base_freq`` up to
    ``bandwidth``, optionally tapered by a centered Gaussian envelope.
    """

    kind: str
    freq: float | None = None
    n_bumps: int | None = None
    bandwidth: float | None = None
    base_freq: float = 0.5
    envelope_sigma: float | None = None
    amplitude_range: tuple[float, float] = (0.5, 1.5)
    width_fraction_range: tuple[float, float] = (0.05, 0.15)
    center_margin: float = 0.15


@dataclass(frozen=True)
class Dataset:
    """A frame sequence u^0..u^T plus the parameters that generated it."""

    kind: str
    frames: tuple[BatchTensor, ...]
    pde: GridPde
    seed: int
    meta: dict[str, str] = field(default_factory=dict)
    coeff_field: BatchTensor | None = None

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.kind not in _KIND_CODES:
            raise DomainError(f"unknown dataset kind {self.kind!r}")
        if not self.frames:
            raise ShapeMismatchError("a dataset needs at least one frame")
        dims = self.frames[0].dims
        for f in self.frames:
            if f.dims != dims:
                raise ShapeMismatchError("all frames must share one shape")

    @property
    def grid(self) -> Shape:
        return self.frames[0].shape

    @property
    def n_steps(self) -> int:
        return len(self.frames) - 1

    def equals(self, other: "Dataset") -> bool:
        return (
            self.kind == other.kind
            and self.pde == other.pde
            and self.seed == other.seed
            and self.meta == other.meta
            and len(self.frames) == len(other.frames)
            and all(a.equals(b) for a, b in zip(self.frames, other.frames))
        )


def _cell_centers(grid: Shape, dx: float) -> list[np.ndarray]:
    """Per-dimension physical coordinates of cell centers, broadcastable."""
    coords = []
    d = grid.ndim
    for i, n in enumerate(grid.spatial):
        x = (np.arange(n) + 0.5) * dx
        shape = [1] * d
        shape[i] = n
        coords.append(x.reshape(shape))
    return coords


def sin_field(freq: float, grid: Shape, dx: float) -> BatchTensor:
    """Diagonal plane wave sin(2*pi*f*(x_1+..+x_d)) sampled at cell centers."""
    if freq <= 0:
        raise DomainError(f"freq must be positive, got {freq}")
    coords = _cell_centers(grid, dx)
    phase = coords[0]
    for c in coords[1:]:
        phase = phase + c
    u = np.sin(2.0 * np.pi * freq * phase)
    out = np.broadcast_to(
        u[np.newaxis, ..., np.newaxis], grid.dims
    )
    return BatchTensor(np.ascontiguousarray(out))


def sample_bumps(
    rng: np.random.Generator,
    extents: Sequence[float],
    n_bumps: int,
    amplitude_range: tuple[float, float] = (0.5, 1.5),
    width_fraction_range: tuple[float, float] = (0.05, 0.15),
    center_margin: float = 0.15,
) -> list[tuple[tuple[float, ...], float, float]]:
    """Draw (center, sigma, amplitude) triples for Gaussian bumps.

    Centers stay ``center_margin`` of each extent away from the boundary so
    bumps decay before it; sigma is a fraction of the smallest extent.
    """
    if not 0 < center_margin < 0.5:
        raise DomainError(f"center_margin must be in (0, 0.5), got {center_margin}")
    lo, hi = amplitude_range
    wlo, whi = width_fraction_range
    smallest = min(extents)
    out = []
    for _ in range(n_bumps):
        center = tuple(
            rng.uniform(center_margin * L, (1 - center_margin) * L) for L in extents
        )
        sigma = rng.uniform(wlo, whi) * smallest
        amp = rng.uniform(lo, hi)
        out.append((center, sigma, amp))
    return out


def gaussian_bump_field(
    seed: int,
    grid: Shape,
    dx: float,
    n_bumps: int,
    amplitude_range: tuple[float, float] = (0.5, 1.5),
    width_fraction_range: tuple[float, float] = (0.05, 0.15),
    center_margin: float = 0.15,
) -> BatchTensor:
    """Sum of seeded random Gaussian bumps, drawn per batch item and channel."""
    if n_bumps < 1:
        raise DomainError(f"n_bumps must be >= 1, got {n_bumps}")
    rng = np.random.default_rng(seed)
    extents = tuple(n * dx for n in grid.spatial)
    coords = _cell_centers(grid, dx)
    out = np.zeros(grid.dims)
    for b in range(grid.batch):
        for ch in range(grid.channels):
            acc = np.zeros(grid.spatial)
            for center, sigma, amp in sample_bumps(
                rng, extents, n_bumps, amplitude_range,
                width_fraction_range, center_margin,
            ):
                sq = sum((x - m) ** 2 for x, m in zip(coords, center))
                acc += amp * np.exp(-0.5 * sq / sigma**2)
            out[b, ..., ch] = acc
    return BatchTensor(out)


def harmonic_field(
    seed: int,
    grid: Shape,
    dx: float,
    bandwidth: float,
    base_freq: float = 0.5,
    envelope_sigma: float | None = None,
    amplitude_range: tuple[float, float] = (0.7, 1.3),
) -> BatchTensor:
    """Octave-spaced sine mixture with spectral support inside [-B, B].

    Components sit at base_freq, 2*base_freq, 4*base_freq, .. up to
    ``bandwidth`` cycles per unit length, as diagonal plane waves with seeded
    amplitudes and phases per batch item/channel.  ``envelope_sigma`` (in
    length units) applies a centered Gaussian taper so fields decay toward
    the boundary.
    """
    if bandwidth <= 0 or base_freq <= 0:
        raise DomainError("bandwidth and base_freq must be positive")
    rng = np.random.default_rng(seed)
    coords = _cell_centers(grid, dx)
    phase_ax = coords[0]
    for c in coords[1:]:
        phase_ax = phase_ax + c
    freqs = []
    f = base_freq
    while f <= bandwidth * (1 + 1e-12):
        freqs.append(f)
        f *= 2
    lo, hi = amplitude_range
    env = 1.0
    if envelope_sigma is not None:
        extents = tuple(n * dx for n in grid.spatial)
        env = np.exp(
            -0.5
            * sum(((x - L / 2) / envelope_sigma) ** 2 for x, L in zip(coords, extents))
        )
    out = np.zeros(grid.dims)
    for b in range(grid.batch):
        for ch in range(grid.channels):
            acc = np.zeros(grid.spatial)
            for fc in freqs:
                acc += rng.uniform(lo, hi) * np.sin(
                    2.0 * np.pi * fc * phase_ax + rng.uniform(0.0, 2.0 * np.pi)
                )
            out[b, ..., ch] = acc * env
    return BatchTensor(out)


def advect_exact(u0: BatchTensor, pde: GridPde, t: float) -> BatchTensor:
    """Closed-form transport u(x, t) = u0(x - c*t) on a periodic grid.

    Whole-cell shifts are applied by rolling the array, which is exact for
    any field.  Fractional shifts use the spectral phase factor, exact for
    band-limited fields.
    """
    if pde.boundary != "periodic":
        raise UnsupportedBoundary("advect_exact requires a periodic boundary")
    if pde.c is None:
        raise DomainError("advect_exact requires transport speeds c")
    d = u0.ndim
    if len(pde.c) != d:
        raise RankError(f"c has {len(pde.c)} components for a rank-{d} grid")
    shifts = [ci * t / pde.dx for ci in pde.c]
    rounded = [round(s) for s in shifts]
    if all(abs(s - r) < 1e-9 for s, r in zip(shifts, rounded)):
        a = u0.data
        for axis, r in enumerate(rounded):
            n = u0.spatial[axis]
            if r % n:
                a = np.roll(a, r % n, axis=axis + 1)
        return BatchTensor(np.ascontiguousarray(a))
    spec = np.fft.fftn(u0.data, axes=range(1, d + 1))
    for axis, s in enumerate(shifts):
        n = u0.spatial[axis]
        k = np.fft.fftfreq(n)
        shape = [1] * u0.data.ndim
        shape[axis + 1] = n
        spec = spec * np.exp(-2j * np.pi * k * s).reshape(shape)
    out = np.fft.ifftn(spec, axes=range(1, d + 1)).real
    return BatchTensor(np.ascontiguousarray(out))


def _neighbor_sum(a: np.ndarray, spatial_axes: range, boundary: str) -> np.ndarray:
    """Sum of the 2d axis neighbors of every cell under the given boundary."""
    total = np.zeros_like(a)
    for axis in spatial_axes:
        if boundary == "periodic":
            total += np.roll(a, 1, axis=axis) + np.roll(a, -1, axis=axis)
        else:
            mode = "edge" if boundary == "insulated" else "constant"
            widths = [(0, 0)] * a.ndim
            widths[axis] = (1, 1)
            padded = np.pad(a, widths, mode=mode)
            lo = [slice(None)] * a.ndim
            hi = [slice(None)] * a.ndim
            lo[axis] = slice(0, a.shape[axis])
            hi[axis] = slice(2, a.shape[axis] + 2)
            total += padded[tuple(lo)] + padded[tuple(hi)]
    return total


def _substeps(total: float, limit: float) -> int:
    if not math.isfinite(total):
        raise StabilityError("non-finite stability number")
    n = max(1, math.ceil(total / limit - 1e-12))
    if n > _MAX_SUBSTEPS:
        raise StabilityError(f"stability requires {n} sub-steps; dt_sub underflow")
    return n


def heat_step(field_t: BatchTensor, pde: GridPde) -> BatchTensor:
    """Advance a scalar temperature field by one dt of explicit diffusion.

    Sub-steps internally so the per-step diffusion number alpha*dt_sub/dx^2
    never exceeds 1/(2d); the caller-visible dt is unrestricted.
    """
    d = field_t.ndim
    if field_t.channels != 1:
        raise DomainError("heat_step expects a single-channel scalar field")
    if d < 2:
        raise RankError("heat_step supports 2D and 3D grids")
    if pde.alpha == 0.0:
        return BatchTensor(field_t.data.copy())
    total = pde.alpha * pde.dt / pde.dx**2
    n_sub = _substeps(total, 1.0 / (2 * d))
    lam = total / n_sub
    a = field_t.data.copy()
    axes = range(1, d + 1)
    for _ in range(n_sub):
        a = a + lam * (_neighbor_sum(a, axes, pde.boundary) - 2 * d * a)
    return BatchTensor(np.ascontiguousarray(a))


def burgers_step(u: BatchTensor, pde: GridPde) -> BatchTensor:
    """Advance a 2D two-component velocity field by one dt.

    First-order upwind self-advection plus central-difference viscosity,
    sub-stepped so the convective Courant number stays <= 0.5 and the
    diffusion number <= 0.25 per sub-step.  Periodic boundary only.
    """
    if u.ndim != 2 or u.channels != 2:
        raise DomainError("burgers_step expects a 2D field with 2 channels")
    if pde.boundary != "periodic":
        raise UnsupportedBoundary("burgers_step requires a periodic boundary")
    vmax = float(np.max(np.abs(u.data)))
    n_conv = _substeps(vmax * pde.dt / pde.dx, 0.5) if vmax > 0 else 1
    n_diff = _substeps(pde.nu * pde.dt / pde.dx**2, 0.25) if pde.nu > 0 else 1
    n_sub = max(n_conv, n_diff)
    dt = pde.dt / n_sub
    dx = pde.dx
    a = u.data.copy()
    for _ in range(n_sub):
        vel = [a[..., 0], a[..., 1]]
        new = np.empty_like(a)
        for comp in range(2):
            phi = a[..., comp]
            conv = np.zeros_like(phi)
            for axis, w in enumerate(vel):
                ax = axis + 1
                back = (phi - np.roll(phi, 1, axis=ax)) / dx
                fwd = (np.roll(phi, -1, axis=ax) - phi) / dx
                conv += np.maximum(w, 0.0) * back + np.minimum(w, 0.0) * fwd
            lap = (
                np.roll(phi, 1, axis=1)
                + np.roll(phi, -1, axis=1)
                + np.roll(phi, 1, axis=2)
                + np.roll(phi, -1, axis=2)
                - 4 * phi
            ) / dx**2
            new[..., comp] = phi + dt * (pde.nu * lap - conv)
        a = new
    return BatchTensor(np.ascontiguousarray(a))


def _initial_field(ic: InitialCondition, grid: Shape, pde: GridPde, seed: int) -> BatchTensor:
    if ic.kind == "sine":
        if ic.freq is None:
            raise DomainError("sine initial condition needs freq")
        return sin_field(ic.freq, grid, pde.dx)
    if ic.kind == "bumps":
        if ic.n_bumps is None:
            raise DomainError("bumps initial condition needs n_bumps")
        return gaussian_bump_field(
            seed, grid, pde.dx, ic.n_bumps, ic.amplitude_range,
            ic.width_fraction_range, ic.center_margin,
        )
    if ic.kind == "harmonics":
        if ic.bandwidth is None:
            raise DomainError("harmonics initial condition needs bandwidth")
        return harmonic_field(
            seed, grid, pde.dx, ic.bandwidth, ic.base_freq, ic.envelope_sigma
        )
    raise DomainError(f"unknown initial condition kind {ic.kind!r}")


def generate_dataset(
    kind: str,
    grid: Shape,
    pde: GridPde,
    ic: InitialCondition,
    n_steps: int,
    seed: int,
) -> Dataset:
    """Produce frames u^0..u^T with the stepper selected by ``kind``."""
    if kind not in ("advection", "burgers", "heat"):
        raise DomainError(f"cannot generate dataset kind {kind!r}")
    if n_steps < 0:
        raise DomainError("n_steps must be >= 0")
    if kind == "burgers" and grid.channels != 2:
        raise DomainError("burgers datasets need 2 channels")
    if kind == "heat" and grid.channels != 1:
        raise DomainError("heat datasets need 1 channel")
    u0 = _initial_field(ic, grid, pde, seed)
    if kind == "advection":
        frames = [advect_exact(u0, pde, t * pde.dt) for t in range(n_steps + 1)]
    else:
        step = burgers_step if kind == "burgers" else heat_step
        frames = [u0]
        for _ in range(n_steps):
            frames.append(step(frames[-1], pde))
    meta = {"ic": ic.kind}
    if ic.freq is not None:
        meta["ic_freq"] = repr(float(ic.freq))
    if ic.bandwidth is not None:
        meta["ic_bandwidth"] = repr(float(ic.bandwidth))
    return Dataset(kind, tuple(frames), pde, seed, meta)


# --- binary container -------------------------------------------------------
#
# Layout, little-endian, in order:
#   magic "DDLD" | version u32 | kind u8 | d u8 | reserved u16
#   N_b u32 | N_1..N_d u32 | N_c u32 | T u32
#   dt f64 | dx f64 | c f64 x d | nu f64 | alpha f64 | seed u64
#   meta_len u32 | meta bytes (UTF-8 "key=value" lines)
#   (T+1) frames of row-major f64
#
# The boundary convention travels inside meta under the reserved key
# "boundary"; an unset transport speed is flagged by the reserved key "c".


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def write_dataset(path, ds: Dataset) -> None:
    """Serialize a dataset; floats round-trip bit-exactly."""
    if ds.coeff_field is not None:
        raise FormatError("coefficient fields are not representable in this container")
    grid = ds.grid
    d = grid.ndim
    c = ds.pde.c if ds.pde.c is not None else (0.0,) * d
    if len(c) != d:
        raise FormatError(f"c has {len(c)} components for a rank-{d} grid")
    meta = dict(ds.meta)
    meta["boundary"] = ds.pde.boundary
    if ds.pde.c is None:
        meta["c"] = "unset"
    meta_bytes = "\n".join(f"{k}={v}" for k, v in sorted(meta.items())).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIBBH", DATASET_MAGIC, DATASET_VERSION,
                             _KIND_CODES[ds.kind], d, 0))
        fh.write(struct.pack(f"<{d + 3}I", grid.batch, *grid.spatial, grid.channels,
                             ds.n_steps))
        fh.write(struct.pack(f"<2d{d}d2dQ", ds.pde.dt, ds.pde.dx, *c,
                             ds.pde.nu, ds.pde.alpha, ds.seed))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        for frame in ds.frames:
            fh.write(frame.data.tobytes())


def read_dataset(path) -> Dataset:
    """Parse a dataset container, rejecting unknown magic or version."""
    with open(path, "rb") as fh:
        magic, version, kind_code, d, _ = struct.unpack(
            "<4sIBBH", _read_exact(fh, 12, "header")
        )
        if magic != DATASET_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != DATASET_VERSION:
            raise FormatError(f"unsupported version {version}")
        if kind_code not in _KIND_NAMES:
            raise FormatError(f"unknown dataset kind code {kind_code}")
        if not 1 <= d <= 3:
            raise FormatError(f"unsupported spatial rank {d}")
        counts = struct.unpack(f"<{d + 3}I", _read_exact(fh, 4 * (d + 3), "extents"))
        batch, spatial, channels, n_steps = counts[0], counts[1:-2], counts[-2], counts[-1]
        scalars = struct.unpack(
            f"<2d{d}d2dQ", _read_exact(fh, 8 * (d + 5), "parameters")
        )
        dt, dx = scalars[0], scalars[1]
        c = tuple(scalars[2 : 2 + d])
        nu, alpha, seed = scalars[2 + d], scalars[3 + d], scalars[4 + d]
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "meta length"))
        meta_text = _read_exact(fh, meta_len, "meta").decode("utf-8")
        meta = {}
        for line in meta_text.splitlines():
            if line:
                k, _, v = line.partition("=")
                meta[k] = v
        boundary = meta.pop("boundary", "periodic")
        c_opt: tuple[float, ...] | None = c
        if meta.pop("c", None) == "unset":
            c_opt = None
        try:
            grid = Shape(batch, spatial, channels)
            pde = GridPde(dx=dx, dt=dt, c=c_opt, nu=nu, alpha=alpha, boundary=boundary)
        except Exception as exc:
            raise FormatError(f"invalid header values: {exc}") from exc
        frame_bytes = grid.count * 8
        frames = []
        for t in range(n_steps + 1):
            raw = _read_exact(fh, frame_bytes, f"frame {t}")
            arr = np.frombuffer(raw, dtype="<f8").reshape(grid.dims)
            frames.append(BatchTensor(arr.copy()))
        if fh.read(1):
            raise FormatError("trailing bytes after final frame")
    return Dataset(_KIND_NAMES[kind_code], tuple(frames), pde, seed, meta)
