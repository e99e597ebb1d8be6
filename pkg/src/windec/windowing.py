"""Window decomposition of batched grids and its exact inverse.

The pipeline turns a batch of grid fields into a batch of small windows,
lets a predictor map each window to its center value, and reassembles the
per-center predictions into a full-domain field:

1. ``expand_domain`` zero-pads the grid so every spatial extent is a whole
   number of windows plus a half-window halo on each side.
2. ``chunk_domain`` converts ``(N_b, N_1..N_d, N_c)`` into a window batch
   ``(N_b * prod(B_i), W_1..W_d, N_c)`` through d split/stack rounds.
3. ``window_patch`` is the bit-exact inverse of ``chunk_domain``.
4. ``integrate_predictions`` sweeps one decomposition per in-window offset so
   that every cell of the original grid becomes the center of exactly one
   window, and gathers the predicted centers back into a full field.

Splitting or stacking a list of blocks touches each block once, so the
number of block moves per call grows linearly with the largest per-dimension
block count; ``CallCounter`` exposes that count for measurement.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DivisibilityError,
    PredictorContractError,
    ProbeDomainTooSmall,
    RankError,
    ShapeMismatchError,
)
from .tensor import BatchTensor, pad_zeros, slice_region, split, stack


@dataclass(frozen=True)
class WindowSpec:
    """Per-dimension window sizes; each must be odd and >= 3."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(w) for w in self.sizes))
        if not 1 <= len(self.sizes) <= 3:
            raise RankError(f"window rank must be 1..3, got {len(self.sizes)}")
        for w in self.sizes:
            if w < 3 or w % 2 == 0:
                raise ShapeMismatchError(f"window sizes must be odd and >= 3, got {w}")

    @classmethod
    def cube(cls, size: int, ndim: int) -> "WindowSpec":
        return cls((size,) * ndim)

    @property
    def ndim(self) -> int:
        return len(self.sizes)

    @property
    def radius(self) -> tuple[int, ...]:
        """Center-to-edge distance (W_i - 1) / 2 per dimension."""
        return tuple((w - 1) // 2 for w in self.sizes)

    @property
    def cells(self) -> int:
        return math.prod(self.sizes)


@dataclass(frozen=True)
class ExpansionRecord:
    """Bookkeeping needed to undo a domain expansion.

    ``step1`` is the extent after padding up to a whole number of windows,
    ``expanded`` after adding the half-window halo, ``blocks`` the number of
    windows per dimension, ``lead`` the leading halo width floor(W_i / 2).
    """

    original: tuple[int, ...]
    step1: tuple[int, ...]
    expanded: tuple[int, ...]
    blocks: tuple[int, ...]
    lead: tuple[int, ...]

    @classmethod
    def for_grid(cls, spatial: Sequence[int], w: WindowSpec) -> "ExpansionRecord":
        if len(spatial) != w.ndim:
            raise RankError(
                f"grid rank {len(spatial)} does not match window rank {w.ndim}"
            )
        original = tuple(int(n) for n in spatial)
        blocks = tuple((n - 1) // wi + 1 for n, wi in zip(original, w.sizes))
        step1 = tuple(b * wi for b, wi in zip(blocks, w.sizes))
        expanded = tuple(s + wi - 1 for s, wi in zip(step1, w.sizes))
        lead = tuple(wi // 2 for wi in w.sizes)
        return cls(original, step1, expanded, blocks, lead)


@dataclass
class CallCounter:
    """Tallies split/stack calls and the individual blocks they move."""

    split_calls: int = 0
    stack_calls: int = 0
    blocks_moved: int = 0

    def add(self, parts: int) -> None:
        self.split_calls += 1
        self.stack_calls += 1
        self.blocks_moved += 2 * parts


def expand_domain(t: BatchTensor, w: WindowSpec) -> tuple[BatchTensor, ExpansionRecord]:
    """Zero-pad ``t`` for whole-window decomposition plus the offset halo.

    Original data ends up at per-dimension offset floor(W_i / 2); every new
    cell is exactly 0.0.
    """
    rec = ExpansionRecord.for_grid(t.spatial, w)
    zeros = (0,) * t.ndim
    grown = pad_zeros(t, zeros, tuple(s - n for s, n in zip(rec.step1, rec.original)))
    trail = tuple(e - s - l for e, s, l in zip(rec.expanded, rec.step1, rec.lead))
    return pad_zeros(grown, rec.lead, trail), rec


def chunk_domain(
    t: BatchTensor, blocks: Sequence[int], counter: CallCounter | None = None
) -> BatchTensor:
    """Decompose a grid batch into a batch of windows.

    Dimension i is split into blocks[i] parts which are stacked onto the
    batch axis, one dimension at a time.  The resulting batch index layout is
    ``(..(j_d * B_{d-1} + j_{d-1})..) * N_b + b`` with the original batch
    index fastest and the block index of the last spatial dimension slowest.
    """
    blocks = tuple(int(b) for b in blocks)
    if len(blocks) != t.ndim:
        raise RankError(f"block counts must have rank {t.ndim}")
    for i, (n, b) in enumerate(zip(t.spatial, blocks)):
        if b < 1 or n % b != 0:
            raise DivisibilityError(
                f"spatial dim {i}: extent {n} not divisible into {b} blocks"
            )
    x = t
    for i, b in enumerate(blocks):
        x = stack(split(x, b, axis=i + 1), 0)
        if counter is not None:
            counter.add(b)
    return x


def window_patch(
    t: BatchTensor,
    batch: int,
    blocks: Sequence[int],
    counter: CallCounter | None = None,
) -> BatchTensor:
    """Reassemble a window batch into the grid batch it was chunked from.

    Exact inverse of :func:`chunk_domain`: undoes the split/stack rounds in
    reverse, peeling block groups of size ``batch * prod(blocks[:d-i-1])``
    off the batch axis and stacking them back onto spatial dimension d-i.
    """
    blocks = tuple(int(b) for b in blocks)
    d = t.ndim
    if len(blocks) != d:
        raise RankError(f"block counts must have rank {d}")
    expected = batch * math.prod(blocks)
    if batch < 1 or min(blocks) < 1 or t.batch != expected:
        raise ShapeMismatchError(
            f"batch extent {t.batch} != batch {batch} * prod(blocks {blocks})"
        )
    x = t
    for i in range(d):
        count = blocks[d - 1 - i]
        x = stack(split(x, count, axis=0), d - i)
        if counter is not None:
            counter.add(count)
    return x


def window_offsets(w: WindowSpec) -> list[tuple[int, ...]]:
    """All prod(W_i) per-dimension offsets, in lexicographic order."""
    return list(itertools.product(*(range(s) for s in w.sizes)))


def integrate_predictions(
    t: BatchTensor,
    w: WindowSpec,
    predictor,
    *,
    offsets: Iterable[tuple[int, ...]] | None = None,
    threads: int = 1,
    counter: CallCounter | None = None,
) -> BatchTensor:
    """Predict the next field for every cell of ``t`` via window sweeps.

    For each in-window offset the expanded domain is sliced, chunked into
    windows, passed through ``predictor.predict_batch``, and patched back;
    the center cell of every window lands in the output.  Across all offsets
    each original cell is written exactly once, so the result does not depend
    on offset order or on the evaluation schedule.
    """
    if w.ndim != t.ndim:
        raise RankError(f"window rank {w.ndim} does not match grid rank {t.ndim}")
    expanded, rec = expand_domain(t, w)
    extent = rec.step1
    d = t.ndim

    def predict_offset(p: tuple[int, ...]) -> np.ndarray:
        xp = slice_region(expanded, p, extent)
        windows = chunk_domain(xp, rec.blocks, counter)
        out = predictor.predict_batch(windows)
        want = (windows.batch, *(1,) * d, t.channels)
        if out.dims != want:
            raise PredictorContractError(
                f"predictor returned {out.dims}, expected {want}"
            )
        return window_patch(out, t.batch, rec.blocks, counter).data

    all_offsets = list(window_offsets(w) if offsets is None else offsets)
    # CallCounter increments are not synchronized, so counting forces serial
    if threads > 1 and counter is None and getattr(predictor, "concurrency_safe", False):
        with ThreadPoolExecutor(max_workers=threads) as pool:
            lattices = list(pool.map(predict_offset, all_offsets))
    else:
        lattices = [predict_offset(p) for p in all_offsets]

    canvas = np.zeros((t.batch, *rec.step1, t.channels))
    for p, lattice in zip(all_offsets, lattices):
        idx = (slice(None), *(slice(pi, None, wi) for pi, wi in zip(p, w.sizes)), slice(None))
        canvas[idx] = lattice
    crop = (slice(None), *(slice(0, n) for n in rec.original), slice(None))
    return BatchTensor(np.ascontiguousarray(canvas[crop]))


def apply_dense_stencil(field: np.ndarray, radius: int) -> np.ndarray:
    """One pass of an all-ones box stencil of the given radius, zero-extended."""
    d = field.ndim
    padded = np.pad(field, radius)
    out = np.zeros_like(field)
    for offs in itertools.product(range(2 * radius + 1), repeat=d):
        idx = tuple(slice(o, o + n) for o, n in zip(offs, field.shape))
        out += padded[idx]
    return out


def receptive_field_probe(
    stencil_radius: int, layers: int, probe_extent: int, ndim: int = 2
) -> tuple[int, ...]:
    """Measure how far a composed local stencil actually reaches.

    Applies ``layers`` passes of a dense all-ones stencil of the given radius
    to a centered unit impulse and returns the nonzero support width per
    dimension.  For a radius-r stencil over k layers the width must come out
    as 2*k*r + 1.
    """
    if stencil_radius < 1 or layers < 1:
        raise ProbeDomainTooSmall("radius and layers must be >= 1")
    if probe_extent <= 2 * layers * stencil_radius:
        raise ProbeDomainTooSmall(
            f"extent {probe_extent} cannot hold footprint "
            f"{2 * layers * stencil_radius + 1}"
        )
    x = np.zeros((probe_extent,) * ndim)
    x[tuple(n // 2 for n in x.shape)] = 1.0
    for _ in range(layers):
        x = apply_dense_stencil(x, stencil_radius)
    support = np.nonzero(x)
    return tuple(int(ax.max() - ax.min()) + 1 for ax in support)
