import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from windec import (
    BatchTensor,
    CallCounter,
    DivisibilityError,
    ExpansionRecord,
    GridPde,
    IdentityPredictor,
    PredictorContractError,
    ProbeDomainTooSmall,
    RankError,
    Shape,
    ShapeMismatchError,
    UpwindStencil,
    WindowSpec,
    chunk_domain,
    expand_domain,
    impulse,
    integrate_predictions,
    receptive_field_probe,
    slice_region,
    window_offsets,
    window_patch,
)
from windec.windowing import apply_dense_stencil
from oracles import brute_offsets, chunk_batch_index, expansion_formula, gather_window, upwind_full


def rand_tensor(rng, dims):
    return BatchTensor(rng.standard_normal(dims))


# --- WindowSpec / ExpansionRecord ---------------------------------------------


def test_window_spec_rejects_even_and_tiny():
    with pytest.raises(ShapeMismatchError):
        WindowSpec((4,))
    with pytest.raises(ShapeMismatchError):
        WindowSpec((3, 1))
    assert WindowSpec((5, 3)).radius == (2, 1)


def test_expand_9x9_w3_gives_11x11():
    t = BatchTensor(np.zeros((1, 9, 9, 1)))
    _, rec = expand_domain(t, WindowSpec((3, 3)))
    assert rec.expanded == (11, 11)
    assert rec.blocks == (3, 3)


def test_expand_7x7_w3_step1_is_9x9_expanded_11x11():
    rng = np.random.default_rng(0)
    t = rand_tensor(rng, (1, 7, 7, 1))
    grown, rec = expand_domain(t, WindowSpec((3, 3)))
    assert rec.step1 == (9, 9)
    assert rec.expanded == (11, 11)
    assert rec.blocks == (3, 3)
    assert grown.dims == (1, 11, 11, 1)
    # original sits at the lead offset, everything else is exactly zero
    assert np.array_equal(grown.data[:, 1:8, 1:8, :], t.data)
    assert math.fsum(grown.data.ravel()) == math.fsum(t.data.ravel())


def test_expand_rank_mismatch():
    t = BatchTensor(np.zeros((1, 9, 9, 1)))
    with pytest.raises(RankError):
        expand_domain(t, WindowSpec((3,)))


@given(st.integers(1, 64), st.sampled_from([3, 5, 7, 9, 11]))
def test_expansion_formulas(n, w):
    rec = ExpansionRecord.for_grid((n,), WindowSpec((w,)))
    expanded, blocks = expansion_formula(n, w)
    assert rec.expanded == (expanded,)
    assert rec.blocks == (blocks,)
    assert rec.step1 == (blocks * w,)
    assert rec.step1[0] >= n
    assert rec.lead == (w // 2,)


def test_slice_recovers_expanded_field():
    rng = np.random.default_rng(1)
    t = rand_tensor(rng, (1, 9, 9, 1))
    grown, rec = expand_domain(t, WindowSpec((3, 3)))
    back = slice_region(grown, rec.lead, rec.original)
    assert back.equals(t)


# --- chunk_domain / window_patch ----------------------------------------------


def test_chunk_canonical_shape():
    rng = np.random.default_rng(2)
    t = rand_tensor(rng, (4, 9, 9, 1))
    assert chunk_domain(t, (3, 3)).dims == (36, 3, 3, 1)


def test_chunk_unit_blocks_identity():
    rng = np.random.default_rng(3)
    t = rand_tensor(rng, (2, 4, 6, 1))
    assert chunk_domain(t, (1, 1)).equals(t)


def test_chunk_windows_match_hyper_rectangles():
    rng = np.random.default_rng(4)
    t = rand_tensor(rng, (4, 9, 9, 1))
    blocks = (3, 3)
    chunked = chunk_domain(t, blocks)
    for j1 in range(3):
        for j2 in range(3):
            for b in range(4):
                k = chunk_batch_index(4, blocks, b, (j1, j2))
                expected = gather_window(t.data[b : b + 1], (3, 3), (j1, j2))
                assert np.array_equal(chunked.data[k : k + 1], expected)


def test_chunk_divisibility_error():
    t = BatchTensor(np.zeros((1, 9, 8, 1)))
    with pytest.raises(DivisibilityError):
        chunk_domain(t, (3, 3))


def test_patch_canonical_shape_and_errors():
    rng = np.random.default_rng(5)
    t = rand_tensor(rng, (36, 3, 3, 1))
    assert window_patch(t, 4, (3, 3)).dims == (4, 9, 9, 1)
    with pytest.raises(ShapeMismatchError):
        window_patch(t, 5, (3, 3))


def test_patch_unit_blocks_identity():
    rng = np.random.default_rng(6)
    t = rand_tensor(rng, (3, 4, 1))
    assert window_patch(t, 3, (1,)).equals(t)


@st.composite
def chunkable(draw):
    d = draw(st.integers(1, 3))
    batch = draw(st.integers(1, 3))
    channels = draw(st.integers(1, 2))
    blocks = tuple(draw(st.integers(1, 4)) for _ in range(d))
    cells = tuple(draw(st.integers(1, 4)) for _ in range(d))
    extents = tuple(b * c for b, c in zip(blocks, cells))
    seed = draw(st.integers(0, 2**32 - 1))
    data = np.random.default_rng(seed).standard_normal((batch, *extents, channels))
    return BatchTensor(data), blocks


@given(chunkable())
def test_patch_of_chunk_round_trips_bit_exactly(case):
    t, blocks = case
    assert window_patch(chunk_domain(t, blocks), t.batch, blocks).equals(t)


def test_call_counter_linear_in_largest_block_count():
    rng = np.random.default_rng(7)
    counts = {}
    for b_max in (4, 8, 16, 32):
        blocks = (b_max, 2)
        t = rand_tensor(rng, (1, 3 * b_max, 6, 1))
        counter = CallCounter()
        window_patch(chunk_domain(t, blocks, counter), 1, blocks, counter)
        # each of the two rounds per algorithm moves every block twice
        assert counter.blocks_moved == 4 * (b_max + 2)
        assert counter.split_calls == counter.stack_calls == 4
        counts[b_max] = counter.blocks_moved
    growth = [counts[2 * b] / counts[b] for b in (4, 8, 16)]
    assert all(1.5 < g <= 2.0 for g in growth)


# --- window_offsets -----------------------------------------------------------


def test_offsets_count_and_order():
    offs = window_offsets(WindowSpec((3, 3)))
    assert len(offs) == 9
    assert offs == brute_offsets((3, 3))
    assert window_offsets(WindowSpec((3,))) == [(0,), (1,), (2,)]
    offs35 = window_offsets(WindowSpec((3, 5)))
    assert len(offs35) == 15
    assert len(set(offs35)) == 15


# --- integrate_predictions ----------------------------------------------------


def test_integrate_identity_returns_input_exactly():
    rng = np.random.default_rng(8)
    t = rand_tensor(rng, (2, 9, 9, 1))
    out = integrate_predictions(t, WindowSpec((3, 3)), IdentityPredictor(2))
    assert out.equals(t)


@pytest.mark.parametrize("sizes,extents", [
    ((3, 3), (9, 7)),
    ((5, 3), (8, 9)),
    ((3,), (10,)),
    ((3, 3, 3), (5, 4, 6)),
])
def test_integrate_write_coverage_is_a_partition(sizes, extents):
    w = WindowSpec(sizes)
    rec = ExpansionRecord.for_grid(extents, w)
    counts = np.zeros(rec.step1, dtype=int)
    for p in window_offsets(w):
        lattice = tuple(slice(pi, None, wi) for pi, wi in zip(p, w.sizes))
        counts[lattice] += 1
    assert np.all(counts == 1)
    original = tuple(slice(0, n) for n in extents)
    assert np.all(counts[original] == 1)


def test_integrate_offset_order_is_irrelevant():
    rng = np.random.default_rng(9)
    t = rand_tensor(rng, (1, 8, 6, 1))
    w = WindowSpec((3, 3))
    pde = GridPde(dx=1.0, dt=1.0, c=(0.7, -0.3))
    pred = UpwindStencil(pde, w)
    base = integrate_predictions(t, w, pred)
    offs = window_offsets(w)
    shuffled = [offs[i] for i in rng.permutation(len(offs))]
    again = integrate_predictions(t, w, pred, offsets=shuffled)
    assert again.equals(base)


def test_integrate_threads_match_serial():
    rng = np.random.default_rng(10)
    t = rand_tensor(rng, (2, 9, 9, 1))
    w = WindowSpec((3, 3))
    pred = UpwindStencil(GridPde(dx=1.0, dt=1.0, c=(1.0, 0.4)), w)
    serial = integrate_predictions(t, w, pred, threads=1)
    threaded = integrate_predictions(t, w, pred, threads=4)
    assert threaded.equals(serial)


def test_integrate_matches_full_domain_upwind():
    rng = np.random.default_rng(11)
    t = rand_tensor(rng, (2, 12, 10, 1))
    w = WindowSpec((5, 5))
    pde = GridPde(dx=0.5, dt=1.0, c=(0.55, -0.4))
    pred = UpwindStencil(pde, w)
    out = integrate_predictions(t, w, pred)
    expected = upwind_full(t.data, pred.courant)
    assert np.max(np.abs(out.data - expected)) <= 1e-12


def test_integrate_rejects_bad_predictor_output():
    class Wrong:
        concurrency_safe = False
        radius = (0, 0)

        def predict_batch(self, windows):
            return windows  # full windows instead of centers

    t = BatchTensor(np.zeros((1, 9, 9, 1)))
    with pytest.raises(PredictorContractError):
        integrate_predictions(t, WindowSpec((3, 3)), Wrong())


# --- receptive field probe ----------------------------------------------------


def test_probe_examples():
    assert receptive_field_probe(1, 1, 9) == (3, 3)
    assert receptive_field_probe(1, 4, 15) == (9, 9)
    assert receptive_field_probe(2, 3, 17) == (13, 13)


def test_probe_rejects_small_domain():
    with pytest.raises(ProbeDomainTooSmall):
        receptive_field_probe(2, 3, 12)


def test_impulse_through_one_radius1_stencil_has_width_3():
    field = impulse(Shape(1, (9, 9), 1), (4, 4)).data[0, :, :, 0]
    out = apply_dense_stencil(field, 1)
    rows = np.nonzero(out.any(axis=1))[0]
    cols = np.nonzero(out.any(axis=0))[0]
    assert rows.max() - rows.min() + 1 == 3
    assert cols.max() - cols.min() + 1 == 3
