import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from centroid_lab.analysis import recover
from centroid_lab.detection import (
    CentroidHistogram,
    DetectionError,
    DetectorArray,
    ShiftPlan,
    centroid_histogram,
    default_rho,
    detector_indices,
    discrete_centroid,
    discretize,
    expected_multiphoton_fraction,
    multiphoton_fraction,
    run_plan,
    run_plan_bruteforce,
)
from centroid_lab.sampler import EventBatch, sample_events
from centroid_lab.states import JointGaussianState, NoonState


def test_array_invariants():
    a = DetectorArray(0.1, 0.0, 7.0)
    assert a.n_bins == 70
    assert DetectorArray(100.0).n_bins == 1
    with pytest.raises(DetectionError):
        DetectorArray(0.0)
    with pytest.raises(DetectionError):
        DetectorArray(0.1, rho=-1)


def test_detector_cells_are_half_open():
    a = DetectorArray(1.0, 0.25)
    # cell 0 covers [-0.25, 0.75)
    assert detector_indices([[-0.25, 0.7499999]], a).tolist() == [[0, 0]]
    assert detector_indices([[0.75, -0.2500001]], a).tolist() == [[1, -1]]


def test_default_rho():
    assert default_rho(2) == 7.0
    assert default_rho(4) == pytest.approx(3.5)


def test_discretize_examples():
    batch = EventBatch(np.array([[0.349, -0.351]]))
    out = discretize(batch, DetectorArray(0.1))
    np.testing.assert_allclose(out.positions, [[0.3, -0.4]], atol=1e-15)
    again = discretize(out, DetectorArray(0.1))
    np.testing.assert_array_equal(again.positions, out.positions)


@settings(max_examples=50)
@given(
    x=st.lists(st.floats(-10, 10), min_size=3, max_size=3),
    d0=st.floats(1e-3, 2.0),
    s=st.floats(-1, 1),
)
def test_discretisation_error_bounded(x, d0, s):
    array = DetectorArray(d0, s)
    batch = EventBatch(np.array([x]))
    out = discretize(batch, array)
    assert np.all(np.abs(out.positions - batch.positions) <= d0 / 2 * (1 + 1e-9))
    X = discrete_centroid(out.positions[0], array)
    assert X == pytest.approx(out.positions[0].mean(), abs=1e-9)
    assert abs(X - np.mean(x)) <= d0 / 2 * (1 + 1e-9)


def test_discrete_centroid_examples():
    a = DetectorArray(0.1)
    assert discrete_centroid([0.3, 0.5], a) == pytest.approx(0.4)
    assert discrete_centroid([0.7, 0.7, 0.7], a) == pytest.approx(0.7)
    assert discrete_centroid([0.3, 0.4], a) == pytest.approx(0.35)
    with pytest.raises(DetectionError):
        discrete_centroid([0.31, 0.4], a)


def test_shift_plan():
    plan = ShiftPlan(0.001, 4, "II")
    assert plan.detector_size == pytest.approx(0.004)
    np.testing.assert_allclose(plan.shifts, [0, 0.001, 0.002, 0.003])
    for bad in (dict(base_size=0, multiplier=1), dict(base_size=1, multiplier=0),
                dict(base_size=1, multiplier=1.5), dict(base_size=1, multiplier=1, method="III")):
        with pytest.raises(DetectionError):
            ShiftPlan(**bad)


@pytest.fixture(scope="module")
def noon_batch():
    return sample_events(NoonState(2), 20_000, 3)


def test_m1_methods_identical(noon_batch):
    a = run_plan(noon_batch, ShiftPlan(0.01, 1, "I"))
    b = run_plan(noon_batch, ShiftPlan(0.01, 1, "II"))
    np.testing.assert_array_equal(a.counts, b.counts)


def test_pooled_counts(noon_batch):
    rho = 200.0  # wide enough that nothing is excluded
    one = run_plan(noon_batch, ShiftPlan(0.01, 1), rho)
    two = run_plan(noon_batch, ShiftPlan(0.01, 2, "I"), rho)
    assert two.total == 2 * one.total == 2 * noon_batch.n_events
    three = run_plan(noon_batch, ShiftPlan(0.01, 3, "II"), rho)
    assert three.total == 3 * (noon_batch.n_events // 3)


@settings(max_examples=40, deadline=None)
@given(
    n=st.sampled_from([2, 3, 4]),
    m=st.integers(1, 70),
    base=st.sampled_from([0.001, 0.01, 0.037]),
    seed=st.integers(0, 1000),
)
def test_fast_pooling_matches_bruteforce(n, m, base, seed):
    batch = sample_events(JointGaussianState(n, 1.0, 1.0), 500, seed)
    plan = ShiftPlan(base, m, "I")
    rho = default_rho(n) * 0.3
    fast = run_plan(batch, plan, rho)
    slow = run_plan_bruteforce(batch, plan, rho)
    np.testing.assert_array_equal(fast.counts, slow.counts)
    assert fast.excluded == slow.excluded


def test_shifted_union_stays_on_base_lattice(noon_batch):
    base = run_plan(noon_batch, ShiftPlan(0.01, 1))
    lattice = set(np.round(base.bin_centers / base.bin_width).astype(int))
    for m in (2, 5, 8):
        pooled = run_plan(noon_batch, ShiftPlan(0.01, m))
        assert pooled.bin_width == base.bin_width
        occupied = np.round(pooled.occupied() / base.bin_width, 6)
        assert np.all(occupied == np.round(occupied))
        assert set(occupied.astype(int)) <= lattice


def test_reachable_bins():
    batch = sample_events(NoonState(2), 1000, 1)
    h = run_plan(batch, ShiftPlan(0.01, 4))
    # centroid lattice indices are 2j + 4*sum(i) for j < 4: all even indices
    k = h.k_min + np.arange(h.counts.size)
    np.testing.assert_array_equal(h.reachable, k % 2 == 0)
    assert np.all(h.counts[~h.reachable] == 0)


def test_single_array_histogram_matches_plan(noon_batch):
    a = centroid_histogram(noon_batch, DetectorArray(0.05, 0.0, 7.0))
    b = run_plan(noon_batch, ShiftPlan(0.05, 1), 7.0)
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_allclose(a.bin_centers, b.bin_centers, atol=1e-12)


def test_tiny_detectors_reproduce_continuous_centroids():
    state = NoonState(2)
    batch = sample_events(state, 200_000, 4)
    width = 0.005
    edges = (np.arange(-700, 702) - 0.5) * width
    cont, _ = np.histogram(batch.centroids, edges)
    disc_batch = discretize(batch, DetectorArray(1e-6))
    disc, _ = np.histogram(disc_batch.centroids, edges)

    def rms(counts):
        hist = CentroidHistogram(width, -700, counts, np.ones(counts.size, bool))
        return recover(hist, state).rms

    assert rms(disc) == pytest.approx(rms(cont), rel=0.01)


def test_method_ii_needs_enough_events():
    batch = sample_events(NoonState(2), 3, 1)
    with pytest.raises(DetectionError):
        run_plan(batch, ShiftPlan(0.01, 4, "II"))


def test_multiphoton_fraction_limits():
    batch = sample_events(NoonState(2), 10_000, 1)
    assert multiphoton_fraction(batch, DetectorArray(1e4)) == 1.0
    assert multiphoton_fraction(batch, DetectorArray(1e-7)) == 0.0


def test_expected_fraction_matches_counting():
    state = NoonState(2)
    batch = sample_events(state, 10**6, 12)
    for d0 in (0.1, 0.3, 1.0):
        p = expected_multiphoton_fraction(state, DetectorArray(d0))
        f = multiphoton_fraction(batch, DetectorArray(d0))
        assert abs(f - p) < 5 * math.sqrt(p * (1 - p) / batch.n_events)
    assert expected_multiphoton_fraction(state, DetectorArray(1e4)) == pytest.approx(1.0, abs=1e-9)


def test_expected_fraction_three_photons_matches_counting():
    state = NoonState(3)
    batch = sample_events(state, 10**6, 13)
    p = expected_multiphoton_fraction(state, DetectorArray(0.5))
    f = multiphoton_fraction(batch, DetectorArray(0.5))
    assert abs(f - p) < 5 * math.sqrt(p / batch.n_events)
