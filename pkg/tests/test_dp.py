import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudparse.config import DeformationParams, EnergyParams
from cloudparse.dp import (DpProblem, build_dp_problem, dp_complexity_guard, solve_dp,
                           solve_membership_dp)
from cloudparse.energy import (NONE, ChainMembershipIndex, build_membership_index,
                               energy_data, energy_deformation)
from cloudparse.geometry import LandmarkShape, shape_normals
from cloudparse.preprocess import Chain


def random_problem(rng, n, L, starts=(0,), closed=False):
    un = rng.integers(-5, 6, (n, L)).astype(float)
    pw = rng.integers(-5, 6, (n, L, L)).astype(float)
    if not closed:
        pw[list(starts)] = 0
    return DpProblem(un, pw, starts, closed)


def brute(problem):
    L = problem.n_labels
    return min(problem.energy(c) for c in itertools.product(range(L), repeat=problem.n))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(1, 5))
def test_dp_matches_brute_force(seed, n, L):
    rng = np.random.default_rng(seed)
    starts = (0,) if n < 3 or rng.random() < 0.5 else (0, int(rng.integers(1, n)))
    p = random_problem(rng, n, L, starts)
    labels, e = solve_dp(p)
    assert e == brute(p)
    assert e == p.energy(labels)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(3, 6), st.integers(1, 4))
def test_closed_mode_matches_brute_force(seed, n, L):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, n, L, closed=True)
    assert solve_dp(p)[1] == brute(p)


def test_no_chains_gives_zero_displacement():
    D = DeformationParams.uniform(6, d_max=4)
    idx = ChainMembershipIndex(np.full((6, D.n_labels), NONE), (0,))
    labels, e = solve_dp(build_dp_problem(idx, EnergyParams(D)))
    assert np.all(labels == D.zero_label) and e == 0


def test_chain_offset_by_three_is_followed():
    n = 10
    pts = np.stack([np.arange(10, 10 + 3 * n, 3, dtype=float), np.full(n, 20.0)], axis=1)
    shape = LandmarkShape(pts)
    normals = shape_normals(shape)
    chain = Chain(0, np.stack([np.arange(0, 60), np.full(60, 23)], axis=1))
    alpha = 0.04
    delta = 9 * alpha * n / (n - 1) + 0.5
    prm = EnergyParams(DeformationParams.uniform(n, alpha=alpha, gamma=0.1, d_max=6), delta=delta,
                       snap_tol=0.4)
    idx = build_membership_index([chain], shape, normals, prm)
    labels, e = solve_dp(build_dp_problem(idx, prm))
    d = prm.deform.displacements()[labels]
    np.testing.assert_array_equal(d, 3.0)
    assert e == pytest.approx(n * 9 * alpha - (n - 1) * delta)


def test_complexity_numbers():
    def prob(n, L, starts=(0,)):
        return DpProblem(np.zeros((n, L)), np.zeros((n, L, L)), starts)
    assert dp_complexity_guard(prob(96, 31)) == (2976, 91_295)
    assert dp_complexity_guard(prob(2, 1)) == (2, 1)
    assert dp_complexity_guard(prob(96, 5, (0, 48)))[1] == 94 * 25


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_dp_beats_random_assignments(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, 12, 7, (0, 5))
    _, e = solve_dp(p)
    for _ in range(200):
        assert e <= p.energy(rng.integers(0, 7, 12))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_segments_solve_independently(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, 9, 4, (0, 4))
    joint, _ = solve_dp(p)
    a, _ = solve_dp(DpProblem(p.unary[:4], p.pairwise[:4], (0,)))
    b, _ = solve_dp(DpProblem(p.unary[4:], p.pairwise[4:], (0,)))
    np.testing.assert_array_equal(joint, np.concatenate([a, b]))


def test_ties_break_to_smaller_label_and_repeat():
    p = DpProblem(np.zeros((4, 3)), np.zeros((4, 3, 3)))
    labels, _ = solve_dp(p)
    assert labels.tolist() == [0, 0, 0, 0]
    rng = np.random.default_rng(5)
    q = random_problem(rng, 30, 9, (0, 11))
    np.testing.assert_array_equal(solve_dp(q)[0], solve_dp(q)[0])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_fused_solver_equals_explicit_problem(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 20))
    starts = (0,) if n < 4 else (0, int(rng.integers(1, n)))
    D = DeformationParams(rng.uniform(0, 0.2, n), rng.uniform(0, 0.5, n), d_max=4)
    prm = EnergyParams(D, delta=float(rng.uniform(0, 4)))
    idx = ChainMembershipIndex(rng.integers(-1, 3, (n, D.n_labels)), starts)
    labels, e = solve_dp(build_dp_problem(idx, prm))
    fused = solve_membership_dp(idx, prm)
    np.testing.assert_array_equal(fused, labels)
    assert e == pytest.approx(energy_data(labels, idx, prm.delta)
                              + energy_deformation(labels, D, starts), abs=1e-9)
