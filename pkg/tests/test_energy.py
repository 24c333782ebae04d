import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudparse.config import DeformationParams, EnergyParams, TransformPriorParams
from cloudparse.energy import (NONE, ChainLocator, ChainMembershipIndex, build_membership_index,
                               energy_data, energy_deformation, energy_total)
from cloudparse.geometry import LandmarkShape, SimilarityTransform, shape_normals
from cloudparse.preprocess import Chain, PointCloud, trace_chains
from cloudparse.shape_model import PcaInstance, PcaShapeModel


def index(table, starts=(0,)):
    return ChainMembershipIndex(np.asarray(table), tuple(starts))


def test_energy_data_examples():
    assert energy_data([0, 0, 0], index(np.full((3, 1), NONE)), 2.0) == 0
    assert energy_data([0, 0, 0], index(np.full((3, 1), 7)), 2.0) == -4
    assert energy_data([0, 0, 0, 0], index(np.full((4, 1), 7), (0, 2)), 2.0) == -4


@given(st.integers(0, 10_000), st.floats(0, 10), st.floats(0, 5))
def test_energy_data_scales_with_delta(seed, delta, c):
    rng = np.random.default_rng(seed)
    idx = index(rng.integers(-1, 3, (8, 5)), (0, 3))
    lab = rng.integers(0, 5, 8)
    assert energy_data(lab, idx, c * delta) == pytest.approx(c * energy_data(lab, idx, delta),
                                                             abs=1e-12)
    assert energy_data(lab, idx, delta) <= 0


def deform2(alpha=0.04, gamma=0.1, n=2, starts=(0,)):
    return DeformationParams.uniform(n, starts, alpha, gamma, d_max=5)


def labels_of(d, deform):
    return np.asarray(d) + deform.zero_label


def test_energy_deformation_examples():
    D = deform2()
    assert energy_deformation(labels_of([0, 0], D), D) == 0
    assert energy_deformation(labels_of([1, 3], D), D) == pytest.approx(0.8)
    D0 = deform2(alpha=0.0, n=5)
    assert energy_deformation(labels_of([2] * 5, D0), D0) == 0


@settings(max_examples=200)
@given(st.integers(0, 10_000))
def test_energy_deformation_is_psd(seed):
    rng = np.random.default_rng(seed)
    D = DeformationParams(rng.uniform(0, 1, 7), rng.uniform(0, 1, 7), d_max=4)
    lab = rng.integers(0, D.n_labels, 7)
    e = energy_deformation(lab, D, (0, 4))
    assert e >= 0
    d = D.displacements()[lab]
    if np.any(d != 0) and np.all(D.alpha > 0):
        assert e > 0


def simple_model(n=3):
    mu = LandmarkShape(np.stack([np.arange(n, dtype=float), np.zeros(n)], axis=1))
    P = np.zeros((n, 2))
    P[0, 0] = P[1, 1] = 1.0
    return PcaShapeModel(mu, P, np.zeros((n, 2)), [4.0, 1.0])


def test_energy_total_examples():
    model = simple_model()
    prior = TransformPriorParams(0.5, 2, 0.5, 10, 20, 1.0)
    D = DeformationParams.uniform(3, alpha=0.04, gamma=0.1, d_max=5)
    prm = EnergyParams(D, delta=2.0, rho=2.0, transform_prior=prior)
    empty = index(np.full((3, D.n_labels), NONE))
    zero = labels_of([0, 0, 0], D)
    centre = PcaInstance(SimilarityTransform(10, 20, 1, 0), [0, 0])
    assert energy_total(zero, centre, model, empty, prm) == 0
    full = index(np.full((3, D.n_labels), 7))
    lab = labels_of([0, 1, 3], D)  # 0.04*10 + 0.1*(1+4) = 0.9
    inst = PcaInstance(SimilarityTransform(12, 23, 1, 0), [2, 1])
    D2 = DeformationParams.uniform(3, alpha=0.04, gamma=0.1, d_max=5)
    e = energy_total(lab, inst, model, full, EnergyParams(D2, 2.0, 2.0, prior))
    assert e == pytest.approx(-4 + 0.9 + 4 + 5)
    lab2 = labels_of([1, 3, 3], D)  # 0.04*19 + 0.1*4 = 1.16
    assert energy_total(lab2, inst, model, full, prm) == pytest.approx(-4 + 1.16 + 4 + 5)
    bad = PcaInstance(SimilarityTransform(10, 20, 3, 0), [0, 0])
    assert energy_total(zero, bad, model, empty, prm) == math.inf


def test_energy_total_hand_example_from_parts():
    model = PcaShapeModel(LandmarkShape(np.array([[0.0, 0], [1, 0]])),
                          [[1.0, 0], [0, 1]], [[0.0, 0], [0, 0]], [4.0, 1.0])
    prior = TransformPriorParams(0.5, 2, 0.5, 0, 0, 1.0)
    D = DeformationParams.uniform(2, alpha=0.04, gamma=0.1, d_max=5)
    prm = EnergyParams(D, delta=2.0, rho=2.0, transform_prior=prior)
    # data on a 3-landmark model is -4; here the 2-landmark parts are 0.8 + 4 + 5 - 2
    idx = index(np.full((2, D.n_labels), 7))
    inst = PcaInstance(SimilarityTransform(2, 3, 1, 0), [2, 1])
    assert energy_total(labels_of([1, 3], D), inst, model, idx, prm) == pytest.approx(
        -2 + 0.8 + 4 + 5)


def test_membership_along_chain():
    pts = np.stack([np.arange(10, 30, 2, dtype=float), np.full(10, 15.0)], axis=1)
    shape = LandmarkShape(pts)
    chain = Chain(4, np.stack([np.arange(5, 35), np.full(30, 15)], axis=1))
    prm = EnergyParams.default(10, d_max=5)
    idx = build_membership_index([chain], shape, shape_normals(shape), prm)
    assert np.all(idx.table[:, prm.deform.zero_label] == 4)
    assert idx.table.shape == (10, prm.deform.n_labels)
    empty = build_membership_index([], shape, shape_normals(shape), prm)
    assert np.all(empty.table == NONE)


def test_membership_zero_tolerance_needs_exact_hits():
    shape = LandmarkShape(np.array([[10.0, 10.0], [12.0, 10.3], [14.0, 10.5]]))
    chain = Chain(0, np.array([[x, 10] for x in range(5, 20)]))
    prm = EnergyParams.default(3, d_max=2, snap_tol=0.0)
    idx = build_membership_index([chain], shape, np.tile([0.0, 1.0], (3, 1)), prm)
    z = prm.deform.zero_label
    assert idx.table[0, z] == 0
    assert idx.table[1, z] == NONE and idx.table[2, z] == NONE


def test_locator_ties_to_smaller_id():
    a = Chain(3, np.array([[10, 10]]))
    b = Chain(1, np.array([[12, 10]]))
    loc = ChainLocator([a, b])
    assert loc.lookup(np.array([[11.0, 10.0]]), 1.5)[0] == 1
    assert loc.lookup(np.array([[10.2, 10.0]]), 1.5)[0] == 3
    assert loc.lookup(np.array([[16.0, 10.0]]), 1.5)[0] == NONE


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.5, 1.0, 1.5, 2.5]))
def test_locator_matches_brute_force(seed, tol):
    rng = np.random.default_rng(seed)
    cloud = PointCloud(30, 30, rng.integers(0, 30, (60, 2)))
    chains = trace_chains(cloud)
    loc = ChainLocator(chains)
    q = rng.uniform(-3, 33, (50, 2))
    got = loc.lookup(q, tol)
    pix = np.vstack([c.pixels for c in chains])
    ids = np.concatenate([[c.id] * len(c) for c in chains])
    for p, g in zip(q, got):
        d = np.hypot(*(pix - p).T)
        m = d.min()
        want = NONE if m > tol + 1e-9 else ids[d <= m + 1e-12].min()
        assert g == want


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 1_000_000))
def test_energy_total_is_sum_of_parts(seed):
    from cloudparse.shape_model import prior_beta, prior_transform
    rng = np.random.default_rng(seed)
    model = simple_model(5)
    D = DeformationParams(rng.uniform(0, 1, 5), rng.uniform(0, 1, 5), d_max=3)
    prm = EnergyParams(D, rng.uniform(0, 5), rng.uniform(0, 5),
                       TransformPriorParams(0.5, 2, 0.5, 10, 10, rng.uniform(0, 2)))
    idx = index(rng.integers(-1, 3, (5, D.n_labels)), (0, 2))
    model = PcaShapeModel(model.mu.with_points(model.mu.points), model.Px, model.Py, model.lam)
    lab = rng.integers(0, D.n_labels, 5)
    inst = PcaInstance(SimilarityTransform(*rng.uniform(0, 20, 2), rng.uniform(0.6, 1.9),
                                           rng.uniform(-0.4, 0.4)), rng.normal(0, 2, 2))
    parts = (energy_data(lab, idx, prm.delta) + energy_deformation(lab, D, (0,))
             + prior_beta(model, inst.beta, prm.rho) + prior_transform(inst.A, prm.transform_prior))
    assert energy_total(lab, inst, model, idx, prm) == pytest.approx(parts, abs=1e-12)
