import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmu_gsa.attack import (AttackProfile, angle_distance, apply_gsa, canonical_angle, correct_measurements,
                            rotate_pairs, rotation_block)
from pmu_gsa.measurement import METER, synthesize

angles = st.floats(-20, 20, allow_nan=False)


@pytest.fixture(scope="module")
def z34(ieee34, ieee34_truth, placement34, noise):
    return synthesize(ieee34, ieee34_truth, placement34, noise, rng_seed=11)


def test_rotation_block():
    np.testing.assert_allclose(rotation_block(np.pi / 2), [[0, -1], [1, 0]], atol=1e-16)
    np.testing.assert_allclose(rotation_block(0.3) @ rotation_block(-0.3), np.eye(2), atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(angles)
def test_rotation_block_is_orthogonal(t):
    r = rotation_block(t)
    np.testing.assert_allclose(r.T @ r, np.eye(2), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(angles)
def test_canonical_angle_range(t):
    c = canonical_angle(t)
    assert -np.pi < c <= np.pi
    assert np.cos(c) == pytest.approx(np.cos(t), abs=1e-9)
    assert np.sin(c) == pytest.approx(np.sin(t), abs=1e-9)


def test_canonical_equivalences():
    assert canonical_angle(4.9 * np.pi) == pytest.approx(0.9 * np.pi)
    assert canonical_angle(-np.pi) == np.pi
    assert canonical_angle(1.9 * np.pi) == pytest.approx(-0.1 * np.pi)
    assert angle_distance(0.9 * np.pi, -0.9 * np.pi) == pytest.approx(0.2 * np.pi)


def test_profile_pins_substation():
    p = AttackProfile((0.7, 0.1, 0.2))
    assert p[1] == 0.0 and p[2] == 0.1
    np.testing.assert_array_equal(AttackProfile.from_psi([0, 0.5]).as_array(), [0, np.pi / 2])
    np.testing.assert_array_equal(AttackProfile.zeros(3).attacked(), [False, False, False])


def test_only_pmu_rows_rotate(z34):
    prof = AttackProfile.from_psi([0, 0, 0.5, 0, 0, 0])
    zs = apply_gsa(z34, prof)
    lay = z34.layout
    changed = np.flatnonzero(zs.values != z34.values)
    assert set(lay.pmu[changed]) == {3}
    meters = lay.kind == METER
    np.testing.assert_array_equal(zs.values[meters], z34.values[meters])
    np.testing.assert_array_equal(zs.variances, z34.variances)
    ph, ph_s = z34.phasors(), zs.phasors()
    sel = lay.pair_pmu == 3
    np.testing.assert_allclose(ph_s[sel], ph[sel] * 1j, atol=1e-15)
    np.testing.assert_allclose(np.abs(ph_s), np.abs(ph), rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.lists(angles, min_size=6, max_size=6))
def test_correct_inverts_apply(z34, psi):
    prof = AttackProfile(tuple(psi))
    back = correct_measurements(apply_gsa(z34, prof), prof)
    np.testing.assert_allclose(back.values, z34.values, atol=1e-12, rtol=0)


@settings(max_examples=40, deadline=None)
@given(st.lists(angles, min_size=6, max_size=6), st.lists(angles, min_size=6, max_size=6))
def test_rotations_compose(z34, a, b):
    pa, pb = AttackProfile(tuple(a)), AttackProfile(tuple(b))
    np.testing.assert_allclose(apply_gsa(apply_gsa(z34, pa), pb).values, apply_gsa(z34, pa + pb).values,
                               atol=1e-12)


def test_equivalent_angles_give_identical_data(z34):
    a = apply_gsa(z34, AttackProfile.from_psi([0, 0, -0.5, 0.2, -0.1, 4.9]))
    b = apply_gsa(z34, AttackProfile.from_psi([0, 0, -0.5, 0.2, -0.1, 0.9]))
    np.testing.assert_allclose(a.values, b.values, atol=1e-14)


def test_profile_too_short(z34):
    with pytest.raises(KeyError):
        rotate_pairs(z34, [0, 0.1])
