import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixpoint.hilbert import AffineSubspace, Ball, norm
from fixpoint.operators import (
    AlphaSchedule,
    FixedPointSet,
    OpClass,
    Semigroup,
    ScheduleError,
    TimeSchedule,
    affine_map,
    cesaro_by_quadrature,
    cesaro_family,
    check_sweep_prefix,
    constant_family,
    gamma_tower,
    halve,
    identity,
    random_nonexpansive_affine,
    random_subspace,
    relax,
    rotation_matrix,
    scaled_identity,
    semigroup_family_at_times,
    semigroup_linear_psd,
    semigroup_rotation,
    subspace_projection,
    subspace_reflection,
    triangular_time,
    unhalve,
    zoo,
)

from .oracles import quad_matrix

seeds = st.integers(0, 2 ** 32 - 1)


def line_in_plane(angle):
    return AffineSubspace(np.zeros(2), np.array([[math.cos(angle)], [math.sin(angle)]]))


# -- halve / relax


def test_halve_identity_is_identity():
    T = halve(identity(3))
    x = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(T(x), x)


def test_halve_negative_identity_is_zero():
    T = halve(scaled_identity(2, -1.0))
    np.testing.assert_array_equal(T(np.array([3.0, -7.0])), [0, 0])
    assert T.kind is OpClass.FIRMLY_NONEXPANSIVE


@given(seeds)
def test_halved_reflection_is_projection(seed):
    rng = np.random.default_rng(seed)
    L = line_in_plane(rng.uniform(0, np.pi))
    T = halve(subspace_reflection(L))
    u = L.basis[:, 0]
    for x in 5 * rng.standard_normal((20, 2)):
        # projection onto a line through 0 by its unit direction
        np.testing.assert_allclose(T(x), (x @ u) * u, atol=1e-12)


def test_unhalve_inverts_halve():
    rng = np.random.default_rng(0)
    R = random_nonexpansive_affine(rng, 4)
    back = unhalve(halve(R))
    x = rng.standard_normal(4)
    np.testing.assert_allclose(back(x), R(x), atol=1e-12)


def test_halve_quasi_gives_tc_class():
    Rq = affine_map(-np.eye(2), kind=OpClass.QUASI_NONEXPANSIVE)
    assert halve(Rq).kind is OpClass.TC


def test_relax_full_step_is_identity_operation():
    T = subspace_projection(line_in_plane(0.3))
    fam = relax(T, 1.0)
    x = np.array([2.0, -1.0])
    np.testing.assert_array_equal(fam.at(5)(x), T(x))


def test_relax_half_of_zero_map():
    fam = relax(scaled_identity(2, 0.0), 0.5)
    np.testing.assert_allclose(fam.at(0)(np.array([4.0, -2.0])), [2.0, -1.0])


def test_relax_preserves_fixed_points():
    rng = np.random.default_rng(5)
    R = random_nonexpansive_affine(rng, 4, n_fixed=2)
    T = halve(R)
    lam = rng.uniform(0.3, 1.0, size=50)
    fam = relax(T, lambda n: lam[n % 50], delta=0.3)
    for p in R.fixed.sample(rng, 10):
        for n in range(50):
            assert norm(fam.at(n)(p) - p) < 1e-12 * (1 + norm(p))


def test_relax_rejects_out_of_range():
    T = identity(2)
    with pytest.raises(ValueError):
        relax(T, 1.5)
    with pytest.raises(ValueError):
        relax(T, 0.0005, delta=1e-3)
    with pytest.raises(ValueError):
        relax(T, lambda n: 1.0 if n < 10 else 0.0)


# -- alpha schedules and the tower


def test_tower_single_level_collapses():
    rng = np.random.default_rng(1)
    R = random_nonexpansive_affine(rng, 3)
    tower = gamma_tower([constant_family(R)], AlphaSchedule.constant([0.0]))
    x = rng.standard_normal(3)
    np.testing.assert_allclose(tower.at(7)(x), R(x), atol=1e-15)


def test_alpha_bounds_rejected():
    with pytest.raises(ScheduleError):
        AlphaSchedule.constant([0.0, 1.0]).validate()
    with pytest.raises(ScheduleError):
        AlphaSchedule.constant([0.95]).validate()
    with pytest.raises(ScheduleError):
        AlphaSchedule.constant([0.0, 0.05]).validate()
    with pytest.raises(ScheduleError):
        AlphaSchedule.constant([0.0], a=0.5, b=0.4)
    AlphaSchedule.constant([0.0, 0.5]).validate()


def test_tower_level_count_mismatch():
    fam = constant_family(identity(2))
    with pytest.raises(ValueError):
        gamma_tower([fam, fam], AlphaSchedule.constant([0.0]))


@given(seeds)
def test_two_level_tower_hand_expansion(seed):
    rng = np.random.default_rng(seed)
    L = line_in_plane(rng.uniform(0, np.pi))
    P = subspace_projection(L)
    fam = constant_family(P)
    tower = gamma_tower([fam, fam], AlphaSchedule.constant([0.0, 0.5]))
    for x in 4 * rng.standard_normal((10, 2)):
        expected = L.project((x + L.project(x)) / 2)
        np.testing.assert_allclose(tower.at(3)(x), expected, atol=1e-12)


@settings(max_examples=30)
@given(seeds, st.integers(1, 4))
def test_tower_keeps_common_fixed_points(seed, depth):
    rng = np.random.default_rng(seed)
    d = 4
    # maps sharing one fixed point p
    p = rng.standard_normal(d)
    fams = []
    for _ in range(depth):
        Q = np.linalg.qr(rng.standard_normal((d, d)))[0] * rng.uniform(0.2, 1.0)
        fams.append(constant_family(affine_map(Q, p - Q @ p)))
    alphas = AlphaSchedule.constant([0.0] + list(rng.uniform(0.2, 0.8, depth - 1)))
    tower = gamma_tower(fams, alphas)
    for n in range(5):
        assert norm(tower.at(n)(p) - p) <= 1e-10 * (1 + norm(p))


@settings(max_examples=20)
@given(seeds)
def test_tower_nonexpansive_on_pairs(seed):
    rng = np.random.default_rng(seed)
    fams = [constant_family(random_nonexpansive_affine(rng, 3)) for _ in range(3)]
    tower = gamma_tower(fams, AlphaSchedule.constant([0.0, 0.3, 0.6]))
    G = tower.at(0)
    for x, y in 3 * rng.standard_normal((100, 2, 3)):
        assert norm(G(x) - G(y)) <= norm(x - y) + 1e-9


# -- nonexpansiveness of built-in maps


@settings(max_examples=10, deadline=None)
@given(seeds, st.integers(1, 6))
def test_zoo_maps_nonexpansive(seed, d):
    rng = np.random.default_rng(seed)
    for T in zoo(d, rng):
        xs = 5 * rng.standard_normal((1000, 2, d))
        gaps = [norm(T(x) - T(y)) - norm(x - y) for x, y in xs]
        assert max(gaps) <= 1e-9, T.name


def test_zoo_fixed_point_sets_exact():
    rng = np.random.default_rng(2)
    for T in zoo(5, rng):
        for p in T.fixed.sample(rng, 5):
            assert norm(T(p) - p) <= 1e-10 * (1 + norm(p)), T.name


# -- time schedules


def test_triangular_starts_at_zero():
    assert triangular_time(0) == 0.0
    S = semigroup_rotation([1.0], 1)
    fam = semigroup_family_at_times(S, TimeSchedule.triangular())
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(fam.at(0)(x), x)


def test_triangular_block_increments():
    sched = TimeSchedule.triangular()
    for k in range(1, 40):
        lo, hi = k * k - 1, (k + 1) ** 2 - 1
        block = sched.prefix(hi + 1)[lo:hi + 1]
        # block k goes 0 -> 1 -> 0; the next block starts at 0 again
        assert block[0] == 0.0 and block[-1] == 0.0
        assert block.max() == 1.0
        assert np.max(np.abs(np.diff(block))) == pytest.approx(1.0 / k, abs=1e-15)


def test_triangular_meets_sweep_conditions():
    info = check_sweep_prefix(TimeSchedule.triangular())
    assert info["ok"]
    assert info["tail_min"] == 0.0 and info["tail_max"] == 1.0


def test_schedule_validation():
    with pytest.raises(ScheduleError):
        TimeSchedule("weird")
    with pytest.raises(ScheduleError):
        TimeSchedule.custom([])
    with pytest.raises(ScheduleError):
        TimeSchedule.custom([1.0, -1.0])
    S = semigroup_rotation([1.0], 0)
    with pytest.raises(ScheduleError):
        semigroup_family_at_times(S, TimeSchedule.custom([1.0, 2.0]))
    with pytest.raises(ScheduleError):
        cesaro_family(S, TimeSchedule.custom([0.0, 1.0]))
    assert TimeSchedule.divergent()(0) == 1.0


# -- semigroups


def test_zero_generator_is_identity():
    S = semigroup_linear_psd(np.zeros((3, 3)))
    x = np.array([1.0, -1.0, 2.0])
    for t in (0.0, 0.7, 50.0):
        np.testing.assert_allclose(S.at(t)(x), x)
    np.testing.assert_allclose(S.cesaro(3.0)(x), x)
    fam = semigroup_family_at_times(S, TimeSchedule.triangular())
    np.testing.assert_allclose(fam.at(17)(x), x)


def test_linear_psd_diag_values():
    S = semigroup_linear_psd(np.diag([1.0, 0.0]))
    np.testing.assert_allclose(S.at(1.0).matrix, np.diag([math.exp(-1), 1.0]), atol=1e-15)
    ref = quad_matrix(lambda s: np.diag([math.exp(-s), 1.0]), 0.0, 1.0, (2, 2))
    np.testing.assert_allclose(S.cesaro(1.0).matrix, ref, atol=1e-12)
    np.testing.assert_allclose(ref, np.diag([1 - math.exp(-1), 1.0]), atol=1e-12)


def test_scalar_cesaro_value():
    S = semigroup_linear_psd(np.array([[1.0]]))
    ref = quad_matrix(lambda s: np.array([[math.exp(-s)]]), 0.0, 1.0, (1, 1))[0, 0]
    assert S.cesaro(1.0)(np.array([1.0]))[0] == pytest.approx(ref, abs=1e-12)
    assert ref == pytest.approx(0.63212, abs=1e-5)


def test_rotation_cesaro_at_pi():
    S = semigroup_rotation([1.0], 0)
    M = S.cesaro(math.pi).matrix
    ref = quad_matrix(lambda s: rotation_matrix([s], 0), 0.0, math.pi, (2, 2)) / math.pi
    np.testing.assert_allclose(M, ref, atol=1e-12)
    assert M[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert M[1, 0] == pytest.approx(2 / math.pi, abs=1e-15)


def test_rotation_at_zero_is_identity():
    S = semigroup_rotation([0.7, 2.0], 1)
    x = np.arange(5.0)
    np.testing.assert_array_equal(S.at(0.0)(x), x)


@given(seeds, st.floats(0, 100))
def test_rotation_is_isometry(seed, t):
    rng = np.random.default_rng(seed)
    S = semigroup_rotation(list(rng.uniform(-3, 3, 2)), 2)
    x = rng.standard_normal(6)
    assert norm(S.at(t)(x)) == pytest.approx(norm(x), rel=1e-12)


def random_psd(rng, d, rank):
    B = rng.standard_normal((d, rank))
    return B @ B.T


@settings(max_examples=50)
@given(seeds, st.floats(0, 5), st.floats(0, 5))
def test_semigroup_law(seed, s, t):
    rng = np.random.default_rng(seed)
    for S in (semigroup_linear_psd(random_psd(rng, 4, 2)),
              semigroup_rotation(list(rng.uniform(-2, 2, 2)), 1)):
        x = rng.standard_normal(S.dim)
        lhs = S.at(s + t)(x)
        rhs = S.at(s)(S.at(t)(x))
        assert norm(lhs - rhs) <= 1e-10 * (1 + norm(x))


@settings(max_examples=20, deadline=None)
@given(seeds, st.floats(0.1, 20))
def test_cesaro_matches_quadrature(seed, t):
    rng = np.random.default_rng(seed)
    for S in (semigroup_linear_psd(random_psd(rng, 3, 2)),
              semigroup_rotation(list(rng.uniform(-2, 2, 1)), 1)):
        x = rng.standard_normal(S.dim)
        numeric = cesaro_by_quadrature(S, t)(x)
        assert norm(S.cesaro(t)(x) - numeric) <= 1e-8 * (1 + norm(x))


def test_custom_semigroup_falls_back_to_quadrature():
    base = semigroup_linear_psd(np.diag([2.0, 0.5]))
    custom = Semigroup(2, base.at)
    x = np.array([1.0, -3.0])
    np.testing.assert_allclose(custom.cesaro(2.5)(x), base.cesaro(2.5)(x), atol=1e-9)


def test_cesaro_limit_is_kernel_projection():
    rng = np.random.default_rng(8)
    A = random_psd(rng, 4, 2)
    S = semigroup_linear_psd(A)
    ker = S.fixed
    for x in rng.standard_normal((10, 4)):
        assert norm(S.cesaro(1e3)(x) - ker.project(x)) <= 1e-3 * (1 + norm(x))


def test_linear_psd_rejects_bad_generators():
    with pytest.raises(ValueError):
        semigroup_linear_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        semigroup_linear_psd(np.diag([1.0, -1.0]))
    # tiny negative eigenvalues are clamped
    S = semigroup_linear_psd(np.diag([1.0, -1e-12]))
    assert S.info["eigenvalues"].min() == 0.0


def test_negative_time_rejected():
    S = semigroup_rotation([1.0], 0)
    with pytest.raises(ValueError):
        S.at(-1.0)
    with pytest.raises(ValueError):
        S.cesaro(0.0)


def test_fixed_point_set_projection():
    F = FixedPointSet.affine(np.array([1.0, 0.0, 0.0]), np.array([[0.0], [1.0], [0.0]]))
    np.testing.assert_allclose(F.project([3.0, 4.0, 5.0]), [1.0, 4.0, 0.0])
    assert F.contains([1.0, -2.0, 0.0])
    single = FixedPointSet.singleton([2.0, 2.0])
    assert single.is_singleton
    ball = Ball(np.zeros(2), 1.0)
    E = FixedPointSet.explicit(2, ball.project)
    assert E.contains([0.5, 0.5]) and not E.contains([2.0, 0.0])


def test_random_subspace_projection_matches_lstsq():
    rng = np.random.default_rng(4)
    L = random_subspace(rng, 5, 2)
    x = rng.standard_normal(5)
    coef = np.linalg.lstsq(L.basis, x, rcond=None)[0]
    np.testing.assert_allclose(L.project(x), L.basis @ coef, atol=1e-12)
