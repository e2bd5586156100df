import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixpoint.algorithms import (
    IterationTrace,
    Outcome,
    Problem,
    RunConfig,
    Step,
    problem_from_r,
    run_haugazeau,
    run_shrinking,
)
from fixpoint.hilbert import (
    AffineSubspace,
    Ball,
    Box,
    HalfSpace,
    HalfSpaceList,
    WholeSpace,
    norm,
    project_halfspace,
)
from fixpoint.operators import (
    AlphaSchedule,
    FixedPointSet,
    OpClass,
    Semigroup,
    constant_family,
    constant_map,
    cyclic_family,
    gamma_tower,
    halve,
    identity,
    random_subspace,
    scaled_identity,
    semigroup_linear_psd,
    semigroup_rotation,
    subspace_projection,
    subspace_reflection,
    zoo,
)
from fixpoint.verify import (
    NoFeasiblePoint,
    OracleProblem,
    brute_force_projection,
    check_gamma_cascade,
    check_nst_on_orbit,
    check_semigroup_axioms,
    check_tc_class,
    halving_battery,
    halving_identity_violation,
    lemma_battery,
    oracle_affine_intersection,
    oracle_semigroup_fixset,
    oracle_subspace_intersection,
    projector_agreement,
    relaxed,
)

seeds = st.integers(0, 2 ** 32 - 1)


def span(*cols):
    return AffineSubspace.spanned_by(np.zeros(len(cols[0])), np.array(cols, dtype=float).T)


# -- fixed-point set oracles


def test_axis_meets_plane_in_axis():
    xaxis = span([1, 0, 0])
    plane = span([1, 0, 0], [0, 1, 0])
    F = oracle_subspace_intersection([xaxis, plane])
    assert F.subspace.basis.shape == (3, 1)
    np.testing.assert_allclose(abs(F.subspace.basis[:, 0]), [1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(F.project([2.0, 3.0, 4.0]), [2.0, 0.0, 0.0], atol=1e-12)


def test_single_subspace_is_itself():
    L = span([1, 1, 0], [0, 0, 1])
    F = oracle_subspace_intersection([L])
    x = np.array([1.0, -2.0, 5.0])
    np.testing.assert_allclose(F.project(x), L.project(x), atol=1e-12)


def test_orthogonal_lines_meet_at_origin():
    F = oracle_subspace_intersection([span([1, 0]), span([0, 1])])
    assert F.is_singleton
    np.testing.assert_allclose(F.project([3.0, 4.0]), [0.0, 0.0])


def test_subspace_oracle_requires_origin():
    with pytest.raises(ValueError):
        oracle_subspace_intersection([AffineSubspace(np.ones(2), np.array([[1.0], [0.0]]))])


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(2, 6))
def test_subspace_oracle_properties(seed, d):
    rng = np.random.default_rng(seed)
    subs = [random_subspace(rng, d, int(rng.integers(1, d + 1))) for _ in range(int(rng.integers(1, 4)))]
    F = oracle_subspace_intersection(subs)
    B = F.subspace.basis
    for S in subs:
        for v in B.T:
            assert norm(S.project(v) - v) <= 1e-10
    x, y = rng.standard_normal((2, d))
    px = F.project(x)
    np.testing.assert_allclose(F.project(px), px, atol=1e-12)
    assert abs(F.project(x) @ y - x @ F.project(y)) <= 1e-10 * (1 + norm(x) * norm(y))


def test_affine_intersection_of_lines():
    # y = 1 and x = 2 meet at (2, 1); parallel lines do not meet
    h = AffineSubspace(np.array([0.0, 1.0]), np.array([[1.0], [0.0]]))
    v = AffineSubspace(np.array([2.0, 0.0]), np.array([[0.0], [1.0]]))
    F = oracle_affine_intersection([h, v])
    np.testing.assert_allclose(F.project([7.0, -3.0]), [2.0, 1.0], atol=1e-12)
    h2 = AffineSubspace(np.array([0.0, 2.0]), np.array([[1.0], [0.0]]))
    assert oracle_affine_intersection([h, h2]) is None


def test_semigroup_fixset_psd():
    S = semigroup_linear_psd(np.diag([1.0, 0.0]))
    F = oracle_semigroup_fixset(S)
    e2 = np.array([0.0, 1.0])
    np.testing.assert_allclose(F.project([3.0, 4.0]), [0.0, 4.0], atol=1e-12)
    for t in (0.1, 1.0, 10.0):
        np.testing.assert_allclose(S.at(t)(e2), e2, atol=1e-14)


def test_semigroup_fixset_zero_generator_is_everything():
    F = oracle_semigroup_fixset(semigroup_linear_psd(np.zeros((3, 3))))
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(F.project(x), x)


def test_semigroup_fixset_rotation_axis():
    S = semigroup_rotation([1.3], 1)
    F = oracle_semigroup_fixset(S)
    rng = np.random.default_rng(0)
    for v in F.sample(rng, 5):
        for t in (0.2, 1.0, 7.5):
            np.testing.assert_allclose(S.at(t)(v), v, atol=1e-12)
    np.testing.assert_allclose(F.project([1.0, 2.0, 3.0]), [0.0, 0.0, 3.0])


def test_semigroup_fixset_custom_unsupported():
    with pytest.raises(NotImplementedError):
        oracle_semigroup_fixset(Semigroup(2, lambda t: identity(2)))


def test_oracle_problem_checks_projection():
    T = constant_family(halve(scaled_identity(2, -1.0)))
    p = Problem(WholeSpace(2), np.array([1.0, 1.0]), T)
    F = FixedPointSet.singleton([0.0, 0.0])
    assert np.all(OracleProblem("zero", p, F).exact_pf_x0 == 0)
    with pytest.raises(ValueError):
        OracleProblem("zero", p, F, np.array([1.0, 0.0]))


# -- brute-force projection


def test_brute_force_halfspace():
    h = HalfSpace(np.array([1.0, 0.0]), 1.0)
    x0 = np.array([3.0, 4.0])
    got = brute_force_projection(x0, lambda z: z[0] <= 1.0, x0, 3.0)
    np.testing.assert_allclose(got, [1.0, 4.0], atol=3.0 / 1e3)
    assert norm(got - project_halfspace(x0, h)) <= 2 * 3.0 / 1e3


def test_brute_force_feasible_start():
    x0 = np.array([0.2, -0.3])
    np.testing.assert_array_equal(brute_force_projection(x0, lambda z: norm(z) <= 1, x0, 1.0), x0)


def test_brute_force_quadrant():
    x0 = np.array([1.0, 1.0])
    got = brute_force_projection(x0, lambda z: z[0] <= 0 and z[1] <= 0, x0, 2.0)
    np.testing.assert_allclose(got, [0.0, 0.0], atol=2.0 / 1e3)


def test_brute_force_no_feasible_point():
    with pytest.raises(NoFeasiblePoint):
        brute_force_projection(np.zeros(2), lambda z: z[0] > 100, np.zeros(2), 1.0)


def test_brute_force_dimension_limit():
    with pytest.raises(ValueError):
        brute_force_projection(np.zeros(4), lambda z: True, np.zeros(4), 1.0)


@pytest.mark.parametrize("C,x0", [
    (Ball(np.array([0.5, -0.2]), 1.0), np.array([3.0, 1.0])),
    (Box([0, 0, 0], [1, 2, 1]), np.array([2.0, -1.0, 0.5])),
    (AffineSubspace(np.array([0.0, 1.0, 0.0]), np.array([[1.0], [1.0], [0.0]]) / math.sqrt(2)),
     np.array([2.0, 0.0, 1.0])),
    (HalfSpaceList([HalfSpace(np.array([1.0, 2.0]), 0.5), HalfSpace(np.array([-1.0, 3.0]), 0.2)], 2),
     np.array([2.0, 2.0])),
])
def test_projector_agreement_examples(C, x0):
    w = C.project(x0)
    rep = projector_agreement(C, x0, x0, 1.05 * norm(x0 - w) + 1e-3)
    assert rep.passed, rep.to_dict()


# -- T-class membership and the halving identity


def test_tc_identity_passes():
    rng = np.random.default_rng(0)
    rep = check_tc_class(identity(3), rng.standard_normal((5, 3)), trials=200, rng=1)
    assert rep.passed and rep.max_violation == 0.0


@settings(max_examples=10, deadline=None)
@given(seeds, st.integers(1, 5))
def test_tc_halved_zoo_passes(seed, d):
    rng = np.random.default_rng(seed)
    for R in zoo(d, rng):
        rep = check_tc_class(halve(R), R.fixed.sample(rng, 5), trials=200, rng=rng)
        assert rep.passed, (R.name, rep.max_violation)


def test_tc_double_identity_fails():
    rep = check_tc_class(scaled_identity(2, 2.0), np.zeros((1, 2)), trials=100, rng=3)
    assert not rep.passed
    assert rep.max_violation > 0.1
    # at x, p = 0 the inner product is <-2x, -x> = 2|x|^2
    x = rep.detail["worst_x"]
    assert (0 - 2 * x) @ (x - 2 * x) == pytest.approx(2 * norm(x) ** 2)


def test_tc_rejects_non_fixed_samples():
    with pytest.raises(ValueError):
        check_tc_class(scaled_identity(2, 0.0), np.ones((1, 2)))


@settings(max_examples=50)
@given(seeds)
def test_halving_identity(seed):
    rng = np.random.default_rng(seed)
    for R in zoo(3, rng):
        x, z = 4 * rng.standard_normal((2, 3))
        assert halving_identity_violation(R, x, z) <= 1e-8


def test_halving_battery_report():
    rng = np.random.default_rng(1)
    rep = halving_battery(zoo(4, rng), trials=300, rng=2)
    assert rep.passed and rep.trials == 300


# -- lemma battery


def test_lemma_battery_at_fixed_point():
    P = subspace_projection(span([1, 0]))
    rep = lemma_battery(P, P, FixedPointSet.singleton([0.0, 0.0]), [0.5], trials=5, scale=0.0)
    assert rep.passed
    assert all(v <= 0.0 for v in rep.max_violation.values())


def test_lemma_battery_projection_pair():
    L = span([1, 2])
    P = subspace_projection(L)
    F = FixedPointSet.from_subspace(L)
    rep = lemma_battery(P, P, F, [0.5], trials=1000, rng=4)
    assert rep.passed, rep.max_violation


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_lemma_battery_zoo(seed):
    rng = np.random.default_rng(seed)
    for R in zoo(3, rng):
        T = halve(R)
        rep = lemma_battery(T, R, R.fixed, [0.1, 0.5, 0.9], trials=200, rng=rng)
        assert rep.passed, (R.name, rep.max_violation)


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.5, 1.5])
def test_lemma_battery_rejects_closed_endpoints(beta):
    P = identity(2)
    with pytest.raises(ValueError):
        lemma_battery(P, P, FixedPointSet.singleton([0.0, 0.0]), [beta])


def test_relaxed_map():
    T = scaled_identity(2, 0.0)
    np.testing.assert_allclose(relaxed(T, 0.25)(np.array([4.0, 8.0])), [1.0, 2.0])


# -- orbit diagnostics


def constant_trace(x, k=20):
    steps = [Step(n, x, x, 0.0, 0.0, 0.0) for n in range(k)]
    return IterationTrace("constant", x, steps, Outcome("converged", k - 1, x))


def test_nst_constant_orbit_at_common_fixed_point():
    x = np.array([1.0, 0.0])
    probes = [subspace_projection(span([1, 0])), identity(2)]
    rep = check_nst_on_orbit(constant_trace(x), probes)
    assert rep.cluster_residuals == [0.0, 0.0]
    assert rep.evidence


def reflection_pair(rng):
    L1 = random_subspace(rng, 3, 2)
    L2 = random_subspace(rng, 3, 2)
    fams = [constant_family(subspace_reflection(L1)), constant_family(subspace_reflection(L2))]
    tower = gamma_tower(fams, AlphaSchedule.constant([0.0, 0.5]))
    F = oracle_subspace_intersection([L1, L2])
    return L1, L2, tower, F


def test_nst_reflection_pair_orbit():
    rng = np.random.default_rng(7)
    L1, L2, tower, F = reflection_pair(rng)
    p = problem_from_r(WholeSpace(3), 3 * rng.standard_normal(3), tower, F)
    tr = run_shrinking(p, RunConfig(max_iter=5000))
    rep = check_nst_on_orbit(tr, [subspace_projection(L1), subspace_projection(L2)])
    assert max(rep.cluster_residuals) < 1e-6
    assert rep.evidence
    assert np.isfinite(rep.sum_squared_steps)


def test_nst_alternating_constants_not_coherent():
    a, b = np.array([1.0, 0.0]), np.array([-1.0, 0.0])
    T = cyclic_family([constant_map(a), constant_map(b)], kind=OpClass.FIRMLY_NONEXPANSIVE)
    tr = run_haugazeau(Problem(WholeSpace(2), np.array([0.3, 0.7]), T), RunConfig(max_iter=500))
    rep = check_nst_on_orbit(tr, [constant_map(a), constant_map(b)])
    # no point is within 1 of both a and b
    assert max(rep.cluster_residuals) >= 1.0 - 1e-12
    assert not rep.evidence


def test_nst_empty_trace():
    with pytest.raises(ValueError):
        check_nst_on_orbit(IterationTrace("x", np.zeros(1)), [])


def test_cascade_single_level_is_driver_residual():
    L = span([1, 1])
    P = subspace_projection(L)
    fam = constant_family(P)
    tr = run_haugazeau(Problem(WholeSpace(2), np.array([3.0, -1.0]), fam), RunConfig(max_iter=50))
    tower = gamma_tower([fam], AlphaSchedule.constant([0.0]))
    rep = check_gamma_cascade(tr, tower)
    tail = tr.steps[-len(tr.steps):]
    assert rep.detail["level_tail_max"][0] == pytest.approx(max(s.residual for s in tail), abs=1e-15)


def test_cascade_projection_tower():
    rng = np.random.default_rng(3)
    L1, L2 = random_subspace(rng, 4, 3), random_subspace(rng, 4, 3)
    fams = [constant_family(subspace_projection(L1)), constant_family(subspace_projection(L2))]
    tower = gamma_tower(fams, AlphaSchedule.constant([0.0, 0.5]))
    F = oracle_subspace_intersection([L1, L2])
    p = problem_from_r(WholeSpace(4), 3 * rng.standard_normal(4), tower, F)
    tr = run_shrinking(p, RunConfig(max_iter=5000))
    rep = check_gamma_cascade(tr, tower)
    assert rep.passed, rep.to_dict()
    assert max(rep.detail["level_tail_max"]) < 1e-5


def test_cascade_flags_stuck_level():
    # the orbit sits on L1 but never approaches L2
    L1, L2 = span([1, 0]), span([0, 1])
    fams = [constant_family(subspace_projection(L1)), constant_family(subspace_projection(L2))]
    tower = gamma_tower(fams, AlphaSchedule.constant([0.0, 0.5]))
    rep = check_gamma_cascade(constant_trace(np.array([1.0, 0.0])), tower)
    assert not rep.passed
    assert rep.detail["level_tail_max"] == [0.0, 1.0]


def test_cascade_dimension_mismatch():
    tower = gamma_tower([constant_family(identity(3))], AlphaSchedule.constant([0.0]))
    with pytest.raises(ValueError):
        check_gamma_cascade(constant_trace(np.zeros(2)), tower)


# -- semigroup axioms


def test_semigroup_axioms_hold_for_builtins():
    rng = np.random.default_rng(2)
    B = rng.standard_normal((4, 2))
    for S in (semigroup_linear_psd(B @ B.T), semigroup_rotation([0.5, -2.0], 1)):
        rep = check_semigroup_axioms(S, rng=5)
        assert rep.passed, rep.to_dict()


def test_semigroup_axioms_catch_broken_law():
    # x / (1 + t) is nonexpansive but T(s + t) != T(s) T(t)
    fake = Semigroup(2, lambda t: scaled_identity(2, 1 / (1 + t)))
    rep = check_semigroup_axioms(fake, rng=0)
    assert not rep.passed
    assert rep.detail["by_axiom"]["law"] > 0.01
