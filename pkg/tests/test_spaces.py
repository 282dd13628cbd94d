import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ergolab.driver import DriverSpec, OmegaPath
from ergolab.errors import DomainError, SpecError
from ergolab.spaces import (
    Affine,
    Banach,
    Blaschke,
    ConeLinear,
    Congruence,
    DualVector,
    HilbertCone,
    MaxPlus,
    MaxPlusMatrix,
    Mobius,
    PoincareDisk,
    PosDef,
    SemicontractionSystem,
    Topical,
    apply_map,
    busemann_functional,
    check_nonexpansive,
    check_topical,
    disk_busemann,
    distance,
    internal_functional,
    lipschitz_excess,
    make_map,
    norming_functional,
    orbit,
    positive_part,
    random_spd,
    random_sym,
    space_from_dict,
    sym_exp,
    sym_log,
    sym_sqrt,
)
from ergolab.spaces.spd import op_norm_sym

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def well_conditioned(rng, d):
    """Random invertible matrix with singular values in [0.5, 2]."""
    U, _ = np.linalg.qr(rng.normal(size=(d, d)))
    V, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return U @ np.diag(rng.uniform(0.5, 2.0, d)) @ V


def rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


# -- distance fixtures -----------------------------------------------------------------

def test_distance_fixtures():
    assert distance(HilbertCone(2), [1, 1], [2, 1]) == pytest.approx(math.log(2), abs=1e-12)
    assert distance(HilbertCone(2), [1, 1], [3, 1]) == pytest.approx(math.log(3), abs=1e-12)
    assert distance(PoincareDisk(), 0, 0.5) == pytest.approx(math.log(3), abs=1e-12)
    assert distance(PosDef(2), np.eye(2), np.diag([math.e, 1])) == pytest.approx(1.0, abs=1e-12)
    assert distance(Banach(2, "l1"), [0, 0], [3, -4]) == 7
    assert distance(MaxPlus(2), [0, 0], [3, -4]) == 4


def test_hilbert_distance_is_projective():
    x, y = np.array([1.0, 2.0, 5.0]), np.array([2.0, 1.0, 1.0])
    assert HilbertCone(3).distance(7 * x, y) == pytest.approx(HilbertCone(3).distance(x, y), abs=1e-12)
    assert HilbertCone(3).distance(x, 3 * x) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("space,bad", [
    (HilbertCone(2), [1.0, -1.0]),
    (PoincareDisk(), 1.0),
    (PosDef(2), np.diag([1.0, -1.0])),
    (PosDef(2), np.array([[1.0, 0.5], [0.0, 1.0]])),
    (MaxPlus(2), [np.inf, 0.0]),
])
def test_invalid_points_raise_domain_error(space, bad):
    with pytest.raises(DomainError):
        distance(space, space.origin(), bad)


SPACES = [Banach(3, "l2"), Banach(3, "l1"), Banach(3, "linf"), MaxPlus(3), HilbertCone(3),
          PosDef(3), PosDef(3, "frobenius_log"), PoincareDisk()]


@pytest.mark.parametrize("space", SPACES, ids=lambda s: f"{s.kind}")
@given(seed=st.integers(0, 2**32 - 1))
def test_metric_axioms_on_samples(space, seed):
    rng = np.random.default_rng(seed)
    x, y, z = (space.random_points(rng, 20) for _ in range(3))
    dxy, dyx = space.distance(x, y), space.distance(y, x)
    assert np.all(dxy >= -1e-12)
    np.testing.assert_allclose(dxy, dyx, atol=1e-9)
    assert np.all(space.distance(x, z) <= dxy + space.distance(y, z) + 1e-9)
    np.testing.assert_allclose(space.distance(x, x), 0, atol=1e-7)


# -- spectral calculus -----------------------------------------------------------------

def test_sym_log_fixtures():
    np.testing.assert_allclose(sym_log(np.diag([math.e, 1.0])), np.diag([1.0, 0.0]), atol=1e-14)
    np.testing.assert_allclose(sym_log(np.eye(3)), 0, atol=1e-15)
    R = rot(0.3)
    np.testing.assert_allclose(sym_log(R @ np.diag([math.e, 1]) @ R.T), R @ np.diag([1.0, 0.0]) @ R.T,
                               atol=1e-14)
    with pytest.raises(DomainError):
        sym_log(np.diag([1.0, -1.0]))


def test_positive_part_fixtures():
    np.testing.assert_allclose(positive_part(np.diag([2.0, 0.5])), np.diag([2.0, 0.5]), atol=1e-15)
    np.testing.assert_allclose(positive_part(rot(1.1)), np.eye(2), atol=1e-14)
    with pytest.raises(DomainError):
        positive_part(np.array([[1.0, 2.0], [2.0, 4.0]]))


@given(seed=st.integers(0, 2**32 - 1))
def test_positive_part_squares_to_gram_matrix(seed):
    v = np.random.default_rng(seed).normal(size=(3, 3))
    if np.linalg.cond(v) > 1e8:
        return
    p = positive_part(v)
    assert np.linalg.norm(p @ p - v.T @ v) <= 1e-9 * np.linalg.norm(v.T @ v)
    assert np.all(np.linalg.eigvalsh(p) > 0)


@given(seed=st.integers(0, 2**32 - 1))
def test_exp_and_log_are_inverse(seed):
    rng = np.random.default_rng(seed)
    P = random_spd(rng, 3)
    np.testing.assert_allclose(sym_exp(sym_log(P)), P, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(sym_sqrt(P) @ sym_sqrt(P), P, rtol=1e-9, atol=1e-12)


@given(seed=st.integers(0, 2**32 - 1))
def test_segal_inequality(seed):
    rng = np.random.default_rng(seed)
    u, v = random_sym(rng, 3), random_sym(rng, 3)
    half = sym_exp(u / 2)
    lhs = op_norm_sym(sym_exp(u + v))
    rhs = np.linalg.norm(half @ sym_exp(v) @ half, 2)
    assert lhs <= rhs * (1 + 1e-12) + 1e-9


@given(seed=st.integers(0, 2**32 - 1))
def test_exp_semi_expands_distances(seed):
    rng = np.random.default_rng(seed)
    u, v = random_sym(rng, 3), random_sym(rng, 3)
    assert PosDef(3).distance(sym_exp(u), sym_exp(v)) >= op_norm_sym(u - v) - 1e-9
    # commuting pair: equality
    w = np.diag(rng.normal(size=3))
    assert PosDef(3).distance(sym_exp(w), sym_exp(2 * w)) == pytest.approx(op_norm_sym(w), abs=1e-9)


# -- maps ------------------------------------------------------------------------------

def test_apply_map_fixtures():
    ninf = None
    np.testing.assert_array_equal(apply_map(MaxPlusMatrix([[0, ninf], [ninf, 0]]), [3.0, -2.0]), [3, -2])
    np.testing.assert_array_equal(apply_map(MaxPlusMatrix([[1, 0], [0, 1]]), [0.0, 0.0]), [1, 1])
    assert apply_map(Mobius.from_coefficients(1, 0.5, 0.5, 1), 0) == pytest.approx(0.5)


def test_map_validation():
    with pytest.raises(SpecError):
        Mobius.from_coefficients(2, 0, 0, 1)  # z -> 2z leaves the disk
    with pytest.raises(SpecError):
        MaxPlusMatrix([[None, None], [0, 0]])
    with pytest.raises(SpecError):
        ConeLinear([[1, 0], [1, 1]])
    with pytest.raises(SpecError):
        Blaschke([1.0])
    with pytest.raises(SpecError):
        SemicontractionSystem(Banach(2), {0: Affine.linear([[2, 0], [0, 1]])})
    with pytest.raises(SpecError):
        SemicontractionSystem(PoincareDisk(), {0: Affine.translation([1.0])})
    with pytest.raises(SpecError):
        make_map({"type": "warp"})


def test_mobius_constructors_fix_their_boundary_points():
    xi = complex(0.6, 0.8)
    p = Mobius.parabolic(xi, 1.5)
    assert abs(p(xi * (1 - 1e-9)) - xi) < 1e-6
    h = Mobius.hyperbolic(1, -1, 0.5)
    assert abs(h(0.999999) - 1) < 1e-5
    assert PoincareDisk().distance(0, h(0)) == pytest.approx(-math.log(0.5), abs=1e-12)
    r = Mobius.rotation(0.7)
    assert r(0.5) == pytest.approx(0.5 * np.exp(0.7j))


def _families(rng):
    A = rng.random((3, 3)) + 0.05
    g = well_conditioned(rng, 3)
    Mo = rng.normal(size=(3, 3))
    Mo /= np.linalg.norm(Mo, 2)
    a = 0.9 * rng.random() * np.exp(2j * np.pi * rng.random())
    theta = 2 * np.pi * rng.random()
    return [
        (Banach(3, "l2"), Affine(Mo, rng.normal(size=3))),
        (Banach(3, "linf"), Affine(Mo / np.abs(Mo).sum(1).max(), rng.normal(size=3))),
        (MaxPlus(3), MaxPlusMatrix(rng.normal(size=(3, 3)))),
        (HilbertCone(3), ConeLinear(A)),
        (PosDef(3), Congruence(g)),
        (PosDef(3, "frobenius_log"), Congruence(g)),
        (PoincareDisk(), Mobius([[np.exp(0.5j * theta), -a * np.exp(0.5j * theta)],
                                 [-np.conj(a) * np.exp(-0.5j * theta), np.exp(-0.5j * theta)]])),
        (PoincareDisk(), Blaschke([a, -a / 2], theta)),
    ]


@given(seed=st.integers(0, 2**32 - 1))
def test_every_family_is_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    for space, f in _families(rng):
        assert check_nonexpansive(space, f, rng, pairs=20) <= 1e-9, (space, f)


@given(seed=st.integers(0, 2**32 - 1))
def test_congruence_is_an_isometry(seed):
    rng = np.random.default_rng(seed)
    g = well_conditioned(rng, 3)
    P, Q = random_spd(rng, 3, size=10), random_spd(rng, 3, size=10)
    f = Congruence(g)
    for space in (PosDef(3), PosDef(3, "frobenius_log")):
        np.testing.assert_allclose(space.distance(f(P), f(Q)), space.distance(P, Q), atol=1e-9)


def test_topical_maps_are_sup_norm_nonexpansive():
    rng = np.random.default_rng(0)
    M = MaxPlusMatrix(rng.normal(size=(4, 4)))
    f = Topical(lambda x: 0.5 * M(x) + 0.5 * np.log(np.mean(np.exp(x), axis=-1, keepdims=True)))
    assert check_topical(f, 4, rng)
    assert check_nonexpansive(MaxPlus(4), f, rng, pairs=500) <= 1e-9
    assert not check_topical(lambda x: 2 * x, 4, rng)


def test_orbit_orders_for_noncommuting_affine_maps():
    space = Banach(2, "l2")
    f = Affine(rot(0.5), [1.0, 0.0])
    g = Affine(rot(-1.0), [0.0, 2.0])
    sys = SemicontractionSystem(space, {0: f, 1: g})
    path = OmegaPath(DriverSpec.deterministic([0, 1]), 0)
    fwd = orbit(sys, path, 2, "forward")
    rev = orbit(sys, path, 2, "reverse")
    x0 = np.zeros(2)
    np.testing.assert_allclose(fwd.points[2], f(g(x0)), atol=1e-14)
    np.testing.assert_allclose(rev.points[2], g(f(x0)), atol=1e-14)
    assert np.linalg.norm(fwd.points[2] - rev.points[2]) > 0.1


@pytest.mark.parametrize("order", ["forward", "reverse"])
def test_translation_orbit_is_linear_in_time(order):
    sys = SemicontractionSystem(Banach(2), {0: Affine.translation([1.0, -2.0])})
    orb = orbit(sys, OmegaPath(DriverSpec.deterministic([0]), 0), 50, order)
    np.testing.assert_allclose(orb.points, np.outer(np.arange(51), [1.0, -2.0]), atol=1e-12)
    assert orb.header() == ["step", "x0", "x1", "distance"]


@pytest.mark.parametrize("space,maps", [
    (PoincareDisk(), {0: Mobius.parabolic(1, 1.0), 1: Mobius.hyperbolic(1j, -1j, 0.7)}),
    (PosDef(2), {0: Congruence([[1.2, 0.3], [0, 0.9]]), 1: Congruence(rot(0.4))}),
    (MaxPlus(2), {0: MaxPlusMatrix([[0, 1], [-1, 0.5]]), 1: MaxPlusMatrix([[0.2, None], [0, 0]])}),
    (HilbertCone(2), {0: ConeLinear([[2, 1], [1, 1]]), 1: ConeLinear([[1, 3], [1, 1]])}),
])
def test_prefix_routes_match_direct_composition(space, maps):
    sys = SemicontractionSystem(space, maps)
    path = OmegaPath(DriverSpec.iid([0.5, 0.5]), 3)
    orb = orbit(sys, path, 30, "forward")
    assert np.array_equal(orbit(sys, path, 30, "forward").points, orb.points)
    syms = path.symbols(0, 30)
    for k in (1, 7, 30):
        x = sys.basepoint
        for s in syms[:k][::-1]:
            x = maps[int(s)](x)
        assert space.distance(orb.points[k], x) <= 1e-8
    ns, offs = np.array([3, 5, 10]), np.array([2, 7, 11])
    got = sys.suffix_points(path, ns, offs)
    for n, o, y in zip(ns, offs, got):
        x = sys.basepoint
        for s in syms[o:o + n][::-1]:
            x = maps[int(s)](x)
        assert space.distance(y, x) <= 1e-8


# -- functionals -----------------------------------------------------------------------

def test_internal_functional_definition():
    space = PoincareDisk()
    x = 0.3 + 0.4j
    h = internal_functional(space, x)
    assert h(0) == 0
    assert h(x) == pytest.approx(-space.distance(0, x))


def test_disk_busemann_fixtures_and_ray_limit():
    assert disk_busemann(1, 0) == 0
    assert disk_busemann(1j, 0) == 0
    assert disk_busemann(1, 0.5) == pytest.approx(-math.log(3), abs=1e-14)
    assert disk_busemann(1, -0.5) == pytest.approx(math.log(3), abs=1e-14)
    h = internal_functional(PoincareDisk(), 1 - 1e-9)
    assert h(0.5) == pytest.approx(-math.log(3), abs=1e-6)
    with pytest.raises(DomainError):
        disk_busemann(1, 1.0)
    assert busemann_functional(1).provenance == "boundary_closed_form"


def test_norming_functional_fixtures():
    f = norming_functional("l2", [3, 4])
    np.testing.assert_allclose(f.vector, [0.6, 0.8])
    assert f([3, 4]) == pytest.approx(5)
    np.testing.assert_array_equal(norming_functional("l1", [3, -4]).vector, [1, -1])
    np.testing.assert_array_equal(norming_functional("l1", [0, -4]).vector, [0, -1])
    g = norming_functional("linf", [3, 3])
    np.testing.assert_array_equal(g.vector, [1, 0])
    assert g([3, 3]) == 3
    with pytest.raises(DomainError):
        norming_functional("l2", [0, 0])


@pytest.mark.parametrize("norm", ["l1", "l2", "linf"])
@given(x=arrays(float, 4, elements=finite))
def test_norming_functional_has_unit_dual_norm(norm, x):
    if not np.any(x):
        return
    f = norming_functional(norm, x)
    assert f.dual_norm == pytest.approx(1.0, abs=1e-12)
    assert f(x) == pytest.approx(Banach(4, norm).norm_of(x), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("space", SPACES, ids=lambda s: s.kind)
@given(seed=st.integers(0, 2**32 - 1))
def test_internal_functionals_are_one_lipschitz(space, seed):
    rng = np.random.default_rng(seed)
    x = space.random_points(rng, 1, 2.0)[0]
    h = internal_functional(space, x)
    y, z = space.random_points(rng, 50, 2.0), space.random_points(rng, 50, 2.0)
    assert lipschitz_excess(h, space, y, z) <= 1e-9
    # triangle-inequality floor
    assert np.all(h(y) >= -space.distance(space.origin(), y) - 1e-9)
    assert abs(h(space.origin())) <= 1e-12


def test_dual_vector_as_metric_functional():
    f = DualVector(np.array([0.0, 1.0]), "l2")
    h = f.as_metric_functional(np.zeros(2))
    assert h(np.array([5.0, 2.0])) == pytest.approx(-2.0)
    assert h.provenance == "dual_vector"


def test_space_from_dict_roundtrip_and_errors():
    assert space_from_dict({"kind": "banach", "dim": 2, "norm": "l1"}) == Banach(2, "l1")
    assert isinstance(space_from_dict({"kind": "poincare_disk"}), PoincareDisk)
    with pytest.raises(SpecError):
        space_from_dict({"kind": "torus"})
    with pytest.raises(SpecError):
        PosDef(2, "bures")
