import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ergolab.driver import DriverSpec, OmegaPath
from ergolab.errors import NoGoodTimes, SpecError
from ergolab.meten import (
    ConvergenceReport,
    banach_direction,
    dominate_check,
    extract_functional,
    mean_ergodic_run,
    verify_met,
    wolff_denjoy_limit,
)
from ergolab.spaces import (
    Affine,
    Banach,
    DualVector,
    Mobius,
    PoincareDisk,
    SemicontractionSystem,
    internal_functional,
    lipschitz_excess,
    orbit,
)
from ergolab.subadd import DeltaSchedule, OrbitCocycle, detect_good_times, scan_good_times

WALK = DriverSpec.iid([0.25, 0.75])
CONST = DriverSpec.deterministic([0])


def translation_system(t):
    return SemicontractionSystem(Banach(len(t)), {0: Affine.translation(t)})


def walk_system(dim=1, norm="l2"):
    e = np.eye(dim)[0]
    return SemicontractionSystem(Banach(dim, norm), {0: Affine.translation(-e), 1: Affine.translation(e)})


def good_report(system, path, N, deltas, A, count=3):
    return scan_good_times(OrbitCocycle(system), path, N, deltas, A, count=count)


# -- metric functionals ----------------------------------------------------------------

def test_translation_functional_is_linear_on_probes():
    t = np.array([3.0, 4.0])
    sys = translation_system(t)
    orb = orbit(sys, OmegaPath(CONST, 0), 2000, "forward")
    rep = good_report(sys, orb.path, 2000, DeltaSchedule.constant(0.0), 5.0)
    probes = np.random.default_rng(0).normal(size=(50, 2))
    est = extract_functional(orb, rep, probes)
    # h_{x_n}(y) -> -<y, t/|t|>; the error at distance |y| is O(|y|^2 / n)
    np.testing.assert_allclose(est.functional(probes), -probes @ (t / 5), atol=0.01)
    assert est.chain_holds
    assert est.probe_stability < 0.01
    conv = verify_met(orb, est.functional, 5.0)
    assert conv.final_residual < 1e-12 and conv.verdict


def test_exact_linear_functional_has_zero_residual():
    sys = translation_system([1.0, 0.0])
    orb = orbit(sys, OmegaPath(CONST, 0), 500, "forward")
    h = DualVector(np.array([1.0, 0.0]), "l2").as_metric_functional(np.zeros(2))
    assert verify_met(orb, h, 1.0).final_residual < 1e-12


def test_walk_functional_tracks_the_drift():
    sys = walk_system()
    orb = orbit(sys, OmegaPath(WALK, 1), 100_000, "forward")
    h = DualVector(np.array([1.0]), "l2").as_metric_functional(np.zeros(1))
    assert abs(verify_met(orb, h, 0.5).estimates[-1] - 0.5) < 0.02


def test_zero_drift_report_is_trivial():
    sys = SemicontractionSystem(PoincareDisk(), {0: Mobius.rotation(0.3)}, 0.5)
    orb = orbit(sys, OmegaPath(CONST, 0), 1000, "forward")
    h = internal_functional(sys.space, orb.points[-1], orb.points[0])
    rep = verify_met(orb, h, 0.0)
    assert rep.trivial and rep.verdict


@given(seed=st.integers(0, 10_000))
def test_extracted_functional_is_one_lipschitz_and_sandwiched(seed):
    sys = walk_system(2, "l1")
    path = OmegaPath(DriverSpec.iid([0.2, 0.8]), seed)
    orb = orbit(sys, path, 600, "forward")
    A = 0.6
    rep = detect_good_times(OrbitCocycle(sys), path, 600, DeltaSchedule.log_harmonic(4.0), A)
    if len(rep.good_times) < 2:
        return
    est = extract_functional(orb, rep)
    h = est.functional
    rng = np.random.default_rng(seed)
    y, z = rng.normal(scale=5, size=(200, 2)), rng.normal(scale=5, size=(200, 2))
    assert lipschitz_excess(h, sys.space, y, z) <= 1e-9
    assert abs(h(orb.points[0])) <= 1e-12
    d = orb.distances()
    assert np.all(-h(orb.points) <= d + 1e-9)
    assert est.chain_holds


def test_no_good_times_raises():
    sys = walk_system()
    orb = orbit(sys, OmegaPath(WALK, 0), 50, "forward")
    rep = detect_good_times(OrbitCocycle(sys), orb.path, 50, DeltaSchedule.constant(0.0), 0.5)
    rep.good_times = rep.good_times[rep.good_times == 0]
    with pytest.raises(NoGoodTimes):
        extract_functional(orb, rep)
    with pytest.raises(SpecError):
        extract_functional(orbit(sys, orb.path, 50, "reverse"), rep)


# -- Banach directions -----------------------------------------------------------------

def test_walk_direction_is_plus_one():
    sys = walk_system()
    path = OmegaPath(WALK, 2)
    orb = orbit(sys, path, 20_000, "forward")
    rep = good_report(sys, path, 20_000, DeltaSchedule.log_harmonic(3.0), 0.5, count=6)
    bd = banach_direction(orb, rep)
    np.testing.assert_array_equal(bd.functional.vector, [1.0])
    assert bd.chain_holds
    assert abs(bd.report.estimates[-1] - 0.5) < 0.02


def test_symmetric_walk_is_trivial():
    sys = walk_system()
    path = OmegaPath(DriverSpec.iid([0.5, 0.5]), 2)
    orb = orbit(sys, path, 10_000, "forward")
    rep = good_report(sys, path, 10_000, DeltaSchedule.constant(0.0), 0.0)
    bd = banach_direction(orb, rep)
    assert bd.trivial and bd.report.trivial
    assert abs(bd.report.estimates[-1]) < 0.02


@pytest.mark.parametrize("norm", ["l1", "l2", "linf"])
def test_direction_has_unit_dual_norm_and_dominates(norm):
    sys = SemicontractionSystem(Banach(2, norm), {0: Affine.translation([1.0, 0.2]),
                                                  1: Affine.translation([0.3, 1.0])})
    path = OmegaPath(DriverSpec.iid([0.5, 0.5]), 3)
    N = 5000
    orb = orbit(sys, path, N, "forward")
    A = float(orb.distances()[-1] / N)
    rep = good_report(sys, path, N, DeltaSchedule.log_harmonic(4.0), A, count=4)
    bd = banach_direction(orb, rep)
    assert bd.functional.dual_norm == pytest.approx(1.0, abs=1e-9)
    assert bd.chain_holds
    n_star = int(rep.good_times[-1])
    h = internal_functional(sys.space, orb.points[n_star], orb.points[0])
    samples = np.random.default_rng(0).normal(scale=3, size=(1000, 2))
    samples = np.vstack([samples, orb.points[:n_star + 1:50]])
    # the dominated functional is the negated direction: -f(y) <= h(y) up to the good-time error
    dom = dominate_check(DualVector(-bd.functional.vector, norm), h, samples, tol=0.05)
    assert dom.holds, dom.worst_gap


def test_domination_fixtures():
    x = np.array([3.0, 4.0])
    h = internal_functional(Banach(2), x)
    samples = np.random.default_rng(1).normal(scale=10, size=(1000, 2))
    f = DualVector(-x / 5, "l2")
    assert dominate_check(f, h, samples).holds
    zero = dominate_check(DualVector(np.zeros(2), "l2"), h, x[None, :])
    assert not zero.holds and zero.worst_gap == pytest.approx(5.0)


def test_dominate_check_rejects_long_functionals():
    h = internal_functional(Banach(1), np.array([1.0]))
    with pytest.raises(SpecError):
        dominate_check(DualVector(np.array([2.0]), "l2"), h, np.zeros((1, 1)))


# -- mean ergodic sums -----------------------------------------------------------------

def test_identity_operator_gives_norm_of_v():
    out = mean_ergodic_run({0: np.eye(2)}, OmegaPath(CONST, 0), [3.0, 4.0], 1000, target=5.0)
    assert out.limit == pytest.approx(5.0, abs=1e-12)
    np.testing.assert_allclose(out.functional.vector, [0.6, 0.8])
    assert out.consistency <= 1e-12


def test_rotation_sums_stay_bounded():
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    out = mean_ergodic_run({0: R}, OmegaPath(CONST, 0), [1.0, 0.0], 10_000, target=0.0, tol=1e-6)
    assert out.max_norm <= math.sqrt(2) + 1e-12
    assert out.report.verdict and out.trivial


def test_random_sign_sums_average_out():
    out = mean_ergodic_run({0: -np.eye(1), 1: np.eye(1)}, OmegaPath(DriverSpec.iid([0.5, 0.5]), 4), [1.0],
                           100_000)
    assert out.limit < 0.02
    assert out.consistency <= 1e-12


def test_mean_ergodic_rejects_expanding_operators():
    with pytest.raises(SpecError):
        mean_ergodic_run({0: 2 * np.eye(2)}, OmegaPath(CONST, 0), [1.0, 0.0], 10)


# -- boundary limits -------------------------------------------------------------------

def test_single_parabolic_converges_to_its_fixed_point():
    sys = SemicontractionSystem(PoincareDisk(), {0: Mobius.parabolic(1, 1.0)})
    orb = orbit(sys, OmegaPath(CONST, 0), 10_000, "forward")
    wd = wolff_denjoy_limit(orb, orb.distances()[-1] / 10_000)
    assert wd.status == "converged" and wd.start_independent
    assert abs(wd.xi - 1) < 1e-3


def test_elliptic_rotation_has_no_drift():
    sys = SemicontractionSystem(PoincareDisk(), {0: Mobius.rotation(1.0)}, 0.3)
    orb = orbit(sys, OmegaPath(CONST, 0), 1000, "forward")
    wd = wolff_denjoy_limit(orb, orb.distances()[-1] / 1000)
    assert wd.status == "no_drift" and wd.xi is None


def test_common_attractor():
    maps = {0: Mobius.hyperbolic(1j, -1, 0.8), 1: Mobius.hyperbolic(1j, 1, 0.7)}
    sys = SemicontractionSystem(PoincareDisk(), maps)
    orb = orbit(sys, OmegaPath(DriverSpec.iid([0.5, 0.5]), 1), 80, "forward")
    wd = wolff_denjoy_limit(orb, orb.distances()[-1] / 80)
    assert wd.status == "converged"
    assert abs(wd.xi - 1j) < 1e-3 and abs(wd.xi_second - 1j) < 1e-3


def test_wolff_denjoy_needs_a_disk_orbit():
    orb = orbit(walk_system(), OmegaPath(WALK, 0), 10, "forward")
    with pytest.raises(SpecError):
        wolff_denjoy_limit(orb, 0.5)


def test_convergence_report_csv_rows():
    rep = ConvergenceReport(1.0, np.array([1, 2]), np.array([0.5, 0.75]), 2, 0.3)
    assert list(rep.csv_rows()) == [[1, 0.5, 0.5], [2, 0.75, 0.25]]
    assert rep.verdict and rep.final_residual == 0.25
