import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasecoop.channel import PhaseShifts, cn
from phasecoop.phase_ebcd import build_instance, ebcd, run_ebcd, theta_n, update_element

from conftest import unit_modulus


def _instance(seed, n, k=2, m=3, direct=1.0):
    rng = np.random.default_rng(seed)
    return build_instance(cn(rng, (k, n)), cn(rng, (n, m)), direct * cn(rng, (k, m)))


def _grid_objective(inst, step_deg=1.0):
    ang = np.deg2rad(np.arange(0.0, 360.0, step_deg))
    grids = np.meshgrid(*([ang] * inst.n), indexing="ij")
    nu = np.exp(1j * np.stack([g.ravel() for g in grids]))  # (N, D)
    v = np.conj(nu)
    f = np.einsum("nd,knm->kmd", v.conj(), inst.a_rk) + inst.d.conj()[:, :, None]
    return float(np.max(np.sum(np.abs(f) ** 2, axis=(0, 1))))


def test_objective_decomposition_identity():
    rng = np.random.default_rng(0)
    inst = _instance(1, 4)
    for _ in range(100):
        nu = unit_modulus(rng, 4)
        assert inst.objective(nu) == pytest.approx(inst.direct_objective(nu), abs=1e-10)


def test_single_user_no_direct_rank_one():
    rng = np.random.default_rng(2)
    inst = build_instance(cn(rng, (1, 5)), cn(rng, (5, 1)), np.zeros((1, 1)))
    assert np.linalg.matrix_rank(inst.q, tol=1e-10) == 1
    a = inst.a_rk[0, :, 0]
    assert np.allclose(inst.q, np.outer(a, a.conj()))


def test_no_reflection_constant():
    rng = np.random.default_rng(3)
    d = cn(rng, (3, 4))
    inst = build_instance(np.zeros((3, 6)), cn(rng, (6, 4)), d)
    assert np.all(inst.q == 0)
    for _ in range(5):
        assert inst.objective(unit_modulus(rng, 6)) == pytest.approx(np.sum(np.abs(d) ** 2))


def test_zero_theta_branch():
    rng = np.random.default_rng(4)
    inst = build_instance(np.zeros((2, 3)), cn(rng, (3, 2)), cn(rng, (2, 2)))
    nu = PhaseShifts(unit_modulus(rng, 3))
    assert theta_n(inst, nu, 1) == 0
    assert update_element(inst, nu, 1).nu[1] == 1.0


def test_single_element_co_phasing():
    rng = np.random.default_rng(5)
    h, G = cn(rng, (1, 1)), cn(rng, (1, 1))
    inst = build_instance(h, G, np.zeros((1, 1)))
    nu = update_element(inst, PhaseShifts.ones(1), 0)
    assert inst.objective(nu) == pytest.approx(abs(h[0, 0] * G[0, 0]) ** 2)
    # with a direct link the reflected term co-phases with it
    d = cn(rng, (1, 1))
    inst = build_instance(h, G, d)
    nu = update_element(inst, PhaseShifts.ones(1), 0)
    assert inst.objective(nu) == pytest.approx((abs(h[0, 0] * G[0, 0]) + abs(d[0, 0])) ** 2)


def test_update_monotone_and_strict():
    rng = np.random.default_rng(6)
    for seed in range(1000):
        inst = _instance(seed, 3)
        nu = PhaseShifts(unit_modulus(rng, 3))
        n = int(rng.integers(3))
        new = update_element(inst, nu, n)
        before, after = inst.direct_objective(nu), inst.direct_objective(new)
        assert after >= before - 1e-12 * abs(before)
        if abs(nu.nu[n] - new.nu[n]) > 1e-6:
            assert after > before
        assert np.allclose(np.abs(new.nu), 1.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 12))
def test_update_is_coordinate_optimal(seed, n):
    inst = _instance(seed, n)
    rng = np.random.default_rng(seed)
    nu = PhaseShifts(unit_modulus(rng, n))
    idx = int(rng.integers(n))
    new = update_element(inst, nu, idx)
    best = inst.objective(new)
    for t in np.linspace(0, 2 * np.pi, 73):
        trial = nu.nu.copy()
        trial[idx] = np.exp(1j * t)
        assert inst.objective(trial) <= best + 1e-9 * abs(best)


@pytest.mark.parametrize("seed", range(100))
def test_trace_non_decreasing(seed):
    res = ebcd(_instance(seed, 16, k=3, m=4))
    tr = np.array(res.trace)
    assert np.all(np.diff(tr) >= -1e-12 * np.abs(tr[1:]))
    assert res.converged and res.sweeps <= 3000


def test_optimal_start_terminates_in_one_sweep():
    inst = _instance(10, 8)
    res = ebcd(inst, xi=1e-12, max_sweeps=3000)
    again = ebcd(inst, res.phases, xi=1e-3)
    assert again.sweeps == 1
    rel = again.phases.nu / res.phases.nu
    assert np.allclose(rel, rel[0], atol=1e-5)


@pytest.mark.parametrize("seed", range(20))
def test_two_elements_match_grid(seed):
    inst = _instance(seed, 2, k=1, m=2)
    best = _grid_objective(inst)
    res = ebcd(inst, xi=1e-3)
    assert res.objective >= best * (1 - 1e-3)


def test_run_ebcd_wrapper_and_cap():
    inst = _instance(11, 6)
    assert np.array_equal(run_ebcd(inst).nu, ebcd(inst).phases.nu)
    capped = ebcd(inst, xi=0.0, max_sweeps=3)
    assert capped.sweeps == 3 and not capped.converged and len(capped.trace) == 4
