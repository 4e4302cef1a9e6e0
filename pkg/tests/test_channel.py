import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from phasecoop.channel import (
    ChannelRealization,
    DimensionError,
    PhaseShifts,
    cn,
    draw_trial,
    effective_channel,
    effective_channels,
    path_loss,
    read_matrices,
    rician_link,
    rician_weights,
    ula_steering,
    write_matrices,
)
from phasecoop.scenario import build_scenario

from conftest import unit_modulus


def test_path_loss_examples():
    assert path_loss(1.0, 2.7, 1e-3) == pytest.approx(1e-3)
    assert path_loss(2.0, 2.0, 1e-3) == pytest.approx(1e-3 / 4)
    # -30 dB - 35 dB = -65 dB
    assert path_loss(10.0, 3.5, 1e-3) == pytest.approx(10 ** -6.5, rel=1e-12)
    assert path_loss(10.0, 3.5, 1e-3) == pytest.approx(3.162e-7, rel=1e-3)
    assert np.allclose(path_loss(np.array([1.0, 2.0]), 2.0, 1.0), [1.0, 0.25])
    with pytest.raises(ValueError):
        path_loss(0.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        path_loss(np.array([1.0, -1.0]), 2.0, 1.0)


def test_rician_weights_sum_to_one():
    for k in (0.0, 0.5, 3.16, 100.0):
        a, b = rician_weights(k)
        assert a ** 2 + b ** 2 == pytest.approx(1.0)
    assert rician_weights(np.inf) == (1.0, 0.0)
    assert rician_weights(0.0) == (0.0, 1.0)


def test_rician_infinite_kappa_is_deterministic():
    los = np.outer(ula_steering(8, (1, 1, 0), (1, 0, 0)), ula_steering(4, (0, 1, 1), (0, 1, 0)).conj())
    a = rician_link(np.random.default_rng(0), los, np.inf, 2.5e-4)
    b = rician_link(np.random.default_rng(1), los, np.inf, 2.5e-4)
    assert np.array_equal(a, b)
    assert np.allclose(np.abs(a), np.sqrt(2.5e-4))


def test_rician_zero_kappa_variance():
    gain = 3e-6
    los = np.ones((100, 100), dtype=complex)
    x = rician_link(np.random.default_rng(3), los, 0.0, gain)
    assert abs(np.mean(x)) < 0.05 * np.sqrt(gain)
    assert np.var(x) == pytest.approx(gain, rel=0.03)


@pytest.mark.parametrize("kappa_db", [-np.inf, -5.0, 0.0, 5.0, 10.0, 20.0])
def test_rician_power_normalisation(kappa_db):
    gain = 7e-5
    kappa = 0.0 if np.isinf(kappa_db) else 10 ** (kappa_db / 10)
    los = np.outer(ula_steering(100, (1, 2, 0), (1, 0, 0)), ula_steering(100, (0, 1, 3), (0, 1, 0)).conj())
    x = rician_link(np.random.default_rng(11), los, kappa, gain)
    assert np.mean(np.abs(x) ** 2) == pytest.approx(gain, rel=0.03)


def test_cn_statistics_and_prefix_consistency():
    z = cn(np.random.default_rng(0), 200_000)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, rel=0.01)
    assert abs(np.mean(z ** 2)) < 0.01  # circular symmetry
    short = cn(np.random.default_rng(9), 16)
    long = cn(np.random.default_rng(9), 64)
    assert np.array_equal(short, long[:16])


def test_steering_unit_modulus_and_broadside():
    a = ula_steering(16, (0, 1, 0), (1, 0, 0))
    assert np.allclose(a, 1.0)
    b = ula_steering(16, (1, 0, 0), (1, 0, 0))
    assert np.allclose(b, (-1.0) ** np.arange(16))


def test_effective_channel_reflection_absent():
    rng = np.random.default_rng(1)
    g = cn(rng, 3)
    f = effective_channel(np.zeros(4), PhaseShifts(unit_modulus(rng, 4)), cn(rng, (4, 3)), g)
    assert np.array_equal(f, g)


def test_effective_channel_scalar():
    f = effective_channel([1.0], PhaseShifts.ones(1), [[1.0]], [0.0])
    assert np.allclose(f, [1.0])


def test_effective_channel_naive_loop():
    rng = np.random.default_rng(7)
    N, M = 4, 3
    h, G, g = cn(rng, N), cn(rng, (N, M)), cn(rng, M)
    nu = unit_modulus(rng, N)
    # f^H[m] = sum_n conj(h_n) nu_n G[n, m] + conj(g[m])
    fh = np.zeros(M, dtype=complex)
    for m in range(M):
        acc = np.conj(g[m])
        for n in range(N):
            acc += np.conj(h[n]) * nu[n] * G[n, m]
        fh[m] = acc
    assert np.allclose(effective_channel(h, PhaseShifts(nu), G, g).conj(), fh, atol=1e-14)
    assert np.allclose(effective_channel(h, nu, G, g).conj(), fh, atol=1e-14)


def test_effective_channels_stack_matches_single():
    rng = np.random.default_rng(8)
    N, M, K = 5, 4, 3
    H, G, D = cn(rng, (K, N)), cn(rng, (N, M)), cn(rng, (K, M))
    nu = PhaseShifts(unit_modulus(rng, N))
    F = effective_channels(H, nu, G, D)
    for k in range(K):
        assert np.allclose(F[:, k], effective_channel(H[k], nu, G, D[k]))


def test_effective_channel_dimension_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(DimensionError):
        effective_channel(cn(rng, 3), PhaseShifts.ones(4), cn(rng, (4, 2)), cn(rng, 2))
    with pytest.raises(DimensionError):
        effective_channel(cn(rng, 4), PhaseShifts.ones(4), cn(rng, (4, 2)), cn(rng, 3))
    with pytest.raises(DimensionError):
        effective_channels(cn(rng, (2, 4)), PhaseShifts.ones(4), cn(rng, (4, 2)), cn(rng, (3, 2)))


_cplx = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(h=arrays(complex, 4, elements=_cplx), G=arrays(complex, (4, 3), elements=_cplx),
       t1=arrays(float, 4, elements=st.floats(0, 6.3)), t2=arrays(float, 4, elements=st.floats(0, 6.3)),
       a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linear_in_nu_without_direct_link(h, G, t1, t2, a, b):
    z = np.zeros(3)
    n1, n2 = np.exp(1j * t1), np.exp(1j * t2)
    lhs = effective_channel(h, a * n1 + b * n2, G, z)
    rhs = a * effective_channel(h, n1, G, z) + b * effective_channel(h, n2, G, z)
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(rhs).max()))


@settings(max_examples=60, deadline=None)
@given(h=arrays(complex, 5, elements=_cplx), G=arrays(complex, (5, 2), elements=_cplx),
       t=arrays(float, 5, elements=st.floats(0, 6.3)), phi=st.floats(0, 6.3))
def test_gain_invariant_to_global_phase(h, G, t, phi):
    z = np.zeros(2)
    nu = np.exp(1j * t)
    f1 = effective_channel(h, nu, G, z)
    f2 = effective_channel(h, np.exp(1j * phi) * nu, G, z)
    assert np.linalg.norm(f1) == pytest.approx(np.linalg.norm(f2), rel=1e-9, abs=1e-9)


def test_phase_shifts_contract():
    with pytest.raises(ValueError):
        PhaseShifts(np.array([1.0, 0.5]))
    p = PhaseShifts.from_angles([0.0, np.pi / 2, 7.0])
    assert np.all((p.theta >= 0) & (p.theta < 2 * np.pi))
    assert np.allclose(p.v, np.conj(p.nu))
    q = PhaseShifts.project(np.array([2.0, 0.0, -3j]))
    assert np.allclose(q.nu, [1.0, 1.0, -1j])


def test_quantize_levels():
    rng = np.random.default_rng(2)
    p = PhaseShifts.from_angles(rng.uniform(0, 2 * np.pi, 200))
    for bits in (1, 2, 3):
        q = p.quantize(bits)
        step = 2 * np.pi / 2 ** bits
        levels = np.round(q.theta / step) % 2 ** bits
        assert np.allclose(q.theta, (levels * step) % (2 * np.pi), atol=1e-9)
        err = np.angle(q.nu / p.nu)
        assert np.all(np.abs(err) <= step / 2 + 1e-12)
    fine = p.quantize(16)
    assert np.max(np.abs(np.angle(fine.nu / p.nu))) < 2 * np.pi / 2 ** 16
    with pytest.raises(ValueError):
        p.quantize(0)


def test_draw_trial_shapes_and_determinism():
    s = build_scenario(overrides={"n_irs": 8})
    r1, _ = draw_trial(s, 3)
    r2, _ = draw_trial(s, 3)
    assert r1.g_r.shape == (8, s.m_u) and r1.g_d_mat.shape == (8, s.m_i)
    assert r1.h_r_users.shape == (s.k_i, 8) and r1.h_r_devices.shape == (s.k_ei, 8)
    assert r1.g_dir_users.shape == (s.k_i, s.m_u) and r1.g_dir_devices.shape == (s.k_ei, s.m_i)
    for name in ("g_r", "g_d_mat", "h_r_users", "h_r_devices", "g_dir_users", "g_dir_devices"):
        assert np.array_equal(getattr(r1, name), getattr(r2, name))
        assert np.all(np.isfinite(getattr(r1, name)))
    # direct links and receiver drops do not depend on the surface size
    r3, _ = draw_trial(s.replace(n_irs=16), 3)
    assert np.array_equal(r1.g_dir_users, r3.g_dir_users)
    assert np.array_equal(r1.h_r_users, r3.h_r_users[:, :8])


def test_ap_irs_link_power_matches_path_loss():
    s = build_scenario(overrides={"n_irs": 16})
    d = np.linalg.norm(np.array(s.irs_pos) - np.array(s.ap_pos))
    pl = path_loss(d, s.pl_ap_irs, s.c0, s.d0)
    p = np.mean([np.mean(np.abs(draw_trial(s, t)[0].g_r) ** 2) for t in range(100)])
    assert p == pytest.approx(pl, rel=0.03)


def test_without_irs_zeroes_reflection():
    r, _ = draw_trial(build_scenario(overrides={"n_irs": 4}), 0)
    bare = r.without_irs()
    F = bare.unet_channels(PhaseShifts.from_angles(np.arange(4.0)))
    assert np.allclose(F, r.g_dir_users.T)


def test_matrix_file_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    mats = {"a": cn(rng, (3, 5)), "vec": cn(rng, 4), "real": rng.standard_normal((2, 2))}
    path = tmp_path / "m.bin"
    write_matrices(path, mats)
    back = read_matrices(path)
    assert np.array_equal(back["a"], mats["a"])
    assert np.array_equal(back["vec"], mats["vec"][None, :])
    assert np.array_equal(back["real"], mats["real"].astype(complex))
    raw = path.read_bytes()
    assert raw.startswith(b"PCMAT 1\na 3 5\n")
    # payload is little-endian doubles, (re, im) pairs, row-major
    first = np.frombuffer(raw[len(b"PCMAT 1\na 3 5\n"):][:16], dtype="<f8")
    assert first[0] == mats["a"][0, 0].real and first[1] == mats["a"][0, 0].imag


def test_matrix_file_errors(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nope\n")
    with pytest.raises(ValueError, match="not a matrix file"):
        read_matrices(bad)
    trunc = tmp_path / "t.bin"
    trunc.write_bytes(b"PCMAT 1\nx 2 2\n" + b"\0" * 10)
    with pytest.raises(ValueError, match="truncated"):
        read_matrices(trunc)
    with pytest.raises(ValueError):
        write_matrices(tmp_path / "c.bin", {"cube": np.zeros((2, 2, 2))})


def test_realization_save_load(tmp_path):
    r, _ = draw_trial(build_scenario(overrides={"n_irs": 6}), 1)
    path = tmp_path / "r.bin"
    r.save(path)
    back = ChannelRealization.load(path)
    for name in ("g_r", "g_d_mat", "h_r_users", "h_r_devices", "g_dir_users", "g_dir_devices"):
        assert np.array_equal(getattr(back, name), getattr(r, name))
