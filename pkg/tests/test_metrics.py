import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_scene
from pszablate.atf import AtfSet, FrequencyGrid, build_atf_set
from pszablate.filters import DesignConfig, FilterBank, design_pressure_matching
from pszablate.metrics import (
    MetricCurve,
    ProgramPressures,
    broadband,
    default_epsilon,
    eval_freqs,
    ipi,
    ipi_db,
    izi,
    izi_db,
    program_pressures,
    sample_curve,
    transfer_matrix,
    xtc,
    xtc_db,
    xtc_from_transfer,
)

GRID = FrequencyGrid(fs=48000.0, n_fft=512)


def pp_from(P):
    P = np.asarray(P, dtype=complex)
    return ProgramPressures(P=P, grid=FrequencyGrid(fs=48000.0, n_fft=2 * (P.shape[-1] - 1)))


def hand_case():
    # channel axis carries one driven channel; bin axis has two bins
    P = np.zeros((2, 2, 2, 2, 2), dtype=complex)
    P[0, 0, :, 0] = 1.0   # program 1 at listener 1
    P[0, 1, :, 0] = 0.1   # program 1 leaking to listener 2
    P[1, 0, :, 0] = 0.2   # program 2 interfering at listener 1
    return pp_from(P)


def test_hand_case_izi_ipi():
    pp = hand_case()
    assert izi_db(pp, 0, 1e-12)[0] == pytest.approx(10 * math.log10(2 / 0.02), abs=1e-9)
    assert izi_db(pp, 0, 1e-12)[0] == pytest.approx(20.0, abs=1e-9)
    assert ipi_db(pp, 0, 1e-12)[0] == pytest.approx(10 * math.log10(2 / 0.08), abs=1e-9)
    assert round(float(ipi_db(pp, 0, 1e-12)[0]), 2) == 13.98


def test_izi_equal_and_floor():
    P = np.zeros((2, 2, 2, 1, 2), dtype=complex)
    P[0, 0, :, 0] = 1.0
    P[0, 1, :, 0] = 1.0
    assert izi_db(pp_from(P), 0, 1e-12)[0] == pytest.approx(0.0, abs=1e-9)
    P[0, 1] = 0
    P[0, 0, :, 0] = [1 / math.sqrt(2), 1 / math.sqrt(2)]
    assert izi_db(pp_from(P), 0, 1e-12)[0] == pytest.approx(120.0, abs=1e-9)


def test_xtc_cases():
    eye = np.zeros((2, 2, 1))
    eye[0, 0] = eye[1, 1] = 1
    assert xtc_from_transfer(eye, 1e-12)[0] == pytest.approx(10 * math.log10(2e12), abs=1e-9)
    assert round(float(xtc_from_transfer(eye, 1e-12)[0]), 1) == 123.0
    assert xtc_from_transfer(np.full((2, 2, 1), 0.7), 1e-12)[0] == pytest.approx(0.0, abs=1e-9)
    T = np.array([[1, 0.1], [0.1, 1]])[:, :, None]
    assert xtc_from_transfer(T, 1e-12)[0] == pytest.approx(20.0, abs=1e-9)


def test_unit_program_superposition():
    # one speaker, H = 1 at both ears, one program with W = 1 on both channels
    taps = np.zeros((1, 1, 2, 8))
    taps[0, 0, :, 0] = 1
    bank = FilterBank(taps=taps, fs=GRID.fs)
    H = np.ones((1, 2, 1, 1, GRID.n_bins), dtype=complex)
    pp = program_pressures(bank, AtfSet("C0", H, GRID, "x"))
    np.testing.assert_allclose(pp.coherent(), 2.0)
    # unit-energy uncorrelated channels add in power
    np.testing.assert_allclose(pp.energy(), 2.0)
    np.testing.assert_allclose(pp.target_energy(0), 4.0)


def test_zero_bank():
    bank = FilterBank(taps=np.zeros((3, 2, 2, 16)), fs=GRID.fs)
    H = np.ones((2, 2, 1, 3, GRID.n_bins), dtype=complex)
    assert not np.any(program_pressures(bank, AtfSet("C0", H, GRID, "x")).P)


def test_time_domain_oracle():
    rng = np.random.default_rng(7)
    L, K, n_h, n_w = 3, 2, 60, 40
    h = rng.standard_normal((K, 2, L, n_h))
    taps = rng.standard_normal((L, K, 2, n_w))
    H = np.fft.rfft(h, GRID.n_fft)[:, :, None]
    bank = FilterBank(taps=taps, fs=GRID.fs)
    pp = program_pressures(bank, AtfSet("C0", H, GRID, "x"))
    for j in range(K):
        for c in range(2):
            # play a unit impulse on channel c of program j only
            s = np.zeros((K, 2, 1))
            s[j, c, 0] = 1.0
            x = [sum(np.convolve(s[a, b], taps[l, a, b]) for a in range(K) for b in range(2)) for l in range(L)]
            for k in range(K):
                for e in range(2):
                    p = sum(np.convolve(h[k, e, l], x[l]) for l in range(L))
                    ref = np.fft.rfft(p, GRID.n_fft)
                    assert np.max(np.abs(pp.P[j, k, e, c] - ref)) < 1e-6


def test_eval_requires_single_point():
    bank = FilterBank(taps=np.zeros((1, 1, 2, 4)), fs=GRID.fs)
    H = np.ones((1, 2, 2, 1, GRID.n_bins), dtype=complex)
    with pytest.raises(ValueError, match="one point per ear"):
        program_pressures(bank, AtfSet("C0", H, GRID, "x"))


def test_index_and_k_checks():
    pp = hand_case()
    with pytest.raises(IndexError):
        izi_db(pp, 2, 1e-12)
    with pytest.raises(IndexError):
        xtc_db(pp, -1, 1e-12)
    one = pp_from(np.ones((1, 1, 2, 2, 2)))
    with pytest.raises(ValueError):
        ipi_db(one, 0, 1e-12)
    assert np.isfinite(xtc_db(one, 0, 1e-12)).all()


def test_broadband_examples():
    f = eval_freqs()
    assert broadband(MetricCurve(f, np.full(f.size, 7.5))) == pytest.approx(7.5)
    assert broadband(MetricCurve([100.0, 200.0], [0.0, 10.0])) == 5.0
    with pytest.raises(ValueError):
        broadband(MetricCurve([], []))


def test_broadband_log_linear_midpoint():
    grid = FrequencyGrid(fs=48000.0, n_fft=16384)
    f = np.maximum(grid.freqs, 1.0)
    per_bin = 3.0 + 4.0 * np.log10(f)
    curve = sample_curve(per_bin, grid)
    mid = 3.0 + 4.0 * np.log10(math.sqrt(100 * 20000))
    # nearest-bin sampling moves the low end by at most half a bin
    tol = 4.0 * np.log10((100 + grid.fs / grid.n_fft / 2) / 100)
    assert abs(broadband(curve) - mid) < tol


def test_eval_grid():
    f = eval_freqs()
    assert f.size == 256 and f[0] == pytest.approx(100) and f[-1] == pytest.approx(20000)
    assert np.all(np.diff(np.log(f)) == pytest.approx(np.log(200) / 255))


def test_curve_csv_roundtrip(tmp_path):
    c = MetricCurve(eval_freqs(), np.random.default_rng(0).standard_normal(256))
    c.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "freq_hz,value_db"
    back = MetricCurve.from_csv(tmp_path / "c.csv")
    assert back.freqs.tobytes() == c.freqs.tobytes() and back.values.tobytes() == c.values.tobytes()


def test_curve_validation():
    with pytest.raises(ValueError):
        MetricCurve([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        MetricCurve([2.0, 1.0], [1.0, 1.0])


@settings(max_examples=40)
@given(st.floats(0.1, 10), st.floats(-math.pi, math.pi), st.integers(0, 2**31 - 1))
def test_scale_invariance(mag, phase, seed):
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((2, 2, 2, 2, 5)) + 1j * rng.standard_normal((2, 2, 2, 2, 5))
    g = mag * np.exp(1j * phase)
    Q = P.copy()
    Q[:, 0] *= g  # every pressure observed at listener 1
    # leakage of program 1 lives at listener 2, so scale program 1 everywhere for IZI
    R = P.copy()
    R[0] *= g
    a, b = pp_from(P), pp_from(Q)
    np.testing.assert_allclose(ipi_db(a, 0, 1e-30), ipi_db(b, 0, 1e-30), atol=1e-9)
    np.testing.assert_allclose(izi_db(a, 0, 1e-30), izi_db(pp_from(R), 0, 1e-30), atol=1e-9)
    np.testing.assert_allclose(xtc_db(a, 0, 1e-30), xtc_db(pp_from(R), 0, 1e-30), atol=1e-9)


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1), st.floats(1e-14, 1e-3))
def test_epsilon_floor(seed, eps):
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((2, 2, 2, 2, 5)) * (rng.random((2, 2, 2, 2, 5)) > 0.5)
    pp = pp_from(P)
    cap = 10 * np.log10(max(pp.target_energy(k).max() for k in range(2)) / eps)
    for k in range(2):
        for fn in (izi_db, ipi_db, xtc_db):
            v = fn(pp, k, eps)
            assert np.all(v[np.isfinite(v)] <= cap + 1e-9)


def test_mirror_symmetric_scene():
    grid = FrequencyGrid(fs=48000.0, n_fft=1024)
    scene = small_scene(rir_length=600)
    atf = build_atf_set(scene, "C0", None, grid)
    bank = design_pressure_matching(atf, DesignConfig(filter_length=512))
    pp = program_pressures(bank, atf)
    eps = default_epsilon(pp)
    for fn in (izi, ipi):
        np.testing.assert_allclose(fn(pp, 0, eps).values, fn(pp, 1, eps).values, atol=1e-6)
    np.testing.assert_allclose(xtc(bank, atf, 0, eps).values, xtc(bank, atf, 1, eps).values, atol=1e-6)
    np.testing.assert_allclose(transfer_matrix(bank, atf, 1), pp.P[1, 1])
    assert eps == pytest.approx(1e-12 * max(pp.target_energy(0).max(), pp.target_energy(1).max()))
