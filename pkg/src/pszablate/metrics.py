"""Inter-zone isolation (IZI), inter-program interference (IPI) and
crosstalk cancellation (XTC), per frequency and broadband.

Each program's two stereo channels are treated as unit-variance,
mutually uncorrelated signals, so ear energies add channel powers:
``|P^(j)_{k,e}|^2 = sum_c |sum_l H_{k,e,l} W_{l,j,c}|^2``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .atf import AtfSet, FrequencyGrid
from .filters import FilterBank

EVAL_BAND = (100.0, 20000.0)
EVAL_POINTS = 256
EPS_REL = 1e-12


@dataclass(frozen=True)
class ProgramPressures:
    """P[j, k, e, c, bin]: pressure at listener k, ear e from channel c of
    program j alone."""

    P: np.ndarray
    grid: FrequencyGrid

    @property
    def K(self) -> int:
        return self.P.shape[1]

    def energy(self) -> np.ndarray:
        """E[j, k, e, bin] = sum_c |P|^2."""
        return np.sum(np.abs(self.P) ** 2, axis=3)

    def coherent(self) -> np.ndarray:
        """Channel sum P[j, k, e, bin] for fully correlated channels."""
        return self.P.sum(axis=3)

    def target_energy(self, k: int) -> np.ndarray:
        return self.energy()[k, k].sum(axis=0)

    def interference_energy(self, k: int) -> np.ndarray:
        E = self.energy()
        others = [j for j in range(self.K) if j != k]
        return E[others, k].sum(axis=(0, 1))

    def leakage_energy(self, k: int) -> np.ndarray:
        E = self.energy()
        others = [i for i in range(self.K) if i != k]
        return E[k, others].sum(axis=(0, 1))


@dataclass(frozen=True)
class MetricCurve:
    freqs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if f.shape != v.shape or f.ndim != 1:
            raise ValueError("curve frequencies and values must be 1-D and equally long")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise ValueError("curve frequencies must be strictly increasing")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "values", v)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["freq_hz", "value_db"])
            for f, v in zip(self.freqs, self.values):
                w.writerow([repr(float(f)), repr(float(v))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["freq_hz", "value_db"]:
            raise ValueError(f"{path}: expected header freq_hz,value_db")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)
        return cls(freqs=data[:, 0], values=data[:, 1])


def eval_freqs(n=EVAL_POINTS, band=EVAL_BAND) -> np.ndarray:
    return np.geomspace(band[0], band[1], n)


def sample_curve(per_bin, grid: FrequencyGrid, n=EVAL_POINTS, band=EVAL_BAND) -> MetricCurve:
    """Take per-bin dB values at the bins nearest to log-spaced frequencies."""
    f = eval_freqs(n, band)
    idx = np.rint(f / (grid.fs / grid.n_fft)).astype(int)
    idx = np.clip(idx, 0, grid.n_bins - 1)
    return MetricCurve(freqs=f, values=np.asarray(per_bin)[idx])


def _ratio_db(num, den, eps):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(num / (den + eps))


def program_pressures(bank: FilterBank, eval_atf: AtfSet) -> ProgramPressures:
    if eval_atf.M != 1:
        raise ValueError(f"evaluation ATFs must have one point per ear, got M = {eval_atf.M}")
    if bank.L != eval_atf.L or bank.K != eval_atf.K:
        raise ValueError(
            f"filter bank is (L={bank.L}, K={bank.K}) but evaluation set is (L={eval_atf.L}, K={eval_atf.K})"
        )
    if bank.fs != eval_atf.grid.fs:
        raise ValueError("filter bank and evaluation grid use different sample rates")
    W = bank.spectra(eval_atf.grid.n_fft)  # (l, j, c, f)
    H = eval_atf.H[:, :, 0]  # (k, e, l, f)
    P = np.einsum("kelf,ljcf->jkecf", H, W)
    return ProgramPressures(P=P, grid=eval_atf.grid)


def default_epsilon(pp: ProgramPressures) -> float:
    """1e-12 times the largest per-bin target energy over all listeners."""
    return EPS_REL * max(float(np.max(pp.target_energy(k))) for k in range(pp.K))


def _check_listener(k, K):
    if not 0 <= k < K:
        raise IndexError(f"listener index {k} out of range for K = {K}")


def izi_db(pp: ProgramPressures, k: int, eps: float) -> np.ndarray:
    _check_listener(k, pp.K)
    if pp.K < 2:
        raise ValueError("IZI needs at least two listeners")
    return _ratio_db(pp.target_energy(k), pp.leakage_energy(k), eps)


def ipi_db(pp: ProgramPressures, k: int, eps: float) -> np.ndarray:
    _check_listener(k, pp.K)
    if pp.K < 2:
        raise ValueError("IPI needs at least two listeners")
    return _ratio_db(pp.target_energy(k), pp.interference_energy(k), eps)


def izi(pp: ProgramPressures, k: int, eps: float) -> MetricCurve:
    return sample_curve(izi_db(pp, k, eps), pp.grid)


def ipi(pp: ProgramPressures, k: int, eps: float) -> MetricCurve:
    return sample_curve(ipi_db(pp, k, eps), pp.grid)


def transfer_matrix(bank: FilterBank, eval_atf: AtfSet, k: int) -> np.ndarray:
    """T[e, c, bin]: ear e of listener k driven by channel c of program k."""
    _check_listener(k, eval_atf.K)
    return program_pressures(bank, eval_atf).P[k, k]


def xtc_from_transfer(T, eps: float) -> np.ndarray:
    T = np.asarray(T)
    same = np.abs(T[0, 0]) ** 2 + np.abs(T[1, 1]) ** 2
    cross = np.abs(T[0, 1]) ** 2 + np.abs(T[1, 0]) ** 2
    return _ratio_db(same, cross, eps)


def xtc_db(pp: ProgramPressures, k: int, eps: float) -> np.ndarray:
    _check_listener(k, pp.K)
    return xtc_from_transfer(pp.P[k, k], eps)


def xtc(bank: FilterBank, eval_atf: AtfSet, k: int, eps: float) -> MetricCurve:
    return sample_curve(xtc_from_transfer(transfer_matrix(bank, eval_atf, k), eps), eval_atf.grid)


def broadband(curve: MetricCurve) -> float:
    """Arithmetic mean of the curve's dB values."""
    if curve.values.size == 0:
        raise ValueError("cannot average an empty curve")
    return float(np.mean(curve.values))
