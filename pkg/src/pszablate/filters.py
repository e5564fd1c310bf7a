"""Regularized pressure-matching filter design and drive-signal synthesis.

Per frequency bin the weights minimize ``|H w - d|^2 + lam' |w|^2`` where
``H`` stacks every ear control point of every listener and ``d`` is one at
the intended ear of the intended listener and zero everywhere else.
``lam'`` is ``lam`` times the mean diagonal of ``H^H H`` for that bin.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .atf import AtfSet, FrequencyGrid

FILTERBANK_MAGIC = "# pszablate filter bank v1"


class SingularDesignError(np.linalg.LinAlgError):
    """Unregularized normal equations are singular."""


@dataclass(frozen=True)
class DesignConfig:
    lam: float = 1e-3
    filter_length: int = 4096
    modeling_delay: int | None = None
    band_edges: tuple | None = None
    crossover_bins: int = 2
    taper: int | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if int(self.filter_length) != self.filter_length or self.filter_length < 1:
            raise ValueError("filter_length must be a positive integer")
        if self.modeling_delay is None:
            object.__setattr__(self, "modeling_delay", self.filter_length // 2)
        if not 0 <= self.modeling_delay < self.filter_length:
            raise ValueError("modeling_delay must lie in [0, filter_length)")
        if self.taper is None:
            object.__setattr__(self, "taper", self.filter_length // 32)
        if self.band_edges is not None:
            object.__setattr__(self, "band_edges", tuple(tuple(map(float, b)) for b in self.band_edges))

    @classmethod
    def for_scene(cls, scene, **kw):
        return cls(band_edges=tuple(s.band_edges for s in scene.speakers), **kw)


@dataclass(frozen=True)
class FilterBank:
    """taps[l, k, c, n] for loudspeaker l, program k, stereo channel c."""

    taps: np.ndarray
    fs: float

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=float)
        if t.ndim != 4 or t.shape[2] != 2:
            raise ValueError(f"filter taps must have shape (L, K, 2, N), got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("filter taps must be finite")
        t.flags.writeable = False
        object.__setattr__(self, "taps", t)

    L = property(lambda self: self.taps.shape[0])
    K = property(lambda self: self.taps.shape[1])
    filter_length = property(lambda self: self.taps.shape[3])

    def spectra(self, n_fft: int) -> np.ndarray:
        if self.filter_length > n_fft:
            raise ValueError("filters are longer than the transform")
        return np.fft.rfft(self.taps, n_fft, axis=-1)

    def energy(self) -> float:
        return float(np.sum(self.taps**2))

    def save(self, path):
        """Plain-text layout: magic line, ``key value`` header lines (L, K,
        filter_length, fs, sha256), then one tap per line in row-major
        (l, k, c, n) order. Values are written with ``repr`` so they
        round-trip exactly."""
        body = "\n".join(repr(float(v)) for v in self.taps.ravel()) + "\n"
        head = [
            FILTERBANK_MAGIC,
            f"L {self.L}",
            f"K {self.K}",
            f"filter_length {self.filter_length}",
            f"fs {self.fs!r}",
            f"sha256 {hashlib.sha256(body.encode()).hexdigest()}",
        ]
        Path(path).write_text("\n".join(head) + "\n" + body)

    @classmethod
    def load(cls, path):
        text = Path(path).read_text()
        lines = text.split("\n")
        if not lines or lines[0] != FILTERBANK_MAGIC:
            raise ValueError(f"{path}: not a filter bank file")
        hdr = {}
        for ln in lines[1:6]:
            key, _, val = ln.partition(" ")
            hdr[key] = val
        try:
            L, K, N = int(hdr["L"]), int(hdr["K"]), int(hdr["filter_length"])
            fs = float(hdr["fs"])
        except (KeyError, ValueError):
            raise ValueError(f"{path}: malformed filter bank header") from None
        body = "\n".join(lines[6:])
        if hashlib.sha256(body.encode()).hexdigest() != hdr.get("sha256"):
            raise ValueError(f"{path}: filter bank checksum mismatch")
        vals = np.array([float(v) for v in lines[6:] if v])
        if vals.size != L * K * 2 * N:
            raise ValueError(f"{path}: expected {L * K * 2 * N} taps, found {vals.size}")
        return cls(taps=vals.reshape(L, K, 2, N), fs=fs)


def band_masks(band_edges, grid: FrequencyGrid, crossover_bins: int = 2) -> np.ndarray:
    """Per-speaker weights in [0, 1]: one inside the band, zero outside, with
    a raised-cosine ramp ``crossover_bins`` wide just outside each edge."""
    f = grid.freqs
    df = grid.fs / grid.n_fft
    width = crossover_bins * df
    out = np.zeros((len(band_edges), f.size))
    for i, (lo, hi) in enumerate(band_edges):
        m = ((f >= lo) & (f <= hi)).astype(float)
        if width > 0:
            below = (f < lo) & (f > lo - width)
            m[below] = 0.5 * (1 - np.cos(np.pi * (f[below] - (lo - width)) / width))
            above = (f > hi) & (f < hi + width)
            m[above] = 0.5 * (1 + np.cos(np.pi * (f[above] - hi) / width))
        out[i] = m
    return out


def design_targets(K: int, M: int) -> np.ndarray:
    """Target matrix of shape (K*2*M, K*2): rows are (listener, ear, point),
    columns are (program, channel)."""
    D = np.zeros((K, 2, M, K, 2))
    for k in range(K):
        for c in range(2):
            D[k, c, :, k, c] = 1.0
    return D.reshape(K * 2 * M, K * 2)


def solve_pressure_matching(H, D, lam, masks=None):
    """Regularized least squares per bin.

    ``H`` is (n_bins, P, L), ``D`` is (P, Q) or (n_bins, P, Q) and ``masks``
    (L, n_bins). Masked-out speakers get zero weight; partially masked ones
    are scaled by their mask inside the solve. Returns (n_bins, L, Q).
    """
    H = np.asarray(H, dtype=complex)
    nb, P, L = H.shape
    D = np.asarray(D, dtype=complex)
    if D.ndim == 2:
        D = np.broadcast_to(D, (nb,) + D.shape)
    if D.shape[:2] != (nb, P):
        raise ValueError(f"target shape {D.shape} does not match ATF shape {H.shape}")
    Q = D.shape[2]
    if masks is None:
        masks = np.ones((L, nb))
    masks = np.asarray(masks, dtype=float)
    if masks.shape != (L, nb):
        raise ValueError(f"mask shape {masks.shape} does not match ({L}, {nb})")

    W = np.zeros((nb, L, Q), dtype=complex)
    active = masks > 0
    patterns, inverse = np.unique(active.T, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    for p, pattern in enumerate(patterns):
        cols = np.flatnonzero(pattern)
        bins = np.flatnonzero(inverse == p)
        if cols.size == 0:
            continue
        mk = masks[np.ix_(cols, bins)].T  # (b, n)
        Hm = H[np.ix_(bins, np.arange(P), cols)] * mk[:, None, :]
        Hh = np.conj(np.swapaxes(Hm, 1, 2))
        A = Hh @ Hm
        diag = np.real(np.einsum("bii->bi", A))
        reg = lam * diag.mean(axis=1)
        if lam == 0:
            cond = np.linalg.cond(A)
            bad = ~(cond < 1e12)
            if np.any(bad):
                raise SingularDesignError(
                    f"normal equations singular at lam=0 in {int(bad.sum())} bins "
                    f"(first bin {int(bins[np.argmax(bad)])}, cond {cond[np.argmax(bad)]:.3g})"
                )
        # a bin where every active path is exactly zero (e.g. DC through a
        # high-passed FR) has w = 0 as its regularized minimizer
        live = reg > 0 if lam > 0 else np.ones(bins.size, dtype=bool)
        if not np.all(live):
            bins, A, Hh, mk, reg = bins[live], A[live], Hh[live], mk[live], reg[live]
            if bins.size == 0:
                continue
        A = A + reg[:, None, None] * np.eye(cols.size)
        sol = np.linalg.solve(A, Hh @ D[bins])
        W[np.ix_(bins, cols, np.arange(Q))] = sol * mk[:, :, None]
    return W


def _design_matrix(atf: AtfSet):
    K, _, M, L, nb = atf.H.shape
    # (k, e, m, l, bin) -> (bin, k*e*m, l)
    return np.moveaxis(atf.H.reshape(K * 2 * M, L, nb), -1, 0)


def pressure_matching_spectra(atf: AtfSet, cfg: DesignConfig) -> np.ndarray:
    """Designed weights W[l, k, c, bin] (no modeling delay applied)."""
    K, _, M, L, nb = atf.H.shape
    masks = None
    if cfg.band_edges is not None:
        if len(cfg.band_edges) != L:
            raise ValueError(f"{len(cfg.band_edges)} band specs for {L} loudspeakers")
        masks = band_masks(cfg.band_edges, atf.grid, cfg.crossover_bins)
    W = solve_pressure_matching(_design_matrix(atf), design_targets(K, M), cfg.lam, masks)
    return np.moveaxis(W, 0, -1).reshape(L, K, 2, nb)


def spectra_to_fir(W, cfg: DesignConfig, grid: FrequencyGrid) -> FilterBank:
    """Inverse-transform W[l, k, c, bin], delay by ``cfg.modeling_delay``,
    keep ``cfg.filter_length`` taps and taper both ends with half
    raised-cosine ramps of ``cfg.taper`` samples."""
    W = np.asarray(W)
    if W.shape[-1] != grid.n_bins:
        raise ValueError("spectra are not on the design grid")
    N = cfg.filter_length
    if N > grid.n_fft:
        raise ValueError("filter_length exceeds n_fft")
    h = np.fft.irfft(W, grid.n_fft, axis=-1)
    h = np.roll(h, cfg.modeling_delay, axis=-1)[..., :N]
    t = min(cfg.taper, N // 2)
    if t > 0:
        ramp = 0.5 * (1 - np.cos(np.pi * (np.arange(t) + 0.5) / t))
        win = np.ones(N)
        win[:t] = ramp
        win[N - t :] = ramp[::-1]
        h = h * win
    return FilterBank(taps=h, fs=grid.fs)


def design_pressure_matching(atf: AtfSet, cfg: DesignConfig) -> FilterBank:
    return spectra_to_fir(pressure_matching_spectra(atf, cfg), cfg, atf.grid)


def synthesize_drive_signals(bank: FilterBank, programs) -> np.ndarray:
    """x[l] = sum over programs k and channels c of s[k, c] * w[l, k, c]
    (full linear convolution). ``programs`` has shape (K, 2, n)."""
    s = np.asarray(programs, dtype=float)
    if s.ndim != 3 or s.shape[:2] != (bank.K, 2):
        raise ValueError(f"programs must have shape ({bank.K}, 2, n), got {s.shape}")
    n_out = s.shape[2] + bank.filter_length - 1
    nfft = 1 << (n_out - 1).bit_length()
    S = np.fft.rfft(s, nfft, axis=-1)
    Wf = np.fft.rfft(bank.taps, nfft, axis=-1)
    X = np.einsum("kcf,lkcf->lf", S, Wf)
    return np.fft.irfft(X, nfft, axis=-1)[:, :n_out]
