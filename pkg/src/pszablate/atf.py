"""Frequency-domain acoustic transfer functions for the four cumulative
model stages.

    C0 = Hdir + Hrefl
    C1 = A (Hdir + Hrefl)
    C2 = A (D Hdir + Hrefl)
    C3 = A (D Hhrtf Hdir + Hrefl)

``A`` is the loudspeaker's complex frequency response, ``D`` the piston
directivity toward the control point and ``Hhrtf`` the free-field
normalized rigid-sphere response. All spectra are single-sided
(``numpy.fft.rfft`` layout) and use the ``exp(-i w t)`` kernel of the FFT,
so a delay of ``tau`` seconds is ``exp(-i w tau)``.
"""
from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import zipfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile

from . import specfun
from .geometry import EARS, Scene, ear_control_points, incidence_angle, off_axis_angle
from .room import DecomposedRir, simulate_rir
from .specfun import ConvergenceError, SeriesControl

log = logging.getLogger(__name__)

STAGES = ("C0", "C1", "C2", "C3")


def check_stage(stage: str) -> str:
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {', '.join(STAGES)}")
    return stage


@dataclass(frozen=True)
class FrequencyGrid:
    fs: float = 48000.0
    n_fft: int = 16384

    def __post_init__(self):
        n = int(self.n_fft)
        if n != self.n_fft or n < 2 or n & (n - 1):
            raise ValueError(f"n_fft must be a power of two, got {self.n_fft!r}")
        if not self.fs > 0:
            raise ValueError("fs must be positive")
        object.__setattr__(self, "n_fft", n)
        object.__setattr__(self, "fs", float(self.fs))

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.fs / self.n_fft

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * np.pi * self.freqs


@dataclass(frozen=True)
class LoudspeakerFr:
    speaker_id: str
    response: np.ndarray
    synthetic: bool = False

    def __post_init__(self):
        r = np.asarray(self.response, dtype=complex)
        if r.ndim != 1 or not np.all(np.isfinite(r)):
            raise ValueError(f"FR for {self.speaker_id} must be a finite 1-D spectrum")
        r.flags.writeable = False
        object.__setattr__(self, "response", r)

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.response == 1.0))


@dataclass(frozen=True)
class AtfSet:
    """H[k, e, m, l, bin] for one stage; read-only once built."""

    stage: str
    H: np.ndarray
    grid: FrequencyGrid
    scene_digest: str

    def __post_init__(self):
        check_stage(self.stage)
        if self.H.ndim != 5 or self.H.shape[1] != 2 or self.H.shape[-1] != self.grid.n_bins:
            raise ValueError(f"ATF tensor has shape {self.H.shape}, expected (K, 2, M, L, {self.grid.n_bins})")
        self.H.flags.writeable = False

    @property
    def shape(self):
        return self.H.shape

    K = property(lambda self: self.H.shape[0])
    M = property(lambda self: self.H.shape[2])
    L = property(lambda self: self.H.shape[3])


# --------------------------------------------------------------------------
# building blocks


def fft_components(rir: DecomposedRir, grid: FrequencyGrid):
    n = len(rir.h_dir)
    if n != len(rir.h_refl):
        raise ValueError("direct and reflected parts differ in length")
    if n > grid.n_fft:
        raise ValueError(f"RIR of {n} samples does not fit n_fft = {grid.n_fft}")
    return np.fft.rfft(rir.h_dir, grid.n_fft), np.fft.rfft(rir.h_refl, grid.n_fft)


def piston_directivity(omega, theta, a, c=343.0):
    """Far-field circular piston directivity 2 J1(u)/u, u = (w/c) a sin(theta).

    Signed (side lobes are negative); exactly 1 where ``u < 1e-8``.
    """
    omega = np.asarray(omega, dtype=float)
    theta = np.asarray(theta, dtype=float)
    u = omega / c * a * np.sin(theta)
    on_axis = np.abs(u) < 1e-8
    safe = np.where(on_axis, 1.0, u)
    out = np.where(on_axis, 1.0, 2.0 * specfun.bessel_j1(safe) / safe)
    return float(out) if out.ndim == 0 else out


def _rs_series(k, r_s, r_p, R, cos_gamma, dist, ctl, rigid, alpha=None):
    N = ctl.max_order
    r_lt, r_gt = min(r_s, r_p), max(r_s, r_p)
    x_lt, x_gt = k * r_lt, k * r_gt
    j_lt = specfun.sph_jn_all(N, x_lt)
    h_gt = specfun.sph_h1_all(N, x_gt)
    with np.errstate(over="ignore", invalid="ignore"):
        S = j_lt * h_gt
        if rigid:
            if alpha is None:
                alpha = specfun.rigid_sphere_alpha_all(N, k * R)
            h_lt = np.empty(j_lt.shape, dtype=complex)
            h_lt.real, h_lt.imag = j_lt, specfun.sph_yn_all(N, x_lt)
            S = S - (alpha * h_gt) * h_lt
        weight = (2.0 * np.arange(N + 1) + 1.0)[:, None]
        P = specfun.legendre_all(N, cos_gamma)[:, None]
        terms = weight * S * P
        # P_n is bounded by one; using |S_n| keeps zeros of P_n (e.g. at
        # 90 degrees) from faking convergence
        bound = weight * np.abs(S)
        partial = np.cumsum(terms, axis=0)
        small = bound <= ctl.term_tol * np.abs(partial)
    finite = np.cumprod(np.isfinite(terms), axis=0).astype(bool)
    ok = small[1:] & small[:-1] & finite[1:]
    done = ok.any(axis=0)
    if not np.all(done):
        bad = np.flatnonzero(~done)[0]
        raise ConvergenceError(
            f"rigid-sphere series did not converge by order {N} at k = {k[bad]:.6g} 1/m "
            f"(r_s = {r_s:.4g} m, r_p = {r_p:.4g} m, tol = {ctl.term_tol:g})"
        )
    stop = np.argmax(ok, axis=0) + 1
    total = partial[stop, np.arange(k.size)]
    # total is the outgoing-wave (exp(+ikr)) field; normalize by the matching
    # free-field Green's function, then conjugate into the FFT convention
    return np.conj(1j * k * total * dist * np.exp(-1j * k * dist)), stop


def rs_hrtf(omega, r_speaker, r_point, R, c=343.0, ctl: SeriesControl | None = None, rigid=True):
    """Free-field-normalized rigid-sphere response at ``r_point``.

    Positions are relative to the sphere center. ``rigid=False`` drops the
    scattered term (alpha_n = 0), which must reproduce unity by the
    addition theorem. Raises ``ConvergenceError`` when the series needs
    more than ``ctl.max_order`` orders.
    """
    ctl = ctl or SeriesControl()
    omega_in = np.asarray(omega, dtype=float)
    omega = np.atleast_1d(omega_in)
    if np.any(omega <= 0):
        raise ValueError("rs_hrtf requires omega > 0")
    r_speaker = np.asarray(r_speaker, dtype=float)
    r_point = np.asarray(r_point, dtype=float)
    r_s, r_p = float(np.linalg.norm(r_speaker)), float(np.linalg.norm(r_point))
    if r_s <= R:
        raise ValueError(f"speaker at {r_s:.4g} m is inside the sphere of radius {R}")
    if r_p < R * (1 - 1e-9):
        raise ValueError(f"control point at {r_p:.4g} m is inside the sphere of radius {R}")
    cos_g = float(np.dot(r_speaker, r_point) / (r_s * r_p))
    cos_g = min(1.0, max(-1.0, cos_g))
    dist = float(np.linalg.norm(r_speaker - r_point))
    out, _ = _rs_series(omega.ravel() / c, r_s, r_p, R, cos_g, dist, ctl, rigid)
    if omega_in.ndim == 0:
        return complex(out[0])
    return out.reshape(omega_in.shape)


# --------------------------------------------------------------------------
# loudspeaker frequency responses


def ingest_fr_measurement(raw_ir, source_fs, grid: FrequencyGrid, speaker_id="speaker") -> LoudspeakerFr:
    """Turn a measured impulse response into a response on ``grid``.

    The IR is resampled to the grid rate (keeping its transfer-function
    scale), transformed, and interpolated onto the grid bins.
    """
    x = np.asarray(raw_ir, dtype=float).ravel()
    if x.size == 0:
        raise ValueError(f"FR measurement for {speaker_id} is empty")
    if not np.any(x):
        raise ValueError(f"FR measurement for {speaker_id} is all zeros")
    if not source_fs > 0:
        raise ValueError("source sample rate must be positive")
    if source_fs != grid.fs:
        ratio = Fraction(grid.fs / source_fs).limit_denominator(10000)
        x = signal.resample_poly(x, ratio.numerator, ratio.denominator) * (source_fs / grid.fs)
    if x.size <= grid.n_fft:
        spec = np.fft.rfft(x, grid.n_fft)
    else:
        n = 1 << (x.size - 1).bit_length()
        full = np.fft.rfft(x, n)
        f_src = np.arange(full.size) * grid.fs / n
        spec = np.interp(grid.freqs, f_src, full.real) + 1j * np.interp(grid.freqs, f_src, full.imag)
    return LoudspeakerFr(speaker_id=speaker_id, response=spec)


def read_fr_file(path):
    """Read ``(samples, fs)`` from a mono WAV file or a text file whose first
    line is the sample rate followed by one sample per line."""
    path = Path(path)
    if path.suffix.lower() == ".wav":
        fs, data = wavfile.read(path)
        if data.ndim > 1:
            if data.shape[1] != 1:
                raise ValueError(f"{path}: FR files must be single-channel, found {data.shape[1]} channels")
            data = data[:, 0]
        if np.issubdtype(data.dtype, np.integer):
            data = data / float(np.iinfo(data.dtype).max)
        return np.asarray(data, dtype=float), float(fs)
    lines = [ln.strip() for ln in path.read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty FR file")
    try:
        fs = float(lines[0])
        samples = np.array([float(v) for v in lines[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    return samples, fs


def fr_name(scene: Scene, index: int) -> str:
    return scene.speakers[index].fr_id or f"spk{index:02d}"


def load_fr_dir(fr_dir, scene: Scene, grid: FrequencyGrid):
    """Load ``<name>.txt`` or ``<name>.wav`` for every speaker.

    Returns ``(frs, missing)``: a dict index -> LoudspeakerFr and the list
    of speaker names without a file.
    """
    fr_dir = Path(fr_dir)
    frs, missing = {}, []
    for i in range(scene.L):
        name = fr_name(scene, i)
        for ext in (".txt", ".wav"):
            p = fr_dir / f"{name}{ext}"
            if p.exists():
                raw, fs = read_fr_file(p)
                frs[i] = ingest_fr_measurement(raw, fs, grid, speaker_id=name)
                break
        else:
            missing.append(name)
    return frs, missing


def synthetic_fr(scene: Scene, index: int, grid: FrequencyGrid) -> LoudspeakerFr:
    """Stand-in FR: 2nd-order Butterworth high-pass at the speaker's lower
    band edge times a +-0.7 dB log-frequency ripple whose phase depends on
    the speaker index, so units differ from one another."""
    spk = scene.speakers[index]
    f = grid.freqs
    s = 2j * np.pi * f
    w0 = 2 * np.pi * max(spk.band_edges[0], 1.0)
    hp = s * s / (s * s + math.sqrt(2.0) * w0 * s + w0 * w0)
    with np.errstate(divide="ignore"):
        octaves = np.log2(np.where(f > 0, f, 1.0) / w0 * 2 * np.pi)
    ripple = 1.0 + 0.08 * np.sin(2 * np.pi * octaves / 1.5 + 0.9 * index)
    return LoudspeakerFr(speaker_id=fr_name(scene, index), response=hp * ripple, synthetic=True)


def identity_fr(scene: Scene, index: int, grid: FrequencyGrid) -> LoudspeakerFr:
    return LoudspeakerFr(speaker_id=fr_name(scene, index), response=np.ones(grid.n_bins))


# --------------------------------------------------------------------------
# assembly


@dataclass(frozen=True)
class Components:
    """Direct and reflected spectra for every (k, e, m, l) tuple."""

    H_dir: np.ndarray
    H_refl: np.ndarray
    grid: FrequencyGrid
    scene_digest: str


def compute_components(scene: Scene, grid: FrequencyGrid) -> Components:
    K, M, L = scene.K, scene.M, scene.L
    shape = (K, 2, M, L, grid.n_bins)
    H_dir = np.empty(shape, dtype=complex)
    H_refl = np.empty(shape, dtype=complex)
    for k, lst in enumerate(scene.listeners):
        for ear, m, p in ear_control_points(lst):
            e = EARS.index(ear)
            for l, spk in enumerate(scene.speakers):
                rir = simulate_rir(scene.room, spk.pos, p, scene.speed_of_sound, grid.fs)
                H_dir[k, e, m, l], H_refl[k, e, m, l] = fft_components(rir, grid)
    return Components(H_dir, H_refl, grid, scene.digest())


def build_atf_set(
    scene: Scene,
    stage: str,
    frs=None,
    grid: FrequencyGrid | None = None,
    ctl: SeriesControl | None = None,
    *,
    directivity: bool = True,
    hrtf: bool = True,
    components: Components | None = None,
) -> AtfSet:
    """Assemble the ATF tensor for ``stage``.

    ``frs`` maps speaker index to ``LoudspeakerFr`` and is required from C1
    on. ``directivity=False`` / ``hrtf=False`` replace the corresponding
    layer by exact unity; identity FRs are likewise skipped, so such a C3
    set is bit-identical to C0.
    """
    check_stage(stage)
    grid = grid or FrequencyGrid(fs=scene.sample_rate)
    ctl = ctl or SeriesControl()
    level = STAGES.index(stage)
    if components is None:
        components = compute_components(scene, grid)
    if components.grid != grid or components.scene_digest != scene.digest():
        raise ValueError("precomputed components belong to a different scene or grid")

    A = None
    if level >= 1:
        frs = frs or {}
        missing = [fr_name(scene, i) for i in range(scene.L) if i not in frs]
        if missing:
            raise ValueError(f"stage {stage} needs FRs for speakers: {', '.join(missing)}")
        A = []
        for i in range(scene.L):
            fr = frs[i]
            if fr.response.shape != (grid.n_bins,):
                raise ValueError(f"FR for {fr.speaker_id} is not on the design grid")
            A.append(None if fr.is_identity else fr.response)

    use_dir = level >= 2 and directivity
    use_hrtf = level >= 3 and hrtf
    omega = grid.omega
    pos = omega > 0
    k0 = omega[pos] / scene.speed_of_sound
    c = scene.speed_of_sound

    H = np.empty(components.H_dir.shape, dtype=complex)
    for k, lst in enumerate(scene.listeners):
        alpha = specfun.rigid_sphere_alpha_all(ctl.max_order, k0 * lst.head_radius) if use_hrtf else None
        for ear, m, p in ear_control_points(lst):
            e = EARS.index(ear)
            for l, spk in enumerate(scene.speakers):
                hd = components.H_dir[k, e, m, l]
                hr = components.H_refl[k, e, m, l]
                if use_dir:
                    hd = piston_directivity(omega, off_axis_angle(spk, p), spk.piston_radius, c) * hd
                if use_hrtf:
                    hd = _tuple_hrtf(lst, spk, p, k0, pos, ctl, alpha, (stage, k, ear, m, l)) * hd
                h = hd + hr
                if A is not None and A[l] is not None:
                    h = A[l] * h
                H[k, e, m, l] = h
    return AtfSet(stage=stage, H=H, grid=grid, scene_digest=components.scene_digest)


def _tuple_hrtf(lst, spk, p, k0, pos, ctl, alpha, where):
    r_s = spk.pos - lst.center
    r_p = np.asarray(p) - lst.center
    gamma = incidence_angle(lst, spk, p)
    try:
        vals, _ = _rs_series(
            k0, float(np.linalg.norm(r_s)), float(np.linalg.norm(r_p)), lst.head_radius,
            math.cos(gamma), float(np.linalg.norm(r_s - r_p)), ctl, True, alpha,
        )
    except ConvergenceError as exc:
        stage, k, ear, m, l = where
        raise ConvergenceError(f"stage {stage}, listener {k}, ear {ear}, point {m}, speaker {l}: {exc}") from None
    out = np.ones(pos.size, dtype=complex)
    # the DC limit of the normalized sphere response is unity
    out[pos] = vals
    return out


# --------------------------------------------------------------------------
# archive I/O

ARCHIVE_FORMAT = "pszablate-atf"


class ArchiveError(ValueError):
    pass


def _fixed_zip_write(zf, name, data: bytes):
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_STORED
    zf.writestr(info, data)


def save_atf_archive(path, atf: AtfSet, scene: Scene | None = None):
    """Write a zip container: ``header.json`` plus ``H.npy`` holding the
    complex128 tensor in C order over (k, e, m, l, bin).

    The header records dimensions, grid, scene digest, the speakers' band
    edges and a SHA-256 of the tensor bytes.
    """
    H = np.ascontiguousarray(atf.H, dtype="<c16")
    K, E, M, L, nb = H.shape
    header = {
        "format": ARCHIVE_FORMAT,
        "version": 1,
        "stage": atf.stage,
        "dims": {"K": K, "E": E, "M": M, "L": L, "n_bins": nb},
        "fs": atf.grid.fs,
        "n_fft": atf.grid.n_fft,
        "scene_digest": atf.scene_digest,
        "band_edges": [list(s.band_edges) for s in scene.speakers] if scene else None,
        "sha256": hashlib.sha256(H.tobytes()).hexdigest(),
    }
    buf = io.BytesIO()
    np.lib.format.write_array(buf, H, allow_pickle=False)
    with zipfile.ZipFile(path, "w") as zf:
        _fixed_zip_write(zf, "header.json", json.dumps(header, indent=1, sort_keys=True).encode())
        _fixed_zip_write(zf, "H.npy", buf.getvalue())


def load_atf_archive(path):
    """Returns ``(AtfSet, header)``; raises ArchiveError on any corruption."""
    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read("header.json"))
            H = np.lib.format.read_array(io.BytesIO(zf.read("H.npy")), allow_pickle=False)
    except (zipfile.BadZipFile, KeyError, ValueError, OSError, EOFError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        if "CRC" in str(exc):
            raise ArchiveError(f"{path}: checksum mismatch ({exc})") from None
        raise ArchiveError(f"{path}: unreadable ATF archive ({exc})") from None
    if header.get("format") != ARCHIVE_FORMAT:
        raise ArchiveError(f"{path}: not an ATF archive")
    digest = hashlib.sha256(np.ascontiguousarray(H, dtype="<c16").tobytes()).hexdigest()
    if digest != header.get("sha256"):
        raise ArchiveError(f"{path}: checksum mismatch (expected {header.get('sha256')}, got {digest})")
    d = header["dims"]
    if H.shape != (d["K"], d["E"], d["M"], d["L"], d["n_bins"]):
        raise ArchiveError(f"{path}: tensor shape {H.shape} disagrees with header dims {d}")
    grid = FrequencyGrid(fs=header["fs"], n_fft=header["n_fft"])
    return AtfSet(stage=header["stage"], H=H, grid=grid, scene_digest=header["scene_digest"]), header
