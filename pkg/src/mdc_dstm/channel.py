"""
Quasi-static flat Rayleigh MIMO link and the Monte Carlo BLER engine.

SNR convention: the average total transmit power over all antennas per
channel use is 1, and ``SNR = 1 / sigma^2`` with sigma^2 the complex noise
variance per receive antenna.

Every frame draws its channel, symbols and noise from its own generator
seeded by ``(master_seed, snr_index, frame_index)``, so results do not depend
on batch size or on how many worker processes are used.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import codec
from .constellation import ConstellationSet, named_constellation
from .stbc import DispersionSet, code_for_antennas

log = logging.getLogger(__name__)

SCHEMES = {
    # scheme -> {n_t: code kind}
    "mdc_qostbc_dstm": {4: "mdc_qostbc", 8: "mdc_qostbc"},
    "ostbc_dstm": {4: "ostbc"},
}
DEFAULT_SYMBOLS_PER_ANTENNA = 132
WORKERS_ENV = "MDC_DSTM_WORKERS"
CHUNK_FRAMES = 2000


@dataclass(frozen=True)
class FrameSpec:
    """Channel uses per antenna in one frame; the first block is the reference."""

    t_len: int
    symbols_per_antenna: int = DEFAULT_SYMBOLS_PER_ANTENNA

    def __post_init__(self):
        if self.symbols_per_antenna % self.t_len:
            raise ValueError(
                f"{self.symbols_per_antenna} symbols per antenna is not a multiple of T={self.t_len}"
            )
        if self.blocks < 2:
            raise ValueError("a frame needs the reference block and at least one info block")

    @property
    def blocks(self) -> int:
        return self.symbols_per_antenna // self.t_len

    @property
    def info_blocks(self) -> int:
        return self.blocks - 1

    @classmethod
    def for_code(cls, t_len: int, symbols_per_antenna: int | None = None) -> "FrameSpec":
        """132 channel uses when T divides it, else the next multiple of T."""
        if symbols_per_antenna is None:
            symbols_per_antenna = _round_up(DEFAULT_SYMBOLS_PER_ANTENNA, t_len)
        return cls(t_len, symbols_per_antenna)


def _round_up(n: int, t: int) -> int:
    return -(-n // t) * t


@dataclass(frozen=True)
class SimConfig:
    n_t: int = 4
    n_r: int = 1
    scheme: str = "mdc_qostbc_dstm"
    constellation: str = "M1"
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    min_frame_errors: int = 100
    max_frames: int = 2_000_000
    master_seed: int = 0
    genie: bool = False
    symbols_per_antenna: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if not self.snr_db:
            raise ValueError("snr_db list is empty")
        if self.min_frame_errors < 1:
            raise ValueError("min_frame_errors must be >= 1")
        if self.max_frames < 1:
            raise ValueError("max_frames must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {sorted(SCHEMES)}")
        if self.n_t not in SCHEMES[self.scheme]:
            raise ValueError(
                f"unsupported combination: scheme {self.scheme} with {self.n_t} transmit "
                f"antennas (supported: {sorted(SCHEMES[self.scheme])})"
            )
        if self.n_r < 1:
            raise ValueError("n_r must be >= 1")


@dataclass
class BlerPoint:
    snr_db: float
    frames_run: int
    frame_errors: int
    symbol_errors: int = 0
    codeword_errors: int = 0
    wall_seconds: float = field(default=0.0, compare=False)

    @property
    def bler(self) -> float:
        return self.frame_errors / self.frames_run if self.frames_run else float("nan")

    def codeword_error_rate(self, info_blocks: int) -> float:
        """Fraction of code matrices U_t decoded wrongly."""
        return self.codeword_errors / (self.frames_run * info_blocks)


@dataclass(frozen=True)
class Link:
    """Everything a frame needs, resolved from a :class:`SimConfig`."""

    cfg: SimConfig
    dset: DispersionSet
    points: np.ndarray
    frame: FrameSpec

    @property
    def rate(self) -> float:
        return self.dset.rate

    def spectral_efficiency(self) -> tuple[float, float]:
        """Nominal ``R log2 M`` and the value after reference-block overhead."""
        nominal = self.rate * math.log2(len(self.points))
        return nominal, nominal * self.frame.info_blocks / self.frame.blocks


def build_link(cfg: SimConfig, constellation: ConstellationSet | None = None) -> Link:
    dset = code_for_antennas(cfg.n_t, SCHEMES[cfg.scheme][cfg.n_t])
    cset = constellation or named_constellation(cfg.constellation)
    if dset.kind == "mdc_qostbc":
        # beta = 0 for every codeword iff x*y is the same for all points
        prod = cset.points.real * cset.points.imag
        if np.ptp(prod) > codec.QU_TOL:
            raise codec.NotQuasiUnitaryError(
                f"constellation {cset.name!r} has x*y ranging over [{prod.min():.4g}, "
                f"{prod.max():.4g}]; codewords would have beta != 0",
                beta=float(2 * np.ptp(prod)),
            )
    return Link(cfg, dset, np.asarray(cset.points), FrameSpec.for_code(dset.t_len, cfg.symbols_per_antenna))


def draw_channel(n_r: int, n_t: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, 1) entries, constant over a frame.

    Uses the same draw layout as the frame generator, so the channel of frame
    f equals ``draw_channel(n_r, n_t, frame_rng(seed, snr_index, f))``.
    """
    w = rng.standard_normal((n_r * n_t, 2)) * (1 / np.sqrt(2))
    return (w[:, 0] + 1j * w[:, 1]).reshape(n_r, n_t)


def frame_rng(master_seed: int, snr_index: int, frame_index: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, snr_index, frame_index])


def noise_std(snr_db: float) -> float:
    if snr_db == math.inf:
        return 0.0
    return 10.0 ** (-snr_db / 20.0)


def _draw_frames(link: Link, snr_index: int, frames: range):
    cfg, fs, k = link.cfg, link.frame, link.dset.k
    n = len(frames)
    h = np.empty((n, cfg.n_r, cfg.n_t), complex)
    sym = np.empty((n, fs.info_blocks, k), np.int64)
    noise = np.empty((n, fs.blocks, cfg.n_r, fs.t_len), complex)
    m = len(link.points)
    nh = cfg.n_r * cfg.n_t
    nn = fs.blocks * cfg.n_r * fs.t_len
    scale = 1 / np.sqrt(2)
    for j, f in enumerate(frames):
        rng = frame_rng(cfg.master_seed, snr_index, f)
        # one normal draw per frame: channel entries first, then the noise
        w = rng.standard_normal((nh + nn, 2)) * scale
        sym[j] = rng.integers(0, m, size=(fs.info_blocks, k))
        z = w[:, 0] + 1j * w[:, 1]
        h[j] = z[:nh].reshape(cfg.n_r, cfg.n_t)
        noise[j] = z[nh:].reshape(fs.blocks, cfg.n_r, fs.t_len)
    return h, sym, noise


def simulate_frames(link: Link, snr_db: float, h, sym, noise, genie: bool):
    """Transmit and differentially decode a batch of frames.

    Returns ``(frame_error, symbol_errors, codeword_errors, decided)`` per
    frame, with ``decided`` the decoded symbol indices (same shape as ``sym``).
    """
    dset, pts, fs = link.dset, link.points, link.frame
    g = codec.gram_scale(dset)
    n = h.shape[0]
    if snr_db == -math.inf:
        sig, sd = 0.0, 1.0
    else:
        sig, sd = 1.0, noise_std(snr_db)
    u, a_sq = codec.code_matrices(dset, pts, sym)
    x = np.broadcast_to(np.eye(link.cfg.n_t, dtype=complex), (n, link.cfg.n_t, link.cfg.n_t))
    a_prev = np.ones(n)
    r_prev = sig * (h @ x) + sd * noise[:, 0]
    a_est = np.ones(n)
    decided = np.empty_like(sym)
    for t in range(fs.info_blocks):
        x = codec.differential_step(x, u[:, t], a_prev)
        a_prev = a_sq[:, t]
        r_t = sig * (h @ x) + sd * noise[:, t + 1]
        metrics = codec.single_symbol_metrics(r_prev, r_t, a_est, dset, pts)
        idx = np.argmin(metrics, axis=-1)
        decided[:, t] = idx
        a_est = a_sq[:, t] if genie else g * np.sum(np.abs(pts[idx]) ** 2, axis=-1)
        r_prev = r_t
    wrong = decided != sym
    sym_err = wrong.sum(axis=(1, 2))
    return sym_err > 0, sym_err, wrong.any(axis=2).sum(axis=1), decided


def run_frame(cfg: SimConfig, frame_index: int, snr_index: int = 0, link: Link | None = None):
    """One frame at ``cfg.snr_db[snr_index]``; returns ``(frame_error, symbol_errors)``."""
    link = link or build_link(cfg)
    h, sym, noise = _draw_frames(link, snr_index, range(frame_index, frame_index + 1))
    fe, se, _, _ = simulate_frames(link, cfg.snr_db[snr_index], h, sym, noise, cfg.genie)
    return int(fe[0]), int(se[0])


def _chunk(args):
    link, snr_index, start, stop = args
    h, sym, noise = _draw_frames(link, snr_index, range(start, stop))
    fe, se, ce, _ = simulate_frames(link, link.cfg.snr_db[snr_index], h, sym, noise,
                                    link.cfg.genie)
    return fe, se, ce


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_point(link: Link, snr_index: int, workers: int = 1, chunk: int = CHUNK_FRAMES) -> BlerPoint:
    """Run frames in index order until the error target or the frame cap."""
    cfg = link.cfg
    t0 = time.perf_counter()
    errors = sym_errors = cw_errors = frames = 0
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        start = 0
        while frames < cfg.max_frames and errors < cfg.min_frame_errors:
            jobs = []
            for _ in range(workers):
                stop = min(start + chunk, cfg.max_frames)
                if start >= stop:
                    break
                jobs.append((link, snr_index, start, stop))
                start = stop
            results = pool.map(_chunk, jobs) if pool else map(_chunk, jobs)
            for fe, se, ce in results:
                if errors >= cfg.min_frame_errors:
                    break
                # truncate at the frame that reaches the error target
                cum = np.cumsum(fe)
                hit = np.searchsorted(cum, cfg.min_frame_errors - errors)
                take = len(fe) if hit >= len(fe) else hit + 1
                errors += int(cum[take - 1]) if take else 0
                sym_errors += int(se[:take].sum())
                cw_errors += int(ce[:take].sum())
                frames += take
    finally:
        if pool:
            pool.shutdown()
    point = BlerPoint(cfg.snr_db[snr_index], int(frames), errors, sym_errors, cw_errors,
                      time.perf_counter() - t0)
    log.info("snr %.2f dB: %d/%d frames in error (BLER %.3g)", point.snr_db,
             errors, frames, point.bler)
    return point


def run_sweep(cfg: SimConfig, workers: int | None = None,
              constellation: ConstellationSet | None = None) -> list[BlerPoint]:
    link = build_link(cfg, constellation)
    workers = worker_count() if workers is None else workers
    return [run_point(link, i, workers) for i in range(len(cfg.snr_db))]


def transmit_power(dset: DispersionSet, points, indices) -> float:
    """Mean total transmit power per channel use over the info blocks of a stream."""
    u, a_sq = codec.code_matrices(dset, points, indices)
    x = np.eye(dset.n_t, dtype=complex)
    a_prev = 1.0
    total = 0.0
    for t in range(len(indices)):
        x = codec.differential_step(x, u[t], a_prev)
        a_prev = a_sq[t]
        total += np.real(np.vdot(x, x)) / dset.t_len
    return total / len(indices)


def snr_calibration(cfg: SimConfig, n_blocks: int = 20_000, indices=None,
                    constellation: ConstellationSet | None = None) -> dict:
    """Measured transmit power per channel use and noise variance per SNR point."""
    link = build_link(cfg, constellation)
    if indices is None:
        rng = np.random.default_rng([cfg.master_seed, 0xCA11])
        indices = rng.integers(0, len(link.points), size=(n_blocks, link.dset.k))
    power = transmit_power(link.dset, link.points, indices)
    nominal, effective = link.spectral_efficiency()
    return {
        "mean_tx_power": power,
        "noise_variance": {s: noise_std(s) ** 2 for s in cfg.snr_db},
        "spectral_efficiency": nominal,
        "spectral_efficiency_after_reference": effective,
        "frame": asdict(link.frame),
    }


def bler_slope(points: list[BlerPoint], lo_db: float, hi_db: float) -> float:
    """Decades of BLER drop per 10 dB between two SNR points of a sweep."""
    by = {p.snr_db: p for p in points}
    a, b = by[lo_db], by[hi_db]
    return (math.log10(a.bler) - math.log10(b.bler)) / ((hi_db - lo_db) / 10.0)


def snr_at_bler(points: list[BlerPoint], target: float) -> float:
    """SNR where log10(BLER) crosses ``target``, by linear interpolation in dB."""
    pts = sorted((p for p in points if p.frame_errors > 0), key=lambda p: p.snr_db)
    for a, b in zip(pts, pts[1:]):
        if a.bler >= target >= b.bler:
            la, lb, lt = (math.log10(v) for v in (a.bler, b.bler, target))
            if la == lb:
                return a.snr_db
            return a.snr_db + (la - lt) / (la - lb) * (b.snr_db - a.snr_db)
    raise ValueError(f"BLER {target:g} is not bracketed by the sweep")
