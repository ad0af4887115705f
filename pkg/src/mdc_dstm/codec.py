"""
Differential encoding of quasi-unitary code matrices and the near-optimal
differential decoder.

Encoder:  X_t = X_{t-1} U_t / a_{t-1},  X_0 = I,  a_0 = 1.

Decoder:  U_hat = argmin_U tr[ a^-2 R_{t-1}^H R_{t-1} U U^H
                             - 2 a^-1 Re(R_t^H R_{t-1} U) ]

with a = a_{t-1} taken from the previous decision (or the true value in genie
mode).  For codes whose Gram matrix is ``g * sum|c_i|^2 * I`` the metric
splits into one term per symbol, so each symbol is detected on its own.

The metric helpers broadcast over leading batch dimensions; the Monte Carlo
engine calls them directly on whole batches of frames.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .stbc import DispersionSet, assemble, gram_decompose

QU_TOL = 1e-9


class NotQuasiUnitaryError(ValueError):
    """The assembled code matrix is not a scaled unitary matrix."""

    def __init__(self, msg, beta=None):
        super().__init__(msg)
        self.beta = beta


@dataclass(frozen=True)
class CodeMatrix:
    u: np.ndarray
    a_sq: float


@dataclass(frozen=True)
class EncoderState:
    x_prev: np.ndarray
    a_prev_sq: float = 1.0


@dataclass(frozen=True)
class DecoderState:
    r_prev: np.ndarray
    a_prev_sq_est: float = 1.0
    genie: bool = False


def gram_scale(dset: DispersionSet) -> float:
    """g such that U U^H = g * sum|c_i|^2 * I for a quasi-unitary codeword."""
    a0 = dset.a_mats[0]
    return float(np.real(np.vdot(a0, a0)) / dset.n_t)


def make_code_matrix(dset: DispersionSet, symbols) -> CodeMatrix:
    """Assemble U from symbols and check ``U U^H = a^2 I``."""
    c = np.asarray(symbols, dtype=complex)
    u = assemble(dset, c)
    if dset.kind == "mdc_qostbc":
        _, beta, _ = gram_decompose(u, dset.k)
        if abs(beta) > QU_TOL:
            raise NotQuasiUnitaryError(
                f"beta = {beta:.6g} != 0: symbols violate x*y = const, "
                "codeword is not quasi-unitary",
                beta=float(beta),
            )
    a_sq = gram_scale(dset) * float(np.sum(np.abs(c) ** 2))
    err = np.linalg.norm(u @ u.conj().T - a_sq * np.eye(dset.t_len))
    if err > QU_TOL or a_sq <= 0:
        raise NotQuasiUnitaryError(f"||U U^H - a^2 I|| = {err:.3g} (a^2 = {a_sq:.6g})")
    return CodeMatrix(u, a_sq)


def code_matrices(dset: DispersionSet, points, indices) -> tuple[np.ndarray, np.ndarray]:
    """Batched assemble: ``indices`` (..., K) into ``points`` -> (U, a_sq)."""
    c = np.asarray(points, dtype=complex)[np.asarray(indices)]
    return assemble(dset, c), gram_scale(dset) * np.sum(np.abs(c) ** 2, axis=-1)


def initial_encoder_state(n_t: int) -> EncoderState:
    return EncoderState(np.eye(n_t, dtype=complex), 1.0)


def encode_step(state: EncoderState, u: CodeMatrix):
    """One differential step; returns ``(x_t, next_state)``."""
    if state.a_prev_sq <= 0:
        raise ValueError(f"a_prev_sq must be positive, got {state.a_prev_sq}")
    if state.x_prev.shape[-1] != u.u.shape[-2]:
        raise ValueError(f"X is {state.x_prev.shape}, U is {u.u.shape}")
    x = differential_step(state.x_prev, u.u, state.a_prev_sq)
    return x, EncoderState(x, u.a_sq)


def differential_step(x_prev, u, a_prev_sq):
    """``X_prev U / a_prev`` with batch broadcasting."""
    return (x_prev @ u) / np.sqrt(np.asarray(a_prev_sq))[..., None, None]


# metrics ----------------------------------------------------------------------


def exhaustive_metrics(r_prev, r_t, a_prev_sq, us, a_sqs=None):
    """Decision metric for every candidate U.

    ``us`` has shape (N, T, N_T).  With ``a_sqs`` given, ``U U^H`` is replaced
    by ``a_sq * I`` in the first term; otherwise it is computed literally.
    Returns shape (..., N).
    """
    r_prev = np.asarray(r_prev, dtype=complex)
    r_t = np.asarray(r_t, dtype=complex)
    a_sq = np.asarray(a_prev_sq, dtype=float)[..., None]
    p = np.conj(np.swapaxes(r_prev, -1, -2)) @ r_prev
    q = np.conj(np.swapaxes(r_t, -1, -2)) @ r_prev
    if a_sqs is None:
        uuh = us @ np.conj(np.swapaxes(us, -1, -2))
        first = np.real(np.einsum("...mn,knm->...k", p, uuh))
    else:
        first = np.real(np.trace(p, axis1=-2, axis2=-1))[..., None] * np.asarray(a_sqs)
    cross = np.real(np.einsum("...mn,knm->...k", q, us))
    return first / a_sq - 2.0 * cross / np.sqrt(a_sq)


def single_symbol_metrics(r_prev, r_t, a_prev_sq, dset: DispersionSet, points):
    """Per-symbol metric, shape (..., K, M).

    Entry (i, m) is ``a^-2 ||R_{t-1}||^2 g |z_m|^2
    - 2 a^-1 Re tr(R_t^H R_{t-1} (x_m A_i + j y_m B_i))``.
    """
    r_prev = np.asarray(r_prev, dtype=complex)
    r_t = np.asarray(r_t, dtype=complex)
    z = np.asarray(points, dtype=complex)
    a_sq = np.asarray(a_prev_sq, dtype=float)[..., None, None]
    q = np.conj(np.swapaxes(r_t, -1, -2)) @ r_prev
    # tr(Q A) = sum_mn Q_mn A_nm, i.e. a dot product with A transposed
    qf = q.reshape(q.shape[:-2] + (-1,))
    qa = np.real(qf @ np.swapaxes(dset.a_mats, -1, -2).reshape(dset.k, -1).T)
    qb = -np.imag(qf @ np.swapaxes(dset.b_mats, -1, -2).reshape(dset.k, -1).T)
    energy = np.sum(np.abs(r_prev) ** 2, axis=(-2, -1))[..., None, None]
    first = energy * gram_scale(dset) * np.abs(z) ** 2
    cross = qa[..., :, None] * z.real + qb[..., :, None] * z.imag
    return first / a_sq - 2.0 * cross / np.sqrt(a_sq)


# stateful decoding ------------------------------------------------------------


def initial_decoder_state(r_0, genie: bool = False) -> DecoderState:
    return DecoderState(np.asarray(r_0, dtype=complex), 1.0, genie)


def _next_state(state, r_t, a_sq_decided, true_a_sq):
    if state.genie:
        if true_a_sq is None:
            raise ValueError("genie decoding needs the true a_t^2")
        a_sq_decided = true_a_sq
    return replace(state, r_prev=np.asarray(r_t, dtype=complex), a_prev_sq_est=float(a_sq_decided))


def decode_exhaustive(state: DecoderState, r_t, codebook, true_a_sq=None, literal=True):
    """Search the whole codebook; returns ``(index, next_state)``.

    ``codebook`` is a sequence of :class:`CodeMatrix`.  Ties go to the lowest
    index.  ``literal=False`` uses ``a_sq * I`` in place of ``U U^H``.
    """
    if len(codebook) == 0:
        raise ValueError("empty codebook")
    us = np.array([c.u for c in codebook])
    a_sqs = np.array([c.a_sq for c in codebook])
    if us.shape[-2:] != (r_t.shape[-1], r_t.shape[-1]):
        raise ValueError(f"codebook entries {us.shape[-2:]} do not match R {r_t.shape}")
    metrics = exhaustive_metrics(state.r_prev, r_t, state.a_prev_sq_est, us,
                                 None if literal else a_sqs)
    idx = int(np.argmin(metrics))
    return idx, _next_state(state, r_t, a_sqs[idx], true_a_sq)


def decode_single_symbol(state: DecoderState, r_t, dset: DispersionSet, constellation,
                         true_a_sq=None):
    """Detect each symbol independently; returns ``(indices, next_state)``.

    ``indices`` are positions in the constellation, one per symbol slot.
    """
    points = np.asarray(getattr(constellation, "points", constellation), dtype=complex)
    if len(points) == 0:
        raise ValueError("empty constellation")
    metrics = single_symbol_metrics(state.r_prev, r_t, state.a_prev_sq_est, dset, points)
    idx = np.argmin(metrics, axis=-1)
    a_sq = gram_scale(dset) * float(np.sum(np.abs(points[idx]) ** 2))
    return idx, _next_state(state, r_t, a_sq, true_a_sq)


def effective_noise_stats(n_trials: int, noise_var: float, u: CodeMatrix,
                          a_prev_sq: float | None = None, n_r: int = 1, seed: int = 0) -> dict:
    """Monte Carlo power of ``N_t - N_{t-1} U_t / a_{t-1}`` per matrix entry.

    The analytic value is ``noise_var * (1 + a_t^2 / a_{t-1}^2)``.
    """
    rng = np.random.default_rng(seed)
    a_prev_sq = u.a_sq if a_prev_sq is None else a_prev_sq
    n = u.u.shape[0]
    shape = (n_trials, n_r, n)
    s = np.sqrt(noise_var / 2)
    n_prev = s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    n_cur = s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    eff = n_cur - (n_prev @ u.u) / np.sqrt(a_prev_sq)
    return {
        "variance": float(np.mean(np.abs(eff) ** 2)),
        "analytic": float(noise_var * (1 + u.a_sq / a_prev_sq)),
        "trials": n_trials,
    }
