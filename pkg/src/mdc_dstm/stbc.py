"""
Linear space-time block codes described by dispersion matrices.

A codeword is built from K complex symbols as

    C = sum_i  Re(c_i) * A_i  +  j * Im(c_i) * B_i

where (A_i, B_i) are the dispersion matrices.  Two families are provided:

* square orthogonal designs (Alamouti for 2 antennas, the rate-3/4 design
  for 4 antennas), whose Gram matrix is a scaled identity for any symbols;
* minimum-decoding-complexity quasi-orthogonal codes obtained by doubling an
  orthogonal design, whose Gram matrix has the two-block form

      C C^H = (alpha / K) I + (beta / K) [[0, I], [I, 0]].

Matrices are plain ``numpy`` complex128 arrays.  Functions that take a
codeword accept any leading batch dimensions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MAX_CODEWORDS = 100_000
RANK_RTOL = 1e-9
GRAM_ATOL = 1e-10


class EnumerationLimitError(ValueError):
    """Raised when an all-pairs computation would enumerate too many codewords."""


class RankDeficiencyError(ValueError):
    """Raised when a codeword difference is singular where full rank is required."""


@dataclass(frozen=True)
class DispersionSet:
    """K pairs of (t_len x n_t) dispersion matrices."""

    kind: str
    a_mats: np.ndarray = field(repr=False)
    b_mats: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in ("ostbc", "mdc_qostbc"):
            raise ValueError(f"unknown dispersion-set kind {self.kind!r}")
        a = np.asarray(self.a_mats, dtype=complex)
        b = np.asarray(self.b_mats, dtype=complex)
        if a.ndim != 3 or a.shape != b.shape:
            raise ValueError("a_mats and b_mats must both have shape (K, T, N_T)")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_mats", a)
        object.__setattr__(self, "b_mats", b)

    @property
    def k(self) -> int:
        return self.a_mats.shape[0]

    @property
    def t_len(self) -> int:
        return self.a_mats.shape[1]

    @property
    def n_t(self) -> int:
        return self.a_mats.shape[2]

    @property
    def rate(self) -> float:
        return self.k / self.t_len


def _from_generator(kind, generator, k):
    """Read the dispersion matrices off a codeword generator ``s -> C(s)``."""
    a_mats, b_mats = [], []
    for i in range(k):
        e = np.zeros(k, dtype=complex)
        e[i] = 1.0
        a_mats.append(generator(e))
        e[i] = 1j
        b_mats.append(generator(e) / 1j)
    return DispersionSet(kind, np.array(a_mats), np.array(b_mats))


def alamouti_set() -> DispersionSet:
    """Alamouti code ``[[c1, -c2*], [c2, c1*]]`` (rows are time slots)."""

    def gen(s):
        c1, c2 = s
        return np.array([[c1, -np.conj(c2)], [c2, np.conj(c1)]])

    return _from_generator("ostbc", gen, 2)


def ostbc_rate34_4tx() -> DispersionSet:
    """Square rate-3/4 orthogonal design for four antennas."""

    def gen(s):
        s1, s2, s3 = s
        c = np.conj
        return np.array(
            [
                [s1, s2, s3, 0],
                [-c(s2), c(s1), 0, s3],
                [-c(s3), 0, c(s1), -s2],
                [0, -c(s3), c(s2), s1],
            ],
            dtype=complex,
        )

    return _from_generator("ostbc", gen, 3)


def amicability_residuals(dset: DispersionSet) -> dict[str, float]:
    """Largest violation of each amicable-orthogonal-design condition.

    The conditions are ``A_i A_i^H = B_i B_i^H = c I`` (common c),
    ``A_i A_j^H + A_j A_i^H = 0`` and the same for B when i != j, and
    ``A_i B_j^H = B_j A_i^H`` for all i, j.
    """
    a, b = dset.a_mats, dset.b_mats
    eye = np.eye(dset.t_len)
    scale = np.real(np.trace(a[0] @ a[0].conj().T)) / dset.t_len
    ah = a.conj().transpose(0, 2, 1)
    bh = b.conj().transpose(0, 2, 1)
    aa = np.einsum("imn,jnp->ijmp", a, ah)
    bb = np.einsum("imn,jnp->ijmp", b, bh)
    ab = np.einsum("imn,jnp->ijmp", a, bh)
    ba = np.einsum("jmn,inp->ijmp", b, ah)
    idx = np.arange(dset.k)
    norm = max(
        np.abs(aa[idx, idx] - scale * eye).max(), np.abs(bb[idx, idx] - scale * eye).max()
    )
    off = ~np.eye(dset.k, dtype=bool)
    cross_a = np.abs((aa + aa.transpose(1, 0, 2, 3))[off]).max(initial=0.0)
    cross_b = np.abs((bb + bb.transpose(1, 0, 2, 3))[off]).max(initial=0.0)
    mixed = np.abs(ab - ba).max()
    return {
        "scale": float(scale),
        "norm": float(norm),
        "cross_a": float(cross_a),
        "cross_b": float(cross_b),
        "mixed": float(mixed),
    }


def is_amicable(dset: DispersionSet, tol: float = 1e-12) -> bool:
    res = amicability_residuals(dset)
    return res["scale"] > 0 and all(v <= tol for key, v in res.items() if key != "scale")


def mdc_map(seed: DispersionSet) -> DispersionSet:
    """Double an orthogonal design into a minimum-decoding-complexity QO-STBC.

    With K = 2 * seed.k and S = 1/sqrt(K), symbol i < K/2 gets
    ``A_i = S blkdiag(a_i, a_i)`` and ``B_i = S antidiag(j a_i, j a_i)``, and
    symbol K/2 + i gets ``A = S blkdiag(j b_i, j b_i)`` and
    ``B = S antidiag(b_i, b_i)``.
    """
    if seed.kind != "ostbc":
        raise ValueError(f"mdc_map needs an orthogonal seed, got kind={seed.kind!r}")
    k = 2 * seed.k
    s = 1.0 / np.sqrt(k)
    zero = np.zeros((seed.t_len, seed.n_t), dtype=complex)

    def diag(m):
        return s * np.block([[m, zero], [zero, m]])

    def anti(m):
        return s * np.block([[zero, m], [m, zero]])

    a_mats = [diag(a) for a in seed.a_mats] + [diag(1j * b) for b in seed.b_mats]
    b_mats = [anti(1j * a) for a in seed.a_mats] + [anti(b) for b in seed.b_mats]
    return DispersionSet("mdc_qostbc", np.array(a_mats), np.array(b_mats))


def differential_set(dset: DispersionSet) -> DispersionSet:
    """Scale an orthogonal design so that unit-energy symbols give E[U U^H] = I.

    MDC sets built by :func:`mdc_map` already carry their 1/sqrt(K) factor and
    are returned unchanged.
    """
    if dset.kind == "mdc_qostbc":
        return dset
    res = amicability_residuals(dset)
    g = 1.0 / np.sqrt(res["scale"] * dset.k)
    return DispersionSet(dset.kind, dset.a_mats * g, dset.b_mats * g)


def code_for_antennas(n_t: int, scheme: str = "mdc_qostbc") -> DispersionSet:
    """The dispersion set used for ``n_t`` antennas by the simulator."""
    if scheme == "mdc_qostbc":
        if n_t == 4:
            return mdc_map(alamouti_set())
        if n_t == 8:
            return mdc_map(ostbc_rate34_4tx())
    elif scheme == "ostbc":
        if n_t == 2:
            return differential_set(alamouti_set())
        if n_t == 4:
            return differential_set(ostbc_rate34_4tx())
    raise ValueError(f"no {scheme} code for {n_t} transmit antennas")


def assemble(dset: DispersionSet, symbols) -> np.ndarray:
    """Codeword(s) ``sum_i Re(c_i) A_i + j Im(c_i) B_i``.

    ``symbols`` has shape (..., K); the result has shape (..., T, N_T).
    """
    c = np.asarray(symbols, dtype=complex)
    if c.shape[-1:] != (dset.k,):
        raise ValueError(f"expected {dset.k} symbols per codeword, got shape {c.shape}")
    shape = c.shape[:-1] + (dset.t_len, dset.n_t)
    flat = c.real @ dset.a_mats.reshape(dset.k, -1) + 1j * (c.imag @ dset.b_mats.reshape(dset.k, -1))
    return flat.reshape(shape)


def _swap_blocks(n):
    h = n // 2
    j = np.zeros((n, n))
    j[:h, h:] = np.eye(h)
    j[h:, :h] = np.eye(h)
    return j


def gram_decompose(c: np.ndarray, k: int | None = None):
    """Fit ``C C^H`` to ``(alpha/K) I + (beta/K) [[0, I], [I, 0]]``.

    Returns ``(alpha, beta, residual)`` with the residual the Frobenius norm
    of the part of the Gram matrix the two-term model does not explain.  K
    defaults to the codeword dimension.
    """
    c = np.asarray(c, dtype=complex)
    if c.ndim < 2 or c.shape[-1] != c.shape[-2]:
        raise ValueError(f"gram_decompose needs square codewords, got shape {c.shape}")
    n = c.shape[-1]
    if n % 2:
        raise ValueError("two-block Gram form needs an even dimension")
    k = n if k is None else k
    g = c @ np.conj(np.swapaxes(c, -1, -2))
    j = _swap_blocks(n)
    # I and J are orthogonal in the Frobenius inner product, both with norm^2 = n
    a = np.real(np.trace(g, axis1=-2, axis2=-1)) / n
    b = np.real(np.einsum("...mn,nm->...", g, j)) / n
    fit = a[..., None, None] * np.eye(n) + b[..., None, None] * j
    residual = np.linalg.norm(g - fit, axis=(-2, -1))
    return k * a, k * b, residual


def beta_closed_form(symbols) -> np.ndarray:
    """``2 sum_{i<=K/2} (-Re c_i Im c_i + Re c_{K/2+i} Im c_{K/2+i})``."""
    c = np.asarray(symbols, dtype=complex)
    h = c.shape[-1] // 2
    p = c.real * c.imag
    return 2.0 * (p[..., h:] - p[..., :h]).sum(axis=-1)


def codebook(dset: DispersionSet, points, limit: int = MAX_CODEWORDS):
    """All codewords over ``points``; symbol vectors in itertools.product order.

    Returns ``(symbols, codewords)`` with shapes (M**K, K) and (M**K, T, N_T).
    """
    points = np.asarray(points, dtype=complex)
    if dset.k == 0:
        raise ValueError("dispersion set has no symbols")
    count = len(points) ** dset.k
    if count > limit:
        raise EnumerationLimitError(
            f"{len(points)}^{dset.k} = {count} codewords exceeds the limit of {limit}"
        )
    idx = np.array(list(itertools.product(range(len(points)), repeat=dset.k)))
    symbols = points[idx]
    return symbols, assemble(dset, symbols)


def _pair_differences(codewords):
    k, l = np.triu_indices(len(codewords), k=1)
    return codewords[k] - codewords[l]


def _points_of(constellation):
    return np.asarray(getattr(constellation, "points", constellation), dtype=complex)


def min_rank_all_pairs(dset: DispersionSet, constellation, limit: int = MAX_CODEWORDS) -> int:
    """Minimum rank of ``U_k - U_l`` over all distinct codeword pairs."""
    _, words = codebook(dset, _points_of(constellation), limit)
    if len(words) < 2:
        raise ValueError("need at least two codewords")
    best = dset.n_t
    for chunk in np.array_split(_pair_differences(words), max(1, len(words) // 64)):
        sv = np.linalg.svd(chunk, compute_uv=False)
        ranks = (sv > RANK_RTOL * sv[:, :1]).sum(axis=1)
        best = min(best, int(ranks.min()))
    return best


def pairwise_determinants(dset: DispersionSet, constellation, limit: int = MAX_CODEWORDS):
    """``det(D D^H)`` for every distinct codeword pair D = U_k - U_l."""
    _, words = codebook(dset, _points_of(constellation), limit)
    if len(words) < 2:
        raise ValueError("need at least two codewords for a pairwise criterion")
    d = _pair_differences(words)
    return np.real(np.linalg.det(d @ np.conj(np.swapaxes(d, -1, -2))))


def coding_gain_bruteforce(dset: DispersionSet, constellation, limit: int = MAX_CODEWORDS):
    """Minimum of ``N_T det(D D^H)^(1/N_T)`` over all distinct codeword pairs."""
    if min_rank_all_pairs(dset, constellation, limit) < dset.n_t:
        raise RankDeficiencyError("code is not full rank over this constellation")
    dets = pairwise_determinants(dset, constellation, limit)
    return float(dset.n_t * dets.min() ** (1.0 / dset.n_t))


def det_min_closed_form(points, n_t: int, k: int) -> float:
    """``min (dx^2 - dy^2)^N_T / K^N_T`` over distinct symbol pairs in one slot."""
    z = np.asarray(_points_of(points))
    dz = (z[:, None] - z[None, :])[~np.eye(len(z), dtype=bool)]
    return float(np.min((dz.real**2 - dz.imag**2) ** n_t) / k**n_t)


# plain-text dump ---------------------------------------------------------------


def dump_dispersion_set(dset: DispersionSet, path) -> None:
    """Write one block per matrix: ``A i`` / ``B i`` then rows of ``re im`` pairs."""
    lines = [f"{dset.kind} {dset.n_t} {dset.t_len} {dset.k}"]
    for tag, mats in (("A", dset.a_mats), ("B", dset.b_mats)):
        for i, m in enumerate(mats, start=1):
            lines.append(f"{tag} {i}")
            for row in m:
                lines.append(" ".join(f"{v.real + 0.0:.17g} {v.imag + 0.0:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dispersion_set(path) -> DispersionSet:
    lines = Path(path).read_text().split("\n")
    kind, n_t, t_len, k = lines[0].split()
    n_t, t_len, k = int(n_t), int(t_len), int(k)
    mats = {"A": np.zeros((k, t_len, n_t), complex), "B": np.zeros((k, t_len, n_t), complex)}
    pos = 1
    for _ in range(2 * k):
        tag, i = lines[pos].split()
        rows = []
        for r in lines[pos + 1 : pos + 1 + t_len]:
            v = np.array(r.split(), dtype=float)
            rows.append(v[0::2] + 1j * v[1::2])
        mats[tag][int(i) - 1] = rows
        pos += 1 + t_len
    return DispersionSet(kind, mats["A"], mats["B"])


def symbol_parts(symbols: Sequence[complex]):
    """Split accessors: ``(c^R, c^I)`` as float arrays."""
    c = np.asarray(symbols, dtype=complex)
    return c.real.copy(), c.imag.copy()
