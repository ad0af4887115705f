"""
Quasi-unitary constellations for differential MDC-QOSTBC.

Points z = x + jy must satisfy

    x * y = nu               (keeps beta = 0, so every codeword is quasi-unitary)
    mean(x^2 + y^2) = 1      (unit average power)

and should maximize ``min_{k != l} (dx^2 - dy^2)^N_T``.  Feasible points sit
where the hyperbola ``xy = nu`` crosses L = M/2 concentric circles with
``sum r_i^2 = L``.  Each circle contributes one antipodal pair, either the
branch nearer the x-axis (A, C) or the one nearer the y-axis (B, D).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9


class InfeasibleDesignError(ValueError):
    """The hyperbola ``xy = nu`` misses every unit-power circle arrangement."""


@dataclass(frozen=True)
class ConstellationSet:
    """M complex points with their hyperbola constant and circle radii.

    ``branches`` records, per circle, whether the pair is on the A/C branch
    (``"A"``) or the B/D branch (``"B"``); it is empty for sets that were not
    built on the circle/hyperbola geometry.
    """

    points: np.ndarray = field(repr=False)
    nu: float = 0.0
    radii: tuple = ()
    branches: tuple = ()
    name: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).ravel()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if not self.radii:
            mags = np.sort(np.abs(pts))
            object.__setattr__(self, "radii", tuple(float(r) for r in mags[::2]))

    def __len__(self):
        return len(self.points)

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def bits_per_symbol(self) -> float:
        return float(np.log2(self.m))

    def scaled(self, g: float) -> "ConstellationSet":
        return ConstellationSet(self.points * g, self.nu * g * g, name=self.name)


def closed_form_m4() -> ConstellationSet:
    """The analytic four-point set: +-sqrt(1/3) on the x-axis, +-j sqrt(5/3)."""
    r1, r2 = np.sqrt(1 / 3), np.sqrt(5 / 3)
    pts = np.array([r1, -r1, 1j * r2, -1j * r2])
    return ConstellationSet(pts, 0.0, (r1, r2), ("A", "B"), name="M1")


def psk(m: int, phase: float = 0.0) -> ConstellationSet:
    pts = np.exp(1j * (2 * np.pi * np.arange(m) / m + phase))
    return ConstellationSet(pts, name=f"{m}PSK")


def square_qam(m: int) -> ConstellationSet:
    """Unit-average-energy square QAM, row-major from the bottom-left corner."""
    side = int(round(np.sqrt(m)))
    if side * side != m:
        raise ValueError(f"{m}-QAM is not square")
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    pts = (levels[None, :] + 1j * levels[:, None]).ravel()
    pts /= np.sqrt(np.mean(np.abs(pts) ** 2))
    return ConstellationSet(pts, name=f"{m}QAM")


# geometry -------------------------------------------------------------------


def branch_angle(r: np.ndarray | float, nu: float):
    """Angle in [0, pi/4] of the A-branch crossing of ``xy = |nu|`` with radius r."""
    r2 = np.asarray(r, dtype=float) ** 2
    ratio = np.divide(2 * abs(nu), r2, out=np.ones_like(r2), where=r2 > 0)
    return 0.5 * np.arcsin(np.clip(ratio, -1.0, 1.0))


def circle_points(radii, branches, nu: float) -> np.ndarray:
    """Points ``[P_1, -P_1, P_2, -P_2, ...]``; P_i is A_i or B_i on circle i."""
    radii = np.asarray(radii, dtype=float)
    theta = branch_angle(radii, nu)
    is_b = np.array([b == "B" for b in branches])
    theta = np.where(is_b, np.pi / 2 - theta, theta)
    p = radii * np.exp(1j * theta)
    if nu == 0:
        p = np.where(is_b, 1j * radii, radii + 0j)
    elif nu < 0:
        p = p.conj()
    return np.column_stack([p, -p]).ravel()


def pair_metrics(points) -> np.ndarray:
    """``dx^2 - dy^2`` over all unordered pairs of distinct indices."""
    z = np.asarray(getattr(points, "points", points), dtype=complex)
    k, l = np.triu_indices(len(z), k=1)
    d = z[k] - z[l]
    return d.real**2 - d.imag**2


def objective(cset, n_t: int) -> float:
    """``min_{k != l} [(x_k - x_l)^2 - (y_k - y_l)^2]^N_T``."""
    z = np.asarray(getattr(cset, "points", cset), dtype=complex)
    if len(z) < 2:
        raise ValueError("objective needs at least two points")
    return float(np.min(pair_metrics(z) ** n_t))


def coding_gain(cset, n_t: int, k: int) -> float:
    """Coding gain ``N_T det_min^(1/N_T)`` for an MDC code with K symbols."""
    obj = objective(cset, n_t)
    return float(n_t * abs(obj) ** (1.0 / n_t) / k)


def check_criteria(cset: ConstellationSet, tol: float = FEAS_TOL, n_t: int = 4) -> dict:
    """Per-criterion pass/fail with measured residuals."""
    z = cset.points
    prod = z.real * z.imag
    quasi_res = float(np.max(np.abs(prod - cset.nu)))
    power_res = float(abs(np.mean(np.abs(z) ** 2) - 1.0))
    obj = objective(cset, n_t)
    return {
        "quasi_unitary": {"pass": quasi_res < tol, "residual": quasi_res,
                          "min_xy": float(prod.min()), "max_xy": float(prod.max())},
        "power": {"pass": power_res < tol, "residual": power_res},
        "performance": {"pass": obj > tol, "objective": obj},
    }


def criteria_pass(report: dict) -> bool:
    return all(v["pass"] for v in report.values())


# optimizer ------------------------------------------------------------------


def _radii_from_weights(w, nu, n_circles):
    # r_i^2 = 2|nu| + (1 - 2|nu|) L w_i with w on the simplex keeps sum r^2 = L exactly
    w = np.clip(np.asarray(w, dtype=float), 0.0, None)
    w = w / w.sum()
    return np.sqrt(2 * abs(nu) + (1 - 2 * abs(nu)) * n_circles * w)


def _polish(w0, nu, branches, n_t):
    n = len(w0)

    def pts(w):
        return circle_points(_radii_from_weights(w, nu, n), branches, nu)

    # epigraph form: maximize t subject to (dx^2 - dy^2)^2 >= t for every pair
    x0 = np.append(w0, np.min(pair_metrics(pts(w0)) ** 2))
    cons = [
        {"type": "ineq", "fun": lambda v: pair_metrics(pts(v[:-1])) ** 2 - v[-1]},
        {"type": "eq", "fun": lambda v: v[:-1].sum() - 1.0},
    ]
    bounds = [(0.0, 1.0)] * n + [(0.0, None)]
    res = minimize(lambda v: -v[-1], x0, method="SLSQP", bounds=bounds,
                   constraints=cons, options={"ftol": 1e-15, "maxiter": 500})
    w = np.clip(res.x[:-1], 0.0, None)
    return w / w.sum()


def _canonical(radii, branches, n_t):
    order = np.argsort(radii, kind="stable")
    radii = tuple(float(r) for r in np.asarray(radii)[order])
    branches = tuple(branches[i] for i in order)
    # swapping every branch mirrors x <-> y, which flips the sign of dx^2 - dy^2
    if n_t % 2 == 0 and branches and branches[0] == "B":
        branches = tuple("A" if b == "B" else "B" for b in branches)
    return radii, branches


def _start_rng(seed: int, start: int) -> np.random.Generator:
    return np.random.default_rng([seed, start])


def optimize(m: int, nu: float, n_t: int, starts: int = 20, seed: int = 0) -> ConstellationSet:
    """Multi-start max-min design of an M-point quasi-unitary constellation.

    Every branch assignment of the L = M/2 circles is tried from ``starts``
    random squared-radius splits; each start is polished with SLSQP on the
    epigraph form of the max-min problem.  Among optima tied within 1e-9
    (relative) the lexicographically smallest (radii, branches) wins.
    """
    if m < 4 or m % 2:
        raise ValueError(f"M must be even and at least 4, got {m}")
    if starts < 1:
        raise ValueError("starts must be >= 1")
    if 2 * abs(nu) >= 1.0:
        raise InfeasibleDesignError(
            f"xy = {nu} needs r^2 >= {2 * abs(nu):g} on every circle, but the "
            f"unit-power constraint allows mean r^2 = 1"
        )
    n = m // 2
    patterns = [("A",) + p for p in itertools.product("AB", repeat=n - 1)]
    candidates = []
    for s in range(starts):
        rng = _start_rng(seed, s)
        w0 = rng.dirichlet(np.ones(n))
        for branches in patterns:
            w = _polish(w0, nu, branches, n_t)
            radii = _radii_from_weights(w, nu, n)
            obj = objective(circle_points(radii, branches, nu), n_t)
            candidates.append((obj, *_canonical(radii, branches, n_t)))
    best = max(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] >= best - 1e-9 * abs(best)]
    obj, radii, branches = min(tied, key=lambda c: (tuple(np.round(c[1], 9)), c[2]))
    log.debug("optimize(m=%d, nu=%g): objective %.12g from %d candidates",
              m, nu, obj, len(candidates))
    pts = circle_points(radii, branches, nu)
    return ConstellationSet(pts, float(nu), radii, branches, name=f"opt{m}")


# plain-text format ----------------------------------------------------------


def write_constellation(cset: ConstellationSet, path) -> None:
    """Header ``M nu`` followed by M lines ``x y`` at 17 significant digits."""
    lines = [f"{cset.m} {cset.nu:.17g}"]
    # adding 0.0 turns -0.0 into 0.0
    lines += [f"{z.real + 0.0:.17g} {z.imag + 0.0:.17g}" for z in cset.points]
    Path(path).write_text("\n".join(lines) + "\n")


def read_constellation(path, name: str | None = None) -> ConstellationSet:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    m, nu = int(rows[0][0]), float(rows[0][1])
    xy = np.array(rows[1 : 1 + m], dtype=float)
    if len(xy) != m:
        raise ValueError(f"{path}: header says {m} points, found {len(xy)}")
    return ConstellationSet(xy[:, 0] + 1j * xy[:, 1], nu, name=name or Path(path).stem)


def _packaged(name):
    from importlib import resources

    with resources.as_file(resources.files("mdc_dstm") / "data" / f"{name}.txt") as p:
        return read_constellation(p, name=name)


def named_constellation(name: str) -> ConstellationSet:
    """Resolve ``M1``, ``M2``, ``<m>QAM``, ``<m>PSK``, ``QPSK`` or a file path."""
    key = name.upper()
    if key == "M1":
        return closed_form_m4()
    if key == "M2":
        return _packaged("M2")
    if key == "QPSK":
        return psk(4, np.pi / 4)
    if key.endswith("QAM") and key[:-3].isdigit():
        return square_qam(int(key[:-3]))
    if key.endswith("PSK") and key[:-3].isdigit():
        return psk(int(key[:-3]))
    if Path(name).is_file():
        return read_constellation(name)
    raise ValueError(f"unknown constellation {name!r}")
