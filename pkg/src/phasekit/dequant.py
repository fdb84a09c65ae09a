"""Dequantizers: classical functions that reproduce quantum expectations.

For a state W with phase-space density rho, a dequantizer of the
operator A is a function f with tr(W A) = integral of rho f.  The five
standard symbols {Q, P, Q2, P2, H} have closed polynomial forms built
from the confidence-function moments; the quadratic ones subtract the
confidence variance, which is where the machinery earns its keep.

Also here: the closed-form phase-space and energy densities of the
oscillator eigenstates, the energy histogram of an arbitrary density,
and least-squares dequantization of arbitrary hermitian effects.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .classrep import (
    _coords_rows,
    classical_expectation,
    confidence_functions,
    husimi,
    husimi_point_effects,
    hermitian_coords,
)
from .coherentframe import FrameSpec, auto_grid, grid_is_adequate
from .displacement import trusted_dim
from .fock import (
    Operator,
    OscParams,
    build_canonical,
    canonical_squares,
    quantum_expectation,
    random_density,
)
from .grids import PhaseGrid, PhaseField

__all__ = [
    "Dequantizer",
    "dequantizer_for",
    "check_dequantizer",
    "oscillator_density",
    "energy_density",
    "energy_histogram",
    "dequantize_effect",
]

SYMBOLS = ("Q", "P", "Q2", "P2", "H")


@dataclass(frozen=True)
class Dequantizer:
    """Polynomial phase-space function q^a p^b with an additive constant.

    ``coefficients`` maps exponent pairs (a, b) to real coefficients.
    The constant absorbs the confidence-moment corrections; for the
    matched frame the H dequantizer's constant is -omega/2.
    """

    symbol: str
    coefficients: dict
    constant: float
    params: OscParams

    def __call__(self, Q, P):
        Q = np.asarray(Q, dtype=float)
        P = np.asarray(P, dtype=float)
        out = np.full(np.broadcast(Q, P).shape, self.constant, dtype=float)
        for (a, b), coef in self.coefficients.items():
            out = out + coef * Q ** a * P ** b
        return out

    def operator(self, D: int) -> Operator | None:
        """The paired operator on the D-block (exact block squares)."""
        if self.symbol in ("Q", "P", "H"):
            return build_canonical(self.params, D)[self.symbol]
        if self.symbol in ("Q2", "P2"):
            return canonical_squares(self.params, D)[self.symbol]
        return None

    def to_json(self) -> str:
        payload = {
            "symbol": self.symbol,
            "coefficients": {f"{a},{b}": c for (a, b), c in sorted(self.coefficients.items())},
            "constant": self.constant,
            "params": self.params.as_dict(),
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Dequantizer":
        d = json.loads(text)
        coeffs = {}
        for key, c in d["coefficients"].items():
            a, b = key.split(",")
            coeffs[(int(a), int(b))] = float(c)
        return Dequantizer(
            d["symbol"], coeffs, float(d["constant"]), OscParams(**d["params"])
        )


def _eta_moments(frame_or_params) -> tuple[OscParams, float, float, float, float]:
    """(params, mean_q, var_q, mean_p, var_p) of the confidence functions."""
    if isinstance(frame_or_params, OscParams):
        par = frame_or_params
        s = par.sigma
        return par, 0.0, s * s, 0.0, 1.0 / (4.0 * s * s)
    frame = frame_or_params
    if frame.pure_coherent:
        s = frame.params.sigma
        return frame.params, 0.0, s * s, 0.0, 1.0 / (4.0 * s * s)
    eq, ep = confidence_functions(frame)
    return frame.params, eq.mean(), eq.variance(), ep.mean(), ep.variance()


def dequantizer_for(symbol: str, frame_or_params) -> Dequantizer:
    """Closed-form dequantizer for one of {Q, P, Q2, P2, H}.

    With eta the axis confidence function (mean m, variance v):
        f_Q  = q - m_q
        f_Q2 = (q - m_q)^2 - v_q
    and analogously for P; f_H combines them through the classical
    Hamiltonian.  A pure Gaussian frame has centered eta with variances
    sigma^2 and 1/(4 sigma^2), giving f_H = H(q,p) - (1/(8 m sigma^2)
    + m omega^2 sigma^2 / 2).
    """
    if symbol not in SYMBOLS:
        raise ValueError(f"unknown symbol {symbol!r}; expected one of {SYMBOLS}")
    par, mq, vq, mp, vp = _eta_moments(frame_or_params)
    if symbol == "Q":
        return Dequantizer("Q", {(1, 0): 1.0}, -mq, par)
    if symbol == "P":
        return Dequantizer("P", {(0, 1): 1.0}, -mp, par)
    if symbol == "Q2":
        return Dequantizer(
            "Q2", {(2, 0): 1.0, (1, 0): -2.0 * mq}, mq * mq - vq, par
        )
    if symbol == "P2":
        return Dequantizer(
            "P2", {(0, 2): 1.0, (0, 1): -2.0 * mp}, mp * mp - vp, par
        )
    m, w = par.m, par.omega
    coeffs = {
        (0, 2): 1.0 / (2.0 * m),
        (0, 1): -mp / m,
        (2, 0): m * w * w / 2.0,
        (1, 0): -m * w * w * mq,
    }
    const = (mp * mp - vp) / (2.0 * m) + m * w * w * (mq * mq - vq) / 2.0
    return Dequantizer("H", coeffs, const, par)


def check_dequantizer(W, symbol: str, frame: FrameSpec,
                      grid: PhaseGrid | None = None) -> dict:
    """Two-route expectation of a standard symbol on one state.

    Quantum route: trace against the paired block operator (exact block
    squares for the quadratics).  Classical route: quadrature of the
    dequantizer against the sampled density.  For Q2/P2/H the state must
    keep its weight inside the trusted sub-block, where the block
    quadratics represent their full-space counterparts.
    """
    from .classrep import _state_matrix

    D = frame.D
    Wm = _state_matrix(W, D)
    if symbol in ("Q2", "P2", "H"):
        t = trusted_dim(D)
        top = float(np.real(np.diag(Wm)[t:]).sum())
        if top > 1e-8:
            raise ValueError(
                f"state carries {top:.2e} weight above the trusted block "
                f"(dim {t}); block quadratics are unreliable there"
            )
    deq = dequantizer_for(symbol, frame)
    A = deq.operator(D)
    quantum = float(np.real(quantum_expectation(Wm, A)))
    if grid is None:
        grid = auto_grid(frame, D, 0.05)
    field = husimi(Wm, frame, grid)
    classical = classical_expectation(deq, field)
    return {
        "symbol": symbol,
        "quantum": quantum,
        "classical": classical,
        "discrepancy": abs(quantum - classical),
        "adequate": grid_is_adequate(frame, D, grid),
    }


# -- oscillator closed forms ---------------------------------------------------

def oscillator_density(n: int, params: OscParams):
    """Closed-form phase-space density of the n-th eigenstate (matched).

    Returns a callable mapping a PhaseGrid to a PhaseField with values
        rho_n(q,p) = (1/(2 pi n!)) (H/omega)^n e^{-H/omega},
        H = p^2/(2m) + m omega^2 q^2 / 2.
    """
    if not params.matched:
        raise ValueError("closed-form eigenstate densities hold only matched")
    if n < 0:
        raise ValueError("n must be nonnegative")
    m, w = params.m, params.omega
    fact = math.factorial(n)

    def on_grid(grid: PhaseGrid) -> PhaseField:
        Q, P = grid.meshes()
        H = P * P / (2.0 * m) + m * w * w * Q * Q / 2.0
        vals = (H / w) ** n * np.exp(-H / w) / (2.0 * math.pi * fact)
        return PhaseField(grid, vals, kind="density")

    return on_grid


def energy_density(n: int, params: OscParams):
    """Energy distribution of the n-th eigenstate density (matched):
    rho_hat_n(E) = E^n e^{-E/omega} / (n! omega^{n+1}) on E >= 0."""
    if not params.matched:
        raise ValueError("closed-form energy densities hold only matched")
    if n < 0:
        raise ValueError("n must be nonnegative")
    w = params.omega
    fact = math.factorial(n)

    def at(E):
        E = np.asarray(E, dtype=float)
        out = np.where(E >= 0, E ** n * np.exp(-np.minimum(E, 700 * w) / w), 0.0)
        return out / (fact * w ** (n + 1))

    return at


def energy_histogram(rho: PhaseField, params: OscParams, bins=None) -> dict:
    """Pushforward of a phase-space density under the classical energy.

    Bins H(q,p) with the density quadrature masses as weights and
    normalizes to a density over E.  ``bins`` is a bin width (float), a
    bin count (int), or None for the default width 0.05 * omega up to
    the largest grid energy.
    """
    if rho.kind != "density":
        raise ValueError("energy_histogram expects a density field")
    m, w = params.m, params.omega
    Q, P = rho.grid.meshes()
    H = (P * P / (2.0 * m) + m * w * w * Q * Q / 2.0).ravel()
    masses = np.real(rho.values).ravel() * rho.grid.weight
    E_max = float(H.max())
    if bins is None:
        width = 0.05 * w
        edges = np.arange(0.0, E_max + width, width)
    elif isinstance(bins, int):
        if bins < 1:
            raise ValueError("bin count must be positive")
        edges = np.linspace(0.0, E_max, bins + 1)
    else:
        width = float(bins)
        if width <= 0:
            raise ValueError("bin width must be positive")
        edges = np.arange(0.0, E_max + width, width)
    hist, edges = np.histogram(H, bins=edges, weights=masses)
    total = hist.sum()
    if total <= 0:
        raise ValueError("density carries no mass on the grid")
    widths = np.diff(edges)
    density = hist / total / widths
    centers = 0.5 * (edges[:-1] + edges[1:])
    mean = float((centers * hist).sum() / total)
    var = float(((centers - mean) ** 2 * hist).sum() / total)
    return {
        "edges": edges,
        "density": density,
        "mean": mean,
        "var": var,
        "mass": float(total),
    }


# -- effect dequantization -----------------------------------------------------

def dequantize_effect(A, frame: FrameSpec, grid: PhaseGrid,
                      n_probe: int = 10, rng=None) -> dict:
    """Samples f on the grid with sum_x f(x) E_x close to A.

    E_x are the rank-one quadrature effects of the frame.  The solve is
    a truncated-SVD least squares (relative cutoff 1e-8) in hermitian
    coordinates, minimizing the frame-mass-weighted norm
    sum_x tr(E_x) f(x)^2.  In that norm the nullspace of the point
    family pairs to zero against constants (tracing the null relation
    gives sum v(x) tr(E_x) = 0), so the identity dequantizes to the
    constant 1 rather than to an unreadable null-shifted solution.
    Points carrying less than 1e-12 of the peak frame mass are excluded
    and report f = 0.  Rank deficiency of the family is an error since
    the data could not represent a generic A.  Reports the Frobenius
    residual of the operator fit and the worst two-route discrepancy
    |tr(W A) - integral rho_W f| over random probe states.
    """
    Am = A.matrix if isinstance(A, Operator) else np.asarray(A, dtype=complex)
    D = frame.D
    if Am.shape != (D, D):
        raise ValueError(f"effect must be {D}x{D}")
    if np.abs(Am - Am.conj().T).max() > 1e-12:
        raise ValueError("effect must be hermitian")
    effects = husimi_point_effects(frame, grid)
    rows, _ = _coords_rows(effects)  # (N, D^2)
    b = hermitian_coords(Am)
    mass = rows[:, :D].sum(axis=1)  # tr(E_x), first D coords are the diagonal
    keep = mass > 1e-12 * mass.max()
    scaled = rows[keep] / np.sqrt(mass[keep])[:, None]
    U, s, Vt = np.linalg.svd(scaled, full_matrices=False)
    rank = int((s > 1e-8 * s[0]).sum())
    if rank < D * D:
        raise ValueError(
            f"point family is rank deficient ({rank} < {D * D}); "
            "enlarge the grid or refine the spacing"
        )
    inv = np.where(s > 1e-8 * s[0], 1.0 / s, 0.0)
    g = U @ (inv * (Vt @ b))
    f = np.zeros(rows.shape[0])
    f[keep] = g / np.sqrt(mass[keep])
    resid = float(np.linalg.norm(rows.T @ f - b))
    field = PhaseField(grid, f.reshape(grid.n_q, grid.n_p), kind="real")

    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(n_probe):
        W = random_density(D, rng)
        quantum = float(np.real(np.trace(W.matrix @ Am)))
        rho = husimi(W, frame, grid)
        classical = float(
            (np.real(rho.values) * field.values).sum() * grid.weight
        )
        worst = max(worst, abs(quantum - classical))
    return {
        "f": field,
        "residual_frobenius": resid,
        "probe_discrepancy": worst,
        "rank": rank,
    }
