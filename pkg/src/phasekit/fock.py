"""Truncated number-basis states and operators for a harmonic oscillator.

Everything downstream works in the D-dimensional span of the first D
oscillator eigenfunctions (hbar = 1 throughout).  This module owns the
parameter bundle, the canonical operator matrices, position-space
densities built from the eigenfunction recurrence, and the JSON
round-trip for operators.

Two widths appear side by side and are easy to conflate:

* ``sigma_g = 1/sqrt(2 m omega)`` is the ground-state width fixed by the
  oscillator itself; the basis functions and ladder matrices use it.
* ``sigma`` is the width of the frame Gaussian chosen by the user; it is
  carried in :class:`OscParams` and only coincides with ``sigma_g`` in
  the matched case.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OscParams",
    "FockVector",
    "Operator",
    "build_canonical",
    "canonical_squares",
    "hermite_functions",
    "hermite_position_density",
    "hermite_momentum_density",
    "quantum_expectation",
    "quantum_variance",
    "validate_density",
    "random_pure",
    "random_density",
    "operator_to_json",
    "operator_from_json",
]

MATCH_TOL = 1e-12


@dataclass(frozen=True)
class OscParams:
    """Oscillator constants and the frame width.

    Parameters
    ----------
    m, omega : float
        Mass and angular frequency, both strictly positive.
    sigma : float
        Width of the frame Gaussian.  ``None`` selects the matched width
        ``sigma_g``.
    """

    m: float = 1.0
    omega: float = 1.0
    sigma: float | None = None

    def __post_init__(self):
        if not (self.m > 0 and self.omega > 0):
            raise ValueError("m and omega must be positive")
        if self.sigma is None:
            object.__setattr__(self, "sigma", self.sigma_g)
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def sigma_g(self) -> float:
        """Ground-state width 1/sqrt(2 m omega)."""
        return 1.0 / math.sqrt(2.0 * self.m * self.omega)

    @property
    def matched(self) -> bool:
        """True when the frame width equals the ground-state width."""
        return abs(self.sigma - self.sigma_g) <= MATCH_TOL

    def as_dict(self) -> dict:
        return {"m": self.m, "omega": self.omega, "sigma": self.sigma}


@dataclass(frozen=True)
class FockVector:
    """A state vector in the truncated number basis."""

    coeffs: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        object.__setattr__(self, "coeffs", c)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("coeffs must be a non-empty 1-d array")
        if self.normalized and abs(np.linalg.norm(c) - 1.0) > 1e-12:
            raise ValueError("normalized FockVector must have unit norm")

    @property
    def dim(self) -> int:
        return self.coeffs.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def project(self) -> "Operator":
        """Rank-one density |psi><psi| (state must be normalized)."""
        c = self.coeffs / np.linalg.norm(self.coeffs)
        return Operator(np.outer(c, c.conj()), kind="density")

    @staticmethod
    def number_state(n: int, D: int) -> "FockVector":
        if not 0 <= n < D:
            raise ValueError("need 0 <= n < D")
        c = np.zeros(D, dtype=complex)
        c[n] = 1.0
        return FockVector(c)


_KINDS = ("general", "hermitian", "density", "unitary")


@dataclass(frozen=True)
class Operator:
    """A D x D matrix with a validated kind tag.

    kind
        ``general``  no constraint.
        ``hermitian``  max|A - A^dag| <= 1e-12.
        ``density``  hermitian, trace 1 within 1e-10, min eigenvalue
        >= -1e-10.
        ``unitary``  max|A^dag A - 1| <= 1e-10.
    """

    matrix: np.ndarray
    kind: str = "general"
    params: OscParams | None = field(default=None, compare=False)

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", A)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ValueError("matrix must be square and non-empty")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind in ("hermitian", "density"):
            herm = np.abs(A - A.conj().T).max()
            if herm > (1e-12 if self.kind == "hermitian" else 1e-10):
                raise ValueError(f"matrix is not hermitian (defect {herm:.2e})")
        if self.kind == "density":
            tr = np.trace(A)
            if abs(tr - 1.0) > 1e-10:
                raise ValueError(f"density trace {tr:.12f} is not 1")
            lo = float(np.linalg.eigvalsh(0.5 * (A + A.conj().T)).min())
            if lo < -1e-10:
                raise ValueError(f"density has eigenvalue {lo:.2e} < -1e-10")
        if self.kind == "unitary":
            defect = np.abs(A.conj().T @ A - np.eye(A.shape[0])).max()
            if defect > 1e-10:
                raise ValueError(f"matrix is not unitary (defect {defect:.2e})")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dagger(self) -> "Operator":
        return Operator(self.matrix.conj().T, kind=self.kind, params=self.params)


def _lowering(D: int) -> np.ndarray:
    """Ladder matrix with a[n-1, n] = sqrt(n)."""
    return np.diag(np.sqrt(np.arange(1.0, D)), k=1)


def build_canonical(params: OscParams, D: int) -> dict[str, Operator]:
    """Canonical operators on the D-dimensional truncation.

    Returns the dictionary ``{"Q", "P", "a", "adag", "H"}``.  Q and P are
    built from the ladder matrices with the ground-state width, and H is
    exactly diagonal with entries omega (n + 1/2); the truncation never
    touches it.

    Raises
    ------
    ValueError
        If ``D < 2``; a single level carries no canonical pair.
    """
    if D < 2:
        raise ValueError("build_canonical needs D >= 2")
    a = _lowering(D)
    adag = a.T.copy()
    sg = params.sigma_g
    Q = sg * (a + adag)
    P = (a - adag) / (2j * sg)
    H = np.diag(params.omega * (np.arange(D) + 0.5))
    return {
        "Q": Operator(Q, kind="hermitian", params=params),
        "P": Operator(P, kind="hermitian", params=params),
        "a": Operator(a, kind="general", params=params),
        "adag": Operator(adag, kind="general", params=params),
        "H": Operator(H, kind="hermitian", params=params),
    }


def canonical_squares(params: OscParams, D: int) -> dict[str, Operator]:
    """Exact D-block matrix elements of Q^2, P^2 and H^2.

    Squaring the truncated Q couples the top level to the discarded one,
    so ``(Q_D)^2`` is wrong in its last two rows.  The matrix elements of
    the full-space squares restricted to the block only involve levels up
    to D+1, so building at D+2 and cutting recovers them exactly.
    """
    big = build_canonical(params, D + 2)
    out = {}
    for name in ("Q", "P", "H"):
        M = big[name].matrix
        out[name + "2"] = Operator((M @ M)[:D, :D], kind="hermitian", params=params)
    return out


def hermite_functions(x, params: OscParams, D: int) -> np.ndarray:
    """Oscillator eigenfunctions phi_0 .. phi_{D-1} evaluated at x.

    Uses the stable upward recurrence

        phi_{n+1} = (x / sg) sqrt(1/(n+1)) phi_n - sqrt(n/(n+1)) phi_{n-1}

    seeded with the normalized Gaussian of width ``sigma_g``.  Returns an
    array of shape (D,) + x.shape.
    """
    x = np.asarray(x, dtype=float)
    sg = params.sigma_g
    out = np.zeros((D,) + x.shape)
    out[0] = (2.0 * np.pi * sg * sg) ** (-0.25) * np.exp(-(x * x) / (4.0 * sg * sg))
    if D > 1:
        out[1] = (x / sg) * out[0]
    for n in range(1, D - 1):
        out[n + 1] = (x / sg) * math.sqrt(1.0 / (n + 1)) * out[n] - math.sqrt(
            n / (n + 1.0)
        ) * out[n - 1]
    return out


def _occupancy_warning(W: np.ndarray, context: str):
    D = W.shape[0]
    top = max(D - D // 4, 1)
    occ = float(np.real(np.trace(W[top:, top:])))
    if occ > 1e-6:
        warnings.warn(
            f"{context}: occupancy {occ:.2e} in the top quarter of the basis; "
            "position-space values may be truncation limited",
            stacklevel=3,
        )


def hermite_position_density(W, params: OscParams, x) -> np.ndarray:
    """Position density <x| W |x> of a density matrix.

    Emits a warning when more than 1e-6 of the state sits in the top
    quarter of the basis, where the truncated expansion stops resolving
    position structure.
    """
    Wm = W.matrix if isinstance(W, Operator) else np.asarray(W, dtype=complex)
    D = Wm.shape[0]
    _occupancy_warning(Wm, "hermite_position_density")
    phi = hermite_functions(x, params, D)
    # <x|W|x> = sum_mn phi_m(x) W_mn phi_n(x); phi are real
    return np.real(np.einsum("mx,mn,nx->x", phi, Wm, phi))


def hermite_momentum_density(W, params: OscParams, p) -> np.ndarray:
    """Momentum density <p| W |p>.

    The Fourier transform maps the n-th eigenfunction to (-i)^n times the
    eigenfunction of width ``1/(2 sigma_g)``, so the density is the
    position formula with conjugated coefficients and the dual width.
    No sampled transform is involved.
    """
    Wm = W.matrix if isinstance(W, Operator) else np.asarray(W, dtype=complex)
    D = Wm.shape[0]
    _occupancy_warning(Wm, "hermite_momentum_density")
    n = np.arange(D)
    ph = (-1j) ** n
    Wt = (ph[:, None] * Wm) * ph.conj()[None, :]
    # dual width sigma_p = 1/(2 sigma_g), realized as the ground-state
    # width of an auxiliary parameter set
    sp = 1.0 / (2.0 * params.sigma_g)
    dual = OscParams(m=1.0, omega=1.0 / (2.0 * sp * sp))
    phi = hermite_functions(np.asarray(p, dtype=float), dual, D)
    return np.real(np.einsum("mx,mn,nx->x", phi, Wt, phi))


def quantum_expectation(W, A) -> float | complex:
    """tr(W A); real part returned when A is tagged hermitian."""
    Wm = W.matrix if isinstance(W, Operator) else np.asarray(W, dtype=complex)
    herm = isinstance(A, Operator) and A.kind in ("hermitian", "density")
    Am = A.matrix if isinstance(A, Operator) else np.asarray(A, dtype=complex)
    val = complex(np.trace(Wm @ Am))
    return val.real if herm else val


def quantum_variance(W, A, A_squared=None) -> float:
    """tr(W A^2) - tr(W A)^2 for a hermitian A.

    ``A_squared`` overrides the naive square, which matters when A is a
    truncated operator and the state touches the top rows; pass the exact
    block from :func:`canonical_squares` there.
    """
    Wm = W.matrix if isinstance(W, Operator) else np.asarray(W, dtype=complex)
    Am = A.matrix if isinstance(A, Operator) else np.asarray(A, dtype=complex)
    if A_squared is None:
        A2 = Am @ Am
    else:
        A2 = A_squared.matrix if isinstance(A_squared, Operator) else np.asarray(A_squared)
    mean = np.real(np.trace(Wm @ Am))
    return float(np.real(np.trace(Wm @ A2)) - mean * mean)


def validate_density(W) -> dict:
    """Diagnostics for a would-be density matrix.

    Returns hermiticity and trace defects, the most negative eigenvalue,
    and an overall flag at the standard tolerances (1e-10 on trace and
    spectrum, 1e-10 on hermiticity).
    """
    Wm = W.matrix if isinstance(W, Operator) else np.asarray(W, dtype=complex)
    herm = float(np.abs(Wm - Wm.conj().T).max())
    tr = complex(np.trace(Wm))
    eigs = np.linalg.eigvalsh(0.5 * (Wm + Wm.conj().T))
    report = {
        "hermiticity_defect": herm,
        "trace_defect": abs(tr - 1.0),
        "min_eigenvalue": float(eigs.min()),
        "max_eigenvalue": float(eigs.max()),
    }
    report["ok"] = bool(
        herm <= 1e-10 and report["trace_defect"] <= 1e-10 and eigs.min() >= -1e-10
    )
    return report


def random_pure(D: int, rng, support: int | None = None) -> FockVector:
    """Haar-ish random unit vector, optionally supported on the first
    ``support`` levels."""
    k = D if support is None else support
    v = rng.normal(size=k) + 1j * rng.normal(size=k)
    v /= np.linalg.norm(v)
    c = np.zeros(D, dtype=complex)
    c[:k] = v
    return FockVector(c)


def random_density(D: int, rng, rank: int | None = None,
                   support: int | None = None) -> Operator:
    """Random density matrix from a Ginibre factor, optionally rank and
    support limited."""
    k = D if support is None else support
    r = k if rank is None else rank
    G = rng.normal(size=(k, r)) + 1j * rng.normal(size=(k, r))
    W = G @ G.conj().T
    W /= np.trace(W).real
    M = np.zeros((D, D), dtype=complex)
    M[:k, :k] = W
    return Operator(M, kind="density")


# -- JSON round trip ---------------------------------------------------------

def operator_to_json(op: Operator) -> str:
    """Serialize an Operator to JSON.

    Entries are row-major [re, im] pairs; D, kind, and the oscillator
    parameters ride along.  See docs/formats.md.
    """
    A = op.matrix
    payload = {
        "D": op.dim,
        "kind": op.kind,
        "params": op.params.as_dict() if op.params is not None else None,
        "entries": [[float(z.real), float(z.imag)] for z in A.reshape(-1)],
    }
    return json.dumps(payload, sort_keys=True)


def operator_from_json(text: str) -> Operator:
    payload = json.loads(text)
    D = int(payload["D"])
    flat = np.array([complex(re, im) for re, im in payload["entries"]])
    if flat.size != D * D:
        raise ValueError("entry count does not match D")
    params = None
    if payload.get("params"):
        p = payload["params"]
        params = OscParams(m=p["m"], omega=p["omega"], sigma=p["sigma"])
    return Operator(flat.reshape(D, D), kind=payload.get("kind", "general"),
                    params=params)
