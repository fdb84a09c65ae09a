"""Coherent-state frames and the phase-space transform they generate.

A frame is a density matrix ``a`` (the generator) together with its
displacements over phase space; the pure Gaussian generator of width
sigma is the common case.  The transform V psi (q,p) =
(1/sqrt(2 pi)) <u_{q,p}| psi> maps Fock vectors to square-integrable
phase-space amplitudes, and 1/(2 pi) times the displaced projections
resolve the identity.

Overlap coefficients <phi_n | u^sigma_{q,p}> are computed analytically.
For the matched width they are the closed form
e^{iqp/2} e^{-|z|^2/2} zbar^n / sqrt(n!); otherwise a two-term ladder
recurrence for the displaced Gaussian of general width takes over.
Either way the values are those of the full-space frame vector, so grid
quadratures inherit the genuine Gaussian decay.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .displacement import displaced_fock_block
from .fock import FockVector, Operator, OscParams, build_canonical
from .grids import PhaseGrid, PhaseField

__all__ = [
    "FrameSpec",
    "coherent_overlaps",
    "overlap_grid",
    "phase_transform",
    "grid_is_adequate",
    "auto_grid",
    "resolution_check",
    "kernel",
    "kernel_reproducing_check",
    "pde_residual",
    "gauge_transform",
    "BargmannFunction",
    "bargmann_transform",
    "bargmann_eval_via_field",
    "bargmann_field_samples",
    "bargmann_ops_check",
    "cauchy_riemann_residual",
    "stencil_d1",
    "stencil_d2",
]

ADEQUACY_TOL = 1e-12


# -- overlap coefficients ----------------------------------------------------

def _overlaps_matched(params: OscParams, D: int, q, p) -> np.ndarray:
    """Closed form for sigma == sigma_g."""
    sg = params.sigma_g
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    zbar = 0.5 * (q / sg + 2j * sg * p)
    c = np.zeros((D,) + q.shape, dtype=complex)
    c[0] = np.exp(1j * q * p / 2.0 - np.abs(zbar) ** 2 / 2.0)
    for n in range(D - 1):
        c[n + 1] = c[n] * zbar / math.sqrt(n + 1)
    return c


def _overlaps_general(params: OscParams, D: int, q, p) -> np.ndarray:
    """Displaced Gaussian of width sigma expanded in the sigma_g basis.

    Seed: the Gaussian-Gaussian overlap
        c_0 = t0 exp(-(q^2/4 + s^2 g^2 p^2)/(s^2+g^2) + i g^2 qp/(s^2+g^2))
        t0  = sqrt(2 s g / (s^2 + g^2))
    Recurrence (from commuting the ladder operator through the state):
        c_{n+1} = (gam c_n + lam sqrt(n) c_{n-1}) / sqrt(n+1)
        lam = (s^2 - g^2)/(s^2 + g^2),  gam = g (q + 2 i s^2 p)/(s^2 + g^2).
    """
    s, g = params.sigma, params.sigma_g
    s2, g2 = s * s, g * g
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    t0 = math.sqrt(2.0 * s * g / (s2 + g2))
    lam = (s2 - g2) / (s2 + g2)
    gam = g * (q + 2j * s2 * p) / (s2 + g2)
    c = np.zeros((D,) + q.shape, dtype=complex)
    c[0] = t0 * np.exp(
        -(q * q / 4.0 + s2 * g2 * p * p) / (s2 + g2)
        + 1j * g2 * q * p / (s2 + g2)
    )
    if D > 1:
        c[1] = gam * c[0]
    for n in range(1, D - 1):
        c[n + 1] = (gam * c[n] + lam * math.sqrt(n) * c[n - 1]) / math.sqrt(n + 1)
    return c


def coherent_overlaps(params: OscParams, D: int, q, p,
                      return_route: bool = False):
    """Coefficients <phi_n | u^sigma_{q,p}> for n < D.

    The closed form applies only in the matched case; a mismatched width
    silently falling through to it is the classic error here, so the
    route is chosen by the params and can be reported back.
    """
    if params.matched:
        c, route = _overlaps_matched(params, D, q, p), "closed-form"
    else:
        c, route = _overlaps_general(params, D, q, p), "general"
    return (c, route) if return_route else c


def overlap_grid(params: OscParams, D: int, grid: PhaseGrid) -> np.ndarray:
    """Overlap coefficients on a full grid, shape (D, n_q, n_p)."""
    Q, P = grid.meshes()
    return coherent_overlaps(params, D, Q, P)


# -- frame specification -----------------------------------------------------

@dataclass(frozen=True)
class FrameSpec:
    """A displacement-covariant frame: oscillator params, truncation, and
    the generator density."""

    params: OscParams
    D: int
    generator: Operator
    pure_coherent: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.generator.dim != self.D:
            raise ValueError("generator dimension does not match D")
        from .fock import validate_density

        diag = validate_density(self.generator)
        if not diag["ok"]:
            raise ValueError(f"generator is not a valid density: {diag}")

    @staticmethod
    def coherent(params: OscParams, D: int) -> "FrameSpec":
        """Pure Gaussian generator of width params.sigma (projected onto
        the truncation and renormalized; the clipped tail is negligible
        for the widths and dimensions in supported use)."""
        t = coherent_overlaps(params, D, 0.0, 0.0)
        t = t / np.linalg.norm(t)
        gen = Operator(np.outer(t, t.conj()), kind="density", params=params)
        return FrameSpec(params, D, gen, pure_coherent=True)

    @staticmethod
    def fock_mixture(params: OscParams, D: int, weights) -> "FrameSpec":
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size > D or w.min() < 0 or abs(w.sum() - 1) > 1e-10:
            raise ValueError("weights must be nonnegative and sum to 1")
        full = np.zeros(D)
        full[: w.size] = w
        gen = Operator(np.diag(full.astype(complex)), kind="density", params=params)
        return FrameSpec(params, D, gen)

    @staticmethod
    def from_matrix(params: OscParams, D: int, W) -> "FrameSpec":
        Wm = W.matrix if isinstance(W, Operator) else np.asarray(W, dtype=complex)
        gen = Operator(Wm, kind="density", params=params)
        return FrameSpec(params, D, gen)

    def generator_spectrum(self, tol: float = 1e-12):
        """Eigenpairs of the generator with weights above tol."""
        w, V = np.linalg.eigh(self.generator.matrix)
        keep = w > tol
        return w[keep], V[:, keep]


# -- grid adequacy -----------------------------------------------------------

def _boundary_decay(frame_or_params, D: int, points) -> float:
    """Largest overlap coefficient magnitude at the given points."""
    if isinstance(frame_or_params, FrameSpec):
        frame = frame_or_params
        qs = np.array([pt[0] for pt in points])
        ps = np.array([pt[1] for pt in points])
        if frame.pure_coherent:
            c = coherent_overlaps(frame.params, frame.D, qs, ps)
            return float(np.abs(c).max())
        w, V = frame.generator_spectrum()
        M = displaced_fock_block(frame.params, frame.D, qs, ps)
        disp = np.einsum("jmx,mi->jix", M, V)
        return float(np.abs(disp).max())
    params = frame_or_params
    qs = np.array([pt[0] for pt in points])
    ps = np.array([pt[1] for pt in points])
    c = coherent_overlaps(params, D, qs, ps)
    return float(np.abs(c).max())


def grid_is_adequate(frame_or_params, D: int, grid: PhaseGrid) -> bool:
    """Boundary-decay criterion: every overlap coefficient is below
    1e-12 at the four boundary mid-edge points."""
    return _boundary_decay(frame_or_params, D, grid.mid_edges()) < ADEQUACY_TOL


def auto_grid(frame_or_params, D: int, spacing: float = 0.05,
              max_halfwidth: float = 80.0) -> PhaseGrid:
    """Smallest symmetric grid passing the boundary-decay criterion.

    Expands the half-width in steps until the four mid-edge points all
    decay below 1e-12; raises if the cap is hit (which signals either a
    far-spread generator or a mistake in the parameters).
    """
    hw = max(4.0 * spacing, 1.0)
    while hw <= max_halfwidth:
        grid = PhaseGrid.centered(hw, hw, spacing, spacing)
        if grid_is_adequate(frame_or_params, D, grid):
            return grid
        hw += 0.5
    raise ValueError(f"no adequate grid below half-width {max_halfwidth}")


# -- transform and identity checks ------------------------------------------

def phase_transform(psi, params: OscParams, D: int | None = None,
                    grid: PhaseGrid = None) -> PhaseField:
    """V psi: amplitude (1/sqrt(2 pi)) <u_{q,p} | psi> sampled on the grid."""
    c = psi.coeffs if isinstance(psi, FockVector) else np.asarray(psi, dtype=complex)
    D = c.size if D is None else D
    if grid is None:
        raise ValueError("phase_transform needs a grid")
    C = overlap_grid(params, D, grid)
    vals = np.einsum("nqp,n->qp", np.conj(C), c[:D]) / math.sqrt(2.0 * np.pi)
    return PhaseField(grid, vals, kind="amplitude")


def resolution_check(frame_or_params, D: int, grid: PhaseGrid) -> dict:
    """Defect of (1/2pi) sum_k w |u_k><u_k| against the identity.

    Reports the max-norm defect on the full block and on the trusted
    sub-block (top-left ceil(D/2)), plus the adequacy flag; an inadequate
    grid is reported rather than rejected so the failure mode stays
    visible.
    """
    params = frame_or_params.params if isinstance(frame_or_params, FrameSpec) else frame_or_params
    if isinstance(frame_or_params, FrameSpec) and not frame_or_params.pure_coherent:
        raise ValueError("resolution_check expects a pure coherent frame")
    C = overlap_grid(params, D, grid).reshape(D, -1)
    S = (C @ C.conj().T) * (grid.weight / (2.0 * np.pi))
    defect = np.abs(S - np.eye(D))
    t = (D + 1) // 2
    return {
        "defect_full": float(defect.max()),
        "defect_trusted": float(defect[:t, :t].max()),
        "trusted_dim": t,
        "adequate": grid_is_adequate(params, D, grid),
        "n_samples": grid.n_q * grid.n_p,
    }


def kernel(params: OscParams, D: int, x, y) -> complex:
    """Reproducing kernel K(x, y) = (1/2pi) <u_x | u_y> at phase points."""
    cx = coherent_overlaps(params, D, float(x[0]), float(x[1]))
    cy = coherent_overlaps(params, D, float(y[0]), float(y[1]))
    return complex(np.vdot(cx, cy) / (2.0 * np.pi))


def kernel_reproducing_check(params: OscParams, D: int, grid: PhaseGrid,
                             probes) -> dict:
    """Self-reproduction of the kernel under grid quadrature.

    For each probe pair (x, y) compares K(x,y) with the quadrature of
    K(x,z) K(z,y) over the grid; also reports the diagonal value defect
    against 1/(2 pi), hermiticity, and the smallest eigenvalue of the
    probe Gram matrix.
    """
    C = overlap_grid(params, D, grid).reshape(D, -1)
    pts = [(float(a), float(b)) for a, b in probes]
    cs = [coherent_overlaps(params, D, a, b) for a, b in pts]
    w = grid.weight
    max_res = 0.0
    for i, ci in enumerate(cs):
        Ki_z = (np.conj(ci) @ C) / (2.0 * np.pi)  # K(x_i, z) over grid
        for j, cj in enumerate(cs):
            Kz_j = (C.conj().T @ cj) / (2.0 * np.pi)  # K(z, y_j)
            quad = complex((Ki_z * Kz_j).sum() * w)
            direct = complex(np.vdot(ci, cj) / (2.0 * np.pi))
            max_res = max(max_res, abs(quad - direct))
    gram = np.array([[np.vdot(ci, cj) for cj in cs] for ci in cs]) / (2.0 * np.pi)
    kxx = [abs(np.vdot(ci, ci) / (2.0 * np.pi) - 1.0 / (2.0 * np.pi)) for ci in cs]
    herm = float(np.abs(gram - gram.conj().T).max())
    return {
        "reproducing_residual": float(max_res),
        "diag_defect": float(max(kxx)),
        "hermiticity_defect": herm,
        "gram_min_eig": float(np.linalg.eigvalsh(0.5 * (gram + gram.conj().T)).min()),
    }


# -- finite-difference stencils (fourth order) -------------------------------

def stencil_d1(F: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order first derivative; the two cells at each end of the
    axis are left as zeros and must be excluded by the caller."""
    out = np.zeros_like(F)
    sl = [slice(None)] * F.ndim
    sl[axis] = slice(2, -2)
    target = tuple(sl)

    def sh(k):
        s = [slice(None)] * F.ndim
        s[axis] = slice(2 + k, F.shape[axis] - 2 + k if k != 2 else None)
        return F[tuple(s)]

    out[target] = (sh(-2) - 8 * sh(-1) + 8 * sh(1) - sh(2)) / (12.0 * h)
    return out


def stencil_d2(F: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order second derivative with the same margin contract."""
    out = np.zeros_like(F)
    sl = [slice(None)] * F.ndim
    sl[axis] = slice(2, -2)
    target = tuple(sl)

    def sh(k):
        s = [slice(None)] * F.ndim
        s[axis] = slice(2 + k, F.shape[axis] - 2 + k if k != 2 else None)
        return F[tuple(s)]

    out[target] = (
        -sh(-2) + 16 * sh(-1) - 30 * sh(0) + 16 * sh(1) - sh(2)
    ) / (12.0 * h * h)
    return out


_PDE_OPS = ("Q", "P", "H_general", "H_matched")


def pde_residual(psi, params: OscParams, D: int, op_id: str,
                 grid: PhaseGrid, margin: int = 2) -> dict:
    """Two-route check of the differential representation of an operator.

    Route one applies the operator in the number basis and transforms;
    route two applies the corresponding differential form to the
    transformed field with fourth-order stencils.  Returns the max-norm
    difference over the interior (stencil margin excluded).

    Differential forms (Psi = V psi):
        Q          i dPsi/dp
        P          p Psi - i dPsi/dq
        H_general  -(1/2m) d2/dq2 - (m w^2/2) d2/dp2 - i (p/m) d/dq + p^2/2m
        H_matched  (w q - i p/m) d/dq + (H(q,p) + w/2)   [matched only]
    """
    if op_id not in _PDE_OPS:
        raise ValueError(f"op_id must be one of {_PDE_OPS}")
    if op_id == "H_matched" and not params.matched:
        raise ValueError("H_matched form requires the matched width")
    c = psi.coeffs if isinstance(psi, FockVector) else np.asarray(psi, dtype=complex)
    if c.size < D:
        c = np.concatenate([c, np.zeros(D - c.size, dtype=complex)])
    ops = build_canonical(params, D)
    name = {"Q": "Q", "P": "P", "H_general": "H", "H_matched": "H"}[op_id]
    Apsi = ops[name].matrix @ c
    route_fock = phase_transform(Apsi, params, D, grid).values

    Psi = phase_transform(c, params, D, grid).values
    Qm, Pm = grid.meshes()
    m, w = params.m, params.omega
    if op_id == "Q":
        route_pde = 1j * stencil_d1(Psi, grid.dp, 1)
    elif op_id == "P":
        route_pde = Pm * Psi - 1j * stencil_d1(Psi, grid.dq, 0)
    elif op_id == "H_general":
        route_pde = (
            -stencil_d2(Psi, grid.dq, 0) / (2.0 * m)
            - (m * w * w / 2.0) * stencil_d2(Psi, grid.dp, 1)
            - 1j * (Pm / m) * stencil_d1(Psi, grid.dq, 0)
            + (Pm * Pm / (2.0 * m)) * Psi
        )
    else:
        Hc = Pm * Pm / (2.0 * m) + m * w * w * Qm * Qm / 2.0
        route_pde = (w * Qm - 1j * Pm / m) * stencil_d1(Psi, grid.dq, 0) + (
            Hc + w / 2.0
        ) * Psi
    g = max(margin, 2)
    diff = np.abs(route_pde - route_fock)[g:-g, g:-g]
    return {
        "residual": float(diff.max()),
        "op_id": op_id,
        "interior_margin": g,
    }


_THETAS = ("none", "qp", "half_qp")


def gauge_transform(field: PhaseField, theta_id: str) -> PhaseField:
    """Multiply an amplitude field by the gauge phase e^{i Theta(q,p)}.

    Theta is 0, qp, or qp/2.  The half-qp gauge turns the transform into
    the Weyl-displaced convention with q reflected; densities are
    untouched by construction.
    """
    if theta_id not in _THETAS:
        raise ValueError(f"theta_id must be one of {_THETAS}")
    if field.kind != "amplitude":
        raise ValueError("gauge applies to amplitude fields")
    if theta_id == "none":
        return field
    Qm, Pm = field.grid.meshes()
    fac = 1.0 if theta_id == "qp" else 0.5
    return PhaseField(field.grid, np.exp(1j * fac * Qm * Pm) * field.values,
                      kind="amplitude")


# -- Bargmann picture --------------------------------------------------------

@dataclass(frozen=True)
class BargmannFunction:
    """Entire-function side of the matched transform: f(z) = sum a_n z^n
    with a_n = psi_n / sqrt(n!) and norm^2 = sum |a_n|^2 n!."""

    coeffs: np.ndarray
    params: OscParams

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for a in self.coeffs[::-1]:
            out = out * z + a
        return out

    def norm_sq(self) -> float:
        n = np.arange(self.coeffs.size)
        fact = np.array([math.factorial(k) for k in n], dtype=float)
        return float((np.abs(self.coeffs) ** 2 * fact).sum())


def bargmann_transform(psi, params: OscParams) -> BargmannFunction:
    """Coefficients of the analytic representative (matched width only)."""
    if not params.matched:
        raise ValueError("the analytic representation needs the matched width")
    c = psi.coeffs if isinstance(psi, FockVector) else np.asarray(psi, dtype=complex)
    n = np.arange(c.size)
    fact = np.array([math.factorial(k) for k in n], dtype=float)
    return BargmannFunction(c / np.sqrt(fact), params)


def bargmann_eval_via_field(psi, params: OscParams, D: int, z) -> complex:
    """Second route to f(z): prefactor times the phase-space amplitude.

    f(xi + i eta) = sqrt(2 pi) e^{(xi^2+eta^2)/2} e^{-i xi eta}
                    Psi(2 sigma xi, -eta / sigma).
    """
    if not params.matched:
        raise ValueError("the analytic representation needs the matched width")
    z = complex(z)
    xi, eta = z.real, z.imag
    s = params.sigma
    c = psi.coeffs if isinstance(psi, FockVector) else np.asarray(psi, dtype=complex)
    ov = coherent_overlaps(params, D, 2.0 * s * xi, -eta / s)
    Psi = complex(np.vdot(ov, c[:D])) / math.sqrt(2.0 * np.pi)
    pref = math.sqrt(2.0 * np.pi) * np.exp((xi * xi + eta * eta) / 2.0) * np.exp(
        -1j * xi * eta
    )
    return complex(pref * Psi)


def bargmann_field_samples(psi, params: OscParams, D: int,
                           xis: np.ndarray, etas: np.ndarray) -> np.ndarray:
    """f(xi + i eta) on a rectangular z-grid through the field route.

    Vectorized version of :func:`bargmann_eval_via_field`; returns an
    (n_xi, n_eta) complex array.  The analyticity of the result is a
    nontrivial property of the transform, so downstream checks difference
    these samples for the Cauchy-Riemann residual.
    """
    if not params.matched:
        raise ValueError("the analytic representation needs the matched width")
    c = psi.coeffs if isinstance(psi, FockVector) else np.asarray(psi, dtype=complex)
    s = params.sigma
    Xi, Eta = np.meshgrid(np.asarray(xis, dtype=float),
                          np.asarray(etas, dtype=float), indexing="ij")
    ov = coherent_overlaps(params, D, 2.0 * s * Xi, -Eta / s)
    Psi = np.einsum("nxy,n->xy", np.conj(ov), c[:D]) / math.sqrt(2.0 * np.pi)
    pref = math.sqrt(2.0 * np.pi) * np.exp((Xi ** 2 + Eta ** 2) / 2.0) * np.exp(
        -1j * Xi * Eta
    )
    return pref * Psi


def bargmann_ops_check(psi, params: OscParams, D: int) -> dict:
    """Coefficient-level actions of a, a*, Q, P, H versus the Fock route.

    For each operator, transform (A psi) and compare with the
    coefficient action of the corresponding analytic operator (d/dz,
    z, sigma(z + d/dz), (i/2 sigma)(z - d/dz), omega(z d/dz + 1/2)).
    The top row is excluded where the operator leaves the truncation;
    states with a zeroed top block make every residual exact.
    """
    c = psi.coeffs if isinstance(psi, FockVector) else np.asarray(psi, dtype=complex)
    if c.size != D:
        raise ValueError("state dimension must equal D")
    ops = build_canonical(params, D)
    a = bargmann_transform(c, params).coeffs
    n = np.arange(D)

    def ddz(v):
        out = np.zeros_like(v)
        out[:-1] = (n[1:]) * v[1:]
        return out

    def times_z(v):
        out = np.zeros_like(v)
        out[1:] = v[:-1]
        return out

    s, w = params.sigma, params.omega
    analytic = {
        "lower": ddz(a),
        "raise": times_z(a),
        "Q": s * (times_z(a) + ddz(a)),
        "P": (1j / (2.0 * s)) * (times_z(a) - ddz(a)),
        "H": w * (n * a + 0.5 * a),
    }
    fock_route = {
        "lower": ops["a"].matrix @ c,
        "raise": ops["adag"].matrix @ c,
        "Q": ops["Q"].matrix @ c,
        "P": ops["P"].matrix @ c,
        "H": ops["H"].matrix @ c,
    }
    out = {}
    for key, av in analytic.items():
        bv = bargmann_transform(fock_route[key], params).coeffs
        out[key] = float(np.abs(av[: D - 1] - bv[: D - 1]).max())
    return out


def cauchy_riemann_residual(psi, params: OscParams, D: int,
                            xis: np.ndarray, etas: np.ndarray) -> float:
    """Max |dF/dxi + i dF/deta| over the interior of a z-sample box.

    The samples come from the field route, so a small residual certifies
    that the phase-space amplitude really assembles into an analytic
    function rather than checking an algebraic identity of the
    coefficients.  Differencing uses the 4th-order stencils; the 2-cell
    stencil margin is excluded.
    """
    xis = np.asarray(xis, dtype=float)
    etas = np.asarray(etas, dtype=float)
    if xis.size < 5 or etas.size < 5:
        raise ValueError("need at least 5 samples per axis for the stencils")
    F = bargmann_field_samples(psi, params, D, xis, etas)
    h_xi = float(xis[1] - xis[0])
    h_eta = float(etas[1] - etas[0])
    resid = stencil_d1(F, h_xi, axis=0) + 1j * stencil_d1(F, h_eta, axis=1)
    return float(np.abs(resid[2:-2, 2:-2]).max())
