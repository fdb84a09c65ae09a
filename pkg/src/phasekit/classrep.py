"""Classical representation of states and observables over a frame.

Everything here sits on the sampling side of the frame: the phase-space
density of a state, its marginals, the confidence functions that the
marginals are smeared by, grid-quadrature effects over cells or regions,
the completeness rank of an effect family, and least-squares state
reconstruction from sampled densities.

Quadratures use midpoint sampling with the weight dq dp / (2 pi) folded
in where the frame measure calls for it.  The density of a block-D state
against the width-sigma frame is evaluated with full-space overlap
coefficients, so values decay like the true Gaussian and window
adequacy can be certified from boundary decay alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .displacement import char_function, displaced_fock_block
from .fock import (
    FockVector,
    Operator,
    OscParams,
    build_canonical,
    canonical_squares,
    hermite_functions,
    quantum_expectation,
    quantum_variance,
)
from .grids import PhaseGrid, PhaseField
from .coherentframe import FrameSpec, auto_grid, grid_is_adequate

__all__ = [
    "ConfidenceFunction",
    "confidence_functions",
    "confidence_moments_from_operator",
    "husimi",
    "marginals",
    "classical_expectation",
    "classical_variance",
    "uncertainty_report",
    "EffectSet",
    "effect_partition",
    "effect_of_region",
    "completeness_rank",
    "fourier_criterion",
    "hermitian_coords",
    "coords_to_hermitian",
    "reconstruct_state",
]


# -- confidence functions ----------------------------------------------------

@dataclass(frozen=True)
class ConfidenceFunction:
    """A one-dimensional probability density on a uniform grid.

    This is the smearing kernel that turns sharp classical marginals into
    the observed ones; its variance is the resolution floor of the frame
    along that axis.
    """

    xs: np.ndarray
    values: np.ndarray
    axis: str

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", v)
        if self.axis not in ("q", "p"):
            raise ValueError("axis must be 'q' or 'p'")
        if xs.ndim != 1 or xs.shape != v.shape or xs.size < 4:
            raise ValueError("xs and values must be matching 1-D arrays")
        if v.min() < -1e-12:
            raise ValueError(f"negative density {v.min():.2e}")
        h = xs[1] - xs[0]
        mass = float(v.sum() * h)
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"density mass {mass} is not 1 within 1e-6")

    @property
    def spacing(self) -> float:
        return float(self.xs[1] - self.xs[0])

    def mean(self) -> float:
        return float((self.xs * self.values).sum() * self.spacing)

    def variance(self) -> float:
        m = self.mean()
        return float(((self.xs - m) ** 2 * self.values).sum() * self.spacing)


def _axis_window(params: OscParams, D: int, axis: str):
    """Quadrature window wide enough for the reflected generator density."""
    if axis == "q":
        scale = max(params.sigma, params.sigma_g)
    else:
        scale = max(1.0 / (2.0 * params.sigma), 1.0 / (2.0 * params.sigma_g))
    hw = 2.0 * scale * math.sqrt(D) + 8.0 * scale
    h = scale / 20.0
    n = int(math.ceil(2.0 * hw / h))
    xs = -hw + (np.arange(n) + 0.5) * h
    return xs


def confidence_functions(frame: FrameSpec) -> tuple[ConfidenceFunction, ConfidenceFunction]:
    """The position and momentum confidence densities of a frame.

    These are the position and momentum densities of the generator with
    the argument reflected.  A pure Gaussian generator gives centered
    normals of variance sigma^2 and 1/(4 sigma^2); general generators go
    through the eigenfunction expansion of the generator matrix.
    """
    par, D = frame.params, frame.D
    xq = _axis_window(par, D, "q")
    xp = _axis_window(par, D, "p")
    if frame.pure_coherent:
        s = par.sigma
        vq = np.exp(-(xq ** 2) / (2 * s * s)) / (s * math.sqrt(2 * math.pi))
        sp = 1.0 / (2.0 * s)
        vp = np.exp(-(xp ** 2) / (2 * sp * sp)) / (sp * math.sqrt(2 * math.pi))
        return (
            ConfidenceFunction(xq, vq, "q"),
            ConfidenceFunction(xp, vp, "p"),
        )
    from .fock import hermite_position_density, hermite_momentum_density

    a = frame.generator
    vq = hermite_position_density(a, par, -xq)
    vp = hermite_momentum_density(a, par, -xp)
    return (
        ConfidenceFunction(xq, np.maximum(vq, 0.0), "q"),
        ConfidenceFunction(xp, np.maximum(vp, 0.0), "p"),
    )


def confidence_moments_from_operator(frame: FrameSpec) -> dict:
    """Operator route to the confidence moments.

    Mean is minus the generator expectation of the quadrature (the
    reflection flips the sign); the variance is reflection-invariant and
    uses the exact block squares.
    """
    par, D = frame.params, frame.D
    ops = build_canonical(par, D)
    sq = canonical_squares(par, D)
    a = frame.generator
    mq = quantum_expectation(a, ops["Q"])
    mp = quantum_expectation(a, ops["P"])
    return {
        "mean_q": -float(np.real(mq)),
        "mean_p": -float(np.real(mp)),
        "var_q": quantum_variance(a, ops["Q"], sq["Q2"]),
        "var_p": quantum_variance(a, ops["P"], sq["P2"]),
    }


# -- phase-space density -----------------------------------------------------

def _flat_chunks(n: int, D: int):
    """Slices over n flat points sized to bound displaced-block memory."""
    chunk = max(256, int(4.0e6 // (D * D)))
    for start in range(0, n, chunk):
        yield slice(start, min(start + chunk, n))


def _state_matrix(W, D: int) -> np.ndarray:
    if isinstance(W, FockVector):
        W = W.project()
    Wm = W.matrix if isinstance(W, Operator) else np.asarray(W, dtype=complex)
    if Wm.shape != (D, D):
        raise ValueError(f"state must be {D}x{D}")
    return Wm


def husimi(W, frame: FrameSpec, grid: PhaseGrid) -> PhaseField:
    """Phase-space density of a state against the frame.

    Pure coherent frames use the overlap coefficients directly; general
    generators displace each retained eigenvector of the generator with
    the exact displaced-block recurrence and sum the weighted quadratic
    forms.  Values are bounded by 1/(2 pi).
    """
    D = frame.D
    Wm = _state_matrix(W, D)
    Q, P = grid.meshes()
    qf, pf = Q.ravel(), P.ravel()
    vals = np.zeros(qf.size)
    if frame.pure_coherent:
        from .coherentframe import coherent_overlaps

        for sl in _flat_chunks(qf.size, D):
            C = coherent_overlaps(frame.params, D, qf[sl], pf[sl])
            vals[sl] = np.real(np.einsum("jx,jx->x", np.conj(C), Wm @ C))
    else:
        lam, V = frame.generator_spectrum()
        for sl in _flat_chunks(qf.size, D):
            M = displaced_fock_block(frame.params, D, qf[sl], pf[sl])
            U = np.einsum("jmx,mi->jix", M, V)
            G = np.einsum("jk,kix->jix", Wm, U)
            vals[sl] = np.real(np.einsum("jix,jix,i->x", np.conj(U), G, lam))
    vals = vals / (2.0 * math.pi)
    vals = vals.reshape(grid.n_q, grid.n_p)
    return PhaseField(grid, np.maximum(vals, 0.0), kind="density")


def marginals(field: PhaseField) -> dict:
    """Axis marginals of a phase-space density by midpoint quadrature."""
    if field.kind != "density":
        raise ValueError("marginals expect a density field")
    rho = np.real(field.values)
    return {
        "qs": field.grid.qs,
        "ps": field.grid.ps,
        "f_q": rho.sum(axis=1) * field.grid.dp,
        "f_p": rho.sum(axis=0) * field.grid.dq,
    }


def classical_expectation(f, field: PhaseField) -> float:
    """Quadrature of f(q, p) against a density field."""
    if field.kind != "density":
        raise ValueError("classical_expectation expects a density field")
    Q, P = field.grid.meshes()
    vals = f(Q, P) if callable(f) else np.asarray(f)
    return float((vals * np.real(field.values)).sum() * field.grid.weight)


def classical_variance(f, field: PhaseField) -> float:
    m = classical_expectation(f, field)
    if callable(f):
        return classical_expectation(lambda Q, P: (f(Q, P) - m) ** 2, field)
    vals = np.asarray(f)
    return classical_expectation((vals - m) ** 2, field)


def uncertainty_report(W, frame: FrameSpec, grid: PhaseGrid | None = None) -> dict:
    """Two-route variance budget of a state along both axes.

    Route one: the observed marginal variances read off the sampled
    density.  Route two: quantum variances (exact block squares) plus
    the confidence variances.  The two must agree identically; the
    report carries the defect so that claim stays checkable.  Also
    reports the variance products on both the sharp and observed sides.
    """
    D = frame.D
    Wm = _state_matrix(W, D)
    if grid is None:
        grid = auto_grid(frame, D, 0.05)
    field = husimi(Wm, frame, grid)
    marg = marginals(field)
    wq = marg["f_q"] * field.grid.dq
    wp = marg["f_p"] * field.grid.dp
    mean_fq = float((marg["qs"] * wq).sum())
    mean_fp = float((marg["ps"] * wp).sum())
    var_fq = float(((marg["qs"] - mean_fq) ** 2 * wq).sum())
    var_fp = float(((marg["ps"] - mean_fp) ** 2 * wp).sum())

    ops = build_canonical(frame.params, D)
    sq = canonical_squares(frame.params, D)
    var_eq = quantum_variance(Wm, ops["Q"], sq["Q2"])
    var_ep = quantum_variance(Wm, ops["P"], sq["P2"])
    eta_q, eta_p = confidence_functions(frame)
    veta_q, veta_p = eta_q.variance(), eta_p.variance()
    return {
        "var_E_q": var_eq,
        "var_E_p": var_ep,
        "var_eta_q": veta_q,
        "var_eta_p": veta_p,
        "var_F_q": var_fq,
        "var_F_p": var_fp,
        "additivity_defect_q": abs(var_fq - (var_eq + veta_q)),
        "additivity_defect_p": abs(var_fp - (var_ep + veta_p)),
        "product_E": var_eq * var_ep,
        "product_F": var_fq * var_fp,
        "mass_defect": abs(field.total_mass() - 1.0),
        "adequate": grid_is_adequate(frame, D, grid),
    }


# -- effects -----------------------------------------------------------------

def _frame_vectors(frame: FrameSpec, qf: np.ndarray, pf: np.ndarray):
    """Weighted frame vectors at flat sample points.

    Returns (weights lam_i, array (D, r, N)) such that the effect density
    at x is sum_i lam_i |col_i(x)><col_i(x)| / (2 pi).
    """
    D = frame.D
    if frame.pure_coherent:
        from .coherentframe import coherent_overlaps

        C = coherent_overlaps(frame.params, D, qf, pf)
        return np.ones(1), C[:, None, :]
    lam, V = frame.generator_spectrum()
    U = np.empty((D, lam.size, qf.size), dtype=complex)
    for sl in _flat_chunks(qf.size, D):
        M = displaced_fock_block(frame.params, D, qf[sl], pf[sl])
        U[:, :, sl] = np.einsum("jmx,mi->jix", M, V)
    return lam, U


def _quadrature_effect(frame: FrameSpec, qf, pf, weight: float) -> np.ndarray:
    lam, U = _frame_vectors(frame, qf, pf)
    E = np.einsum("jix,i,kix->jk", U, lam, np.conj(U)) * (weight / (2.0 * math.pi))
    return 0.5 * (E + E.conj().T)


@dataclass(frozen=True)
class EffectSet:
    """Cell effects from a tiled region of phase space.

    ``cells`` holds (q_lo, q_hi, p_lo, p_hi) per effect; effects are
    hermitian with spectrum in [0, 1] up to quadrature tolerance.
    """

    effects: tuple
    cells: tuple
    params: OscParams
    D: int
    region: str
    spacing: float

    def __post_init__(self):
        if len(self.effects) != len(self.cells):
            raise ValueError("effects and cells must pair up")
        for E in self.effects:
            w = np.linalg.eigvalsh(E)
            if w.min() < -1e-10 or w.max() > 1.0 + 1e-10:
                raise ValueError(
                    f"effect spectrum [{w.min():.2e}, {w.max():.2e}] outside [0, 1]"
                )

    def __len__(self):
        return len(self.effects)

    def __iter__(self):
        return iter(self.effects)

    def total(self) -> np.ndarray:
        return np.sum(self.effects, axis=0)

    def sum_defect(self) -> float:
        """Max-norm distance of the summed effects from the identity.

        Small only when the tiled region exhausts the support of every
        block state, i.e. for adequacy-sized regions.
        """
        return float(np.abs(self.total() - np.eye(self.D)).max())

    def probabilities(self, W) -> np.ndarray:
        Wm = _state_matrix(W, self.D)
        return np.array([float(np.real(np.trace(Wm @ E))) for E in self.effects])


def _support_halfwidths(params: OscParams, D: int) -> tuple[float, float]:
    """Bounding box of the occupied disc |z|^2 <= D in frame units."""
    s = params.sigma
    return 2.0 * s * math.sqrt(D), math.sqrt(D) / s


def effect_partition(frame: FrameSpec, n_cells: int | None = None,
                     region: str = "support", spacing: float = 0.05) -> EffectSet:
    """Tile a centered box into n x n cells and integrate each to an effect.

    ``region="support"`` uses the bounding box of the occupied disc,
    which keeps every cell's effect numerically independent;
    ``region="adequate"`` uses the full decay box, whose cell sums
    reproduce the identity but whose far cells carry no weight.
    """
    D = frame.D
    n = (D + 2) if n_cells is None else int(n_cells)
    if n < 1:
        raise ValueError("n_cells must be positive")
    if region == "support":
        Lq, Lp = _support_halfwidths(frame.params, D)
    elif region == "adequate":
        g = auto_grid(frame, D, spacing)
        Lq, Lp = g.q_max + g.dq / 2, g.p_max + g.dp / 2
    else:
        raise ValueError("region must be 'support' or 'adequate'")
    q_edges = np.linspace(-Lq, Lq, n + 1)
    p_edges = np.linspace(-Lp, Lp, n + 1)
    nq = max(int(round(2 * Lq / spacing)), 4 * n)
    np_ = max(int(round(2 * Lp / spacing)), 4 * n)
    dq, dp = 2 * Lq / nq, 2 * Lp / np_
    qs = -Lq + (np.arange(nq) + 0.5) * dq
    ps = -Lp + (np.arange(np_) + 0.5) * dp
    qi = np.clip(np.searchsorted(q_edges, qs, side="right") - 1, 0, n - 1)
    pi = np.clip(np.searchsorted(p_edges, ps, side="right") - 1, 0, n - 1)
    Q, P = np.meshgrid(qs, ps, indexing="ij")
    lam, U = _frame_vectors(frame, Q.ravel(), P.ravel())
    U = U.reshape(U.shape[0], U.shape[1], nq, np_)
    effects, cells = [], []
    for a in range(n):
        qa = qi == a
        for b in range(n):
            pb = pi == b
            blk = U[:, :, qa][:, :, :, pb].reshape(U.shape[0], U.shape[1], -1)
            E = np.einsum("jix,i,kix->jk", blk, lam, np.conj(blk)) * (
                dq * dp / (2.0 * math.pi)
            )
            E = 0.5 * (E + E.conj().T)
            effects.append(E)
            cells.append(
                (float(q_edges[a]), float(q_edges[a + 1]),
                 float(p_edges[b]), float(p_edges[b + 1]))
            )
    return EffectSet(tuple(effects), tuple(cells), frame.params, D, region, spacing)


def effect_of_region(frame: FrameSpec, grid: PhaseGrid, mask) -> Operator:
    """Quadrature effect of an arbitrary region given by a mask.

    ``mask`` is a boolean array over the grid or a callable on the
    meshes.  The result transforms covariantly: displacing the region
    conjugates the effect by the displacement unitary.
    """
    Q, P = grid.meshes()
    m = mask(Q, P) if callable(mask) else np.asarray(mask, dtype=bool)
    if m.shape != Q.shape:
        raise ValueError("mask shape must match the grid")
    E = _quadrature_effect(frame, Q[m].ravel(), P[m].ravel(), grid.weight)
    return Operator(E, kind="hermitian", params=frame.params)


# -- informational completeness ----------------------------------------------

def hermitian_coords(A: np.ndarray) -> np.ndarray:
    """Isometric real coordinates of a hermitian matrix.

    Diagonal, then sqrt(2) times the real and imaginary upper triangle;
    the Euclidean inner product of two coordinate vectors equals
    tr(A B).
    """
    A = np.asarray(A)
    iu = np.triu_indices(A.shape[0], k=1)
    return np.concatenate(
        [np.real(np.diag(A)), math.sqrt(2.0) * A[iu].real, math.sqrt(2.0) * A[iu].imag]
    )


def coords_to_hermitian(x: np.ndarray, D: int) -> np.ndarray:
    """Inverse of :func:`hermitian_coords`."""
    x = np.asarray(x, dtype=float)
    iu = np.triu_indices(D, k=1)
    M = np.zeros((D, D), dtype=complex)
    M[np.diag_indices(D)] = x[:D]
    k = len(iu[0])
    M[iu] = (x[D: D + k] + 1j * x[D + k:]) / math.sqrt(2.0)
    M = M + np.triu(M, 1).conj().T
    return M


def _effect_list(effects) -> list[np.ndarray]:
    if isinstance(effects, EffectSet):
        return list(effects.effects)
    out = []
    for E in effects:
        out.append(E.matrix if isinstance(E, Operator) else np.asarray(E, dtype=complex))
    return out


def _coords_rows(effects) -> tuple[np.ndarray, int]:
    """Hermitian-coordinate rows of an effect family, vectorized when the
    family arrives as a stacked (N, D, D) array."""
    if isinstance(effects, np.ndarray) and effects.ndim == 3:
        N, D, _ = effects.shape
        iu = np.triu_indices(D, k=1)
        di = np.arange(D)
        rows = np.concatenate(
            [
                np.real(effects[:, di, di]),
                math.sqrt(2.0) * np.real(effects[:, iu[0], iu[1]]),
                math.sqrt(2.0) * np.imag(effects[:, iu[0], iu[1]]),
            ],
            axis=1,
        )
        return rows, D
    mats = _effect_list(effects)
    return np.array([hermitian_coords(E) for E in mats]), mats[0].shape[0]


def completeness_rank(effects, D: int | None = None, rel_tol: float = 1e-8) -> dict:
    """Rank of an effect family in the space of hermitian matrices.

    The family is informationally complete on the block exactly when the
    rank is D^2.  Rank counts singular values above ``rel_tol`` times
    the largest one; the smallest retained ratio is reported as the
    margin.
    """
    rows, d0 = _coords_rows(effects)
    if D is None:
        D = d0
    sv = np.linalg.svd(rows, compute_uv=False)
    rank = int((sv > rel_tol * sv[0]).sum())
    full = D * D
    return {
        "rank": rank,
        "target": full,
        "complete": rank == full,
        "n_effects": rows.shape[0],
        "threshold": rel_tol * float(sv[0]),
        "margin": float(sv[full - 1] / sv[0]) if len(sv) >= full else 0.0,
    }


def fourier_criterion(frame: FrameSpec, grid: PhaseGrid) -> dict:
    """Zero scan of the generator's sampled two-point transform.

    A zero-free transform over all of phase space implies the displaced
    family is informationally complete; a small sampled minimum only
    says the scan got near a zero, so the result reports the minimum and
    where it sits without asserting incompleteness.
    """
    samples = char_function(frame.generator, frame.params, grid)
    mags = np.abs(samples.values)
    k = int(np.argmin(mags))
    i, j = divmod(k, grid.n_p)
    return {
        "min_abs": float(mags.flat[k]),
        "argmin_q": float(grid.qs[i]),
        "argmin_p": float(grid.ps[j]),
        "samples": samples,
    }


# -- reconstruction ----------------------------------------------------------

def husimi_point_effects(frame: FrameSpec, grid: PhaseGrid) -> np.ndarray:
    """Stacked rank-one cell effects (w / 2 pi) |u_x><u_x| for every grid
    point, shape (N, D, D); pairs with density samples times the cell
    weight as measured values."""
    D = frame.D
    Q, P = grid.meshes()
    lam, U = _frame_vectors(frame, Q.ravel(), P.ravel())
    scale = grid.weight / (2.0 * math.pi)
    E = np.einsum("jix,i,kix->xjk", U, lam, np.conj(U)) * scale
    return E


def reconstruct_from_density(field: PhaseField, frame: FrameSpec,
                             ridge: float = 1e-10) -> tuple[Operator, dict]:
    """Reconstruct a state from its sampled phase-space density.

    Each grid point contributes the rank-one quadrature effect and the
    measured value rho(x) times the cell weight.
    """
    if field.kind != "density":
        raise ValueError("reconstruction expects a density field")
    effects = husimi_point_effects(frame, field.grid)
    values = np.real(field.values).ravel() * field.grid.weight
    return reconstruct_state(values, effects, frame.D, ridge=ridge)


def reconstruct_state(values, effects, D: int | None = None,
                      ridge: float = 1e-10) -> tuple[Operator, dict]:
    """Least-squares state from effect expectations.

    Solves the trace-one-constrained normal equations in hermitian
    coordinates (KKT system with a ridge relative to the scale of the
    normal matrix), then projects onto the density cone by clipping the
    spectrum and renormalizing.  The diagnostics carry the design rank;
    a deficient design means the data cannot determine the state and
    downstream callers should treat the output as a best guess.
    """
    rows, d0 = _coords_rows(effects)
    if D is None:
        D = d0
    y = np.asarray(values, dtype=float)
    if y.size != rows.shape[0]:
        raise ValueError("one value per effect required")
    nb = rows.shape[1]
    tr_row = np.zeros(nb)
    tr_row[:D] = 1.0
    AtA = rows.T @ rows
    # relative ridge: invariant under uniform rescaling of the effects
    scale = float(np.trace(AtA)) / nb
    AtA = AtA + ridge * scale * np.eye(nb)
    Aty = rows.T @ y
    KKT = np.block([[AtA, tr_row[:, None]], [tr_row[None, :], np.zeros((1, 1))]])
    sol = np.linalg.solve(KKT, np.concatenate([Aty, [1.0]]))
    West = coords_to_hermitian(sol[:nb], D)

    w, V = np.linalg.eigh(West)
    clipped = np.clip(w, 0.0, None)
    if clipped.sum() <= 0:
        raise ValueError("reconstruction collapsed to the zero matrix")
    clip_mass = float(np.abs(w - clipped).sum())
    clipped = clipped / clipped.sum()
    Wp = (V * clipped) @ V.conj().T
    Wp = 0.5 * (Wp + Wp.conj().T)

    sv = np.linalg.svd(rows, compute_uv=False)
    design_rank = int((sv > 1e-8 * sv[0]).sum())
    resid = float(np.linalg.norm(rows @ hermitian_coords(Wp) - y))
    diag = {
        "design_rank": design_rank,
        "target_rank": D * D,
        "rank_deficient": design_rank < D * D,
        "residual": resid,
        "clip_mass": clip_mass,
        "n_effects": rows.shape[0],
        "ridge": ridge,
    }
    return Operator(Wp, kind="density"), diag
