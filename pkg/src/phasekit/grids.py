"""Rectangular phase-space grids and sampled fields.

Samples sit at cell centers, so a sum of values times ``dq * dp`` is the
midpoint quadrature over the covered rectangle.  CSV rows are ordered
p-major (p is the outer loop), matching docs/formats.md.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

__all__ = ["PhaseGrid", "PhaseField"]

_FMT = "%.17g"


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform rectangular grid of phase-space sample points.

    ``q_min``/``p_min`` are the first sample coordinates (cell centers);
    the covered rectangle extends half a cell beyond the extreme samples
    on every side.
    """

    q_min: float
    p_min: float
    dq: float
    dp: float
    n_q: int
    n_p: int

    def __post_init__(self):
        if self.dq <= 0 or self.dp <= 0:
            raise ValueError("grid spacings must be positive")
        if self.n_q < 2 or self.n_p < 2 or self.n_q * self.n_p < 4:
            raise ValueError("grid needs at least 2 samples per axis")

    @property
    def qs(self) -> np.ndarray:
        return self.q_min + self.dq * np.arange(self.n_q)

    @property
    def ps(self) -> np.ndarray:
        return self.p_min + self.dp * np.arange(self.n_p)

    @property
    def weight(self) -> float:
        """Quadrature weight of a single cell."""
        return self.dq * self.dp

    @property
    def q_max(self) -> float:
        return self.q_min + self.dq * (self.n_q - 1)

    @property
    def p_max(self) -> float:
        return self.p_min + self.dp * (self.n_p - 1)

    def meshes(self):
        """(Q, P) index-ordered meshes of shape (n_q, n_p)."""
        return np.meshgrid(self.qs, self.ps, indexing="ij")

    def mid_edges(self):
        """Centers of the four boundary edges, used by the adequacy test."""
        qc = 0.5 * (self.q_min + self.q_max)
        pc = 0.5 * (self.p_min + self.p_max)
        return [
            (self.q_min, pc),
            (self.q_max, pc),
            (qc, self.p_min),
            (qc, self.p_max),
        ]

    @staticmethod
    def centered(hw_q: float, hw_p: float, dq: float, dp: float) -> "PhaseGrid":
        """Symmetric grid with samples spanning [-hw, hw] on each axis."""
        n_q = int(round(2.0 * hw_q / dq)) + 1
        n_p = int(round(2.0 * hw_p / dp)) + 1
        return PhaseGrid(
            q_min=-dq * (n_q - 1) / 2.0,
            p_min=-dp * (n_p - 1) / 2.0,
            dq=dq,
            dp=dp,
            n_q=n_q,
            n_p=n_p,
        )

    def as_dict(self) -> dict:
        return {
            "q_min": self.q_min,
            "p_min": self.p_min,
            "dq": self.dq,
            "dp": self.dp,
            "Nq": self.n_q,
            "Np": self.n_p,
        }


_FIELD_KINDS = ("amplitude", "density", "real")


@dataclass(frozen=True)
class PhaseField:
    """Values sampled on a :class:`PhaseGrid`.

    kind
        ``amplitude``  complex samples.
        ``density``    nonnegative real samples; values must stay below
        1/(2 pi) + 1e-10 and, when ``normalized`` is set, sum to 1 within
        1e-6 under the grid weight.
        ``real``       unconstrained real samples.
    """

    grid: PhaseGrid
    values: np.ndarray
    kind: str = "amplitude"
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values)
        if self.kind not in _FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.kind == "amplitude":
            v = v.astype(complex)
        else:
            if np.iscomplexobj(v) and np.abs(v.imag).max() > 1e-12:
                raise ValueError("real field has complex samples")
            v = v.real.astype(float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.n_q, self.grid.n_p):
            raise ValueError("values shape does not match grid")
        if self.kind == "density":
            if v.min() < -1e-10:
                raise ValueError(f"density has value {v.min():.2e} < -1e-10")
            if v.max() > 1.0 / (2.0 * np.pi) + 1e-10:
                raise ValueError("density exceeds the 1/(2 pi) bound")
            if self.normalized and abs(self.total_mass() - 1.0) > 1e-6:
                raise ValueError(
                    f"normalized density sums to {self.total_mass():.8f}"
                )

    def total_mass(self) -> float:
        """Quadrature integral of the samples."""
        base = self.values if self.kind != "amplitude" else np.abs(self.values) ** 2
        return float(np.real(base).sum() * self.grid.weight)

    def norm_sq(self) -> float:
        """Quadrature L2 norm (|values|^2 summed with the grid weight)."""
        return float((np.abs(self.values) ** 2).sum() * self.grid.weight)

    def to_csv(self) -> str:
        """Serialize as q,p,re,im (amplitude) or q,p,rho rows, p-major."""
        buf = io.StringIO()
        qs, ps = self.grid.qs, self.grid.ps
        if self.kind == "amplitude":
            buf.write("q,p,re,im\n")
            for j, p in enumerate(ps):
                for i, q in enumerate(qs):
                    z = self.values[i, j]
                    buf.write(
                        f"{_FMT % q},{_FMT % p},{_FMT % z.real},{_FMT % z.imag}\n"
                    )
        else:
            buf.write("q,p,rho\n")
            for j, p in enumerate(ps):
                for i, q in enumerate(qs):
                    buf.write(f"{_FMT % q},{_FMT % p},{_FMT % self.values[i, j]}\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str, kind: str | None = None,
                 normalized: bool = False) -> "PhaseField":
        """Parse a field written by :meth:`to_csv`.

        The grid is rebuilt from the coordinate columns, which must form
        a complete uniform product grid in the documented row order.
        """
        lines = [ln for ln in text.strip().splitlines() if ln and not ln.startswith("#")]
        if not lines:
            raise ValueError("empty CSV")
        header = lines[0].strip().split(",")
        if header[:2] != ["q", "p"] or len(header) < 3:
            raise ValueError(f"unexpected CSV header {header!r}")
        complex_file = header[2:4] == ["re", "im"]
        if kind is None:
            kind = "amplitude" if complex_file else "density"
        data = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
        qs = np.unique(data[:, 0])
        ps = np.unique(data[:, 1])
        n_q, n_p = qs.size, ps.size
        if n_q * n_p != data.shape[0]:
            raise ValueError("CSV rows do not form a product grid")
        for axis in (qs, ps):
            if axis.size > 1:
                steps = np.diff(axis)
                if np.abs(steps - steps[0]).max() > 1e-9 * max(abs(steps[0]), 1.0):
                    raise ValueError("grid axes are not uniform")
        grid = PhaseGrid(
            q_min=float(qs[0]),
            p_min=float(ps[0]),
            dq=float(qs[1] - qs[0]) if n_q > 1 else 1.0,
            dp=float(ps[1] - ps[0]) if n_p > 1 else 1.0,
            n_q=n_q,
            n_p=n_p,
        )
        if complex_file:
            vals = (data[:, 2] + 1j * data[:, 3]).reshape(n_p, n_q).T
        else:
            vals = data[:, 2].reshape(n_p, n_q).T
        return PhaseField(grid, vals, kind=kind, normalized=normalized)
