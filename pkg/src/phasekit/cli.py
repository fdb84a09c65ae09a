"""Command-line interface.

Run configuration comes from an optional TOML file plus flag overrides;
every command writes its data products (CSV and JSON) into the output
directory, prints their paths on stdout, and keeps human-readable text
on stderr.  A ``manifest.json`` with the configuration hash and library
versions accompanies each run so outputs can be traced back to their
inputs byte for byte.

Exit codes: 0 success, 1 failed checks, 2 configuration or input
errors, 3 no adequate grid, 4 rank-deficient effect family.

The PHASEKIT_THREADS environment variable caps BLAS parallelism; it has
to be applied before numpy loads, which is why every numerical import
in this module lives inside a function body.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, replace

__all__ = ["RunConfig", "main"]


def _apply_thread_cap():
    raw = os.environ.get("PHASEKIT_THREADS")
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError:
        print(f"warning: PHASEKIT_THREADS={raw!r} is not an integer; ignored",
              file=sys.stderr)
        return
    if n < 1:
        print("warning: PHASEKIT_THREADS must be >= 1; ignored", file=sys.stderr)
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ[var] = str(n)


_apply_thread_cap()


class CliError(Exception):
    """Base for errors carrying a process exit code."""

    code = 2


class ConfigError(CliError):
    code = 2


class GridError(CliError):
    code = 3


class RankError(CliError):
    code = 4


# -- configuration ------------------------------------------------------------

_GENERATORS = ("coherent", "fock_mixture", "matrix_file")
_GRID_MODES = ("auto", "off", "explicit")


@dataclass(frozen=True)
class RunConfig:
    """Resolved run configuration.

    ``sigma = None`` selects the matched width.  ``grid_mode`` is one of
    ``auto`` (search for an adequate window), ``off`` (refuse commands
    that need a grid), or ``explicit`` (use ``hw_q``/``hw_p`` and fail
    if inadequate).
    """

    m: float = 1.0
    omega: float = 1.0
    sigma: float | None = None
    D: int = 32
    grid_mode: str = "auto"
    hw_q: float | None = None
    hw_p: float | None = None
    spacing: float = 0.05
    generator: str = "coherent"
    weights: tuple = ()
    matrix_file: str | None = None
    out_dir: str = "phasekit-out"
    seed: int = 0
    figures: bool = True

    def validate(self):
        if not (isinstance(self.D, int) and self.D >= 2):
            raise ConfigError("Fock dimension D must be an integer >= 2")
        for name in ("m", "omega", "spacing"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"{name} must be a positive number")
        if self.sigma is not None and not (
            isinstance(self.sigma, (int, float)) and self.sigma > 0
        ):
            raise ConfigError("sigma must be a positive number or 'matched'")
        if self.grid_mode not in _GRID_MODES:
            raise ConfigError(f"grid mode must be one of {_GRID_MODES}")
        if self.grid_mode == "explicit":
            if not (self.hw_q and self.hw_p and self.hw_q > 0 and self.hw_p > 0):
                raise ConfigError("explicit grid needs positive halfwidths")
        if self.generator not in _GENERATORS:
            raise ConfigError(f"generator kind must be one of {_GENERATORS}")
        if self.generator == "fock_mixture":
            if not self.weights:
                raise ConfigError("fock_mixture generator needs weights")
            if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
                raise ConfigError("mixture weights must be nonnegative with "
                                  "positive sum")
            if len(self.weights) > self.D:
                raise ConfigError("more mixture weights than Fock levels")
        if self.generator == "matrix_file" and not self.matrix_file:
            raise ConfigError("matrix_file generator needs a file path")
        if self.generator != "fock_mixture" and self.weights:
            raise ConfigError("weights are only valid for the fock_mixture "
                              "generator")
        if self.generator != "matrix_file" and self.matrix_file:
            raise ConfigError("matrix_file is only valid for the matrix_file "
                              "generator")

    def as_dict(self) -> dict:
        return {
            "m": self.m,
            "omega": self.omega,
            "sigma": self.sigma,
            "D": self.D,
            "grid": {
                "mode": self.grid_mode,
                "hw_q": self.hw_q,
                "hw_p": self.hw_p,
                "spacing": self.spacing,
            },
            "generator": {
                "kind": self.generator,
                "weights": list(self.weights),
                "matrix_file": self.matrix_file,
            },
            "out_dir": self.out_dir,
            "seed": self.seed,
            "figures": self.figures,
        }


def _load_toml(path: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}")


def _config_from_toml(data: dict) -> RunConfig:
    cfg = RunConfig()
    par = data.get("params", {})
    sigma = par.get("sigma", None)
    if isinstance(sigma, str):
        if sigma != "matched":
            raise ConfigError("sigma must be a number or 'matched'")
        sigma = None
    cfg = replace(
        cfg,
        m=par.get("m", cfg.m),
        omega=par.get("omega", cfg.omega),
        sigma=sigma,
        D=par.get("D", cfg.D),
    )
    grid = data.get("grid", {})
    cfg = replace(
        cfg,
        grid_mode=grid.get("mode", cfg.grid_mode),
        hw_q=grid.get("hw_q", cfg.hw_q),
        hw_p=grid.get("hw_p", cfg.hw_p),
        spacing=grid.get("spacing", cfg.spacing),
    )
    gen = data.get("generator", {})
    if "weights" in gen and "matrix_file" in gen:
        raise ConfigError("generator must specify exactly one of weights or "
                          "matrix_file")
    kind = gen.get("kind")
    if kind is None:
        if "weights" in gen:
            kind = "fock_mixture"
        elif "matrix_file" in gen:
            kind = "matrix_file"
        else:
            kind = cfg.generator
    cfg = replace(
        cfg,
        generator=kind,
        weights=tuple(gen.get("weights", ())),
        matrix_file=gen.get("matrix_file"),
    )
    out = data.get("output", {})
    cfg = replace(
        cfg,
        out_dir=out.get("dir", cfg.out_dir),
        figures=out.get("figures", cfg.figures),
    )
    seed = data.get("run", {}).get("seed", data.get("seed", cfg.seed))
    return replace(cfg, seed=seed)


def _parse_generator_flag(text: str):
    """'coherent' | 'mixture:w0,w1,...' | 'matrix:PATH' -> config fields."""
    if text == "coherent":
        return "coherent", (), None
    if text.startswith(("mixture:", "fock_mixture:")):
        body = text.split(":", 1)[1]
        try:
            weights = tuple(float(w) for w in body.split(",") if w != "")
        except ValueError:
            raise ConfigError(f"bad mixture weights in {text!r}")
        return "fock_mixture", weights, None
    if text.startswith(("matrix:", "matrix_file:")):
        return "matrix_file", (), text.split(":", 1)[1]
    raise ConfigError(f"unknown generator spec {text!r}")


def _parse_grid_flag(text: str):
    """'auto' | 'off' | 'HW' | 'HWQ,HWP' -> (mode, hw_q, hw_p)."""
    if text == "auto":
        return "auto", None, None
    if text == "off":
        return "off", None, None
    parts = text.split(",")
    try:
        vals = [float(v) for v in parts]
    except ValueError:
        raise ConfigError(f"bad grid spec {text!r}")
    if len(vals) == 1:
        return "explicit", vals[0], vals[0]
    if len(vals) == 2:
        return "explicit", vals[0], vals[1]
    raise ConfigError("grid spec takes at most two halfwidths")


def _opt(args, name):
    """Shared flags default to SUPPRESS so that values parsed before the
    subcommand survive; absent flags simply leave the attribute unset."""
    return getattr(args, name, None)


def _resolve_config(args) -> RunConfig:
    config_path = _opt(args, "config")
    cfg = (_config_from_toml(_load_toml(config_path)) if config_path
           else RunConfig())
    if _opt(args, "m") is not None:
        cfg = replace(cfg, m=args.m)
    if _opt(args, "omega") is not None:
        cfg = replace(cfg, omega=args.omega)
    sigma = _opt(args, "sigma")
    if sigma is not None:
        if sigma == "matched":
            cfg = replace(cfg, sigma=None)
        else:
            try:
                cfg = replace(cfg, sigma=float(sigma))
            except ValueError:
                raise ConfigError("sigma must be a number or 'matched'")
    if _opt(args, "D") is not None:
        cfg = replace(cfg, D=args.D)
    if _opt(args, "spacing") is not None:
        cfg = replace(cfg, spacing=args.spacing)
    if _opt(args, "grid") is not None:
        mode, hq, hp = _parse_grid_flag(args.grid)
        cfg = replace(cfg, grid_mode=mode, hw_q=hq, hw_p=hp)
    if _opt(args, "generator") is not None:
        kind, weights, path = _parse_generator_flag(args.generator)
        cfg = replace(cfg, generator=kind, weights=weights, matrix_file=path)
    if _opt(args, "out") is not None:
        cfg = replace(cfg, out_dir=args.out)
    if _opt(args, "seed") is not None:
        cfg = replace(cfg, seed=args.seed)
    if _opt(args, "figures") is not None:
        cfg = replace(cfg, figures=args.figures)
    cfg.validate()
    return cfg


# -- shared assembly ----------------------------------------------------------

def _build_params(cfg: RunConfig):
    from .fock import OscParams

    try:
        return OscParams(m=cfg.m, omega=cfg.omega, sigma=cfg.sigma)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _build_frame(cfg: RunConfig, params, D: int | None = None):
    from .coherentframe import FrameSpec

    D = cfg.D if D is None else D
    if cfg.generator == "coherent":
        return FrameSpec.coherent(params, D)
    if cfg.generator == "fock_mixture":
        return FrameSpec.fock_mixture(params, D, cfg.weights)
    try:
        with open(cfg.matrix_file, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read generator matrix: {exc}")
    from .fock import operator_from_json

    try:
        op = operator_from_json(text)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"malformed generator matrix JSON: {exc}")
    if op.dim != D:
        raise ConfigError(
            f"generator matrix dimension {op.dim} does not match D = {D}"
        )
    return FrameSpec.from_matrix(params, D, op.matrix)


def _resolve_grid(cfg: RunConfig, frame, D: int | None = None):
    from .coherentframe import auto_grid, grid_is_adequate
    from .grids import PhaseGrid

    D = cfg.D if D is None else D
    if cfg.grid_mode == "off":
        raise GridError("grid search is disabled (grid mode 'off'); no "
                        "adequate grid is available")
    if cfg.grid_mode == "auto":
        try:
            return auto_grid(frame, D, spacing=cfg.spacing)
        except ValueError as exc:
            raise GridError(str(exc))
    grid = PhaseGrid.centered(cfg.hw_q, cfg.hw_p, cfg.spacing, cfg.spacing)
    if not grid_is_adequate(frame, D, grid):
        raise GridError(
            f"explicit grid halfwidths ({cfg.hw_q}, {cfg.hw_p}) fail the "
            "boundary decay test; enlarge the window or use grid mode 'auto'"
        )
    return grid


def _parse_state(spec: str, cfg: RunConfig, params, rng):
    """State spec -> (state, echo dict).  Mixed states are allowed."""
    from .displacement import trusted_dim
    from .fock import FockVector, operator_from_json, random_density

    echo = {"spec": spec, "seed": cfg.seed}
    if spec.startswith("fock:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad Fock index in {spec!r}")
        if not 0 <= n < cfg.D:
            raise ConfigError(f"fock:{n} is outside 0 <= n < D = {cfg.D}")
        return FockVector.number_state(n, cfg.D), echo
    if spec.startswith("coherent:"):
        import numpy as np

        from .coherentframe import coherent_overlaps

        body = spec.split(":", 1)[1]
        try:
            q, p = (float(v) for v in body.split(","))
        except ValueError:
            raise ConfigError(f"coherent state spec needs 'coherent:q,p', "
                              f"got {spec!r}")
        v = coherent_overlaps(params, cfg.D, q, p)
        nrm = float(np.linalg.norm(v))
        if nrm < 0.99:
            raise ConfigError(
                f"coherent state at ({q}, {p}) keeps only {nrm ** 2:.3f} of "
                f"its weight in D = {cfg.D} levels; raise D"
            )
        return FockVector(v / nrm), echo
    if spec.startswith(("matrix:", "matrix_file:")):
        path = spec.split(":", 1)[1]
        try:
            with open(path, "r", encoding="utf-8") as fh:
                op = operator_from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read state matrix: {exc}")
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"malformed state matrix JSON: {exc}")
        if op.dim != cfg.D:
            raise ConfigError(f"state dimension {op.dim} does not match "
                              f"D = {cfg.D}")
        if op.kind != "density":
            from .fock import Operator, validate_density

            rep = validate_density(op.matrix)
            if not rep["ok"]:
                raise ConfigError(f"state matrix is not a density matrix: "
                                  f"{rep}")
            op = Operator(op.matrix, kind="density", params=op.params)
        return op, echo
    if spec == "random":
        return random_density(cfg.D, rng, support=trusted_dim(cfg.D)), echo
    raise ConfigError(
        f"unknown state spec {spec!r}; use fock:n, coherent:q,p, "
        "matrix:PATH, or random"
    )


def _parse_pure_state(spec: str, cfg: RunConfig, params, rng):
    """Like _parse_state but restricted to vector states."""
    from .displacement import trusted_dim
    from .fock import FockVector, random_pure

    if spec == "random":
        return random_pure(cfg.D, rng, support=trusted_dim(cfg.D)), {
            "spec": spec, "seed": cfg.seed,
        }
    state, echo = _parse_state(spec, cfg, params, rng)
    if not isinstance(state, FockVector):
        raise ConfigError(f"{spec!r} is not a pure state; this command needs "
                          "fock:n, coherent:q,p, or random")
    return state, echo


def _state_density(state, frame, grid):
    """Husimi density with an escape guard on the grid window."""
    from .classrep import husimi

    field = husimi(state, frame, grid)
    defect = abs(field.total_mass() - 1.0)
    if defect > 1e-6:
        raise GridError(
            f"state mass on the grid is 1 - {defect:.2e}; the window does "
            "not capture the state"
        )
    return field


# -- output management ---------------------------------------------------------

def _np_coerce(obj):
    import numpy as np

    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False,
                      default=_np_coerce) + "\n"


class _Run:
    """Collects data products for one command invocation."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.data_paths: list[str] = []
        os.makedirs(cfg.out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.cfg.out_dir, name)

    def write_text(self, name: str, text: str) -> str:
        p = self.path(name)
        with open(p, "w", encoding="utf-8") as fh:
            fh.write(text)
        self.data_paths.append(p)
        return p

    def write_json(self, name: str, obj) -> str:
        return self.write_text(name, _json_text(obj))

    def write_table(self, name: str, header: str, columns) -> str:
        import numpy as np

        cols = [np.asarray(c, dtype=float) for c in columns]
        rows = np.column_stack(cols)
        lines = [header]
        for row in rows:
            lines.append(",".join("%.17g" % v for v in row))
        return self.write_text(name, "\n".join(lines) + "\n")

    def finish(self, extra: dict | None = None):
        """Write the manifest and print the data paths."""
        import importlib.metadata as md
        import platform

        def _ver(name):
            try:
                return md.version(name)
            except md.PackageNotFoundError:
                return None

        manifest = {
            "command": self.command,
            "config": self.cfg.as_dict(),
            "config_hash": hashlib.sha256(
                json.dumps(self.cfg.as_dict(), sort_keys=True).encode()
            ).hexdigest(),
            "outputs": sorted(os.path.basename(p) for p in self.data_paths),
            "versions": {
                "python": platform.python_version(),
                "numpy": _ver("numpy"),
                "scipy": _ver("scipy"),
                "matplotlib": _ver("matplotlib"),
                "phasekit": _ver("phasekit"),
            },
        }
        if extra:
            manifest.update(extra)
        self.write_json("manifest.json", manifest)
        for p in self.data_paths:
            print(p)

    def note(self, text: str):
        print(text, file=sys.stderr)


# -- commands ------------------------------------------------------------------

def _cmd_density(run: _Run, args) -> int:
    import numpy as np

    cfg = run.cfg
    params = _build_params(cfg)
    frame = _build_frame(cfg, params)
    rng = np.random.default_rng(cfg.seed)
    state, echo = _parse_state(args.state, cfg, params, rng)
    grid = _resolve_grid(cfg, frame)
    field = _state_density(state, frame, grid)
    run.write_text("density.csv", field.to_csv())
    meta = {
        "state": echo,
        "params": params.as_dict(),
        "grid": grid.as_dict(),
        "mass": field.total_mass(),
        "max_value": float(np.real(field.values).max()),
    }
    run.write_json("density.json", meta)
    if cfg.figures:
        from . import plotting

        fig = run.path("density.png")
        plotting.save_field_heatmap(field, fig, title=f"density {args.state}")
        run.note(f"figure: {fig}")
    run.finish({"state": echo})
    return 0


def _cmd_marginals(run: _Run, args) -> int:
    import numpy as np

    cfg = run.cfg
    params = _build_params(cfg)
    frame = _build_frame(cfg, params)
    rng = np.random.default_rng(cfg.seed)
    state, echo = _parse_state(args.state, cfg, params, rng)
    grid = _resolve_grid(cfg, frame)
    field = _state_density(state, frame, grid)
    from .classrep import marginals

    marg = marginals(field)
    run.write_table("marginal_q.csv", "q,density", [marg["qs"], marg["f_q"]])
    run.write_table("marginal_p.csv", "p,density", [marg["ps"], marg["f_p"]])

    def mom(xs, f, dx):
        mass = float(f.sum() * dx)
        mean = float((xs * f).sum() * dx / mass)
        var = float(((xs - mean) ** 2 * f).sum() * dx / mass)
        return mass, mean, var

    mass_q, mean_q, var_q = mom(marg["qs"], marg["f_q"], grid.dq)
    mass_p, mean_p, var_p = mom(marg["ps"], marg["f_p"], grid.dp)
    run.write_json("marginals.json", {
        "state": echo,
        "grid": grid.as_dict(),
        "q": {"mass": mass_q, "mean": mean_q, "variance": var_q},
        "p": {"mass": mass_p, "mean": mean_p, "variance": var_p},
    })
    if cfg.figures:
        from . import plotting

        fig = run.path("marginals.png")
        plotting.save_marginals_plot(marg["qs"], marg["f_q"], marg["ps"],
                                     marg["f_p"], fig,
                                     title=f"marginals {args.state}")
        run.note(f"figure: {fig}")
    run.finish({"state": echo})
    return 0


def _cmd_expect(run: _Run, args) -> int:
    import numpy as np

    from .dequant import SYMBOLS, check_dequantizer

    cfg = run.cfg
    params = _build_params(cfg)
    frame = _build_frame(cfg, params)
    rng = np.random.default_rng(cfg.seed)
    state, echo = _parse_state(args.state, cfg, params, rng)
    grid = _resolve_grid(cfg, frame)
    symbols = [s.strip() for s in args.symbols.split(",") if s.strip()]
    for s in symbols:
        if s not in SYMBOLS:
            raise ConfigError(f"unknown symbol {s!r}; choose from {SYMBOLS}")
    rows = []
    for s in symbols:
        try:
            rows.append(check_dequantizer(state, s, frame, grid))
        except ValueError as exc:
            raise ConfigError(str(exc))
    run.write_json("expect.json", {
        "state": echo,
        "grid": grid.as_dict(),
        "rows": rows,
    })
    for r in rows:
        run.note(f"{r['symbol']:>3}: quantum {r['quantum']:+.12f}  classical "
                 f"{r['classical']:+.12f}  discrepancy {r['discrepancy']:.2e}")
    run.finish({"state": echo})
    return 0


def _cmd_effects(run: _Run, args) -> int:
    from .classrep import completeness_rank, effect_partition

    cfg = run.cfg
    params = _build_params(cfg)
    frame = _build_frame(cfg, params)
    if cfg.grid_mode == "off":
        raise GridError("grid search is disabled (grid mode 'off'); no "
                        "adequate grid is available")
    try:
        effects = effect_partition(frame, n_cells=args.cells,
                                   region=args.region, spacing=cfg.spacing)
    except ValueError as exc:
        raise ConfigError(str(exc))
    rank = completeness_rank(effects, cfg.D)
    report = {
        "params": params.as_dict(),
        "region": effects.region,
        "spacing": effects.spacing,
        "n_effects": len(effects.effects),
        "cells": [list(c) for c in effects.cells],
        "sum_defect": effects.sum_defect(),
        "rank": rank,
    }
    run.write_json("effects.json", report)
    if args.dump_operators:
        from .fock import Operator, operator_to_json

        ops = [json.loads(operator_to_json(Operator(E, kind="hermitian")))
               for E in effects.effects]
        run.write_json("effects_ops.json", {"effects": ops})
    run.note(f"rank {rank['rank']} of {rank['target']} "
             f"({'complete' if rank['complete'] else 'rank-deficient'})")
    run.finish()
    if not rank["complete"]:
        run.note("error: effect family is rank-deficient; see effects.json")
        return 4
    return 0


def _cmd_reconstruct(run: _Run, args) -> int:
    import numpy as np

    from .classrep import reconstruct_from_density
    from .fock import operator_to_json
    from .grids import PhaseField

    cfg = run.cfg
    params = _build_params(cfg)
    frame = _build_frame(cfg, params)
    try:
        with open(args.input, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read input CSV: {exc}")
    try:
        field = PhaseField.from_csv(text, kind="density")
    except ValueError as exc:
        raise ConfigError(f"malformed density CSV: {exc}")
    W_hat, diag = reconstruct_from_density(field, frame)

    reference = None
    td = None
    if args.reference == "auto":
        sidecar = os.path.join(os.path.dirname(os.path.abspath(args.input)),
                               "density.json")
        if os.path.exists(sidecar):
            try:
                with open(sidecar, "r", encoding="utf-8") as fh:
                    meta = json.load(fh)
                spec = meta["state"]["spec"]
                seed = meta["state"].get("seed", cfg.seed)
                rng = np.random.default_rng(seed)
                ref_state, _ = _parse_state(spec, cfg, params, rng)
                reference = spec
            except (KeyError, ValueError, json.JSONDecodeError):
                reference = None
    elif args.reference not in ("none", ""):
        rng = np.random.default_rng(cfg.seed)
        ref_state, _ = _parse_state(args.reference, cfg, params, rng)
        reference = args.reference
    if reference is not None:
        from .fock import FockVector

        ref = (ref_state.project().matrix
               if isinstance(ref_state, FockVector) else ref_state.matrix)
        ev = np.linalg.eigvalsh(ref - W_hat.matrix)
        td = 0.5 * float(np.abs(ev).sum())

    run.write_text("reconstructed.json", operator_to_json(W_hat) + "\n")
    run.write_json("reconstruct.json", {
        "diagnostics": diag,
        "reference": reference,
        "trace_distance": td,
        "grid": field.grid.as_dict(),
    })
    if td is not None:
        run.note(f"trace distance to reference: {td:.3e}")
    run.finish()
    if diag["rank_deficient"]:
        run.note(f"error: reconstruction design is rank-deficient "
                 f"(rank {diag['design_rank']} of {diag['target_rank']})")
        return 4
    return 0


def _cmd_evolve(run: _Run, args) -> int:
    import numpy as np

    from .dynamics import evolve_state, liouville_match
    from .fock import build_canonical, quantum_expectation

    cfg = run.cfg
    params = _build_params(cfg)
    frame = _build_frame(cfg, params)
    rng = np.random.default_rng(cfg.seed)
    state, echo = _parse_state(args.state, cfg, params, rng)
    grid = _resolve_grid(cfg, frame)
    try:
        times = [float(t) for t in args.times.split(",") if t.strip() != ""]
    except ValueError:
        raise ConfigError(f"bad time list {args.times!r}")
    if not times:
        raise ConfigError("need at least one time")
    H = build_canonical(params, cfg.D)["H"]
    from .fock import FockVector

    W0 = state.project() if isinstance(state, FockVector) else state
    entries = []
    for i, t in enumerate(times):
        Wt = evolve_state(W0, H, t)
        field = _state_density(Wt, frame, grid)
        name = f"evolve_t{i}.csv"
        run.write_text(name, field.to_csv())
        entry = {
            "t": t,
            "file": name,
            "energy": float(np.real(quantum_expectation(Wt, H))),
        }
        if params.matched:
            entry["liouville_error"] = liouville_match(W0, frame, grid, t)
        else:
            entry["liouville_error"] = None
            entry["liouville_skipped"] = ("the transport comparison requires "
                                          "the width-matched frame")
        entries.append(entry)
        if cfg.figures:
            from . import plotting

            fig = run.path(f"evolve_t{i}.png")
            plotting.save_field_heatmap(field, fig,
                                        title=f"t = {t:g} {args.state}")
            run.note(f"figure: {fig}")
    run.write_json("evolve.json", {
        "state": echo,
        "grid": grid.as_dict(),
        "energy_t0": float(np.real(quantum_expectation(W0, H))),
        "entries": entries,
    })
    run.finish({"state": echo})
    return 0


def _cmd_bargmann(run: _Run, args) -> int:
    import numpy as np

    from .coherentframe import (BargmannFunction, bargmann_field_samples,
                                bargmann_ops_check, bargmann_transform,
                                cauchy_riemann_residual)

    cfg = run.cfg
    params = _build_params(cfg)
    if not params.matched:
        raise ConfigError("the analytic transform requires the matched width; "
                          "set sigma = 'matched'")
    rng = np.random.default_rng(cfg.seed)
    psi, echo = _parse_pure_state(args.state, cfg, params, rng)
    func = bargmann_transform(psi.coeffs, params)
    box = args.box
    h = args.sample_spacing
    if box <= 0 or h <= 0 or box / h < 4:
        raise ConfigError("need box > 0 and at least 5 samples per axis")
    xs = np.arange(-box, box + h / 2, h)
    F = bargmann_field_samples(psi, params, cfg.D, xs, xs)
    cr = cauchy_riemann_residual(psi, params, cfg.D, xs, xs)

    direct = np.empty_like(F)
    Z = xs[:, None] + 1j * xs[None, :]
    for i in range(xs.size):
        direct[i] = np.array([func(z) for z in Z[i]])
    route_gap = float(np.abs(F - direct).max())

    Xi, Eta = np.meshgrid(xs, xs, indexing="ij")
    run.write_table(
        "bargmann_samples.csv", "xi,eta,re,im",
        [Xi.T.ravel(), Eta.T.ravel(), F.T.ravel().real, F.T.ravel().imag],
    )
    run.write_json("bargmann.json", {
        "state": echo,
        "coefficients": [[float(a.real), float(a.imag)] for a in func.coeffs],
        "norm_sq": func.norm_sq(),
        "norm_defect": abs(func.norm_sq() - 1.0),
        "cr_residual": cr,
        "route_gap": route_gap,
        "ops_residuals": bargmann_ops_check(psi, params, cfg.D),
        "box": box,
        "spacing": h,
    })
    if cfg.figures:
        from . import plotting
        from .grids import PhaseField, PhaseGrid

        g = PhaseGrid(q_min=float(xs[0]), p_min=float(xs[0]), dq=h, dp=h,
                      n_q=xs.size, n_p=xs.size)
        fig = run.path("bargmann.png")
        plotting.save_field_heatmap(
            PhaseField(g, np.abs(F), kind="real"), fig,
            title=f"|f(z)| {args.state}", xlabel="Re z", ylabel="Im z",
        )
        run.note(f"figure: {fig}")
    run.finish({"state": echo})
    return 0


# -- check suites --------------------------------------------------------------

class _Checks:
    def __init__(self):
        self.entries = []

    def add(self, name: str, value: float, threshold: float,
            detail: str | None = None):
        """Pass when value <= threshold."""
        entry = {
            "name": name,
            "status": "pass" if value <= threshold else "fail",
            "value": float(value),
            "threshold": float(threshold),
        }
        if detail:
            entry["detail"] = detail
        self.entries.append(entry)

    def add_bool(self, name: str, ok: bool, detail: str | None = None):
        entry = {"name": name, "status": "pass" if ok else "fail",
                 "value": None, "threshold": None}
        if detail:
            entry["detail"] = detail
        self.entries.append(entry)

    def skip(self, name: str, reason: str):
        self.entries.append({"name": name, "status": "skip", "value": None,
                             "threshold": None, "reason": reason})


def _probe_frame(cfg: RunConfig, params, cap: int):
    """Config generator at a capped dimension; matrix frames keep cfg.D."""
    if cfg.generator == "matrix_file":
        return _build_frame(cfg, params), cfg.D
    D = min(cfg.D, cap)
    if cfg.generator == "fock_mixture":
        D = max(D, len(cfg.weights))
    return _build_frame(cfg, params, D=D), D


def _suite_frame(cfg: RunConfig, params, ck: _Checks):
    from .coherentframe import (FrameSpec, kernel_reproducing_check,
                                pde_residual, resolution_check)
    from .fock import FockVector

    frame, D = _probe_frame(cfg, params, 16)
    grid = _resolve_grid(cfg, frame, D=D)
    res = resolution_check(frame, D, grid)
    ck.add_bool("frame: grid adequacy", res["adequate"])
    ck.add("frame: resolution defect on trusted block",
           res["defect_trusted"], 1e-8)

    small = _resolve_grid(cfg, FrameSpec.coherent(params, 12), D=12)
    kr = kernel_reproducing_check(params, 12, small,
                                  [(0.0, 0.0), (1.0, 0.0), (0.0, -1.0),
                                   (0.7, 0.7)])
    ck.add("frame: kernel self-reproduction", kr["reproducing_residual"], 1e-8)
    ck.add("frame: kernel hermiticity", kr["hermiticity_defect"], 1e-12)

    # Both transport routes are pointwise, so a compact window with a
    # fine step keeps the stencil error far below the gate.
    from .grids import PhaseGrid

    scale = max(params.sigma, params.sigma_g, 1.0 / (2.0 * params.sigma),
                1.0 / (2.0 * params.sigma_g))
    fine = PhaseGrid.centered(6.0 * scale, 6.0 * scale, 0.02, 0.02)
    for n in (0, 1):
        psi = FockVector.number_state(n, 12)
        for op in ("Q", "P"):
            r = pde_residual(psi, params, 12, op, fine)
            ck.add(f"frame: {op} transport identity on level {n}",
                   r["residual"], 1e-6)
    r = pde_residual(FockVector.number_state(1, 12), params, 12, "H_general",
                     fine)
    ck.add("frame: energy transport identity on level 1", r["residual"], 1e-5)


def _suite_uncertainty(cfg: RunConfig, params, ck: _Checks):
    import numpy as np

    from .classrep import confidence_functions, uncertainty_report
    from .coherentframe import coherent_overlaps
    from .displacement import trusted_dim
    from .fock import FockVector, random_density

    frame, D = _probe_frame(cfg, params, 12)
    grid = _resolve_grid(cfg, frame, D=D)
    eta_q, eta_p = confidence_functions(frame)
    prod_eta = eta_q.variance() * eta_p.variance()
    if frame.pure_coherent:
        ck.add("uncertainty: window product at the Gaussian floor",
               abs(prod_eta - 0.25), 1e-9)
    else:
        ck.add("uncertainty: window product above the floor",
               max(0.0, 0.25 - prod_eta), 1e-12)

    rng = np.random.default_rng(cfg.seed)
    worst_add = 0.0
    worst_floor = 0.0
    for _ in range(3):
        W = random_density(D, rng, support=trusted_dim(D))
        rep = uncertainty_report(W, frame, grid)
        worst_add = max(worst_add, rep["additivity_defect_q"],
                        rep["additivity_defect_p"])
        worst_floor = max(worst_floor, 1.0 - rep["product_F"])
    ck.add("uncertainty: variance additivity on both axes", worst_add, 1e-6)
    ck.add("uncertainty: smeared product above 1", worst_floor, 1e-9)

    if frame.pure_coherent:
        # The projected Gaussian needs headroom beyond the probe block
        # before its moments settle, so this check runs at 24 levels.
        from .coherentframe import FrameSpec

        fr24 = FrameSpec.coherent(params, 24)
        v = coherent_overlaps(params, 24, 0.0, 0.0)
        gauss = FockVector(v / np.linalg.norm(v))
        rep = uncertainty_report(gauss, fr24,
                                 _resolve_grid(cfg, fr24, D=24))
        ck.add("uncertainty: frame Gaussian saturates the smeared product",
               abs(rep["product_F"] - 1.0), 1e-8)
    else:
        ck.skip("uncertainty: frame Gaussian saturates the smeared product",
                "the frame generator is not Gaussian")


def _suite_completeness(cfg: RunConfig, params, ck: _Checks):
    import numpy as np

    from .classrep import (completeness_rank, effect_partition,
                           reconstruct_from_density)
    from .coherentframe import FrameSpec
    from .displacement import char_function, z_abs_sq
    from .fock import FockVector, Operator, random_density
    from .grids import PhaseGrid

    for d in (3, 4, 6):
        fr = FrameSpec.coherent(params, d)
        eff = effect_partition(fr, region="support")
        rank = completeness_rank(eff, d)
        ck.add_bool(
            f"completeness: cell family spans dimension {d} state space",
            rank["complete"],
            detail=f"rank {rank['rank']} of {rank['target']}, margin "
                   f"{rank['margin']:.2e}",
        )

    d = 4
    diag = [Operator(np.diag(np.eye(d)[n]).astype(complex), kind="hermitian")
            for n in range(d)]
    rank = completeness_rank(diag, d)
    ck.add_bool(
        "completeness: level-diagonal family stays rank-deficient",
        (not rank["complete"]) and rank["rank"] <= d,
        detail=f"rank {rank['rank']} of {rank['target']}",
    )

    rng = np.random.default_rng(cfg.seed)
    fr6 = FrameSpec.coherent(params, 6)
    grid6 = _resolve_grid(cfg, fr6, D=6)
    W = random_density(6, rng)
    from .classrep import husimi

    field = husimi(W, fr6, grid6)
    W_hat, diag_rep = reconstruct_from_density(field, fr6)
    ev = np.linalg.eigvalsh(W.matrix - W_hat.matrix)
    ck.add("completeness: noiseless reconstruction round trip",
           0.5 * float(np.abs(ev).sum()), 1e-6)
    ck.add_bool("completeness: point design has full rank",
                not diag_rep["rank_deficient"])

    Dc = 24
    vac = FockVector.number_state(0, Dc).project()
    pts = PhaseGrid(q_min=-1.0, p_min=-1.0, dq=1.0, dp=1.0, n_q=3, n_p=3)
    ch = char_function(vac, params, pts)
    Q, P = pts.meshes()
    expected = np.exp(-z_abs_sq(params, Q, P) / 2.0)
    ck.add("completeness: ground-state characteristic profile",
           float(np.abs(np.abs(ch.values) - expected).max()), 1e-8)


def _suite_bargmann(cfg: RunConfig, params, ck: _Checks):
    names = [
        "bargmann: level-3 coefficients",
        "bargmann: norm identity",
        "bargmann: field route agrees with the series",
        "bargmann: operator dictionary",
        "bargmann: analyticity residual",
    ]
    if not params.matched:
        for n in names:
            ck.skip(n, "the analytic transform requires the matched width")
        return
    import numpy as np

    from .coherentframe import (bargmann_eval_via_field, bargmann_ops_check,
                                bargmann_transform, cauchy_riemann_residual)
    from .displacement import trusted_dim
    from .fock import FockVector, random_pure

    D = 10
    f3 = bargmann_transform(FockVector.number_state(3, D).coeffs, params)
    expect = np.zeros(D)
    expect[3] = 1.0 / math.sqrt(math.factorial(3))
    ck.add(names[0], float(np.abs(f3.coeffs - expect).max()), 1e-15)

    rng = np.random.default_rng(cfg.seed)
    psi = random_pure(D, rng, support=trusted_dim(D))
    func = bargmann_transform(psi.coeffs, params)
    ck.add(names[1], abs(func.norm_sq() - 1.0), 1e-12)

    gap = max(
        abs(func(z) - bargmann_eval_via_field(psi, params, D, z))
        for z in (0.3 + 0.2j, -0.8 + 0.5j, 1.0 - 1.0j)
    )
    ck.add(names[2], gap, 1e-10)

    ops = bargmann_ops_check(psi, params, D)
    ck.add(names[3], max(ops.values()), 1e-12)

    xs = np.arange(-1.0, 1.0 + 1e-9, 0.02)
    ck.add(names[4],
           cauchy_riemann_residual(FockVector.number_state(1, D), params, D,
                                   xs, xs), 1e-5)


def _suite_dynamics(cfg: RunConfig, params, ck: _Checks):
    import numpy as np

    from .coherentframe import FrameSpec, coherent_overlaps
    from .displacement import trusted_dim
    from .dynamics import (classical_flow, coherent_evolution_check,
                           evolve_state, generator_residual, liouville_match)
    from .fock import (FockVector, build_canonical, quantum_expectation,
                       random_density, random_pure)
    from .grids import PhaseGrid

    pt = classical_flow(1.0, 0.0, math.pi / (2.0 * params.omega), params)
    ck.add("dynamics: quarter-period flow anchor",
           max(abs(pt.q - 0.0), abs(pt.p + params.m * params.omega)), 1e-12)
    e0 = classical_flow(0.7, -0.4, 0.0, params).energy(params)
    drift = max(abs(classical_flow(0.7, -0.4, t, params).energy(params) - e0)
                for t in (0.7, 2.3))
    ck.add("dynamics: flow energy conservation", drift, 1e-12)

    D = 12
    H = build_canonical(params, D)["H"]
    rng = np.random.default_rng(cfg.seed)
    W = random_density(D, rng, support=trusted_dim(D))
    period = 2.0 * math.pi / params.omega
    ck.add("dynamics: evolution is periodic",
           float(np.abs(evolve_state(W, H, period).matrix - W.matrix).max()),
           1e-10)
    W1 = evolve_state(evolve_state(W, H, 0.4), H, 0.9)
    W2 = evolve_state(W, H, 1.3)
    ck.add("dynamics: evolution group law",
           float(np.abs(W1.matrix - W2.matrix).max()), 1e-10)
    ck.add("dynamics: energy conservation under evolution",
           abs(float(np.real(quantum_expectation(evolve_state(W, H, 0.8), H)))
               - float(np.real(quantum_expectation(W, H)))), 1e-10)
    phi2 = FockVector.number_state(2, D)
    ck.add("dynamics: eigenstate stationarity",
           abs(1.0 - abs(np.vdot(evolve_state(phi2, H, 1.1).coeffs,
                                 phi2.coeffs))), 1e-12)

    if params.matched:
        worst = max(coherent_evolution_check(2.0, 0.0, t, params, 48)["defect"]
                    for t in (0.3, 1.0))
        ck.add("dynamics: coherent orbit law", worst, 1e-8)

        fr = FrameSpec.coherent(params, 32)
        v = coherent_overlaps(params, 32, 2.0, 0.0)
        W0 = FockVector(v / np.linalg.norm(v))
        grid = PhaseGrid.centered(8.0, 8.0, cfg.spacing, cfg.spacing)
        err = liouville_match(W0, fr, grid, 1.0)
        ck.add("dynamics: transport matches the classical flow", err, 5e-4)
    else:
        ck.skip("dynamics: coherent orbit law",
                "the closed-form orbit requires the width-matched frame")
        ck.skip("dynamics: transport matches the classical flow",
                "the interpolation comparison requires the width-matched "
                "frame")

    frame10, D10 = _probe_frame(cfg, params, 10)
    grid10 = _resolve_grid(cfg, frame10, D=D10)
    psi = random_pure(D10, rng, support=trusted_dim(D10))
    gr = generator_residual(psi, frame10, grid10)
    ck.add("dynamics: transport generator residual", gr["max_residual"], 1e-4)
    from .dynamics import correction_coefficient

    ck.add("dynamics: cross-derivative coefficient",
           abs(gr["coefficient"] - correction_coefficient(params)), 1e-15)


_SUITES = {
    "frame": _suite_frame,
    "uncertainty": _suite_uncertainty,
    "completeness": _suite_completeness,
    "bargmann": _suite_bargmann,
    "dynamics": _suite_dynamics,
}


def _cmd_check(run: _Run, args) -> int:
    cfg = run.cfg
    params = _build_params(cfg)
    suites = list(_SUITES) if args.suite == "all" else [args.suite]
    ck = _Checks()
    for name in suites:
        _SUITES[name](cfg, params, ck)
    n_pass = sum(e["status"] == "pass" for e in ck.entries)
    n_fail = sum(e["status"] == "fail" for e in ck.entries)
    n_skip = sum(e["status"] == "skip" for e in ck.entries)
    report = {
        "suite": args.suite,
        "params": params.as_dict(),
        "checks": ck.entries,
        "n_pass": n_pass,
        "n_fail": n_fail,
        "n_skip": n_skip,
    }
    run.write_json("check_report.json", report)
    for e in ck.entries:
        tag = e["status"].upper()
        if e["status"] == "skip":
            run.note(f"[{tag:4}] {e['name']} ({e['reason']})")
        elif e["value"] is None:
            run.note(f"[{tag:4}] {e['name']}")
        else:
            run.note(f"[{tag:4}] {e['name']}  value {e['value']:.3e}  "
                     f"threshold {e['threshold']:.1e}")
    run.note(f"{n_pass} passed, {n_fail} failed, {n_skip} skipped")
    run.finish()
    return 1 if n_fail else 0


# -- entry point ----------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    # The shared flags are accepted both before and after the subcommand.
    # The parent's SUPPRESS default keeps a subparser from clobbering a
    # value that was already parsed at the top level.
    common = argparse.ArgumentParser(add_help=False,
                                     argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--m", type=float, help="mass")
    common.add_argument("--omega", type=float, help="angular frequency")
    common.add_argument("--sigma", help="frame width, a number or 'matched'")
    common.add_argument("--D", type=int, help="Fock levels")
    common.add_argument("--spacing", type=float, help="grid spacing")
    common.add_argument("--grid",
                        help="'auto', 'off', or halfwidths 'HWQ[,HWP]'")
    common.add_argument("--generator",
                        help="'coherent', 'mixture:w0,w1,...', or "
                             "'matrix:PATH'")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--figures", dest="figures", action="store_true",
                        help="render figures (default)")
    common.add_argument("--no-figures", dest="figures", action="store_false",
                        help="skip figure rendering")

    p = argparse.ArgumentParser(
        prog="phasekit",
        description="Phase-space representation of the truncated oscillator: "
                    "densities, effects, reconstruction, dynamics.",
        parents=[common],
    )
    sub = p.add_subparsers(dest="command", required=True)

    for name, helptext in (
        ("density", "phase-space density of a state"),
        ("marginals", "axis marginals of the density"),
        ("evolve", "evolved densities at given times"),
    ):
        sp = sub.add_parser(name, help=helptext, parents=[common])
        sp.add_argument("--state", default="fock:0",
                        help="fock:n | coherent:q,p | matrix:PATH | random")
        if name == "evolve":
            sp.add_argument("--times", default="1.0",
                            help="comma-separated times")

    sp = sub.add_parser("expect", help="quantum vs classical expectations",
                        parents=[common])
    sp.add_argument("--state", default="fock:0")
    sp.add_argument("--symbols", default="Q,P,Q2,P2,H")

    sp = sub.add_parser("effects", help="cell effects and their rank",
                        parents=[common])
    sp.add_argument("--cells", type=int, default=None,
                    help="cells per axis (default D + 2)")
    sp.add_argument("--region", choices=("support", "adequate"),
                    default="support")
    sp.add_argument("--dump-operators", action="store_true")

    sp = sub.add_parser("reconstruct", help="state from a density CSV",
                        parents=[common])
    sp.add_argument("--input", required=True, help="density CSV path")
    sp.add_argument("--reference", default="auto",
                    help="'auto', 'none', or a state spec for the error "
                         "report")

    sp = sub.add_parser("bargmann", help="analytic transform of a pure state",
                        parents=[common])
    sp.add_argument("--state", default="fock:0")
    sp.add_argument("--box", type=float, default=1.0)
    sp.add_argument("--sample-spacing", type=float, default=0.02)

    sp = sub.add_parser("check", help="self-check suites", parents=[common])
    sp.add_argument("--suite", default="all",
                    choices=tuple(_SUITES) + ("all",))
    return p


_COMMANDS = {
    "density": _cmd_density,
    "marginals": _cmd_marginals,
    "expect": _cmd_expect,
    "effects": _cmd_effects,
    "reconstruct": _cmd_reconstruct,
    "evolve": _cmd_evolve,
    "bargmann": _cmd_bargmann,
    "check": _cmd_check,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        run = _Run(cfg, args.command)
        return _COMMANDS[args.command](run, args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
