"""Command-line driver for figure reproductions and validation runs.

Every subcommand reads an optional YAML/JSON config, applies command-line
overrides, runs, and writes CSV tables with JSON sidecars that hold the full
parameter set and seed.  Exit codes: 0 success, 1 usage error, 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import analysis, coherent
from .core import PhysicalParams, cascade_frame, derive_scales, mhz, preset, validate

MODES = ("alpha-circle", "state", "purity-vs-Y", "p-of-Y", "np-vs-Y", "squeezed-scatter",
         "oracle-validate", "symmetry-check")

REQUIRED = {
    "state": ("t",),
    "purity-vs-Y": ("t",),
    "p-of-Y": ("t",),
    "np-vs-Y": ("t",),
}

RUN_KEYS = ("mode", "preset", "t", "dt", "trajectories", "seed", "Y", "out", "options")
PARAM_KEYS = tuple(f.name for f in dataclasses.fields(PhysicalParams))

PARAM_ALIASES = {"J": "big_j", "Gamma": "gamma_sp", "kappa_loss_1": "kappa_loss1",
                 "kappa_loss_2": "kappa_loss2"}

UNITS = {"MHz": mhz(1.0), "GHz": mhz(1e3), "kHz": mhz(1e-3), "pi": math.pi}


class UsageError(ValueError):
    """Invalid experiment description."""


@dataclass
class ExperimentSpec:
    mode: str
    params: PhysicalParams
    t: float = None
    dt: float = None
    trajectories: int = 1
    seed: int = 0
    Y: float = None
    out: str = "out"
    options: dict = field(default_factory=dict)
    preset: str = "reichel"

    def sidecar(self):
        d = dataclasses.asdict(self)
        d["params"] = self.params.as_dict()
        return d


def _param_value(text, params):
    """Number, [re, im] pair, or a product such as '0.025j*kappa2' or '106*MHz'."""
    if isinstance(text, (int, float, complex)):
        return text
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return complex(float(text[0]), float(text[1]))
    if not isinstance(text, str):
        raise UsageError(f"cannot interpret parameter value {text!r}")
    value = 1.0
    for tok in text.replace(" ", "").split("*"):
        if tok in UNITS:
            value *= UNITS[tok]
        elif tok in ("kappa1", "kappa2", "kappa"):
            value *= getattr(params, tok)
        else:
            try:
                value *= complex(tok) if "j" in tok else float(tok)
            except ValueError:
                raise UsageError(f"cannot interpret parameter value {text!r}") from None
    return value


def _apply_params(base, entries):
    names = {f.name for f in dataclasses.fields(PhysicalParams)}
    out = base
    # plain numbers first so that unit products see updated rates
    ordered = sorted(entries.items(), key=lambda kv: isinstance(kv[1], str))
    for key, raw in ordered:
        name = PARAM_ALIASES.get(key, key)
        if name not in names:
            raise UsageError(f"unknown parameter {key!r}")
        val = _param_value(raw, out)
        if name not in ("beta", "epsilon"):
            if isinstance(val, complex):
                if val.imag:
                    raise UsageError(f"parameter {key!r} must be real")
                val = val.real
            val = float(val)
        else:
            val = complex(val)
        out = out.replace(**{name: val})
    return out


def _read_config(path):
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise UsageError(f"cannot parse {path}{where}: {getattr(exc, 'problem', exc)}") from None
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    return data


def load_spec(path=None, overrides=None, mode=None):
    """Merge a config file with command-line overrides (overrides win).

    Parameters
    ----------
    path : str or Path, optional
        Flat YAML or JSON mapping.  Keys are run controls (``mode, preset,
        t, dt, trajectories, seed, Y, out``), ``options`` (a mapping of
        mode-specific settings) or :class:`PhysicalParams` field names
        (``J`` is accepted for ``big_j``).
    overrides : dict, optional
        Same keys; ``options`` is merged key by key.
    mode : str, optional
        Subcommand; overrides ``mode`` in the file.

    Raises
    ------
    UsageError
        Parse errors (with line), unknown keys, missing required fields.
    """
    data = _read_config(path) if path else {}
    overrides = overrides or {}
    for source, mapping in ((path, data), ("overrides", overrides)):
        for key in mapping:
            if key not in RUN_KEYS and PARAM_ALIASES.get(key, key) not in PARAM_KEYS:
                raise UsageError(f"unknown key {key!r} in {source}")
    merged = {}
    params = {}
    for mapping in (data, overrides):
        for key, val in mapping.items():
            if key in RUN_KEYS:
                if key == "options":
                    merged[key] = dict(merged.get(key) or {}, **(val or {}))
                else:
                    merged[key] = val
            else:
                params[PARAM_ALIASES.get(key, key)] = val
    if mode is not None:
        merged["mode"] = mode
    m = merged.get("mode")
    if m not in MODES:
        raise UsageError(f"mode must be one of {', '.join(MODES)}; got {m!r}")
    name = merged.get("preset", "reichel")
    if m in ("squeezed-scatter", "oracle-validate", "symmetry-check") and "preset" not in merged:
        name = "reichel-squeezed"
    try:
        base = preset(name)
    except KeyError as exc:
        raise UsageError(str(exc)) from None
    params = _apply_params(base, params)
    rep = validate(params)
    if not rep.ok:
        raise UsageError("; ".join(rep.violations))
    for key in REQUIRED.get(m, ()):
        if merged.get(key) is None:
            raise UsageError(f"mode {m} requires {key!r}")
    opts = merged.get("options") or {}
    if not isinstance(opts, dict):
        raise UsageError("options must be a mapping")
    try:
        spec = ExperimentSpec(
            mode=m, params=params, preset=name,
            t=None if merged.get("t") is None else float(merged["t"]),
            dt=None if merged.get("dt") is None else float(merged["dt"]),
            trajectories=int(merged.get("trajectories", 1)),
            seed=int(merged.get("seed", 0)),
            Y=None if merged.get("Y") is None else float(merged["Y"]),
            out=str(merged.get("out", "out")),
            options=dict(opts),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if spec.trajectories < 1:
        raise UsageError("trajectories must be at least 1")
    return spec


# ----------------------------------------------------------------------------
# jobs


def _out(spec, name):
    return Path(spec.out) / name


def _opt(spec, key, default):
    return spec.options.get(key, default)


def job_alpha_circle(spec):
    """Steady amplitudes for n = -n_max..n_max and their circle residuals."""
    p = spec.params
    n_max = int(_opt(spec, "n_max", 100))
    n = np.arange(-n_max, n_max + 1, dtype=float)
    a = coherent.alpha_steady(p, n)
    r = derive_scales(p).circle_radius
    resid = np.abs(np.abs(a - r) - r)
    rows = [[int(k), float(x.real), float(x.imag), float(e)] for k, x, e in zip(n, a, resid)]
    side = spec.sidecar()
    side.update(circle_center=r, circle_radius=r, max_residual=float(resid.max()))
    analysis.write_table(_out(spec, "alpha_circle.csv"), ("n", "re_alpha", "im_alpha", "residual"),
                         rows, side)
    return {"max_residual": float(resid.max())}


def _record_for(spec, coeffs):
    p = spec.params
    if spec.Y is not None:
        return coherent.MeasurementRecord(dt=spec.t, dy=np.array([spec.Y]))
    dt = spec.dt or spec.t / 1000
    return coherent.sample_record(p, coeffs, spec.t, dt, spec.seed, steady=True)


def job_state(spec):
    """Conditional state for a given Y (or a sampled record) with peak and Q-function."""
    p = spec.params
    coeffs = coherent.initial_coefficients(p.big_j)
    rec = _record_for(spec, coeffs)
    rho, _, _ = coherent.conditional_state(p, coeffs, rec, steady=True,
                                           probe_off_at_end=bool(_opt(spec, "probe_off", False)))
    pk = analysis.peak_summary(rho)
    side = spec.sidecar()
    side.update(Y=rec.Y, purity=rho.purity(), peak=dataclasses.asdict(pk))
    rows = [[float(n), float(d), float(d0)] for n, d, d0 in zip(rho.n, rho.diagonal, coeffs.diagonal)]
    analysis.write_table(_out(spec, "state_diagonal.csv"), ("n", "p_n", "p_n_initial"), rows, side)
    q = analysis.spin_q_function(rho, int(_opt(spec, "n_theta", 200)), int(_opt(spec, "n_phi", 400)))
    step = int(_opt(spec, "q_stride", 4))
    qrows = [[float(th), float(ph), float(q.values[i, j])]
             for i, th in enumerate(q.theta) for j, ph in enumerate(q.phi) if j % step == 0]
    side_q = dict(side, q_integral=q.integral(), q_stride=step)
    analysis.write_table(_out(spec, "state_qfunction.csv"), ("theta", "phi", "Q"), qrows, side_q)
    return {"purity": rho.purity(), "d_over_2": pk.d_over_2, "Y": rec.Y}


def _y_grid(spec, coeffs):
    dist = coherent.record_probability_Y(spec.params, coeffs, spec.t)
    lo, hi = dist.support()
    return np.linspace(float(_opt(spec, "y_min", lo)), float(_opt(spec, "y_max", hi)),
                       int(_opt(spec, "points", 201))), dist


def job_purity_vs_y(spec):
    p = spec.params
    coeffs = coherent.initial_coefficients(p.big_j)
    ys, _ = _y_grid(spec, coeffs)
    rows = []
    for y in ys:
        rec = coherent.MeasurementRecord(dt=spec.t, dy=np.array([y]))
        rows.append([float(y), coherent.purity_full(p, coeffs, rec, steady=True)])
    analysis.write_table(_out(spec, "purity_vs_Y.csv"), ("Y", "purity"), rows, spec.sidecar())
    return {"points": len(rows)}


def job_p_of_y(spec):
    p = spec.params
    coeffs = coherent.initial_coefficients(p.big_j)
    ys, dist = _y_grid(spec, coeffs)
    rows = [[float(y), float(v)] for y, v in zip(ys, dist.pdf(ys))]
    analysis.write_table(_out(spec, "p_of_Y.csv"), ("Y", "density"), rows, spec.sidecar())
    return {"points": len(rows)}


def job_np_vs_y(spec):
    p = spec.params
    coeffs = coherent.initial_coefficients(p.big_j)
    ys, _ = _y_grid(spec, coeffs)
    rows = []
    for y in ys:
        est = coherent.peak_estimate(p, p.big_j, spec.t, y)
        rows.append([float(y), est.n_p, coherent.diagonal_argmax(p, coeffs, spec.t, y)])
    analysis.write_table(_out(spec, "np_vs_Y.csv"), ("Y", "n_p_estimate", "n_p_direct"), rows,
                         spec.sidecar())
    return {"points": len(rows)}


def job_squeezed_scatter(spec):
    from . import scatter

    p = spec.params
    t = spec.t if spec.t is not None else 1e-6
    series = _opt(spec, "series", ["coherent", 0.0125, -0.0125, 0.025, -0.025, 0.05, -0.05])
    step = _opt(spec, "step", None)
    table, meta = scatter.run_series(p, series, t=t, trajectories=spec.trajectories,
                                     base_seed=spec.seed, step=step,
                                     halving=bool(_opt(spec, "halving_check", False)))
    side = spec.sidecar()
    side.update(series=table.series, protocol=meta)
    analysis.write_table(_out(spec, "squeezed_scatter.csv"), analysis.SCATTER_COLUMNS,
                         table.as_rows(), side)
    return {name: {"median_purity": table.median("purity", name),
                   "median_d_over_2": table.median("d_over_2", name)} for name in table.series}


def job_oracle_validate(spec):
    from . import validation

    rep = validation.oracle_report(seed=spec.seed, kappa_t=float(_opt(spec, "kappa_t", 20.0)))
    rows = [[r.name, r.observable, r.deviation, r.threshold, int(r.passed)] for r in rep]
    analysis.write_table(_out(spec, "oracle_validate.csv"),
                         ("comparison", "observable", "deviation", "threshold", "passed"), rows,
                         spec.sidecar())
    failed = [r for r in rep if not r.passed]
    if failed:
        raise ArithmeticError("oracle deviations above threshold: "
                              + ", ".join(f"{r.name}/{r.observable}={r.deviation:.2e}" for r in failed))
    return {r.name + "/" + r.observable: r.deviation for r in rep}


def job_symmetry_check(spec):
    from . import gaussian

    p = spec.params
    steps = int(_opt(spec, "steps", 10_000))
    dt = spec.dt or gaussian.max_step(p)
    rows = []
    for k in range(spec.trajectories):
        ens = gaussian.run(gaussian.initial_ensemble(p), steps, dt, rng_seed=spec.seed + k)
        r = gaussian.check_time_reversal(ens)
        rows.append([spec.seed + k, r.v_residual, r.ybar_residual, r.weight_residual])
    analysis.write_table(_out(spec, "symmetry_check.csv"),
                         ("seed", "v_residual", "ybar_residual", "weight_residual"), rows,
                         dict(spec.sidecar(), steps=steps, dt=dt))
    return {"max_residual": max(max(r[1:]) for r in rows)}


JOBS = {
    "alpha-circle": job_alpha_circle,
    "state": job_state,
    "purity-vs-Y": job_purity_vs_y,
    "p-of-Y": job_p_of_y,
    "np-vs-Y": job_np_vs_y,
    "squeezed-scatter": job_squeezed_scatter,
    "oracle-validate": job_oracle_validate,
    "symmetry-check": job_symmetry_check,
}


def run(spec):
    """Execute ``spec``; returns a small summary dict."""
    return JOBS[spec.mode](spec)


# ----------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), yaml.safe_load(v)


def build_parser():
    ap = _Parser(prog="cavprobe", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    for m in MODES:
        sp = sub.add_parser(m, help=(JOBS[m].__doc__ or "").strip().splitlines()[0] if JOBS[m].__doc__ else None)
        sp.add_argument("--config", help="YAML or JSON experiment file")
        sp.add_argument("--preset", help="parameter preset (reichel, reichel-squeezed)")
        sp.add_argument("--param", action="append", type=_kv, default=[], metavar="KEY=VALUE",
                        help="physical parameter, e.g. J=10, epsilon=0.025j*kappa2, g=215*MHz")
        sp.add_argument("--option", action="append", type=_kv, default=[], metavar="KEY=VALUE",
                        help="mode-specific option")
        sp.add_argument("--t", type=float, help="probing time (s)")
        sp.add_argument("--dt", type=float, help="time step (s)")
        sp.add_argument("--trajectories", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--Y", type=float, help="integrated record (s^1/2)")
        sp.add_argument("--out", help="output directory")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    over = {k: getattr(args, k) for k in ("preset", "t", "dt", "trajectories", "seed", "Y", "out")
            if getattr(args, k) is not None}
    over.update(dict(args.param))
    if args.option:
        over["options"] = dict(args.option)
    try:
        spec = load_spec(args.config, over, mode=args.mode)
    except (UsageError, OSError) as exc:
        print(f"cavprobe: error: {exc}", file=sys.stderr)
        return 1
    try:
        summary = run(spec)
    except ArithmeticError as exc:
        print(f"cavprobe: numerical failure: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"cavprobe: error: {exc}", file=sys.stderr)
        return 1
    for k, v in summary.items():
        print(f"{k}: {v}")
    return 0


def main_exit():
    sys.exit(main())
