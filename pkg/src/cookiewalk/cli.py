"""Command-line front end: ``cookiewalk <command> [flags]``.

Every command writes one artifact (JSON by default, CSV with
``--format csv``) to ``--out`` or standard output.  JSON artifacts embed the
parsed configuration and the argument vector that produced them.

Exit status: 0 success, 2 usage error, 3 inconclusive verdict, 4 truncation
budget exhausted, 1 any other failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .classify import (
    FAMILIES, digging, family_lambda, once_excited, pair, pair_zero_q, phase_boundary, verdict,
)
from .env import STANDARD, ZERO_Q, CookieEnvironment, nu, stuck_closed_form, validate
from .errors import (
    BudgetExceeded, CookieWalkError, Inconclusive, NoSignChange, NonMonotoneSamples, OutOfRange,
)
from .pmatrix import CookieMatrix
from .rng import DEFAULT_SEED
from .spectral import DEFAULT_N_MAX, DEFAULT_TOL, lambda_max

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INCONCLUSIVE = 3
EXIT_BUDGET = 4

COMMANDS = ("classify", "matrix", "spectral", "speed", "phase-scan", "stuck", "branching", "zchain")

# per-command defaults for the simulation knobs
STEPS_DEFAULT = {"speed": 1_000_000, "zchain": 200, "stuck": 10_000_000}
REPLICAS_DEFAULT = {"speed": 40, "stuck": 10_000, "branching": 1_000, "zchain": 100}


class UsageError(CookieWalkError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    b: int = 2
    p: list = field(default_factory=lambda: [0.5])
    q: float = 0.5
    mode: str = STANDARD
    tol: Optional[float] = None
    trunc_max: int = DEFAULT_N_MAX
    steps: Optional[int] = None
    replicas: Optional[int] = None
    seed: int = DEFAULT_SEED
    threads: Optional[int] = None
    format: str = "json"
    out: Optional[str] = None
    start: int = 1
    gen_cap: int = 10_000
    pop_cap: int = 1_000_000
    absorb_height: int = 200
    q_grid: Optional[str] = None
    p_grid: Optional[str] = None
    family: str = "once-excited"
    index: int = 1
    M: int = 1
    lo: int = 0
    hi: int = 12
    tail: bool = False
    window: str = "100:10000"
    timing: bool = False

    def env(self) -> CookieEnvironment:
        return validate(self.b, self.p, self.q, self.mode)

    def to_json(self) -> dict:
        out = asdict(self)
        out.pop("out")
        out.pop("threads")  # results do not depend on it
        return out


def parse_grid(text: str) -> list[float]:
    """``"start:stop:step"`` with both ends included."""
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"grid must look like start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise UsageError(f"empty or reversed grid {text!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 12) for k in range(count)]


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--p expects comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, allow_abbrev=False)
    common.add_argument("--b", type=int, default=2, help="branching factor of the tree")
    common.add_argument("--p", type=_floats, default=[0.5], help="cookie strengths, e.g. 0.5,0.8,0,0")
    common.add_argument("--q", type=float, default=0.5, help="strength once the cookies are gone")
    common.add_argument("--allow-zero-q", action="store_true", help="accept q = 0 (zero-q extension)")
    common.add_argument("--tol", type=float, default=None, help="spectral / band tolerance")
    common.add_argument("--trunc-max", type=int, default=DEFAULT_N_MAX, help="largest truncation window")
    common.add_argument("--steps", type=int, default=None)
    common.add_argument("--replicas", type=int, default=None)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--timing", action="store_true", help="include wall-clock time in JSON")

    parser = _Parser(prog="cookiewalk", description="Cookie random walks on regular trees.",
                     allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("classify", parents=[common], allow_abbrev=False, help="recurrence/transience verdict")
    m = sub.add_parser("matrix", parents=[common], allow_abbrev=False, help="dump a block of the cookie matrix")
    m.add_argument("--lo", type=int, default=0)
    m.add_argument("--hi", type=int, default=12)
    sub.add_parser("spectral", parents=[common], allow_abbrev=False, help="class radii and truncation trace")
    s = sub.add_parser("speed", parents=[common], allow_abbrev=False, help="Monte Carlo speed, optionally swept")
    s.add_argument("--p-grid", default=None, help="sweep cookie --index over start:stop:step")
    s.add_argument("--index", type=int, default=1, help="1-based cookie swept by --p-grid")
    ps = sub.add_parser("phase-scan", parents=[common], allow_abbrev=False, help="phase boundary along a grid")
    ps.add_argument("--family", choices=FAMILIES, default="once-excited")
    ps.add_argument("--q-grid", default=None)
    ps.add_argument("--p-grid", default=None)
    ps.add_argument("--M", type=int, default=1, help="number of zeros for the digging family")
    st = sub.add_parser("stuck", parents=[common], allow_abbrev=False, help="probability of getting stuck (q = 0)")
    st.add_argument("--absorb-height", type=int, default=200)
    st.add_argument("--p-grid", default=None, help="sweep (p, p; 0) over start:stop:step")
    br = sub.add_parser("branching", parents=[common], allow_abbrev=False, help="extinction of the crossing-count process")
    br.add_argument("--start", type=int, default=1)
    br.add_argument("--gen-cap", type=int, default=10_000)
    br.add_argument("--pop-cap", type=int, default=1_000_000)
    br.add_argument("--tail", action="store_true", help="fit the tail of the total progeny")
    br.add_argument("--window", default="100:10000", help="tail fit window lo:hi")
    z = sub.add_parser("zchain", parents=[common], allow_abbrev=False, help="tagged-particle chain paths")
    z.add_argument("--start", type=int, default=1)
    return parser


def parse_args(argv: Sequence[str]) -> RunConfig:
    ns = build_parser().parse_args(list(argv))
    values = {k: v for k, v in vars(ns).items() if k in RunConfig.__dataclass_fields__}
    values.pop("mode", None)
    zero = ns.q == 0
    if zero and not ns.allow_zero_q:
        raise UsageError("--q 0 requires --allow-zero-q")
    cfg = RunConfig(mode=ZERO_Q if zero else STANDARD, **values)
    if cfg.steps is None:
        cfg.steps = STEPS_DEFAULT.get(cfg.command)
    if cfg.replicas is None:
        cfg.replicas = REPLICAS_DEFAULT.get(cfg.command)
    for name in ("steps", "replicas"):
        v = getattr(cfg, name)
        if v is not None and v < 1:
            raise UsageError(f"--{name} must be positive")
    if cfg.threads is not None and cfg.threads < 1:
        raise UsageError("--threads must be positive")
    for name in ("q_grid", "p_grid"):
        if getattr(cfg, name):
            parse_grid(getattr(cfg, name))
    return cfg


# -- output ---------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def render_csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


@dataclass
class Artifact:
    payload: dict
    header: Sequence[str]
    rows: list
    status: int = EXIT_OK


def _emit(cfg: RunConfig, art: Artifact, argv: Sequence[str]) -> str:
    if cfg.format == "csv":
        return render_csv(art.header, art.rows)
    doc = dict(art.payload)
    doc["config"] = cfg.to_json()
    doc["argv"] = _strip_out(argv)
    doc["version"] = __version__
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def _strip_out(argv):
    """Drop the flags that do not affect the artifact (output path, thread count)."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a in ("--out", "--threads"):
            skip = True
        elif not a.startswith(("--out=", "--threads=")):
            out.append(a)
    return out


# -- commands -------------------------------------------------------------------


def _cmd_classify(cfg):
    v = verdict(cfg.env(), tol=cfg.tol if cfg.tol is not None else 1e-9, n_max=cfg.trunc_max)
    payload = v.to_json()
    return Artifact(payload, ["verdict", "lambda", "critical", "shortcut"],
                    [[v.outcome, v.lambda_used if v.lambda_used is not None else math.nan,
                      v.critical, v.shortcut]])


def _cmd_matrix(cfg):
    m = CookieMatrix(cfg.env())
    block = m.block(cfg.lo, cfg.hi)
    rows = [[i, j, float(block[i - cfg.lo, j - cfg.lo])]
            for i in range(cfg.lo, cfg.hi + 1) for j in range(cfg.lo, cfg.hi + 1)]
    payload = {"lo": cfg.lo, "hi": cfg.hi, "matrix": block.tolist(),
               "classes": m.decomposition.to_json()}
    return Artifact(payload, ["i", "j", "p"], rows)


def _cmd_spectral(cfg):
    tol = cfg.tol if cfg.tol is not None else DEFAULT_TOL
    spectrum = lambda_max(cfg.env(), tol, cfg.trunc_max)
    rows = [[r.lo, r.hi if r.hi is not None else "inf", r.method, r.radius] for r in spectrum.radii]
    return Artifact(spectrum.to_json(), ["lo", "hi", "method", "radius"], rows,
                    EXIT_OK if spectrum.converged else EXIT_BUDGET)


def _cmd_speed(cfg):
    from .simulate import speed_estimate

    if cfg.p_grid:
        if not 1 <= cfg.index <= len(cfg.p):
            raise UsageError(f"--index {cfg.index} is outside the cookie pile")
        rows, sweep = [], []
        for x in parse_grid(cfg.p_grid):
            ps = list(cfg.p)
            ps[cfg.index - 1] = x
            env = validate(cfg.b, ps, cfg.q, cfg.mode)
            v, sigma = speed_estimate(env, cfg.steps, cfg.replicas, cfg.seed, cfg.threads)
            rows.append([x, v.estimate, v.stderr, sigma.estimate])
            sweep.append({"param": x, "speed": v.to_json(cfg.timing) | {"heights": None},
                          "sigma": sigma.estimate})
        return Artifact({"sweep": sweep, "index": cfg.index},
                        ["param", "speed", "stderr", "sigma"], rows)
    v, sigma = speed_estimate(cfg.env(), cfg.steps, cfg.replicas, cfg.seed, cfg.threads)
    heights = v.extras["heights"]
    rows = [[r, h / cfg.steps] for r, h in enumerate(heights)]
    payload = {"speed": v.to_json(cfg.timing), "sigma": sigma.to_json(cfg.timing)}
    return Artifact(payload, ["replica", "value"], rows)


def _scan_family(cfg):
    if cfg.family == "once-excited":
        if cfg.q_grid:
            return "q", parse_grid(cfg.q_grid), lambda x: once_excited(cfg.b, "p", q=x), \
                lambda x: validate(cfg.b, [cfg.p[0]], x) if x > 0 else None
        if cfg.p_grid:
            return "p", parse_grid(cfg.p_grid), lambda x: once_excited(cfg.b, "q", p=x), \
                lambda x: validate(cfg.b, [x], cfg.q)
    elif cfg.family == "digging" and cfg.q_grid:
        return "q", parse_grid(cfg.q_grid), None, \
            lambda x: validate(cfg.b, [0.0] * cfg.M, x) if x > 0 else None
    elif cfg.family == "pair" and cfg.p_grid:
        return "p", parse_grid(cfg.p_grid), None, lambda x: validate(cfg.b, [x, x, 0, 0], cfg.q)
    elif cfg.family == "pair-zero-q" and cfg.p_grid:
        return "p", parse_grid(cfg.p_grid), None, \
            lambda x: validate(cfg.b, [x, x], 0.0, ZERO_Q)
    raise UsageError(f"family {cfg.family} needs --{'q' if cfg.family == 'digging' else 'p'}-grid"
                     + (" or --q-grid" if cfg.family == "once-excited" else ""))


def _cmd_phase_scan(cfg):
    axis, grid, crossing, at = _scan_family(cfg)
    whole = {"digging": lambda: digging(cfg.b, cfg.M), "pair": lambda: pair(cfg.b, cfg.q),
             "pair-zero-q": lambda: pair_zero_q(cfg.b)}.get(cfg.family)
    global_root = None
    if whole is not None:
        try:
            global_root = phase_boundary(whole(), tol=1e-12).param
        except (NoSignChange, NonMonotoneSamples):
            global_root = math.nan
    rows = []
    for x in grid:
        if crossing is not None:
            try:
                fam = crossing(x) if x > 0 or axis == "p" else None
                boundary = phase_boundary(fam, tol=1e-12).param if fam else math.nan
            except (NoSignChange, NonMonotoneSamples, OutOfRange):
                boundary = math.nan
        else:
            boundary = global_root
        env = at(x)
        if env is None:
            rows.append([x, boundary, math.nan, "undefined"])
            continue
        lam = family_lambda(env)
        if env.mode == ZERO_Q:
            label = "stuck-a.s." if lam <= 1 / cfg.b else "escapes-with-positive-probability"
        else:
            try:
                label = verdict(env).outcome
            except Inconclusive:
                label = "Inconclusive"
        rows.append([x, boundary, lam if math.isfinite(lam) else math.nan, label])
    payload = {"family": cfg.family, "axis": axis,
               "rows": [dict(zip(("param", "boundary", "lambda", "verdict"), r)) for r in rows]}
    return Artifact(payload, ["param", "boundary", "lambda", "verdict"], rows)


def _cmd_stuck(cfg):
    from .simulate import stuck_probability

    if cfg.mode != ZERO_Q:
        raise UsageError("stuck needs --q 0 --allow-zero-q")
    if cfg.p_grid:
        rows, sweep = [], []
        for x in parse_grid(cfg.p_grid):
            env = validate(cfg.b, [x, x], 0.0, ZERO_Q)
            rep = stuck_probability(env, cfg.replicas, cfg.seed, cfg.absorb_height, cfg.steps,
                                    cfg.threads)
            closed = stuck_closed_form(x, x, cfg.b)
            rows.append([x, rep.estimate, rep.stderr, closed, nu(x, x, cfg.b)])
            sweep.append(rep.to_json(cfg.timing) | {"param": x})
        return Artifact({"sweep": sweep}, ["param", "stuck", "stderr", "closed_form", "nu"], rows)
    rep = stuck_probability(cfg.env(), cfg.replicas, cfg.seed, cfg.absorb_height, cfg.steps,
                            cfg.threads)
    rows = [["stuck", rep.estimate], ["stderr", rep.stderr]]
    if "closed_form" in rep.extras:
        rows.append(["closed_form", rep.extras["closed_form"]])
    return Artifact(rep.to_json(cfg.timing), ["quantity", "value"], rows)


def _cmd_branching(cfg):
    from .simulate import lambda_tail_slope, l_process_runs

    env = cfg.env()
    if cfg.tail:
        lo, hi = (float(x) for x in cfg.window.split(":"))
        fit = lambda_tail_slope(env, cfg.start, cfg.replicas, cfg.seed, (lo, hi), cfg.threads)
        return Artifact(fit.to_json(), ["slope", "stderr", "exceed_lower", "power_law"],
                        [[fit.slope, fit.stderr, fit.exceed_lower, fit.power_law]])
    runs = l_process_runs(env, cfg.start, cfg.replicas, cfg.seed, cfg.gen_cap, cfg.pop_cap,
                          0, cfg.threads)
    died = sum(r.died_out for r in runs)
    n = len(runs)
    est = died / n
    payload = {"estimate": est, "stderr": math.sqrt(est * (1 - est) / n), "replicas": n,
               "seed": cfg.seed, "died": died,
               "censored": {k: sum(r.reason == k for r in runs) for k in ("gen_cap", "pop_cap")}}
    rows = [[i, int(r.died_out), r.reason, r.Lambda, r.H, r.max_population, r.generations]
            for i, r in enumerate(runs)]
    return Artifact(payload, ["replica", "died", "reason", "Lambda", "H", "max_population",
                              "generations"], rows)


def _cmd_zchain(cfg):
    from .simulate import z_chain_run

    rep = z_chain_run(cfg.env(), cfg.start, cfg.steps, cfg.replicas, cfg.seed, cfg.threads)
    rows = [[i, t if t is not None else "censored"] for i, t in enumerate(rep.absorption_times)]
    return Artifact(rep.to_json(), ["replica", "T0"], rows)


HANDLERS = {
    "classify": _cmd_classify,
    "matrix": _cmd_matrix,
    "spectral": _cmd_spectral,
    "speed": _cmd_speed,
    "phase-scan": _cmd_phase_scan,
    "stuck": _cmd_stuck,
    "branching": _cmd_branching,
    "zchain": _cmd_zchain,
}


def run(cfg: RunConfig, argv: Sequence[str] = ()) -> int:
    art = HANDLERS[cfg.command](cfg)
    text = _emit(cfg, art, argv)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return art.status


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        print(f"cookiewalk: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run(cfg, argv)
    except UsageError as exc:
        print(f"cookiewalk: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OutOfRange, ValueError) as exc:
        print(f"cookiewalk: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Inconclusive as exc:
        print(f"cookiewalk: inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except BudgetExceeded as exc:
        print(f"cookiewalk: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except CookieWalkError as exc:
        print(f"cookiewalk: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
