"""Command-line front end: session runs, closed-form curves, estimator sweeps, comparison table.

Exit codes: 0 success, 1 domain error (bad configuration value, abort-rate
threshold exceeded), 2 usage error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import adversary as adv
from . import analysis as an
from . import protocol as proto
from .rng import DEFAULT_SEED, derived_rng

ATTACKS = ("none", "impersonation", "collective", "intercept_resend")
SWEEP_PARAMS = ("alpha", "A_zeta", "n", "d", "p", "tolerance")
CSV_COLUMNS = ("parameter", "estimate", "std_error", "closed_form_paper", "closed_form_derived", "flag")
FIGURES = ("fig2", "fig3", "fig4")
FIG4_SERIES = (0.0, 0.125, 0.25, 0.5)


class ConfigError(ValueError):
    """Invalid configuration value; maps to exit code 1."""


@dataclass(frozen=True)
class RunConfig:
    protocol: int = 1
    n: int = 16
    p: Optional[int] = None
    tolerance: float = proto.DEFAULT_TOLERANCE
    check_fraction: float = proto.DEFAULT_CHECK_FRACTION
    seed: int = DEFAULT_SEED
    attack: str = "none"
    sessions: int = 100
    out: str = "out"
    max_abort_rate: Optional[float] = None
    # impersonation amplitudes
    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    # collective probe
    A_zeta: float = 1.0
    B_zeta: Optional[float] = None
    A_eta: float = 1.0
    B_eta: Optional[float] = None
    alpha_zeta: float = math.pi / 2
    beta_zeta: float = math.pi / 2
    alpha_eta: float = math.pi / 2
    beta_eta: float = math.pi / 2
    e: float = 0.5
    # detection level targeted by success-probability sweeps
    detection: float = 0.25

    @property
    def decoys(self) -> int:
        return self.n if self.p is None else self.p

    def validate(self) -> "RunConfig":
        if self.protocol not in (1, 2):
            raise ConfigError(f"protocol must be 1 or 2, got {self.protocol}")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.p is not None and self.p < 0:
            raise ConfigError("p must be non-negative")
        if not 0.0 <= self.tolerance <= 1.0:
            raise ConfigError("tolerance must lie in [0, 1]")
        if not 0.0 <= self.check_fraction <= 1.0:
            raise ConfigError("check_fraction must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.attack not in ATTACKS:
            raise ConfigError(f"attack must be one of {', '.join(ATTACKS)}")
        if self.sessions < 1:
            raise ConfigError("sessions must be at least 1")
        if self.max_abort_rate is not None and not 0.0 <= self.max_abort_rate <= 1.0:
            raise ConfigError("max_abort_rate must lie in [0, 1]")
        if self.protocol == 2 and self.attack == "impersonation":
            raise ConfigError("protocol 2 has no third-party source to impersonate")
        try:
            self.attack_strategy()
        except adv.AttackParameterError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def collective_params(self) -> adv.CollectiveParams:
        bz = math.sqrt(max(0.0, 1 - self.A_zeta**2)) if self.B_zeta is None else self.B_zeta
        be = math.sqrt(max(0.0, 1 - self.A_eta**2)) if self.B_eta is None else self.B_eta
        return adv.CollectiveParams(self.A_zeta, bz, self.A_eta, be, self.alpha_zeta, self.beta_zeta,
                                    self.alpha_eta, self.beta_eta, self.e)

    def attack_strategy(self) -> adv.AttackStrategy:
        if self.attack == "impersonation":
            return adv.Impersonation(adv.ImpersonationParams(self.a, self.b, self.c, self.d))
        if self.attack == "collective":
            return adv.Collective(self.collective_params())
        if self.attack == "intercept_resend":
            return adv.InterceptResend()
        return adv.NoAttack()


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw) -> object:
    if raw is None:
        return None
    kind = _FIELD_TYPES[name]
    try:
        if kind in ("int", "Optional[int]"):
            return int(raw)
        if kind in ("float", "Optional[float]"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from exc
    return str(raw)


def load_config(path: Optional[str]) -> dict:
    """Flat ``key = value`` file; ``#`` comments allowed, no sections needed."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = dict(parser["run"])
    unknown = set(values) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return {k: _coerce(k, v) for k, v in values.items()}


def build_config(args: argparse.Namespace) -> RunConfig:
    values = load_config(args.config)
    for name in _FIELD_TYPES:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = _coerce(name, flag)
    return RunConfig(**values).validate()


# ---------------------------------------------------------------- output

def _write_outputs(out: Path, files: dict[str, str]) -> None:
    """Write all files or none: stage to temporary names, then rename."""
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            tmp = out / f".{name}.partial"
            tmp.write_text(text)
            staged.append((tmp, out / name))
    except OSError:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def report_rows(points) -> list[list[str]]:
    return [
        [_num(v), _num(r.estimate), _num(r.std_error), _num(r.closed_form_paper),
         _num(r.closed_form_derived), str(int(r.discrepancy_flag))]
        for v, r in points
    ]


# ---------------------------------------------------------------- run

def _taps(cfg: RunConfig, rng: np.random.Generator):
    attack = cfg.attack_strategy()
    if isinstance(attack, adv.Collective):
        return adv.collective_tap(attack.params)
    if isinstance(attack, adv.InterceptResend):
        return adv.intercept_resend_tap(rng), adv.intercept_resend_tap(rng)
    return None, None


def run_session(cfg: RunConfig, index: int) -> proto.SessionTranscript:
    rng = derived_rng(cfg.seed, index)
    tap_a, tap_b = _taps(cfg, rng)
    if cfg.protocol == 2:
        return proto.run_protocol2(cfg.n, tap_b, rng, tolerance=cfg.tolerance, check_fraction=cfg.check_fraction)
    source = None
    attack = cfg.attack_strategy()
    if isinstance(attack, adv.Impersonation):
        source = adv.impersonate_source(attack.params)
    return proto.run_protocol1(cfg.n, cfg.decoys, tap_a, tap_b, source, cfg.tolerance, rng,
                               check_fraction=cfg.check_fraction)


def summarize(cfg: RunConfig, transcripts) -> dict:
    done = [t for t in transcripts if not t.aborted]
    rates = np.array([t.decoy_error_rate for t in transcripts])
    reasons: dict[str, int] = {}
    for t in transcripts:
        if t.aborted:
            key = t.abort_reason.split(":")[0]
            reasons[key] = reasons.get(key, 0) + 1
    return {
        "config": {k: v for k, v in asdict(cfg).items() if k != "out"},
        "sessions": len(transcripts),
        "completed": len(done),
        "abort_rate": 1 - len(done) / len(transcripts),
        "abort_reasons": dict(sorted(reasons.items())),
        "key_agreement_rate": (sum(t.keys_agree for t in done) / len(done)) if done else None,
        "decoy_error": {
            "mean": float(rates.mean()),
            "min": float(rates.min()),
            "max": float(rates.max()),
            "quantiles": {q: float(np.quantile(rates, float(q))) for q in ("0.1", "0.5", "0.9")},
        },
    }


def cmd_run(cfg: RunConfig) -> int:
    transcripts = [run_session(cfg, i) for i in range(cfg.sessions)]
    summary = summarize(cfg, transcripts)
    _write_outputs(Path(cfg.out), {
        "transcripts.jsonl": "".join(t.to_json() + "\n" for t in transcripts),
        "summary.json": json.dumps(summary, indent=2, sort_keys=True) + "\n",
    })
    print(f"sessions={summary['sessions']} abort_rate={summary['abort_rate']:.4f} "
          f"agreement={summary['key_agreement_rate']}")
    if cfg.max_abort_rate is not None and summary["abort_rate"] > cfg.max_abort_rate:
        print(f"abort rate {summary['abort_rate']:.4f} exceeds limit {cfg.max_abort_rate}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------- curves

def curve_table(which: str, points: int = 50, n_max: int = 30) -> tuple[list[str], list[list[str]]]:
    if which == "fig2":
        grid = np.linspace(0, math.pi / 2, points)
        return ["alpha", "paper", "derived"], [[_num(a), *map(_num, an.curve_detection_min(a))] for a in grid]
    if which == "fig3":
        grid = np.linspace(0, math.pi / 2, points)
        return ["alpha", "information"], [[_num(a), _num(an.curve_eve_information(a))] for a in grid]
    if which == "fig4":
        header = ["n"] + [f"d={d:g}" for d in FIG4_SERIES]
        return header, [[str(n)] + [_num(an.curve_success(n, d)) for d in FIG4_SERIES] for n in range(1, n_max + 1)]
    raise ConfigError(f"unknown figure {which!r}; choose from {', '.join(FIGURES)}")


def cmd_curves(which: list[str], out: str, points: int, n_max: int) -> int:
    if points < 2 or n_max < 1:
        raise ConfigError("need at least two grid points and n_max >= 1")
    files = {}
    for fig in which:
        header, rows = curve_table(fig, points, n_max)
        files[f"{fig}.csv"] = _csv_text(header, rows)
    _write_outputs(Path(out), files)
    print(f"wrote {', '.join(sorted(files))} to {out}")
    return 0


# ---------------------------------------------------------------- sweep

def parse_grid(text: str, integer: bool = False) -> list:
    """``a,b,c`` for explicit values or ``start:stop:count`` for an even grid."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            vals = np.linspace(float(start), float(stop), int(count)).tolist()
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {text!r}") from exc
    if not vals:
        raise ConfigError("empty grid")
    if integer:
        if any(v != int(v) for v in vals):
            raise ConfigError("grid must be integral for this parameter")
        vals = [int(v) for v in vals]
    return vals


DEFAULT_GRIDS = {
    "alpha": f"0:{math.pi / 2!r}:10",
    "A_zeta": "0:1:6",
    "n": "1,2,4,6",
    "d": "0,0.125,0.25,0.5",
    "p": "1,2,4,8,16,32",
    "tolerance": "0.05,0.1,0.15,0.2,0.25,0.3",
}


def sweep_point(cfg: RunConfig, param: str, value, sessions: int, index: int) -> an.MetricsReport:
    rng = derived_rng(cfg.seed, index)
    if param == "alpha":
        attack = adv.Collective(replace(cfg, alpha_zeta=value, alpha_eta=value).collective_params())
        return an.estimate_detection(attack, sessions, rng)
    if param == "A_zeta":
        if not 0.0 <= value <= 1.0:
            raise ConfigError("A_zeta must lie in [0, 1]")
        attack = adv.Collective(replace(cfg, A_zeta=value, B_zeta=None).collective_params())
        return an.estimate_detection(attack, sessions, rng)
    if param in ("n", "d"):
        n = int(value) if param == "n" else cfg.n
        d = cfg.detection if param == "n" else value
        if n < 1:
            raise ConfigError("n must be at least 1")
        alpha = an.alpha_for_detection(d)
        params = adv.CollectiveParams.symmetric(alpha, e=cfg.e)
        report, _ = an.estimate_success(params, n, sessions, rng)
        return report
    # decoy-check abort rate under a random-basis intercept-resend attack
    p = int(value) if param == "p" else cfg.decoys
    tol = cfg.tolerance if param == "p" else value
    if p < 0 or not 0.0 <= tol <= 1.0:
        raise ConfigError("p must be non-negative and tolerance in [0, 1]")
    sub = replace(cfg, protocol=1, attack="intercept_resend", p=p, tolerance=tol)
    aborts = sum(
        run_session(sub, (index << 32) + i).abort_reason == proto.ABORT_DECOY for i in range(sessions)
    )
    return an.binomial_report(aborts, sessions, None, an.abort_probability(p, tol))


def cmd_sweep(cfg: RunConfig, param: str, grid: Optional[str], sessions: int) -> int:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"cannot sweep {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    if sessions < 1:
        raise ConfigError("sweep needs a positive Monte Carlo budget")
    values = parse_grid(grid or DEFAULT_GRIDS[param], integer=param in ("n", "p"))
    try:
        points = [(v, sweep_point(cfg, param, v, sessions, i)) for i, v in enumerate(values)]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_outputs(Path(cfg.out), {f"sweep_{param}.csv": _csv_text(CSV_COLUMNS, report_rows(points))})
    flagged = sum(r.discrepancy_flag for _, r in points)
    print(f"sweep {param}: {len(points)} points, {flagged} flagged, written to {cfg.out}")
    return 0


# ---------------------------------------------------------------- compare

COMPARE_COLUMNS = ("protocol", "parties", "resources", "channel", "QM", "TR", "eta1", "eta2", "source")


def compare_table() -> list[list[str]]:
    return [
        [r.name, str(r.parties), r.resources, r.channel, r.quantum_memory, r.third_party, r.eta1, r.eta2,
         "computed" if r.simulated else "reference-only"]
        for r in an.comparison_rows()
    ]


def cmd_compare(out: Optional[str]) -> int:
    rows = compare_table()
    widths = [max(len(str(x)) for x in col) for col in zip(COMPARE_COLUMNS, *rows)]
    for line in [COMPARE_COLUMNS, *rows]:
        print("  ".join(str(x).ljust(w) for x, w in zip(line, widths)).rstrip())
    if out:
        _write_outputs(Path(out), {"compare.csv": _csv_text(COMPARE_COLUMNS, rows)})
    return 0


# ---------------------------------------------------------------- entry point

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override its entries")
    for f in fields(RunConfig):
        p.add_argument(f"--{f.name}", default=None, metavar=f.name.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqka", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run key-agreement sessions and write transcripts")
    _add_config_flags(run)

    curves = sub.add_parser("curves", help="write closed-form curve data")
    curves.add_argument("figures", nargs="*", default=list(FIGURES), help="fig2, fig3 and/or fig4")
    curves.add_argument("--out", default="out")
    curves.add_argument("--points", type=int, default=50)
    curves.add_argument("--n_max", type=int, default=30)

    sweep = sub.add_parser("sweep", help="Monte Carlo sweep of one parameter")
    sweep.add_argument("param", help=", ".join(SWEEP_PARAMS))
    sweep.add_argument("--grid", help="a,b,c or start:stop:count")
    sweep.add_argument("--budget", type=int, default=None, help="sessions per grid point (default: --sessions)")
    _add_config_flags(sweep)

    compare = sub.add_parser("compare", help="print the efficiency comparison table")
    compare.add_argument("--out", default=None)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(build_config(args))
        if args.command == "curves":
            return cmd_curves(args.figures, args.out, args.points, args.n_max)
        if args.command == "sweep":
            cfg = build_config(args)
            return cmd_sweep(cfg, args.param, args.grid, cfg.sessions if args.budget is None else args.budget)
        return cmd_compare(args.out)
    except ConfigError as exc:
        print(f"cqka: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
