"""Command-line scenario runner.

Every subcommand accepts ``--config PATH`` (a JSON document whose keys
mirror the subcommand's flags, plus the shared header ``seed``,
``output_dir`` and ``tolerances``), ``--seed``, ``--out`` and
``--sweep``. Explicit flags override the config file. Results go to
stdout as JSON; with an output directory they are also written there,
together with a ``metadata.json`` that holds the only timestamp.

Exit codes: 0 success, 2 configuration error, 3 solver or numerical
error, 4 audit violations found.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import SCHEMA_VERSION
from .errors import (ConfigError, InconsistentEvidenceError, LogSyncError, ModelValidationError,
                     UnsupportedError)

OUT_ENV = "LOGSYNC_OUT"

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_AUDIT = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _num(**extra):
    return {"type": "number", **extra}


_INT = {"type": "integer"}
_BOOL = {"type": "boolean"}
_STR = {"type": "string"}

HEADER = {
    "seed": _INT,
    "output_dir": _STR,
    "tolerances": {"type": "object", "additionalProperties": _num()},
    "sweep": {"type": "integer", "minimum": 1},
}

SCHEMAS = {
    "clock": {"n_cycles": {"type": "integer", "minimum": 1}, "sigma": _num(minimum=0), "gain": _num(exclusiveMinimum=0),
              "feedback": _BOOL, "noiseless": _BOOL, "shift": _num(), "width": _num(exclusiveMinimum=0),
              "peak_rate": _num(exclusiveMinimum=0), "start_offset": _num()},
    "steer": {"delta": {"type": "integer", "minimum": 1}, "rate_sigma": _num(minimum=0),
              "position_sigma": _num(minimum=0), "rate_drift": _num(), "position_drift": _num(),
              "predictor": {"enum": ["none", "linear"]}, "n_cycles": {"type": "integer", "minimum": 1},
              "gain": _num(exclusiveMinimum=0), "eta": _num(exclusiveMinimum=0, exclusiveMaximum=1),
              "phi0": _num(), "feedback": _BOOL},
    "solve": {"kind": {"enum": ["tetra", "five", "two"]}, "mu": _num(minimum=0), "mass": _num(minimum=0),
              "radius": _num(exclusiveMinimum=0), "p_tau": _num(exclusiveMinimum=0),
              "N": {"type": "integer", "minimum": 1}, "extend_fifth": _BOOL, "allow_strong": _BOOL,
              "period": _num(exclusiveMinimum=0), "delta": {"type": "integer", "minimum": 1},
              "n_ticks": {"type": "integer", "minimum": 2}, "c": _num(exclusiveMinimum=0)},
    "audit": {"history": _STR, "eta": _num(exclusiveMinimum=0, exclusiveMaximum=1)},
    "kab": {"N": {"type": "integer", "minimum": 1}, "distance": _num(exclusiveMinimum=0),
            "c": _num(exclusiveMinimum=0), "f0": _num(), "interior": {"type": "array", "items": _num()},
            "nonmember": _BOOL},
    "bitrate": {"mass": _num(minimum=0), "radius": _num(exclusiveMinimum=0), "L": _num(exclusiveMinimum=0),
                "b": _num(exclusiveMinimum=0), "p_tau": _num(exclusiveMinimum=0)},
    "cluster-phi": {"mu": _num(minimum=0), "mass": _num(minimum=0), "radius": _num(exclusiveMinimum=0),
                    "N": {"type": "integer", "minimum": 1}, "p_tau": _num(exclusiveMinimum=0)},
    "models": {"ppm": _STR, "p": _num(minimum=0, maximum=1)},
    "graph": {"history": {"type": "array", "items": _STR}},
}


def schema_for(sub: str) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": {**HEADER, **SCHEMAS[sub]}}


def validate_config(sub: str, config: dict) -> None:
    try:
        jsonschema.validate(config, schema_for(sub))
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config: {exc.message}") from None


# ----------------------------------------------------------------------------
# Argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="output_dir", help=f"output directory (default ${OUT_ENV})")
    p.add_argument("--sweep", type=int, help="run this many consecutive seeds concurrently")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="logsync", description=__doc__.splitlines()[0])
    subs = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = subs.add_parser("clock", help="atomic-clock steering simulation")
    _common(p)
    p.add_argument("--n-cycles", type=int)
    p.add_argument("--sigma", type=float, help="random-walk frequency step (Hz per cycle)")
    p.add_argument("--gain", type=float)
    p.add_argument("--no-feedback", dest="feedback", action="store_const", const=False)
    p.add_argument("--noiseless", action="store_const", const=True)
    p.add_argument("--shift", type=float, help="resonance offset from the defined frequency (Hz)")
    p.add_argument("--width", type=float)
    p.add_argument("--peak-rate", type=float)
    p.add_argument("--start-offset", type=float, help="initial oscillator offset from the aim (Hz)")

    p = subs.add_parser("steer", help="two-machine network steering simulation")
    _common(p)
    p.add_argument("--delta", type=int, help="echo count delta_BAB in cycles")
    p.add_argument("--rate-sigma", type=float)
    p.add_argument("--position-sigma", type=float)
    p.add_argument("--rate-drift", type=float)
    p.add_argument("--position-drift", type=float)
    p.add_argument("--predictor", choices=["none", "linear"])
    p.add_argument("--n-cycles", type=int)
    p.add_argument("--gain", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--phi0", type=float)
    p.add_argument("--no-feedback", dest="feedback", action="store_const", const=False)

    p = subs.add_parser("solve", help="placement solvers")
    _common(p)
    p.add_argument("kind", choices=["tetra", "five", "two"])
    p.add_argument("--mu", type=float)
    p.add_argument("--mass", type=float)
    p.add_argument("--radius", type=float)
    p.add_argument("--p-tau", type=float)
    p.add_argument("--N", type=int)
    p.add_argument("--extend-fifth", action="store_const", const=True)
    p.add_argument("--allow-strong", action="store_const", const=True,
                   help="skip the curvature-strength precondition")
    p.add_argument("--period", type=float)
    p.add_argument("--delta", type=int)
    p.add_argument("--n-ticks", type=int)
    p.add_argument("--c", type=float)

    p = subs.add_parser("audit", help="phase and order audit of a history file")
    _common(p)
    p.add_argument("--history")
    p.add_argument("--eta", type=float)

    p = subs.add_parser("kab", help="construct and verify a lacing-invariant adjustment pair")
    _common(p)
    p.add_argument("--N", type=int)
    p.add_argument("--distance", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--f0", type=float)
    p.add_argument("--interior", type=float, nargs="*")
    p.add_argument("--nonmember", action="store_const", const=True,
                   help="verify a random pair instead of a constructed one")

    p = subs.add_parser("bitrate", help="curvature bound on the proper period")
    _common(p)
    p.add_argument("--mass", type=float)
    p.add_argument("--radius", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--p-tau", type=float)

    p = subs.add_parser("cluster-phi", help="A-ring phase: closed form against numeric TOF")
    _common(p)
    p.add_argument("--mu", type=float)
    p.add_argument("--mass", type=float)
    p.add_argument("--radius", type=float)
    p.add_argument("--N", type=int)
    p.add_argument("--p-tau", type=float)

    p = subs.add_parser("models", help="distinct quantum models of a PPM")
    _common(p)
    p.add_argument("--ppm", help="PPM JSON file")
    p.add_argument("--p", type=float, help="single-knob two-outcome PPM (p, 1-p)")

    p = subs.add_parser("graph", help="occurrence graph of histories as DOT")
    _common(p)
    p.add_argument("--history", nargs="+", help="NAME=PATH entries")
    return ap


DEFAULTS = {
    "clock": {"n_cycles": 1000, "sigma": 1e-3, "gain": 0.5, "feedback": True, "noiseless": False,
              "shift": 0.05, "width": 1.0, "peak_rate": 1e4, "start_offset": 0.0},
    "steer": {"delta": 4, "rate_sigma": 1e-3, "position_sigma": 1e-3, "rate_drift": 0.0,
              "position_drift": 0.0, "predictor": "none", "n_cycles": 1000, "gain": 0.5, "eta": 0.1,
              "phi0": 0.0, "feedback": True},
    "solve": {"mu": None, "mass": None, "radius": None, "p_tau": 1.0, "N": 1, "extend_fifth": False,
              "allow_strong": False, "period": 1.0, "delta": 3, "n_ticks": 12, "c": 1.0},
    "audit": {"history": None, "eta": 0.1},
    "kab": {"N": 3, "distance": 1.5, "c": 1.0, "f0": None, "interior": None, "nonmember": False},
    "bitrate": {"mass": 5.98e24, "radius": 3.0e7, "L": 6.0e6, "b": 1.0, "p_tau": None},
    "cluster-phi": {"mu": None, "mass": 5.98e24, "radius": 3.0e7, "N": 1000, "p_tau": 1e-6},
    "models": {"ppm": None, "p": 0.5},
    "graph": {"history": None},
}


def resolve(args: argparse.Namespace) -> tuple[str, dict]:
    sub = args.command
    cli = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")}
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    merged = {**cfg, **cli}
    validate_config(sub, merged)
    opts = {**DEFAULTS[sub], "seed": 0, "tolerances": {}, **merged}
    if not opts.get("output_dir") and os.environ.get(OUT_ENV):
        opts["output_dir"] = os.environ[OUT_ENV]
    return sub, opts


# ----------------------------------------------------------------------------
# Subcommands


def _mu(opts) -> float:
    from .geometry import mu_from_mass
    if opts.get("mu") is not None:
        return float(opts["mu"])
    if opts.get("mass") is not None:
        if opts.get("radius") is None:
            raise ConfigError("--mass needs --radius")
        return mu_from_mass(opts["mass"], opts["radius"])
    return 0.0


def cmd_clock(opts):
    from .steering import AimingPoint, OscillatorModel, ResonanceModel, aim_frequency, simulate_atomic_clock
    res = ResonanceModel.cesium(opts["shift"], opts["width"], opts["peak_rate"])
    aim = AimingPoint(gain=opts["gain"])
    osc = OscillatorModel(aim_frequency(res, aim) + opts["start_offset"], opts["sigma"], seed=opts["seed"])
    tr = simulate_atomic_clock(osc, res, aim, opts["n_cycles"], feedback=opts["feedback"],
                               noiseless=opts["noiseless"])
    summary = {"seed": opts["seed"], **tr.summary(), "aim_frequency": tr.aim_frequency,
               "final_output_frequency": float(tr.output_frequency[-1])}
    return summary, {"clock_trace.csv": tr.to_csv()}, EXIT_OK


def cmd_steer(opts):
    from .steering import AimingPoint, DriftModel, simulate_network_steering
    drift = DriftModel(opts["rate_sigma"], opts["position_sigma"], opts["rate_drift"], opts["position_drift"])
    aim = AimingPoint(target=opts["phi0"], eta=opts["eta"], gain=opts["gain"])
    tr = simulate_network_steering(opts["delta"], drift, aim, predictor=opts["predictor"],
                                   n_cycles=opts["n_cycles"], seed=opts["seed"], feedback=opts["feedback"])
    return tr.summary(), {"steer_trace.csv": tr.to_csv()}, EXIT_OK


def cmd_solve(opts):
    from . import arrangements as ar
    from .geometry import Metric
    kind = opts["kind"]
    if kind == "two":
        from .worldline import Worldline
        n, p, c = opts["n_ticks"], opts["period"], opts["c"]
        events = np.column_stack([np.arange(n) * p, np.zeros(n)])
        left, right = ar.solve_two_machine(events, opts["delta"], c=c)
        out = {"kind": "two", "delta": opts["delta"], "A": events.tolist(), "left": left.tolist(),
               "right": right.tolist()}
        return out, {}, EXIT_OK
    if kind == "tetra":
        mu = _mu(opts)
        metric = Metric.fermi(mu) if mu > 0 else Metric.flat()
        rep = ar.solve_tetrahedron(metric, opts["p_tau"], opts["N"])
        if opts["extend_fifth"]:
            rep = ar.extend_fifth(rep)
    else:
        mu = _mu(opts)
        if opts.get("N") is None or opts.get("p_tau") is None:
            raise ConfigError("solve five needs --N and --p-tau")
        rep = ar.solve_five_complete(0.0, 1.0, opts["N"], opts["p_tau"], mu=mu,
                                     enforce_precondition=not opts["allow_strong"])
    out = {"kind": kind, **rep.to_dict(), "echo_count_list": [rep.echo_counts[k] for k in sorted(rep.echo_counts)]}
    return out, {f"{kind}_echo_table.csv": rep.echo_table_csv()}, EXIT_OK


def _read_history(path: str):
    from .openmachine import history_from_csv, history_from_json
    p = Path(path)
    if not p.exists():
        packaged = resources.files("logsync") / "data" / p.name
        if packaged.is_file():
            text = packaged.read_text()
        else:
            raise ConfigError(f"history file {path} not found")
    else:
        text = p.read_text()
    try:
        return history_from_json(text) if p.suffix == ".json" else history_from_csv(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad history file {path}: {exc}") from None


def cmd_audit(opts):
    from .channels import ChannelPair, audit_history, is_order_preserving, phase_threshold
    from .openmachine import Reading
    if not opts["history"]:
        raise ConfigError("audit needs --history")
    hist = _read_history(opts["history"])
    bad = audit_history(hist, opts["eta"])
    received = [r for r in hist if r.event == "received"]
    order = {}
    for party in sorted({r.party for r in received}):
        pairs = [ChannelPair(Reading(r.cycle_sent), Reading.from_value(r.reading))
                 for r in received if r.party == party]
        order[party] = is_order_preserving(pairs) if len(pairs) >= 2 else None
    out = {
        "eta": opts["eta"], "threshold": phase_threshold(opts["eta"]),
        "accepted": [{"own_cycle": r.own_cycle, "party": r.party, "phase": r.phase_or_rate}
                     for r in received if r not in bad],
        "violations": [{"own_cycle": r.own_cycle, "party": r.party, "phase": r.phase_or_rate} for r in bad],
        "order_preserving": order,
    }
    failed = bool(bad) or any(v is False for v in order.values())
    return out, {}, EXIT_AUDIT if failed else EXIT_OK


def cmd_kab(opts):
    from .adjustments import (ClockAdjustment, LacingSpec, construct_K_pair, lacing_channels,
                              verify_invariance)
    from .worldline import Worldline
    N, c, d = opts["N"], opts["c"], opts["distance"]
    span = (-(4 * N + 8) * d / c, (4 * N + 8) * d / c)
    spec = LacingSpec.evenly_spaced(Worldline.static(0.0, *span, c=c), Worldline.static(d, *span, c=c), 0.0, N)
    if opts["nonmember"]:
        rng = np.random.default_rng(opts["seed"])
        bp = np.sort(rng.uniform(-2 * N, 2 * N, 4))
        vals = bp + np.cumsum(rng.uniform(0.05, 0.3, 4))
        pair = (ClockAdjustment.from_arrays(bp, vals), ClockAdjustment.identity())
    else:
        f0 = 0.0 if opts["f0"] is None else opts["f0"]
        interior = opts["interior"] if opts["interior"] is not None else [f0 + i for i in range(1, N)]
        pair = construct_K_pair(spec, f0, interior)
    ok = verify_invariance(pair, lacing_channels(N), spec)
    out = {"N": N, "f_A": json.loads(pair[0].to_json()), "f_B": json.loads(pair[1].to_json()),
           "invariant": ok}
    return out, {}, EXIT_OK if ok else EXIT_AUDIT


def cmd_bitrate(opts):
    from .arrangements import max_bit_rate, min_proper_period
    bound = min_proper_period(opts["mass"], opts["radius"], opts["L"])
    p_tau = opts["p_tau"] if opts["p_tau"] is not None else bound
    out = {"min_proper_period_s": bound, "bound": f"p_tau > {bound:.1e} s",
           "max_bit_rate_bits_per_s": max_bit_rate(p_tau, opts["b"]) if p_tau > 0 else None,
           "mass": opts["mass"], "radius": opts["radius"], "L": opts["L"], "b": opts["b"]}
    return out, {}, EXIT_OK


def cmd_cluster_phi(opts):
    from .arrangements import cluster_phase_numeric
    from .geometry import C, cluster_strength
    mu = _mu(opts)
    N, p = opts["N"], opts["p_tau"]
    sol = cluster_phase_numeric(mu, N, p)
    mt = mu * (N * p * C) ** 2
    closed = -27.0 * N * mt / 8.0
    lin = -2.5 * N * mt
    out = {"mu": mu, "N": N, "p_tau": p, "mu_tilde": mt, "precondition_strength": cluster_strength(mu, N, p),
           "phi_numeric": sol.phi, "phi_closed_form": closed, "phi_linearized": lin,
           "numeric_coefficient": sol.phi / (N * mt) if mt > 0 else None,
           "l3_coefficient_magnitude": abs(sol.phi / (N * mt)) / 8.0 if mt > 0 else None,
           "alpha": sol.alpha, "beta": sol.beta, "gamma": sol.gamma}
    return out, {}, EXIT_OK


def cmd_models(opts):
    from .quantum import PPM, construct_distinct_models, evaluate_ppm, metric_deviation
    if opts["ppm"]:
        try:
            ppm = PPM.from_json(Path(opts["ppm"]).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad PPM file: {exc}") from None
    else:
        p = opts["p"]
        ppm = PPM.from_rows({("prep", "meas"): (p, 1.0 - p)})
    m1, m2, knob, dev = construct_distinct_models(ppm)
    knobs = tuple(ppm.knobs)
    out = {
        "knobs": [list(k) for k in knobs], "extension_knob": list(knob), "extended_deviation": dev,
        "roundtrip_error": [metric_deviation(evaluate_ppm(m, knobs), ppm) for m in (m1, m2)],
        "model1": json.loads(m1.to_json()), "model2": json.loads(m2.to_json()),
    }
    return out, {}, EXIT_OK


def cmd_graph(opts):
    from .channels import occurrence_graph
    if not opts["history"]:
        raise ConfigError("graph needs --history NAME=PATH ...")
    hists = {}
    for item in opts["history"]:
        name, sep, path = item.partition("=")
        if not sep:
            raise ConfigError(f"expected NAME=PATH, got {item!r}")
        hists[name] = _read_history(path)
    g = occurrence_graph(hists)
    dot = g.to_dot()
    out = {"nodes": len(g.nodes), "edges": len(g.edges), "acyclic": g.is_acyclic(),
           "external": sorted(g.external), "dot": dot}
    return out, {"occurrence.dot": dot}, EXIT_OK


COMMANDS = {"clock": cmd_clock, "steer": cmd_steer, "solve": cmd_solve, "audit": cmd_audit, "kab": cmd_kab,
            "bitrate": cmd_bitrate, "cluster-phi": cmd_cluster_phi, "models": cmd_models, "graph": cmd_graph}


# ----------------------------------------------------------------------------
# Output


def _stamp(name: str, text: str) -> str:
    if name.endswith(".csv"):
        return f"# schema_version: {SCHEMA_VERSION}\n{text}"
    if name.endswith(".dot"):
        return f"// schema_version: {SCHEMA_VERSION}\n{text}"
    return text


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _run_one(sub: str, opts: dict):
    result, files, code = COMMANDS[sub](opts)
    return {"schema_version": SCHEMA_VERSION, "command": sub, **result}, files, code


def _sweep_worker(args):
    sub, opts = args
    return _run_one(sub, opts)


def _write(out_dir: Path, name: str, text: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        sub, opts = resolve(args)
        out_dir = Path(opts["output_dir"]) if opts.get("output_dir") else None
        sweep = opts.get("sweep") or 1
        if sweep > 1:
            jobs = [(sub, {**opts, "seed": opts["seed"] + i}) for i in range(sweep)]
            with ProcessPoolExecutor() as pool:
                results = list(pool.map(_sweep_worker, jobs))
            code = max(r[2] for r in results)
            doc = {"schema_version": SCHEMA_VERSION, "command": sub, "sweep": sweep,
                   "runs": [r[0] for r in results]}
            if out_dir:
                for job, (res, files, _) in zip(jobs, results):
                    tag = f"seed{job[1]['seed']}"
                    _write(out_dir / tag, f"{sub}.json", _dumps(res))
                    for name, text in files.items():
                        _write(out_dir / tag, name, _stamp(name, text))
        else:
            doc, files, code = _run_one(sub, opts)
            if out_dir:
                for name, text in files.items():
                    _write(out_dir, name, _stamp(name, text))
        text = _dumps(doc)
        if out_dir:
            _write(out_dir, f"{sub}.json", text)
            meta = {"schema_version": SCHEMA_VERSION, "command": sub,
                    "argv": list(sys.argv[1:] if argv is None else argv),
                    "created": _dt.datetime.now(_dt.timezone.utc).isoformat()}
            _write(out_dir, "metadata.json", _dumps(meta))
        sys.stdout.write(text)
        return code
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (ConfigError, UnsupportedError, ModelValidationError, InconsistentEvidenceError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (LogSyncError, ArithmeticError) as exc:
        return _fail(EXIT_SOLVER, exc)


def _fail(code: int, exc: Exception) -> int:
    sys.stderr.write(json.dumps({"schema_version": SCHEMA_VERSION, "error": type(exc).__name__,
                                 "message": str(exc), "exit_code": code}) + "\n")
    return code


def main() -> None:
    sys.exit(run())
