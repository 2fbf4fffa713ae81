"""Command-line front end.

Every report carries a schema tag and the resolved configuration, so the
same config always produces the same bytes.  Wall-clock metadata goes to a
separate ``<out>.meta.json`` file.

Exit status: 0 when the run passes its gate, 2 when it does not, 1 on usage
or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .circle import Angle
from .density import parse_index_set
from .groups import GroupSpec, Kind, generate_subgroup, parse_character, parse_point
from .measure import (ExperimentConfig, SamplerDegeneracy, df_null_experiment, lem_measure_check,
                      weyl_experiment)
from .partitions import build_nice_partition, check_niceness, parse_open_set, thin_select
from .sequences import parse_sequence, split_top_level
from .verdict import VerdictKind
from .witnesses import (EvasionProblem, cb_builder, df_membership, dense_witness, diagonal_evade,
                        membership, split_witness)

SCHEMA = "charlimits.report/1"


class UsageError(Exception):
    pass


# option name -> (type, default); None defaults are filled per command
OPTIONS: dict[str, tuple] = {
    "group": (str, None),
    "seq": (str, None),
    "B": (str, None),
    "x": (str, "identity"),
    "q": (str, "identity"),
    "Q": (str, "identity"),
    "A": (str, "evens"),
    "A_target": (str, "0"),
    "B_set": (str, "odds"),
    "B_target": (str, "1/2"),
    "z": (str, "1/2"),
    "L": (int, 3),
    "r": (int, 4),
    "stride": (int, 3),
    "mode": (str, None),
    "seed": (int, 0),
    "horizon": (int, None),
    "depth": (int, None),
    "tol": (str, None),
    "eps": (str, "1"),
    "U": (str, None),
    "S": (str, None),
    "u": (str, "identity"),
    "samples": (int, 1000),
    "tau": (str, "1/10"),
    "beta": (str, "1/20"),
    "policy": (str, "prime"),
    "resolution": (int, 61),
}

COMMANDS = {
    "build": ("partition", "cbset"),
    "witness": ("split", "dense", "evade"),
    "member": ("cb", "wcb", "df"),
    "check": ("nice",),
    "experiment": ("weyl", "dfnull", "lemmeasure"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="charlimits",
                                description="Pointwise limits of characters on compact abelian groups.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command")
    for cmd, actions in COMMANDS.items():
        sp = sub.add_parser(cmd)
        sp.add_argument("action", choices=actions)
        sp.add_argument("--config", help="JSON file of option values; flags override it")
        sp.add_argument("--out", help="report path (default: stdout)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        for name, (typ, _) in OPTIONS.items():
            flag = {"A_target": "--a", "B_target": "--b", "B_set": "--Bset"}.get(name, f"--{name}")
            sp.add_argument(flag, dest=name, type=typ, default=None)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, then the config file, then explicit flags."""
    cfg = {k: d for k, (_, d) in OPTIONS.items()}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"{args.config}: cannot read config: {e}") from e
        if not isinstance(data, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
        unknown = sorted(set(data) - set(OPTIONS))
        if unknown:
            raise UsageError(f"{args.config}: unknown config field(s): {', '.join(unknown)}")
        for k, v in data.items():
            typ = OPTIONS[k][0]
            try:
                cfg[k] = typ(v)
            except (TypeError, ValueError) as e:
                raise UsageError(f"{args.config}: field {k}: {e}") from e
    for k in OPTIONS:
        v = getattr(args, k)
        if v is not None:
            cfg[k] = v
    if cfg["group"] is None:
        raise UsageError("--group is required")
    return cfg


def _need(cfg: dict, key: str, default=None):
    v = cfg.get(key)
    if v is None:
        if default is None:
            raise UsageError(f"--{key} is required")
        v = cfg[key] = default
    return v


def _frac(text: str) -> Fraction:
    return Fraction(text)


def _points(spec: GroupSpec, text: str):
    """Points separated by ``|``."""
    return [parse_point(spec, t) for t in text.split("|") if t.strip()]


def plan_mode(spec: GroupSpec) -> str:
    return "lacunary" if spec.kind is Kind.CIRCLE else "cover"


def _thin(spec: GroupSpec, stride: int, length: int):
    plan = build_nice_partition(spec, stride * (length - 1) + 2, circle_mode=plan_mode(spec))
    return thin_select(plan, stride, length)


# --- commands -------------------------------------------------------------------

def cmd_build(action: str, spec: GroupSpec, cfg: dict):
    depth = _need(cfg, "depth", 8)
    if action == "partition":
        mode = cfg.get("mode") or "cover"
        plan = build_nice_partition(spec, depth, circle_mode=mode)
        return plan.to_json(), True, None
    Q = _points(spec, cfg["Q"])
    res = cb_builder(Q, depth, spec)
    return res.to_json(), res.certificates.get("ok", False), None


def cmd_witness(action: str, spec: GroupSpec, cfg: dict):
    depth = _need(cfg, "depth", 12)
    if action == "evade":
        L = cfg["L"]
        deep = build_nice_partition(spec, 3 * depth + 2, circle_mode=plan_mode(spec))
        thin = thin_select(deep, 3, depth + 1)
        adversaries = tuple(tuple(deep.block(k).first() for k in range(ell, deep.depth + 1, L))
                            for ell in range(L))
        res = diagonal_evade(EvasionProblem(thin, adversaries, Angle.parse(cfg["z"]), depth))
        return res.to_json(), bool(res.certificates["trace_ok"]), None
    thin = _thin(spec, cfg["stride"], depth + 1)
    if action == "split":
        x, trace = split_witness(thin, parse_index_set(cfg["A"]), parse_index_set(cfg["B_set"]),
                                 Angle.parse(cfg["A_target"]), Angle.parse(cfg["B_target"]), depth)
    else:
        q = parse_point(spec, cfg["q"])
        x, trace = dense_witness(thin, q, cfg["r"], depth)
    ok = trace.failure is None and trace.recheck() and trace.telescoping_holds()
    if action == "dense":
        ok = ok and trace.extra["ball"]["certified"]
    return trace.to_json(), ok, None


def cmd_member(action: str, spec: GroupSpec, cfg: dict):
    seq_text = cfg.get("B") or cfg.get("seq")
    if not seq_text:
        raise UsageError("--B (or --seq) is required")
    horizon = _need(cfg, "horizon", 64)
    seq = parse_sequence(spec, seq_text)
    B = seq.prefix(horizon)
    x = parse_point(spec, cfg["x"])
    if action == "df":
        v = df_membership(x, B, horizon, _frac(cfg["tol"] or "1/4"))
    else:
        v = membership(x, B, action, horizon, _frac(cfg["tol"] or "1/10"))
    return v.to_json(), v.kind is not VerdictKind.INCONCLUSIVE, None


def cmd_check(action: str, spec: GroupSpec, cfg: dict):
    horizon = _need(cfg, "horizon", 50)
    U = parse_open_set(spec, _need(cfg, "U"))
    rep = check_niceness(spec, U, _frac(cfg["eps"]), horizon)
    return rep.to_json(), rep.verdict.value != "inconclusive", None


def cmd_experiment(action: str, spec: GroupSpec, cfg: dict):
    if action == "lemmeasure":
        gens = [parse_character(spec, g) for g in split_top_level(_need(cfg, "S"))]
        S = generate_subgroup(gens)
        res = lem_measure_check(spec, S, parse_point(spec, cfg["u"]))
        out = res.to_json()
        out["subgroup"] = [str(c) for c in S]
        return out, res.equal, None
    seq = cfg.get("seq") or cfg.get("B") or ("n!" if action == "dfnull" and spec.kind is Kind.CIRCLE
                                             else "n")
    cfg["seq"] = seq
    horizon = _need(cfg, "horizon", 1000 if action == "weyl" else 200)
    ec = ExperimentConfig(spec, seq, cfg["samples"], horizon, cfg["seed"], cfg["resolution"],
                          _frac(cfg["tau"]), _frac(cfg["beta"]), cfg["policy"],
                          _frac(cfg["tol"] or "1/4"))
    rep = weyl_experiment(ec) if action == "weyl" else df_null_experiment(ec)
    return rep.to_json(), rep.passed, rep.to_csv()


HANDLERS = {"build": cmd_build, "witness": cmd_witness, "member": cmd_member,
            "check": cmd_check, "experiment": cmd_experiment}


def _flat_csv(result: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in result.items():
        w.writerow([k, v if isinstance(v, (str, int, float, bool)) or v is None
                    else json.dumps(v, sort_keys=True)])
    return buf.getvalue()


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg = resolve(args)
        spec = GroupSpec.parse(cfg["group"])
        result, passed, rows_csv = HANDLERS[args.command](args.action, spec, cfg)
    except UsageError as e:
        print(f"charlimits: error: {e}", file=sys.stderr)
        return 1
    except SamplerDegeneracy as e:
        print(f"charlimits: sampler degeneracy guard: {e}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError) as e:
        print(f"charlimits: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    config = {k: v for k, v in cfg.items() if v is not None}
    report = {"schema": SCHEMA, "command": f"{args.command} {args.action}",
              "config": config, "passed": passed, "result": result}
    if args.format == "csv":
        text = rows_csv if rows_csv is not None else _flat_csv(result)
    else:
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.write_text(text)
        meta = {"schema": SCHEMA, "report": out.name, "version": __version__,
                "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
        Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    else:
        sys.stdout.write(text)
    return 0 if passed else 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
