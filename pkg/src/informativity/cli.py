"""Command-line front end.

Exit codes: 0 when the data are informative, a controller was synthesized or
verification passed; 2 when the answer is negative (not informative,
falsified), with the evidence in the output; 1 for malformed input or a
numerical failure, with a diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .analysis import (
    informative_controllability,
    informative_stability,
    informative_stabilizability,
    informative_sysid,
)
from .data import (
    DataSet,
    assemble,
    dataset_from_dict,
    dataset_to_dict,
    load_csv_dir,
    persistency_order,
)
from .dynamic_feedback import synth_io_feedback, synth_output_feedback
from .errors import InformativityError, NotInformative, RankConditionFailed
from .jsonutil import to_jsonable
from .lqr import LqrWeights, gain_from_data
from .numerics import get_tolerances, use_tolerances
from .oracle import Controller, SystemModel, consistent_set, simulate, verify_controller
from .state_feedback import deadbeat, stabilize_algebraic, stabilize_lmi

EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2

PROPERTIES = {
    "sysid": informative_sysid,
    "controllability": informative_controllability,
    "stabilizability": informative_stabilizability,
    "stability": informative_stability,
}
TASKS = ("stabilize", "deadbeat", "lqr", "output-feedback", "io-feedback")


class UsageError(Exception):
    pass


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc


def _load_data(path) -> DataSet:
    if os.path.isdir(path):
        return load_csv_dir(path)
    return dataset_from_dict(_read_json(path))


def _load_matrix(path):
    """Time-major signal from a JSON array or a CSV file (rows = time)."""
    if path.endswith(".csv"):
        return np.loadtxt(path, delimiter=",", ndmin=2)
    return np.asarray(_read_json(path), dtype=float)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_analyze(args):
    data = _load_data(args.data)
    verdict = PROPERTIES[args.property](assemble(data))
    return (EXIT_OK if verdict.informative else EXIT_NEGATIVE), verdict.to_json()


def _synth(args, data):
    task = args.task
    if task == "io-feedback":
        exp = data.single()
        if exp.y is None:
            raise UsageError("io-feedback needs output samples y")
        order = args.order if args.order is not None else data.n
        cert = synth_io_feedback(exp.u, exp.y, order, args.depth)
        return cert, Controller("compensator", cert.compensator.K, cert.compensator.L, cert.compensator.M)
    bm = assemble(data)
    if task == "stabilize":
        cert = (stabilize_lmi if args.method == "lmi" else stabilize_algebraic)(bm)
        return cert, Controller("gain", cert.K)
    if task == "deadbeat":
        cert = deadbeat(bm)
        return cert, Controller("deadbeat", cert.K)
    if task == "lqr":
        w = LqrWeights.from_json(_read_json(args.weights))
        cert = gain_from_data(bm, w)
        return cert, Controller("lq", cert.K, Q=w.Q, R=w.R)
    cert = synth_output_feedback(bm)
    return cert, Controller("compensator", cert.compensator.K, cert.compensator.L, cert.compensator.M)


def cmd_synth(args):
    data = _load_data(args.data)
    try:
        cert, ctrl = _synth(args, data)
    except NotInformative as exc:
        return EXIT_NEGATIVE, {"task": args.task, "informative": False, "reason": exc.reason,
                               "certificate": exc.certificate}
    except RankConditionFailed as exc:
        return EXIT_NEGATIVE, {"task": args.task, "informative": False, "reason": str(exc),
                               "certificate": {"achieved_rank": exc.achieved_rank,
                                               "required_rank": exc.required_rank}}
    return EXIT_OK, {"task": args.task, "informative": True, "controller": ctrl,
                     "certificate": cert}


def _controller_from_file(path):
    obj = _read_json(path)
    # accept the output of `synth` as well as a bare controller
    if "result" in obj and isinstance(obj["result"], dict):
        obj = obj["result"]
    if "controller" in obj:
        obj = obj["controller"]
    if "K" not in obj:
        raise UsageError(f"{path} holds no controller")
    return Controller.from_json(obj)


def cmd_verify(args):
    data = _load_data(args.data)
    ctrl = _controller_from_file(args.controller)
    param = consistent_set(assemble(data), with_outputs=ctrl.kind == "compensator")
    report = verify_controller(param, ctrl, args.samples, args.radius_bound, seed=args.seed)
    return (EXIT_OK if report.passed else EXIT_NEGATIVE), report.to_json()


def cmd_simulate(args):
    system = SystemModel.from_json(_read_json(args.system))
    u = _load_matrix(args.input)
    if u.ndim == 1:
        u = u.reshape(-1, system.m)
    x0 = np.asarray(_read_json(args.x0), dtype=float)
    exp = simulate(system, x0, u.T)
    return EXIT_OK, DataSet([exp], system.n, system.m, system.p)


def cmd_pe_order(args):
    data = _load_data(args.data)
    orders = [persistency_order(e.u.T) for e in data.experiments]
    return EXIT_OK, {"orders": orders, "order": min(orders)}


COMMANDS = {
    "analyze": cmd_analyze,
    "synth": cmd_synth,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "pe-order": cmd_pe_order,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _envelope(command, payload):
    meta = {"version": __version__, "tolerances": get_tolerances().as_dict()}
    if isinstance(payload, DataSet):
        # simulate emits a data file that the other commands read unchanged
        return {**dataset_to_dict(payload), **meta}
    return {**meta, "command": command, "result": to_jsonable(payload)}


def _flatten(prefix, obj, rows):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], rows)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}.{i}", v, rows)
    else:
        rows.append((prefix, obj))


def render(doc, fmt):
    if fmt == "json":
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"
    rows = []
    _flatten("", doc, rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    for key, value in rows:
        writer.writerow([key, value if isinstance(value, str) else json.dumps(value)])
    return buf.getvalue()


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rank-tol-scale", type=float, default=None,
                        help="multiplier of the default SVD rank threshold")
    common.add_argument("--stability-margin", type=float, default=None,
                        help="a matrix is stable when its spectral radius is below 1 - margin")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv"), default="json",
                        help="json document, or flattened key,value rows")
    common.add_argument("--output", "-o", default=None, help="write here instead of stdout")

    parser = argparse.ArgumentParser(prog="informativity", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="informativity for a system property")
    p.add_argument("--data", required=True)
    p.add_argument("--property", required=True, choices=sorted(PROPERTIES))

    p = sub.add_parser("synth", parents=[common], help="controller synthesis from data")
    p.add_argument("--data", required=True)
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--weights", help="JSON file with Q and R (lqr)")
    p.add_argument("--method", choices=("algebraic", "lmi"), default="algebraic")
    p.add_argument("--order", type=int, help="plant order n (io-feedback)")
    p.add_argument("--depth", type=int, help="Hankel depth k (io-feedback)")

    p = sub.add_parser("verify", parents=[common], help="falsification over the consistent set")
    p.add_argument("--data", required=True)
    p.add_argument("--controller", required=True)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--radius-bound", type=float, default=1.0)

    p = sub.add_parser("simulate", parents=[common], help="simulate a known system")
    p.add_argument("--system", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--x0", required=True)

    p = sub.add_parser("pe-order", parents=[common], help="persistency of excitation order")
    p.add_argument("--data", required=True)
    return parser


def _validate(args):
    if args.command == "synth":
        if args.task == "lqr" and not args.weights:
            raise UsageError("--weights is required for --task lqr")
        if args.task == "io-feedback" and args.depth is None:
            raise UsageError("--depth is required for --task io-feedback")
    if args.command == "verify" and args.samples < 0:
        raise UsageError("--samples must be nonnegative")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    if args.rank_tol_scale is not None:
        overrides["rank_scale"] = args.rank_tol_scale
    if args.stability_margin is not None:
        overrides["stability_margin"] = args.stability_margin
    try:
        _validate(args)
        with use_tolerances(**overrides):
            code, payload = COMMANDS[args.command](args)
            text = render(_envelope(args.command, payload), args.format)
    except (UsageError, InformativityError, ValueError, KeyError, OSError) as exc:
        print(f"informativity {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
