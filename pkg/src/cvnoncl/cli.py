"""Command-line interface: monotone reports, conversion verdicts, region sweeps, protocol runs, self-test.

Exit codes: 0 success or feasible, 1 infeasible verdict or failed self-test,
2 input error, 3 truncation budget exceeded.
"""
import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import acceptance, fock, gaussian, protocols, schema
from .errors import CVError, TruncationError
from .monotones import monotone_report
from .schema import SchemaError

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3


@dataclass
class RunConfig:
    tolerance: Optional[float] = None
    budget: float = fock.DEFAULT_BUDGET
    seed: int = 0
    fmt: str = "json"
    out: Optional[str] = None
    cutoff: Optional[int] = None

    @classmethod
    def from_args(cls, args):
        fmt = args.format or getattr(args, "default_format", "json")
        return cls(args.tolerance, args.budget, args.seed, fmt, args.out, args.cutoff)


# output


def _clean(obj):
    """JSON-safe copy: arrays to lists, complex to [re, im], non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return schema.encode_complex(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def _render(doc, fmt, rows=None, header=None):
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def _emit(text, config):
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _report_rows(report):
    rows = []
    for fam in ("v", "w", "f", "g"):
        vals = getattr(report, fam)
        sums = getattr(report, fam.upper())
        rows += [[fam, k + 1, repr(float(x)), repr(float(s))] for k, (x, s) in enumerate(zip(vals, sums))]
    return rows


REPORT_HEADER = ["family", "k", "eigenvalue", "partial_sum"]


# state evaluation


def evaluate_state(spec, config, force_fock=False):
    """Covariance, QFI and provenance of a state spec."""
    if spec.is_gaussian and not force_fock:
        V = schema.gaussian_cov(spec)
        return V, gaussian.gaussian_qfi(V), {"path": "gaussian", "qfi": "Omega V^-1 Omega^T / 4"}
    state = schema.build_fock(spec, config.cutoff, config.budget)
    _, V = fock.quadrature_moments(state)
    prov = {"path": "fock", "cutoff": state.cutoff, "tail_mass": state.tail_mass, "budget": config.budget}
    return V, fock.qfi_matrix(state), prov


def cmd_monotones(args, config):
    spec = schema.load_state(args.state)
    V, F, prov = evaluate_state(spec, config, args.fock)
    report = monotone_report(V, F)
    doc = {
        "state": schema.serialize_state(spec),
        "provenance": prov,
        "covariance": schema.encode_matrix(V),
        "qfi_matrix": schema.encode_matrix(F),
        "monotones": report.to_dict(),
    }
    _emit(_render(doc, config.fmt, _report_rows(report), REPORT_HEADER), config)
    return EXIT_OK


def _gaussian_only(spec, path):
    if not spec.is_gaussian:
        raise SchemaError(f"{path}.kind", "conversion theorems are Gaussian-only")
    return schema.gaussian_cov(spec)


def _measures(V):
    m = gaussian.n_measures(V)
    return {"N1": m.n1, "N2": m.n2, "N3": m.n3, "v_plus": m.v_plus, "v_minus": m.v_minus}


def cmd_convert(args, config):
    src = schema.load_state(args.source, "source")
    tgt = schema.load_state(args.target, "target")
    Vs, Vt = _gaussian_only(src, "source"), _gaussian_only(tgt, "target")
    tol = gaussian.CONVERT_TOL if config.tolerance is None else config.tolerance
    doc = {"source": schema.serialize_state(src), "target": schema.serialize_state(tgt)}
    if Vs.shape == (2, 2) and Vt.shape == (2, 2):
        verdict = gaussian.convertible(Vs, Vt, args.regime, tol)
        doc["measures"] = {"source": _measures(Vs), "target": _measures(Vt)}
        doc["theorem"] = "single-mode Gaussian"
    else:
        try:
            s_src, s_tgt = gaussian.squeezing_spectrum(Vs), gaussian.squeezing_spectrum(Vt)
        except CVError as exc:
            raise SchemaError("source/target", f"multi-mode conversion needs pure states ({exc})") from exc
        verdict = gaussian.pure_convertible(s_src, s_tgt, tol)
        doc["squeezing"] = {"source": s_src, "target": s_tgt}
        doc["theorem"] = "pure multi-mode Gaussian"
    doc["verdict"] = verdict.to_dict()
    rows = [[c[0], repr(c[1]), repr(c[2]), c in verdict.certificates] for c in verdict.checked]
    _emit(_render(doc, config.fmt, rows, ["monotone", "source", "target", "violated"]), config)
    return EXIT_OK if verdict.feasible else EXIT_INFEASIBLE


def _grid(text, name):
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError as exc:
        raise SchemaError(f"--{name}", "expected LO:HI:N") from exc
    if n < 1 or hi < lo:
        raise SchemaError(f"--{name}", "need N >= 1 and HI >= LO")
    # rounding keeps grid labels like 0.3 readable in the CSV
    return np.round(np.linspace(lo, hi, n), 12)


def region_rows(V_source, vplus_grid, vminus_grid, tol=gaussian.CONVERT_TOL):
    """(v'+, v'-, reachable_p0, reachable_gpn) for every physical grid point with v'+ >= v'-."""
    rows = []
    for vp in vplus_grid:
        for vm in vminus_grid:
            if vm > vp or vp * vm < 0.25 - gaussian.PHYS_TOL:
                continue
            T = np.diag([vp, vm])
            rows.append(
                [
                    float(vp),
                    float(vm),
                    gaussian.convertible(V_source, T, gaussian.P0, tol).feasible,
                    gaussian.convertible(V_source, T, gaussian.GPN, tol).feasible,
                ]
            )
    return rows


def cmd_region(args, config):
    src = schema.load_state(args.source, "source")
    Vs = _gaussian_only(src, "source")
    if Vs.shape != (2, 2):
        raise SchemaError("source", "region sweeps need a single-mode source")
    tol = gaussian.CONVERT_TOL if config.tolerance is None else config.tolerance
    rows = region_rows(Vs, _grid(args.vplus, "vplus"), _grid(args.vminus, "vminus"), tol)
    header = ["v_plus", "v_minus", "reachable_p0", "reachable_gpn"]
    doc = {"source": schema.serialize_state(src), "columns": header, "rows": rows}
    text = _render(doc, config.fmt, [[repr(r[0]), repr(r[1]), str(r[2]).lower(), str(r[3]).lower()] for r in rows], header)
    _emit(text, config)
    return EXIT_OK


def _params(items):
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        try:
            out[key] = float(val)
        except ValueError:
            sep = ""
        if not sep:
            raise SchemaError(f"--param {item}", "expected NAME=NUMBER")
    return out


def _branch_report(branch, target, W1_in, config):
    post = branch.post_state
    entry = {"record": [protocols.outcome_key(r) for r in branch.record], "probability": branch.probability}
    if post is None:
        entry["post_state"] = None
        return entry
    _, V = fock.quadrature_moments(post)
    report = monotone_report(V, fock.qfi_matrix(post))
    entry.update(
        {
            "post_state": "pure" if isinstance(post, fock.FockPure) else "mixed",
            "n_modes": post.n_modes,
            "monotones": report.to_dict(),
            "W1_ratio": report.W[0] / W1_in if W1_in > 0 else None,
        }
    )
    if target is not None:
        tstate = schema.build_fock(target, post.cutoff, np.inf)
        entry["fidelity_to_target"] = fock.fidelity(post, tstate) if tstate.n_modes == post.n_modes else None
    return entry


def _run_gaussian_protocol(doc, spec, config):
    V = _gaussian_only(spec, "state")
    if V.shape != (2, 2):
        raise SchemaError("state", "homodyne feed-forward acts on one mode")
    _, params = doc.build()
    vp, vm = gaussian.eig_pair(V)
    res = gaussian.homodyne_feedforward(vp, vm, params["eta"])
    V_out = np.diag([res.v_plus, res.v_minus])
    return {
        "protocol": schema.serialize_protocol(doc),
        "state": schema.serialize_state(spec),
        "provenance": {"path": "gaussian"},
        "input": {"measures": _measures(V), "monotones": monotone_report(V, gaussian.gaussian_qfi(V)).to_dict()},
        "output": {
            "covariance": schema.encode_matrix(V_out),
            "gain": res.gamma,
            "measures": _measures(V_out),
            "monotones": monotone_report(V_out, gaussian.gaussian_qfi(V_out)).to_dict(),
        },
    }


def cmd_protocol(args, config):
    doc = schema.load_protocol(args.protocol)
    params = _params(args.param)
    if params:
        doc = doc.with_params(**params)
    spec = schema.load_state(args.state) if args.state else doc.default_input
    if spec is None:
        raise SchemaError("state", "protocol has no default input; pass --state")
    if spec.n_modes != doc.n_in:
        raise SchemaError("state", f"state has {spec.n_modes} modes but protocol {doc.name} takes {doc.n_in}")
    target = schema.load_state(args.target, "target") if args.target else doc.default_target
    if doc.kind == "gaussian":
        out = _run_gaussian_protocol(doc, spec, config)
        _emit(_render(out, "json"), config)
        return EXIT_OK
    state = schema.build_fock(spec, config.cutoff, config.budget)
    step = doc.build()
    branches = protocols.run_instrument(state, step)
    _, V_in = fock.quadrature_moments(state)
    report_in = monotone_report(V_in, fock.qfi_matrix(state))
    tol = protocols.MONO_TOL if config.tolerance is None else config.tolerance
    families = ("V", "W", "F", "G") if isinstance(state, fock.FockPure) else ("F", "G")
    verdicts = {}
    for fam in families:
        v = protocols.check_monotonicity(state, step, fam, tol, branches=branches)
        verdicts[fam] = {
            "holds": v.holds,
            "min_branch_slack": v.min_branch_slack,
            "ensemble_slack": v.ensemble_slack,
            "p0_slack": v.p0_slack,
            "skipped": [[protocols.outcome_key(r) for r in rec] for rec, _ in v.skipped],
        }
    out = {
        "protocol": schema.serialize_protocol(doc),
        "state": schema.serialize_state(spec),
        "provenance": {"path": "fock", "cutoff": state.cutoff, "tail_mass": state.tail_mass, "budget": config.budget},
        "input_monotones": report_in.to_dict(),
        "branches": [_branch_report(b, target, report_in.W[0], config) for b in branches],
        "total_probability": sum(b.probability for b in branches if not b.is_overflow),
        "monotonicity": verdicts,
    }
    if target is not None:
        out["target"] = schema.serialize_state(target)
    if config.fmt == "csv":
        rows = [
            ["/".join(e["record"]), repr(e["probability"]), e.get("post_state"), repr(e.get("fidelity_to_target"))]
            for e in out["branches"]
        ]
        _emit(_render(None, "csv", rows, ["record", "probability", "post_state", "fidelity_to_target"]), config)
    else:
        _emit(_render(out, "json"), config)
    return EXIT_OK


def cmd_selftest(args, config):
    try:
        numbers = acceptance.select(args.only)
    except ValueError as exc:
        raise SchemaError("--only", str(exc)) from exc
    results = []
    for k in numbers:
        res = acceptance.run_criterion(k, config.seed)
        print(res.line(), file=sys.stderr)
        results.append(res)
    passed = all(r.passed for r in results)
    doc = {"seed": config.seed, "passed": passed, "criteria": [r.to_dict() for r in results]}
    rows = [[r.number, r.title, "pass" if r.passed else "fail", r.summary] for r in results]
    _emit(_render(doc, config.fmt, rows, ["criterion", "title", "result", "summary"]), config)
    return EXIT_OK if passed else EXIT_INFEASIBLE


# argument parsing


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cutoff", type=int, help="Fock levels per mode (default: per state kind)")
    common.add_argument("--budget", type=float, default=fock.DEFAULT_BUDGET, help="allowed truncation tail mass")
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--format", choices=("json", "csv"), help="output format (default: csv for region, else json)")
    common.add_argument("--out", help="write the report to this path instead of stdout")
    common.add_argument("--tolerance", type=float, help="override the comparison tolerance")

    parser = argparse.ArgumentParser(prog="cvnoncl", description="Nonclassicality monotones for bosonic states.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("monotones", parents=[common], help="v, w, f, g spectra and partial sums of a state")
    p.add_argument("state", help="state spec as inline JSON or a path")
    p.add_argument("--fock", action="store_true", help="use the Fock path even for Gaussian kinds")
    p.set_defaults(func=cmd_monotones)

    p = sub.add_parser("convert", parents=[common], help="Gaussian convertibility verdict")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--regime", choices=("p0", "gpn"), default="p0", type=str.lower)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("region", parents=[common], help="sweep reachable (v'+, v'-) from a source")
    p.add_argument("source")
    p.add_argument("--vplus", default="0.5:3.0:26", help="LO:HI:N grid for v'+")
    p.add_argument("--vminus", default="0.05:1.0:20", help="LO:HI:N grid for v'-")
    p.set_defaults(func=cmd_region, default_format="csv")

    p = sub.add_parser("protocol", parents=[common], help="run a protocol and report every branch")
    p.add_argument("protocol", help=f"built-in name ({', '.join(schema.builtin_protocols())}) or a JSON path")
    p.add_argument("--state", help="input state spec (default: the protocol's default input)")
    p.add_argument("--target", help="state to report per-branch fidelity against")
    p.add_argument("--param", action="append", metavar="NAME=VALUE", help="override a protocol parameter")
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("selftest", parents=[common], help="run the acceptance criteria")
    p.add_argument("--only", help=f"comma-separated criterion numbers or tags ({', '.join(acceptance.TAGS)})")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    config = RunConfig.from_args(args)
    try:
        return args.func(args, config)
    except TruncationError as exc:
        print(f"truncation error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CVError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
