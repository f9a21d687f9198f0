"""Command-line front end.

Subcommands:

* ``validate`` - parse and validate a case file.
* ``pf``       - one power flow at zero inverter reactive output.
* ``run``      - solve selected dispatch problems, print/write summaries.
* ``oracle``   - brute-force setpoint scan for cross-checking.
* ``report``   - render comparison and per-bus CSVs from a results directory.

Exit codes: 0 success, 1 solver failure, 2 input error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .admittance import assemble_ybus
from .metrics import feeder_unbalance_summary, network_losses, \
    substation_power_factor, bus_unbalance
from .netmodel import CaseError, CaseValidationError, Network, load_case_file
from .opf import (ProblemKind, UnbalanceLimits, build_problem,
                  evaluate_solution, solve)
from .oracle import GridError, GridSpec, grid_search
from .powerflow import InjectionSet, PowerFlowError, solve_powerflow

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_INPUT = 2

P0_CODE = "P0_pf"
_ALL_CODES = [P0_CODE] + [k.code for k in ProblemKind]

SUMMARY_COLUMNS = ["Problem", "Loss [kW]", "cos_phi", "Q_avg [kVAR]",
                   "VUF avg [%]", "VUF max [%]", "LVUR avg [%]",
                   "LVUR max [%]", "PVUR avg [%]", "PVUR max [%]"]


def _parse_problems(text: str) -> list[str]:
    """Expand a comma list with P1..P5 style ranges into problem codes."""
    out: list[str] = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if ".." in token:
            lo, hi = token.split("..", 1)
            lo, hi = lo.strip(), hi.strip()
            if (len(lo) != 2 or len(hi) != 2 or lo[0] != "P" or hi[0] != "P"
                    or not lo[1].isdigit() or not hi[1].isdigit()):
                raise ValueError(f"bad problem range {token!r}")
            a, b = int(lo[1]), int(hi[1])
            if not (1 <= a <= b <= 5):
                raise ValueError(f"bad problem range {token!r}")
            out.extend(f"P{i}" for i in range(a, b + 1))
        elif token in _ALL_CODES:
            out.append(token)
        else:
            raise ValueError(f"unknown problem {token!r}")
    seen = set()
    uniq = []
    for code in out:
        if code not in seen:
            seen.add(code)
            uniq.append(code)
    if not uniq:
        raise ValueError("no problems selected")
    return uniq


def _load_solver_config(path: str | None) -> dict:
    """Read the [solver] section of an INI run-config file."""
    opts: dict = {}
    if path is None:
        return opts
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ValueError(f"config file {path!r} not found")
    if cp.has_section("solver"):
        sec = cp["solver"]
        if "tol" in sec:
            opts["tol"] = sec.getfloat("tol")
        if "feas_tol" in sec:
            opts["feas_tol"] = sec.getfloat("feas_tol")
        if "kkt_tol" in sec:
            opts["kkt_tol"] = sec.getfloat("kkt_tol")
        if "max_iter" in sec:
            opts["max_iter"] = sec.getint("max_iter")
        if "method" in sec:
            opts["method"] = sec.get("method")
    return opts


def _thread_cap() -> int:
    raw = os.environ.get("TPOPF_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt2(x: float) -> str:
    return f"{x:.2f}"


def _summary_row(code: str, row) -> list[str]:
    s = row.summary
    return [code, _fmt2(row.loss_kw), _fmt2(row.power_factor),
            _fmt2(row.q_avg_kvar),
            _fmt2(100.0 * s.vuf_avg), _fmt2(100.0 * s.vuf_max),
            _fmt2(100.0 * s.lvur_avg), _fmt2(100.0 * s.lvur_max),
            _fmt2(100.0 * s.pvur_avg), _fmt2(100.0 * s.pvur_max)]


def _print_table(header: list[str], rows: list[list[str]]) -> None:
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows
              else len(header[i]) for i in range(len(header))]
    line = "  ".join(h.ljust(widths[i]) for i, h in enumerate(header))
    print(line)
    print("  ".join("-" * w for w in widths))
    for r in rows:
        print("  ".join(r[i].ljust(widths[i]) for i in range(len(header))))


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    import csv
    import io
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _state_records(net: Network, sysadm, state) -> list[dict]:
    out = []
    for idx, (bus, phase) in enumerate(sysadm.nodes):
        out.append({"bus": bus, "phase": phase,
                    "vm_pu": float(state.vm[idx]),
                    "va_rad": float(state.va[idx])})
    return out


def _problem_payload(net: Network, sysadm, code: str, row, extra: dict) -> dict:
    s = row.summary
    payload = {
        "problem": code,
        "case": net.name,
        "status": row.status,
        "report": {
            "loss_kw": row.loss_kw,
            "cos_phi": row.power_factor,
            "q_avg_kvar": row.q_avg_kvar,
            "summary": {
                "vuf_avg": s.vuf_avg, "vuf_max": s.vuf_max,
                "vuf_max_bus": s.vuf_max_bus,
                "lvur_avg": s.lvur_avg, "lvur_max": s.lvur_max,
                "lvur_max_bus": s.lvur_max_bus,
                "pvur_avg": s.pvur_avg, "pvur_max": s.pvur_max,
                "pvur_max_bus": s.pvur_max_bus,
            },
        },
        "per_bus": {bid: {"vuf": v[0], "lvur": v[1], "pvur": v[2]}
                    for bid, v in row.per_bus.items()},
        "state": _state_records(net, sysadm, row.state),
    }
    payload.update(extra)
    return payload


def _solve_one(net: Network, code: str, limits: UnbalanceLimits,
               opts: dict):
    """Solve one problem code; returns (ReportRow, extra-json) or raises."""
    sysadm = assemble_ybus(net)
    if code == P0_CODE:
        res = solve_powerflow(net, sysadm,
                              InjectionSet.from_setpoints(net, sysadm),
                              tol=min(opts.get("feas_tol", 1e-6), 1e-8))
        state = res.state
        loss = network_losses(sysadm, state)
        pf = substation_power_factor(res.slack_p, res.slack_q)
        summary = feeder_unbalance_summary(net, sysadm, state)
        per_bus = bus_unbalance(net, sysadm, state)
        from .opf import ReportRow
        row = ReportRow(kind=None, status="converged", loss_kw=loss,
                        power_factor=pf, q_avg_kvar=0.0, summary=summary,
                        state=state, per_bus=per_bus)
        extra = {"iterations": res.iterations,
                 "q_inv_kvar": [0.0] * len(net.inverters),
                 "p_slack_kw": [float(v) * net.s_base for v in res.slack_p],
                 "q_slack_kvar": [float(v) * net.s_base for v in res.slack_q]}
        return row, extra
    kind = ProblemKind.from_code(code)
    prob = build_problem(net, kind, limits, sysadm=sysadm)
    sol = solve(prob, feas_tol=opts.get("feas_tol", 1e-6),
                kkt_tol=opts.get("kkt_tol", 1e-6),
                max_iter=opts.get("max_iter", 300),
                method=opts.get("method", "ipm"))
    if sol.status != "optimal":
        raise RuntimeError(f"{code}: solver stopped with status "
                           f"{sol.status!r} ({sol.message or 'no detail'})")
    row = evaluate_solution(net, sol, sysadm)
    extra = {"objective": sol.objective,
             "iterations": sol.iterations,
             "kkt": sol.kkt,
             "solver_status": sol.status,
             "q_inv_kvar": [float(v) * net.s_base for v in sol.q_inv],
             "p_slack_kw": [float(v) * net.s_base for v in sol.p_slack],
             "q_slack_kvar": [float(v) * net.s_base for v in sol.q_slack]}
    return row, extra


def _cmd_validate(args) -> int:
    try:
        net = load_case_file(args.case)
    except CaseValidationError as exc:
        for v in exc.violations:
            print(str(v), file=sys.stderr)
        return EXIT_INPUT
    except (CaseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"{args.case}: ok ({net.n_b} buses, {len(net.branches)} lines, "
          f"{net.n_l} loads, {net.n_g} inverters)")
    return EXIT_OK


def _cmd_pf(args) -> int:
    try:
        net = load_case_file(args.case)
    except (CaseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sysadm = assemble_ybus(net)
    try:
        res = solve_powerflow(net, sysadm,
                              InjectionSet.from_setpoints(net, sysadm),
                              tol=args.tol, max_iter=args.max_iter)
    except PowerFlowError as exc:
        print(f"power flow failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    state = res.state
    if args.format == "json":
        loss = network_losses(sysadm, state)
        summary = feeder_unbalance_summary(net, sysadm, state)
        print(json.dumps({
            "case": net.name,
            "status": "converged",
            "iterations": res.iterations,
            "residual_pu": res.residual,
            "loss_kw": loss,
            "cos_phi": substation_power_factor(res.slack_p, res.slack_q),
            "vuf_max": summary.vuf_max,
            "lvur_max": summary.lvur_max,
            "pvur_max": summary.pvur_max,
            "state": _state_records(net, sysadm, state),
        }, indent=1))
        return EXIT_OK
    print(f"converged in {res.iterations} iterations "
          f"(residual {res.residual:.2e} pu)")
    header = ["node", "V [pu]", "angle [deg]"]
    rows = [[f"{bus}.{ph}", f"{state.vm[i]:.5f}",
             f"{math.degrees(state.va[i]):.3f}"]
            for i, (bus, ph) in enumerate(sysadm.nodes)]
    _print_table(header, rows)
    loss = network_losses(sysadm, state)
    pf = substation_power_factor(res.slack_p, res.slack_q)
    summary = feeder_unbalance_summary(net, sysadm, state)
    print(f"\nloss {loss:.2f} kW, cos_phi {pf:.2f}, "
          f"max VUF {100 * summary.vuf_max:.2f}%, "
          f"max LVUR {100 * summary.lvur_max:.2f}%, "
          f"max PVUR {100 * summary.pvur_max:.2f}%")
    return EXIT_OK


def _cmd_run(args) -> int:
    try:
        problems = _parse_problems(args.problems)
        cfg = _load_solver_config(args.config)
        net = load_case_file(args.case)
    except CaseValidationError as exc:
        for v in exc.violations:
            print(str(v), file=sys.stderr)
        return EXIT_INPUT
    except (CaseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    limits = UnbalanceLimits(u_vuf=args.u_vuf, u_pvur=args.u_pvur,
                             u_lvur=args.u_lvur)
    feas_tol = kkt_tol = cfg.get("tol", 1e-6)
    feas_tol = cfg.get("feas_tol", feas_tol)
    kkt_tol = cfg.get("kkt_tol", kkt_tol)
    max_iter = cfg.get("max_iter", 300)
    method = cfg.get("method", "ipm")
    if args.tol is not None:
        feas_tol = kkt_tol = args.tol
    if args.max_iter is not None:
        max_iter = args.max_iter
    if args.method is not None:
        method = args.method
    if method not in ("ipm", "auglag"):
        print(f"error: unknown method {method!r}", file=sys.stderr)
        return EXIT_INPUT
    opts = {"feas_tol": feas_tol, "kkt_tol": kkt_tol,
            "max_iter": max_iter, "method": method}

    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    for f in formats:
        if f not in ("table", "csv", "json"):
            print(f"error: unknown format {f!r}", file=sys.stderr)
            return EXIT_INPUT

    results: dict[str, tuple] = {}
    failures: dict[str, str] = {}

    def work(code: str):
        try:
            return code, _solve_one(net, code, limits, opts), None
        except Exception as exc:
            return code, None, f"{type(exc).__name__}: {exc}"

    threads = min(_thread_cap(), len(problems))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, problems))
    else:
        outcomes = [work(code) for code in problems]
    for code, out, err in outcomes:
        if err is None:
            results[code] = out
        else:
            failures[code] = err

    rows = []
    for code in problems:
        if code in results:
            row, _ = results[code]
            rows.append(_summary_row(code, row))
        else:
            rows.append([code] + ["-"] * (len(SUMMARY_COLUMNS) - 1))
    if "table" in formats:
        _print_table(SUMMARY_COLUMNS, rows)
    for code, msg in failures.items():
        print(f"{code}: FAILED: {msg}", file=sys.stderr)

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        sysadm = assemble_ybus(net)
        for code, (row, extra) in results.items():
            payload = _problem_payload(net, sysadm, code, row, extra)
            _atomic_write(os.path.join(args.out, f"{code}.json"),
                          json.dumps(payload, indent=1))
        _atomic_write(os.path.join(args.out, "summary.csv"),
                      _csv_text(SUMMARY_COLUMNS, rows))
        if "json" in formats:
            _atomic_write(os.path.join(args.out, "summary.json"),
                          json.dumps([dict(zip(SUMMARY_COLUMNS, r))
                                      for r in rows], indent=1))
    elif "csv" in formats or "json" in formats:
        print("note: --out not given, only the table was emitted",
              file=sys.stderr)

    return EXIT_SOLVER if failures else EXIT_OK


def _cmd_oracle(args) -> int:
    try:
        problems = _parse_problems(args.problems)
        net = load_case_file(args.case)
    except (CaseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    limits = UnbalanceLimits(u_vuf=args.u_vuf, u_pvur=args.u_pvur,
                             u_lvur=args.u_lvur)
    sysadm = assemble_ybus(net)
    spec = GridSpec(n_points=args.grid_points)
    status = EXIT_OK
    records = []
    for code in problems:
        if code == P0_CODE:
            print(f"{code}: skipped (oracle scans optimization problems)",
                  file=sys.stderr)
            continue
        kind = ProblemKind.from_code(code)
        try:
            res = grid_search(net, kind, spec, limits, sysadm=sysadm)
        except GridError as exc:
            print(f"{code}: {exc}", file=sys.stderr)
            status = EXIT_SOLVER
            continue
        q = ", ".join(f"{v:.3f}" for v in res.q_kvar)
        print(f"{code}: objective {res.objective:.8e} at q = [{q}] kVAR "
              f"({res.evaluated} points, {res.failed} diverged)")
        records.append({"problem": code, "objective": res.objective,
                        "q_kvar": [float(v) for v in res.q_kvar],
                        "evaluated": res.evaluated, "failed": res.failed})
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _atomic_write(os.path.join(args.out, "oracle.json"),
                      json.dumps(records, indent=1))
    return status


def _cmd_report(args) -> int:
    if not os.path.isdir(args.results):
        print(f"error: results directory {args.results!r} not found",
              file=sys.stderr)
        return EXIT_INPUT
    payloads = []
    for name in sorted(os.listdir(args.results)):
        if not name.endswith(".json") or name in ("summary.json",
                                                  "oracle.json"):
            continue
        try:
            with open(os.path.join(args.results, name)) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error reading {name}: {exc}", file=sys.stderr)
            return EXIT_INPUT
        if "problem" in doc and "report" in doc:
            payloads.append(doc)
    if not payloads:
        print("error: no problem results found", file=sys.stderr)
        return EXIT_INPUT
    payloads.sort(key=lambda d: d["problem"])

    out_dir = args.out or args.results
    os.makedirs(out_dir, exist_ok=True)

    rows = []
    for doc in payloads:
        rep = doc["report"]
        s = rep["summary"]
        rows.append([doc["problem"], _fmt2(rep["loss_kw"]),
                     _fmt2(rep["cos_phi"]), _fmt2(rep["q_avg_kvar"]),
                     _fmt2(100.0 * s["vuf_avg"]), _fmt2(100.0 * s["vuf_max"]),
                     _fmt2(100.0 * s["lvur_avg"]), _fmt2(100.0 * s["lvur_max"]),
                     _fmt2(100.0 * s["pvur_avg"]), _fmt2(100.0 * s["pvur_max"])])
    comparison = _csv_text(SUMMARY_COLUMNS, rows)
    _atomic_write(os.path.join(out_dir, "comparison.csv"), comparison)
    _print_table(SUMMARY_COLUMNS, rows)

    per_bus_header = ["bus", "V_a", "V_b", "V_c", "theta_a", "theta_b",
                      "theta_c", "VUF [%]", "LVUR [%]", "PVUR [%]"]
    for doc in payloads:
        by_bus: dict[str, dict[str, tuple[float, float]]] = {}
        order: list[str] = []
        for recd in doc["state"]:
            b = recd["bus"]
            if b not in by_bus:
                by_bus[b] = {}
                order.append(b)
            by_bus[b][recd["phase"]] = (recd["vm_pu"], recd["va_rad"])
        rows = []
        for b in order:
            vals = by_bus[b]
            row = [b]
            for ph in "abc":
                row.append(f"{vals[ph][0]:.5f}" if ph in vals else "")
            for ph in "abc":
                row.append(f"{math.degrees(vals[ph][1]):.3f}"
                           if ph in vals else "")
            met = doc.get("per_bus", {}).get(b)
            if met is not None:
                row.extend([_fmt2(100.0 * met["vuf"]),
                            _fmt2(100.0 * met["lvur"]),
                            _fmt2(100.0 * met["pvur"])])
            else:
                row.extend(["", "", ""])
            rows.append(row)
        path = os.path.join(out_dir, f"per_bus_{doc['problem']}.csv")
        _atomic_write(path, _csv_text(per_bus_header, rows))
    print(f"wrote comparison.csv and per-bus CSVs to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tpopf",
        description="Unbalanced feeder power flow and reactive dispatch.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="parse and validate a case file")
    p_val.add_argument("case")
    p_val.set_defaults(func=_cmd_validate)

    p_pf = sub.add_parser("pf", help="run one power flow at zero setpoints")
    p_pf.add_argument("case")
    p_pf.add_argument("--tol", type=float, default=1e-8)
    p_pf.add_argument("--max-iter", type=int, default=50)
    p_pf.add_argument("--format", choices=["table", "json"], default="table")
    p_pf.set_defaults(func=_cmd_pf)

    p_run = sub.add_parser("run", help="solve dispatch problems")
    p_run.add_argument("case")
    p_run.add_argument("--problems", default="P1..P5",
                       help="comma list, e.g. P0_pf,P1,P3..P5")
    p_run.add_argument("--u-vuf", type=float, default=0.02)
    p_run.add_argument("--u-pvur", type=float, default=0.02)
    p_run.add_argument("--u-lvur", type=float, default=0.03)
    p_run.add_argument("--tol", type=float, default=None,
                       help="sets both feas_tol and kkt_tol")
    p_run.add_argument("--max-iter", type=int, default=None)
    p_run.add_argument("--method", choices=["ipm", "auglag"], default=None)
    p_run.add_argument("--config", default=None,
                       help="INI file with a [solver] section")
    p_run.add_argument("--out", default=None, help="results directory")
    p_run.add_argument("--format", default="table",
                       help="comma list of table,csv,json")
    p_run.set_defaults(func=_cmd_run)

    p_or = sub.add_parser("oracle", help="brute-force setpoint scan")
    p_or.add_argument("case")
    p_or.add_argument("--problems", default="P1")
    p_or.add_argument("--grid-points", type=int, default=11)
    p_or.add_argument("--u-vuf", type=float, default=0.02)
    p_or.add_argument("--u-pvur", type=float, default=0.02)
    p_or.add_argument("--u-lvur", type=float, default=0.03)
    p_or.add_argument("--out", default=None)
    p_or.set_defaults(func=_cmd_oracle)

    p_rep = sub.add_parser("report", help="render CSVs from a results dir")
    p_rep.add_argument("results")
    p_rep.add_argument("--out", default=None)
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits for --help/--version (0) and usage errors (2);
        # return the code so embedders never see the exception
        return int(exc.code or 0)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
