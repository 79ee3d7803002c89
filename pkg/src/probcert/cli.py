"""Command-line front end.

Every command can be driven by a JSON job file (``--job``); flags given on
the command line override the corresponding job fields.  Reports, sample
CSVs and figures are written atomically into the ``--out`` directory.
Exit codes: 0 success, 2 sound but negative result, 1 error (with a JSON
error object on standard error).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ellipsoid import Ellipsoid, Model, sample
from .errors import ParseError, ProbCertError, SolverFailure
from .ip_solver import SolverConfig, Status
from .network import dumps_network, forward, gen_random_network, load_network
from .svg import render_svg_string
from .verify import (
    VerifyOptions,
    monte_carlo_coverage,
    propagate_confidence,
    verify_polytope,
)

COMMANDS = ("propagate", "verify", "sample", "gen-net", "plot")
DIGITS = 12


@dataclass(frozen=True)
class JobSpec:
    command: str
    network: str | None = None
    mu: list | None = None
    sigma: list | None = None
    p: float | None = None
    model: str = "gaussian"
    rows: list = field(default_factory=list)
    pairwise: bool = True
    tol: float | None = None
    seed: int = 0
    samples: int = 10_000
    out: str = "."
    dims: list | None = None
    report: str | None = None
    csv: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ParseError(f"unknown command {self.command!r}")
        if self.p is not None and not (0.0 <= self.p < 1.0):
            raise ParseError(f"p must lie in [0, 1), got {self.p}")
        Model(self.model)
        needs = {
            "propagate": ("network", "mu", "sigma", "p"),
            "verify": ("network", "mu", "sigma", "rows"),
            "sample": ("network", "mu", "sigma"),
            "gen-net": ("dims",),
            "plot": (),
        }[self.command]
        missing = [name for name in needs if not getattr(self, name)]
        if missing:
            raise ParseError(f"{self.command} needs: {', '.join(missing)}")
        if self.samples < 1:
            raise ParseError("samples must be at least 1")

    def options(self) -> VerifyOptions:
        solver = SolverConfig() if self.tol is None else SolverConfig(gap_tol=self.tol)
        return VerifyOptions(pairwise=self.pairwise, solver=solver)


# -- formatting and files --------------------------------------------------------

def _round(v: float) -> float:
    return float(f"{v:.{DIGITS}g}")


def _clean(obj):
    """Round floats to 12 significant digits; NaN and infinities become null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round(float(obj)) if math.isfinite(obj) else None
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_clean(report), indent=2) + "\n"


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rounded_ellipsoid(e: Ellipsoid) -> Ellipsoid:
    """The ellipsoid exactly as it is printed in a report."""
    center = np.array([_round(v) for v in e.center])
    shape = np.array([[_round(v) for v in row] for row in e.shape])
    return Ellipsoid(center, shape)


def samples_csv(x: np.ndarray, y: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{i}" for i in range(x.shape[1])] + [f"y{i}" for i in range(y.shape[1])])
    for xi, yi in zip(x, y):
        writer.writerow([f"{v:.{DIGITS}g}" for v in np.concatenate([xi, yi])])
    return buf.getvalue()


def read_samples_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ParseError("empty samples CSV")
    header = rows[0]
    nx = sum(1 for h in header if h.startswith("x"))
    data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float).reshape(-1, len(header))
    return data[:, :nx], data[:, nx:]


# -- job loading -----------------------------------------------------------------

_FLAG_FIELDS = ("network", "p", "model", "pairwise", "seed", "samples", "out", "tol", "dims",
                "report", "csv")


def _parse_rows(items) -> list:
    rows = []
    for item in items:
        if isinstance(item, dict):
            rows.append({"a": [float(v) for v in item["a"]], "c": float(item["c"])})
            continue
        try:
            normal, bound = str(item).split(":")
            rows.append({"a": [float(v) for v in normal.split(",")], "c": float(bound)})
        except ValueError:
            raise ParseError(f"half-space row must look like 'a0,a1,...:c', got {item!r}") from None
    return rows


def load_job(args: argparse.Namespace) -> JobSpec:
    fields: dict = {"command": args.command}
    base = Path(".")
    if args.job:
        path = Path(args.job)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read job file {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ParseError("job file must hold a JSON object")
        base = path.parent
        doc = dict(doc)
        doc.update(doc.pop("options", {}) or {})
        if doc.get("command", args.command) != args.command:
            raise ParseError(f"job file is for {doc['command']!r}, not {args.command!r}")
        doc.pop("command", None)
        for key in ("network", "report", "csv"):
            if doc.get(key) is not None:
                doc[key] = str(base / doc[key])
        unknown = set(doc) - set(JobSpec.__dataclass_fields__)
        if unknown:
            raise ParseError(f"unknown job fields: {', '.join(sorted(unknown))}")
        fields.update(doc)
    for name in _FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    if args.row:
        fields["rows"] = args.row
    fields["rows"] = _parse_rows(fields.get("rows", []))
    if isinstance(fields.get("dims"), str):
        fields["dims"] = [int(v) for v in fields["dims"].split(",")]
    try:
        return JobSpec(**fields)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ProbCertError):
            raise
        raise ParseError(str(exc)) from None


def _network(job: JobSpec):
    try:
        text = Path(job.network).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read network file {job.network}: {exc}") from None
    return load_network(text)


# -- commands --------------------------------------------------------------------

def _stage_reports(cert) -> list:
    out = []
    for k, diag in enumerate(cert.diagnostics):
        entry = {"index": k, **diag.to_dict()}
        if k < len(cert.stages):
            entry["logdet"] = cert.stages[k].logdet()
        out.append(entry)
    return out


def _figure(job: JobSpec, ellipses, points) -> bool:
    ellipses = [e for e in ellipses if e is not None]
    if any(e.dim != 2 for e in ellipses) or (len(points) and np.asarray(points).shape[1] != 2):
        return False
    write_atomic(Path(job.out) / "figure.svg", render_svg_string(ellipses, points))
    return True


def _forward_samples(job: JobSpec, net):
    x = sample((np.asarray(job.mu, dtype=float), np.asarray(job.sigma, dtype=float)), job.samples, job.seed)
    return x, forward(net, x)


def cmd_propagate(job: JobSpec) -> tuple[int, dict]:
    net = _network(job)
    try:
        cert = propagate_confidence(net, job.mu, job.sigma, job.p, job.model, job.options())
    except SolverFailure as exc:
        if exc.status is Status.INFEASIBLE:
            return 2, {"command": job.command, "status": exc.status.value, "stage": exc.stage,
                       "message": str(exc)}
        raise
    e_out = rounded_ellipsoid(cert.output)
    coverage = monte_carlo_coverage(net, job.mu, job.sigma, e_out, job.samples, job.seed, job.model)
    x, y = _forward_samples(job, net)
    write_atomic(Path(job.out) / "samples.csv", samples_csv(x, y))
    report = {
        "command": job.command,
        "status": Status.OPTIMAL.value,
        "p": job.p,
        "model": Model(job.model).value,
        "pairwise": job.pairwise,
        "ellipsoid": e_out.to_dict(),
        "logdet": e_out.logdet(),
        "p_star": None,
        "stages": _stage_reports(cert),
        "coverage": coverage,
        "samples": job.samples,
        "seed": job.seed,
    }
    report["figure"] = _figure(job, [e_out], y)
    return 0, report


def cmd_verify(job: JobSpec) -> tuple[int, dict]:
    net = _network(job)
    rows = [(np.asarray(r["a"], dtype=float), r["c"]) for r in job.rows]
    cert = verify_polytope(net, job.mu, job.sigma, rows, job.model, job.options())
    target = job.p if job.p is not None else 0.0
    verified = cert.p_star > 0.0 and cert.p_star >= target
    report = {
        "command": job.command,
        "status": "verified" if verified else "unverified",
        "model": Model(job.model).value,
        "pairwise": job.pairwise,
        "p": job.p,
        "p_star": cert.p_star,
        "rows": [{"a": r["a"], "c": r["c"], "p_star": p} for r, p in zip(job.rows, cert.row_p_star)],
        "ellipsoid": None if cert.output is None else cert.output.to_dict(),
        "stages": _stage_reports(cert),
        "coverage": None,
    }
    return (0 if verified else 2), report


def cmd_sample(job: JobSpec) -> tuple[int, dict]:
    net = _network(job)
    x, y = _forward_samples(job, net)
    path = Path(job.out) / "samples.csv"
    write_atomic(path, samples_csv(x, y))
    return 0, {"command": job.command, "samples": job.samples, "seed": job.seed, "csv": str(path)}


def cmd_gen_net(job: JobSpec) -> tuple[int, dict]:
    net = gen_random_network(job.seed, job.dims)
    path = Path(job.out) / "network.json"
    write_atomic(path, dumps_network(net) + "\n")
    return 0, {"command": job.command, "dims": list(net.dims), "seed": job.seed, "network": str(path)}


def cmd_plot(job: JobSpec) -> tuple[int, dict]:
    out = Path(job.out)
    report_path = Path(job.report) if job.report else out / "report.json"
    csv_path = Path(job.csv) if job.csv else out / "samples.csv"
    try:
        doc = json.loads(report_path.read_text())
        ellipse = Ellipsoid.from_dict(doc["ellipsoid"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"cannot read report {report_path}: {exc}") from None
    points = np.zeros((0, 2))
    if csv_path.exists():
        _, points = read_samples_csv(csv_path.read_text())
    path = out / "figure.svg"
    write_atomic(path, render_svg_string([ellipse], points))
    return 0, {"command": job.command, "figure": str(path)}


HANDLERS = {
    "propagate": cmd_propagate,
    "verify": cmd_verify,
    "sample": cmd_sample,
    "gen-net": cmd_gen_net,
    "plot": cmd_plot,
}


def run(job: JobSpec) -> int:
    """Execute a job, write its artifacts and return the exit code."""
    start = time.perf_counter()
    code, report = HANDLERS[job.command](job)
    out = Path(job.out)
    if job.command in ("propagate", "verify"):
        write_atomic(out / "report.json", dumps_report(report))
        # wall time lives beside the report so the report itself is reproducible byte for byte
        write_atomic(out / "timing.json", dumps_report({"wall_time_s": time.perf_counter() - start}))
    print(json.dumps(_clean({k: report.get(k) for k in ("command", "status", "p_star", "coverage")
                             if k in report})))
    return code


# -- argument parsing ----------------------------------------------------------------

def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probcert", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--job", help="JSON job file; flags override its fields")
    parser.add_argument("--net", dest="network", help="network JSON file")
    parser.add_argument("--p", type=float, help="confidence level in [0, 1)")
    parser.add_argument("--model", choices=[m.value for m in Model])
    parser.add_argument("--pairwise", type=_on_off, help="pairwise multipliers: on|off")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--samples", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--tol", type=float, help="barrier gap tolerance")
    parser.add_argument("--dims", help="layer widths for gen-net, e.g. 2,10,2")
    parser.add_argument("--row", action="append", help="half-space 'a0,a1,...:c' (repeatable)")
    parser.add_argument("--report", help="report JSON to plot")
    parser.add_argument("--csv", help="samples CSV to plot")
    return parser


def _error(exc: BaseException) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, SolverFailure):
        payload["stage"] = exc.stage
        payload["status"] = None if exc.status is None else exc.status.value
    print(json.dumps(payload), file=sys.stderr)
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return run(load_job(args))
    except (ProbCertError, OSError, ValueError) as exc:
        return _error(exc)


if __name__ == "__main__":
    sys.exit(main())
