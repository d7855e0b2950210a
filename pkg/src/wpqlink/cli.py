"""Sweep runner for the rate-versus-t and optimum-versus-power experiments.

Usage::

    wpqlink run --preset fast --out fast.csv
    wpqlink run --spec my_sweep.json --backend povm_sdp --jobs 4
    wpqlink run --experiment optimal_vs_power --powers 0.1,1,10 --orders 2 --thermal 0,0.5

A spec file is a JSON object with the fields of :class:`SweepSpec`.
Preset values are overridden by the spec file, which is overridden by
command-line flags.

Output is CSV. Lines starting with ``#`` hold metadata (tool version,
timestamp, the resolved spec); everything after is the data table, which
is byte-identical across re-runs of the same spec.

Exit codes: 0 success, 1 some cells failed (or the run was interrupted),
2 invalid spec.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import json
import logging
import math
import signal
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .povm import SolverOptions
from .wpcn import ErrorBackend, SystemConfig, optimize_time_fraction

log = logging.getLogger(__name__)

EXPERIMENTS = ("rate_vs_t", "optimal_vs_power")
RATE_VS_T_COLUMNS = ["experiment", "M", "Na", "P", "backend", "t", "p_error", "rate", "status"]
OPTIMAL_COLUMNS = ["experiment", "M", "Na", "P", "backend", "t_star", "r_star", "p_error_star", "status"]

EXIT_OK, EXIT_PARTIAL, EXIT_INVALID = 0, 1, 2


class SpecError(ValueError):
    pass


@dataclass
class SweepSpec:
    experiment: str
    powers: list = field(default_factory=lambda: [1.0])
    orders: list = field(default_factory=lambda: [2])
    thermal: list = field(default_factory=lambda: [0.0])
    backend: str = "auto"
    n_cut: int = 40
    grid_points: int = 1000
    # grid size used for povm_sdp cells; None means grid_points
    sdp_grid_points: int | None = None
    channel_gain: float = 1.0
    trunc_tol: float = 1e-8
    output: str | None = None

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise SpecError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        for name in ("powers", "orders", "thermal"):
            if not isinstance(getattr(self, name), list) or not getattr(self, name):
                raise SpecError(f"{name} must be a non-empty list")
        try:
            self.powers = [float(p) for p in self.powers]
            self.orders = [int(m) for m in self.orders]
            self.thermal = [float(n) for n in self.thermal]
        except (TypeError, ValueError) as exc:
            raise SpecError(f"bad sweep value: {exc}") from None
        if min(self.powers) < 0 or min(self.orders) < 2 or min(self.thermal) < 0:
            raise SpecError("powers and thermal levels must be >= 0 and orders >= 2")
        if self.n_cut < 1 or self.grid_points < 1 or (self.sdp_grid_points is not None and self.sdp_grid_points < 1):
            raise SpecError("n_cut and grid sizes must be >= 1")
        if self.channel_gain <= 0:
            raise SpecError("channel_gain must be > 0")
        if self.backend != "auto":
            try:
                backend = ErrorBackend(self.backend)
            except ValueError:
                names = ", ".join(b.value for b in ErrorBackend)
                raise SpecError(f"unknown backend {self.backend!r}; expected auto or one of {names}") from None
            for m in self.orders:
                for n_a in self.thermal:
                    try:
                        backend.check(m, n_a)
                    except ValueError as exc:
                        raise SpecError(str(exc)) from None

    def backend_for(self, m: int, n_a: float) -> ErrorBackend:
        return ErrorBackend.auto(m, n_a) if self.backend == "auto" else ErrorBackend(self.backend)

    def grid_for(self, backend: ErrorBackend) -> int:
        if backend is ErrorBackend.POVM_SDP and self.sdp_grid_points:
            return self.sdp_grid_points
        return self.grid_points

    def cells(self):
        """(M, N_a, P) triples in output order."""
        return [(m, n_a, p) for m in self.orders for n_a in self.thermal for p in self.powers]

    def to_json(self) -> str:
        """The spec without its output path, which does not affect the results."""
        values = dataclasses.asdict(self)
        values.pop("output")
        return json.dumps(values, sort_keys=True)


_FIG2_POWERS = [10.0 ** (k / 2.0) for k in range(-4, 5)]

PRESETS = {
    "paper_fig1": dict(
        experiment="rate_vs_t", powers=[1.0], orders=[2, 8, 16, 32], thermal=[0.0, 0.5],
        n_cut=40, grid_points=1000, channel_gain=1.0,
    ),
    "paper_fig2": dict(
        experiment="optimal_vs_power", powers=_FIG2_POWERS, orders=[2, 8],
        thermal=[0.0, 0.25, 0.5, 1.0, 5.0], n_cut=40, grid_points=1000, channel_gain=1.0,
    ),
    "fast": dict(
        experiment="rate_vs_t", powers=[1.0], orders=[2, 8, 16, 32], thermal=[0.0, 0.5],
        n_cut=30, grid_points=200, sdp_grid_points=50, channel_gain=1.0,
    ),
}


def build_spec(preset: str | None = None, spec_file: str | None = None, **overrides) -> SweepSpec:
    """Merge preset, spec file and overrides (later wins) into a validated spec."""
    values: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise SpecError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    if spec_file is not None:
        try:
            data = json.loads(Path(spec_file).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecError(f"cannot read spec file {spec_file}: {exc}") from None
        if not isinstance(data, dict):
            raise SpecError("spec file must hold a JSON object")
        values.update(data)
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(SweepSpec)}
    unknown = set(values) - known
    if unknown:
        raise SpecError(f"unknown spec keys: {sorted(unknown)}")
    if "experiment" not in values:
        raise SpecError("spec has no experiment (give --preset or an 'experiment' key)")
    spec = SweepSpec(**values)
    spec.validate()
    return spec


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _run_cell(args):
    spec, m, n_a, p = args
    backend = spec.backend_for(m, n_a)
    config = SystemConfig(
        power=p, channel_gain=spec.channel_gain, thermal_photons=n_a, modulation_order=m,
        n_cut=spec.n_cut, grid_points=spec.grid_for(backend), trunc_tol=spec.trunc_tol,
        solver=SolverOptions(),
    )
    try:
        profile = optimize_time_fraction(config, backend)
    except Exception as exc:  # a broken cell must not abort the sweep
        return backend, None, f"{type(exc).__name__}: {exc}"
    if profile.argmax < 0:
        return backend, profile, "no grid point could be evaluated"
    return backend, profile, None


def _rows_rate_vs_t(m, n_a, p, backend, profile, error):
    base = ["rate_vs_t", m, n_a, p, backend.value]
    if profile is None or error is not None:
        return [base + [math.nan, math.nan, math.nan, "failed"]]
    rows = []
    for t, pe, r, bad in zip(profile.ts, profile.p_errors, profile.rates, profile.failed):
        rows.append(base + [float(t), float(pe), float(r), "failed" if bad else "ok"])
    rows.append(base + [profile.t_star, profile.p_error_star, profile.r_star, "summary"])
    return rows


def _rows_optimal(m, n_a, p, backend, profile, error):
    base = ["optimal_vs_power", m, n_a, p, backend.value]
    if profile is None or error is not None:
        return [base + [math.nan, math.nan, math.nan, "failed"]]
    return [base + [profile.t_star, profile.r_star, profile.p_error_star, "ok"]]


class _Interrupted(Exception):
    pass


def _raise_interrupt(signum, frame):
    raise _Interrupted()


def run_sweep(spec: SweepSpec, jobs: int = 1, out=None, gnuplot_dir: str | None = None, echo=True,
              echo_stream=None):
    """Run every cell of ``spec``, streaming rows in spec order.

    Returns ``(rows, n_failed_cells, interrupted)``; each row is a dict
    keyed by the experiment's CSV columns.
    """
    columns = RATE_VS_T_COLUMNS if spec.experiment == "rate_vs_t" else OPTIMAL_COLUMNS
    make_rows = _rows_rate_vs_t if spec.experiment == "rate_vs_t" else _rows_optimal
    writer = None
    if out is not None:
        out.write(f"# wpqlink {__version__}\n")
        out.write(f"# generated: {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n")
        out.write(f"# spec: {spec.to_json()}\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(columns)

    cells = spec.cells()
    tasks = [(spec, m, n_a, p) for m, n_a, p in cells]
    rows, n_failed, interrupted = [], 0, False
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 and len(tasks) > 1 else None
    results = pool.map(_run_cell, tasks) if pool else map(_run_cell, tasks)
    try:
        for (m, n_a, p), (backend, profile, error) in zip(cells, results):
            cell_rows = make_rows(m, n_a, p, backend, profile, error)
            if error is not None:
                n_failed += 1
                log.error("cell M=%d N_a=%g P=%g failed: %s", m, n_a, p, error)
            for r in cell_rows:
                rows.append(dict(zip(columns, r)))
                if writer is not None:
                    writer.writerow([_fmt(x) for x in r])
            if out is not None:
                out.flush()
            if echo:
                _print_summary(m, n_a, p, backend, profile, error, echo_stream or sys.stdout)
            if gnuplot_dir is not None and profile is not None and error is None:
                _write_gnuplot(gnuplot_dir, spec.experiment, m, n_a, p, profile)
    except (KeyboardInterrupt, _Interrupted):
        interrupted = True
        log.error("interrupted; completed rows were written")
    finally:
        if pool is not None:
            pool.shutdown(wait=not interrupted, cancel_futures=True)
    return rows, n_failed, interrupted


def _print_summary(m, n_a, p, backend, profile, error, stream):
    head = f"M={m:<3d} Na={n_a:<5g} P={p:<10.4g} {backend.value:<24s}"
    if error is not None or profile is None:
        print(f"{head} FAILED ({error})", file=stream)
        return
    extra = f"  [{profile.n_failed} grid points failed]" if profile.n_failed else ""
    if profile.at_boundary:
        extra += "  [argmax at grid boundary]"
    print(f"{head} t*={profile.t_star:.6f}  R*={profile.r_star:.6f}  Pe*={profile.p_error_star:.6g}{extra}",
          file=stream)


def _write_gnuplot(directory, experiment, m, n_a, p, profile):
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    name = path / f"{experiment}_M{m}_Na{n_a:g}_P{p:g}.dat"
    with open(name, "w") as fh:
        fh.write("# t p_error rate\n")
        for t, pe, r, bad in zip(profile.ts, profile.p_errors, profile.rates, profile.failed):
            if not bad:
                fh.write(f"{float(t)!r} {float(pe)!r} {float(r)!r}\n")


def _run_experiment(spec: SweepSpec, expected: str, jobs: int, out_path: str | None):
    if spec.experiment != expected:
        raise SpecError(f"spec.experiment is {spec.experiment!r}, expected {expected!r}")
    path = out_path or spec.output
    if path is None:
        rows, failed, _ = run_sweep(spec, jobs=jobs, echo=True)
        return rows
    with open(path, "w", newline="") as fh:
        rows, failed, _ = run_sweep(spec, jobs=jobs, out=fh, echo=True)
    return rows


def run_rate_vs_t(spec: SweepSpec, jobs: int = 1, out_path: str | None = None) -> list:
    """Rate-versus-t table: one row per grid point plus a summary row per cell."""
    return _run_experiment(spec, "rate_vs_t", jobs, out_path)


def run_optimal_vs_power(spec: SweepSpec, jobs: int = 1, out_path: str | None = None) -> list:
    """One row (t_star, r_star, p_error at optimum) per (M, N_a, P) cell."""
    return _run_experiment(spec, "optimal_vs_power", jobs, out_path)


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wpqlink", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a sweep")
    run.add_argument("--spec", help="JSON spec file")
    run.add_argument("--preset", choices=sorted(PRESETS))
    run.add_argument("--out", help="output CSV path (default: spec 'output', else stdout)")
    run.add_argument("--backend", choices=["auto"] + [b.value for b in ErrorBackend])
    run.add_argument("--jobs", type=int, default=1, help="worker processes for sweep cells")
    run.add_argument("--experiment", choices=EXPERIMENTS)
    run.add_argument("--powers", type=_float_list, help="comma-separated transmit powers")
    run.add_argument("--orders", type=_int_list, help="comma-separated modulation orders")
    run.add_argument("--thermal", type=_float_list, help="comma-separated thermal photon numbers")
    run.add_argument("--n-cut", dest="n_cut", type=int)
    run.add_argument("--grid-points", dest="grid_points", type=int)
    run.add_argument("--sdp-grid-points", dest="sdp_grid_points", type=int)
    run.add_argument("--channel-gain", dest="channel_gain", type=float)
    run.add_argument("--trunc-tol", dest="trunc_tol", type=float)
    run.add_argument("--gnuplot", metavar="DIR", help="also write per-cell column files to DIR")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in (
        "experiment", "powers", "orders", "thermal", "backend", "n_cut", "grid_points",
        "sdp_grid_points", "channel_gain", "trunc_tol")}
    try:
        spec = build_spec(args.preset, args.spec, **overrides)
    except (SpecError, TypeError) as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.out:
        spec.output = args.out

    previous = signal.signal(signal.SIGTERM, _raise_interrupt)
    try:
        if spec.output:
            with open(spec.output, "w", newline="") as fh:
                _, failed, interrupted = run_sweep(spec, jobs=args.jobs, out=fh, gnuplot_dir=args.gnuplot,
                                                   echo=True)
        else:
            _, failed, interrupted = run_sweep(spec, jobs=args.jobs, out=sys.stdout, gnuplot_dir=args.gnuplot,
                                               echo_stream=sys.stderr)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    finally:
        signal.signal(signal.SIGTERM, previous)
    return EXIT_PARTIAL if failed or interrupted else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
