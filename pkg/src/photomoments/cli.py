"""Command-line interface.

Subcommands: ``curves``, ``simulate``, ``reconstruct``, ``fit``, ``range`` and
``klyshko``.  Exit status is 0 on success, 1 for usage or schema errors and 2
for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as pio
from ._validation import UndefinedEstimateError
from .detection import (
    TwinBeamConfig,
    estimate_g_from_counts,
    estimate_mean,
    klyshko_efficiency,
    tmd_estimate_g,
    tmd_sample,
)
from .displaced import DisplacedStateModel, exact_statistics, g_eff_grid, g_ideal
from .fock import make_fock
from .inference import (
    OverlapRegressor,
    classicality_violations,
    ordering_artifact_range,
    reliable_range,
    truncation_bound,
    truncation_range,
)
from .moments import NormalizedMoments, reconstruct_all, reconstruction_uncertainty

log = logging.getLogger("photomoments")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    return values


def _emit(args, name, text):
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _rows_to_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def cmd_curves(args):
    if args.b_grid is not None:
        grid = np.asarray(args.b_grid, dtype=float)
    else:
        if args.points < 1:
            raise UsageError("--points must be positive")
        grid = np.linspace(0.0, args.b_max, args.points)
    if grid.size == 0:
        raise UsageError("displacement grid is empty")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise UsageError("displacement grid values must be finite and non-negative")
    m_max = args.m_max or 5
    fock1 = make_fock(1)
    rows = []
    for overlap in args.overlaps:
        if overlap == 1.0:
            g = np.array([[g_ideal(m, b) for m in range(2, m_max + 1)] for b in grid])
        else:
            g = g_eff_grid(fock1, overlap, grid, m_max)
        for b, gv in zip(grid, g):
            rows.append([overlap, b, 1.0 + b, *gv])
    header = ["overlap", "disp_sq", "mean"] + [f"g{m}" for m in range(2, m_max + 1)]
    if args.format == "json":
        _emit(args, "curves.json", pio.dumps([dict(zip(header, r)) for r in rows]))
    else:
        _emit(args, "curves.csv", _rows_to_csv(header, rows))
    if args.plot:
        _plot_curves(args, header, rows, m_max)
    return 0


def _plot_curves(args, header, rows, m_max):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise UsageError("--plot needs matplotlib (pip install artifact[plot])")
    data = np.array(rows, dtype=float)
    overlaps = sorted(set(data[:, 0]), reverse=True)
    fig, axes = plt.subplots(1, len(overlaps), figsize=(4.5 * len(overlaps), 3.5), squeeze=False)
    for ax, overlap in zip(axes[0], overlaps):
        sel = data[data[:, 0] == overlap]
        for k in range(m_max - 1):
            ax.plot(sel[:, 2], sel[:, 3 + k], label=f"g({k + 2})")
        ax.axhline(1.0, ls="--", color="0.5", lw=0.8)
        ax.set_xlabel("mean photon number")
        ax.set_title(f"overlap = {overlap:g}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    fig.savefig(out / "curves.svg")
    plt.close(fig)


def _crossing(x, y, level):
    """First ``x`` where ``y`` rises through ``level`` (linear interpolation)."""
    for i in range(len(x) - 1):
        if y[i] < level <= y[i + 1]:
            return float(x[i] + (level - y[i]) * (x[i + 1] - x[i]) / (y[i + 1] - y[i]))
    return None


def run_scenario(scenario: pio.Scenario, n_jobs=None) -> dict:
    """Simulate click records over the displacement grid and analyse them."""
    det = scenario.detector
    calibration = {"source": "detector", "eta": det.eta}
    klyshko = None
    if scenario.twin_beam is not None:
        result = klyshko_efficiency(scenario.twin_beam, n_jobs=n_jobs)
        klyshko = result.to_dict()
        calibration = {"source": "klyshko", "eta": result.efficiency}
    if calibration["eta"] <= 0:
        raise UndefinedEstimateError("calibrated efficiency is not positive")
    children = np.random.SeedSequence(scenario.seed).spawn(len(scenario.disp_sq))
    points = []
    for b, child in zip(scenario.disp_sq, children):
        model = DisplacedStateModel(scenario.source, scenario.overlap, b)
        stats = exact_statistics(model)
        seed = int(child.generate_state(1)[0])
        counts = tmd_sample(stats, det, scenario.trials, seed, n_jobs=n_jobs)
        model_g = g_eff_grid(scenario.source, scenario.overlap, [b], scenario.m_max)[0]
        entries, est, err = [], [], []
        for m in range(2, scenario.m_max + 1):
            value, stderr = estimate_g_from_counts(counts, m)
            est.append(value)
            err.append(stderr)
            entries.append({
                "m": m,
                "estimate": value,
                "stderr": stderr,
                "detector_exact": tmd_estimate_g(stats, det, m),
                "model": float(model_g[m - 2]),
            })
        mean_est = estimate_mean(counts, calibration["eta"])
        report = classicality_violations(NormalizedMoments(np.clip(est, 0, None), max(mean_est, 1e-300), err))
        points.append({
            "disp_sq": b,
            "mean_model": model.source_mean + b,
            "mean_estimate": mean_est,
            "seed": seed,
            "singles": counts.singles.tolist(),
            "g": entries,
            "nonclassical": report.nonclassical,
            "violations": [f"{v.kind}:{v.m}" for v in report.violations],
        })
    points.sort(key=lambda p: p["mean_model"])
    g2 = [p["g"][0]["estimate"] for p in points]
    diff = [p["g"][1]["estimate"] - p["g"][0]["estimate"] for p in points] if scenario.m_max >= 3 else None
    crossings = {}
    for axis in ("mean_model", "mean_estimate"):
        x = [p[axis] for p in points]
        crossings[axis] = {"g2_reaches_1": _crossing(x, g2, 1.0)}
        if diff is not None:
            crossings[axis]["g3_reaches_g2"] = _crossing(x, diff, 0.0)
    return {
        "schema_version": pio.SCHEMA_VERSION,
        "source": None if scenario.source_spec is None else scenario.source_spec.to_dict(),
        "overlap": scenario.overlap,
        "detector": det.to_dict(),
        "trials": scenario.trials,
        "seed": scenario.seed,
        "calibration": calibration,
        "klyshko": klyshko,
        "points": points,
        "crossings": crossings,
    }


def cmd_simulate(args):
    data = pio.load_json(args.scenario)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.m_max is not None:
        data.setdefault("analysis", {})["m_max"] = args.m_max
    scenario = pio.scenario_from_dict(data)
    result = run_scenario(scenario, n_jobs=args.jobs)
    _emit(args, "simulation.json", pio.dumps(result))
    return 0


def cmd_reconstruct(args):
    g = pio.moments_from_dict(pio.load_json(args.moments))
    if args.mean is not None:
        g = NormalizedMoments(g.g, args.mean, g.errors, g.mean_error)
    if args.m_max is not None:
        g = g.truncate(args.m_max)
    rec = reconstruct_all(g)
    err = reconstruction_uncertainty(g)
    rows = [[n, float(p), float(e), n in rec.violations] for n, (p, e) in enumerate(zip(rec.probs, err))]
    header = ["n", "rho", "stderr", "unphysical"]
    if args.format == "json":
        _emit(args, "reconstruction.json", pio.dumps({
            "mean": g.mean, "m_max": g.m_max, "physical": rec.physical,
            "rows": [dict(zip(header, r)) for r in rows],
        }))
    else:
        _emit(args, "reconstruction.csv", _rows_to_csv(header, rows))
    return 0


def cmd_fit(args):
    dataset = pio.read_dataset_csv(Path(args.dataset).read_text(encoding="utf-8"))
    if args.source is None:
        source = make_fock(1)
    elif Path(args.source).exists():
        source = pio.source_from_dict(pio.load_json(args.source))
    else:
        try:
            source = pio.source_from_dict(json.loads(args.source))
        except json.JSONDecodeError as exc:
            raise pio.SchemaError(f"--source is neither a file nor JSON: {exc.msg}") from None
    reg = OverlapRegressor(source=source).fit(dataset.means[:, None], dataset.g, sigma=dataset.errors)
    _emit(args, "fit.json", pio.dumps(reg.fit_result_.to_dict()))
    return 0


def cmd_range(args):
    model = pio.model_from_dict(pio.load_json(args.model))
    m_max = args.m_max or 4
    g = g_eff_grid(model.source, model.overlap, [model.disp_sq], 4)[0]
    result = {
        "m_max": m_max,
        "model_mean": model.source_mean + model.disp_sq,
        "truncation_bound_at_model": truncation_bound(g[1], g[2]),
        "truncation_range": truncation_range(model.source, model.overlap, m_max).to_dict(),
        "reliable_range": reliable_range(model, m_max).to_dict(),
        "ordering_artifact_range": ordering_artifact_range(model, m_max).to_dict(),
    }
    _emit(args, "range.json", pio.dumps(result))
    return 0


def cmd_klyshko(args):
    cfg = TwinBeamConfig(args.squeeze, args.eta_signal, args.eta_herald, args.trials,
                         args.seed if args.seed is not None else 0)
    _emit(args, "klyshko.json", pio.dumps(klyshko_efficiency(cfg, n_jobs=args.jobs).to_dict()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="write results into DIR instead of stdout")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--m-max", type=int, metavar="K", dest="m_max")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--jobs", type=int, default=None, help="worker threads for sampling")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="photomoments", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("curves", parents=[common], help="normalized moments of displaced single photons")
    p.add_argument("--b-max", type=float, default=10.0, help="largest |alpha|^2 of the default grid")
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--b-grid", type=_float_list, default=None, help="explicit comma-separated |alpha|^2 values")
    p.add_argument("--overlaps", type=_float_list, default=[1.0, 0.0])
    p.add_argument("--plot", action="store_true", help="also render curves.svg")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("simulate", parents=[common], help="run a JSON scenario through the click detector")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", parents=[common], help="photon statistics from normalized moments")
    p.add_argument("moments")
    p.add_argument("--mean", type=float, default=None)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("fit", parents=[common], help="fit the mode overlap to a moment dataset")
    p.add_argument("dataset")
    p.add_argument("--source", default=None, help="source JSON file or inline JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("range", parents=[common], help="reconstruction-range bounds of a model")
    p.add_argument("model")
    p.set_defaults(func=cmd_range)

    p = sub.add_parser("klyshko", parents=[common], help="Monte Carlo Klyshko efficiency calibration")
    p.add_argument("--squeeze", type=float, default=0.1)
    p.add_argument("--eta-signal", type=float, default=0.3)
    p.add_argument("--eta-herald", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=10_000_000)
    p.set_defaults(func=cmd_klyshko)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"photomoments: error: {exc}", file=sys.stderr)
        return 1
    except (UndefinedEstimateError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"photomoments: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, OSError) as exc:
        print(f"photomoments: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
