"""Command-line runner: ``dsar simulate | image | analyze | verify``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from dsar import canonical as cn
from dsar import fileio
from dsar.config import ConfigError, ScenarioConfig, load
from dsar.errors import FormatError, NumericalError
from dsar.forward import Window, linearized_forward, oracle_grid, spectrum_decay_threshold
from dsar.geometry import CircularPath, LinearPath
from dsar.imaging import artifact_metrics, backproject
from dsar.verify import COUNTEREXAMPLE, SUITES, run_suite

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="scenario JSON (schema dsar-config/1)")
    parser.add_argument("--out", default=default, help="output directory (overrides the config)")
    parser.add_argument("--threads", type=int, default=default, help="worker threads")
    parser.add_argument("--seed", type=int, default=default, help="RNG seed for sampled checks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsar", description=__doc__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesise a data grid")
    _global_flags(p, suppress=True)

    p = sub.add_parser("image", help="backproject a data grid")
    _global_flags(p, suppress=True)
    p.add_argument("--data", help="DSAR1 data grid (default: <out>/data.dsar)")

    p = sub.add_parser("analyze", help="canonical-relation analysis")
    _global_flags(p, suppress=True)

    p = sub.add_parser("verify", help="run a verification suite")
    _global_flags(p, suppress=True)
    p.add_argument("suite", choices=SUITES + ("all",))
    return parser


def _need_config(args) -> ScenarioConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    return load(args.config)


def _out_dir(args, cfg: ScenarioConfig | None) -> Path:
    out = Path(args.out) if args.out else (cfg.output_dir if cfg else Path("out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threads(args, cfg):
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        return args.threads
    return cfg.threads if cfg else 1


def run_simulate(args) -> int:
    cfg = _need_config(args)
    out = _out_dir(args, cfg)
    threads = _threads(args, cfg)
    if cfg.model == "raw-oracle":
        grid = oracle_grid(cfg.trajectory, cfg.scene, cfg.params, cfg.axes, threads)
    else:
        grid = linearized_forward(cfg.trajectory, cfg.scene, cfg.params, cfg.axes, cfg.model, threads=threads)
    fileio.write_datagrid(grid, out / "data.dsar")
    fileio.write_datagrid_csv(grid, out / "data.csv")
    mag = np.abs(grid.values)
    peak = float(mag.max()) if mag.size else 0.0
    occupied = float(np.mean(mag.max(axis=0) > 1e-8 * peak)) if peak > 0 else 0.0
    summary = {
        "model": grid.model,
        "n_s": grid.n_s,
        "n_omega": grid.n_omega,
        "max_abs_W": peak,
        "doppler_band_occupancy": occupied,
        "spectrum_decay_nu": spectrum_decay_threshold(Window(cfg.params.L)),
    }
    if len(cfg.scene) == 1 and peak > 0:
        # Peak omega-bin against the canonical-relation prediction at mid-aperture.
        i = grid.n_s // 2
        s = grid.s_axis[i]
        cp = cn.canonical_lift(cfg.trajectory, s, 1.0, cfg.scene.points[0], cfg.params, "start-stop")
        summary["peak_check"] = {
            "s": float(s),
            "omega_peak": float(grid.omega_axis[int(np.argmax(mag[i]))]),
            "omega_predicted": float(cp.omega),
            "domega": grid.domega,
        }
    fileio.write_json(summary, out / "simulate.json")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def run_image(args) -> int:
    cfg = _need_config(args)
    out = _out_dir(args, cfg)
    path = Path(args.data) if args.data else out / "data.dsar"
    grid = fileio.read_datagrid(path)
    try:
        img = backproject(
            grid, cfg.trajectory, cfg.params, cfg.image_grid, cfg.beam, cfg.filter, threads=_threads(args, cfg)
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    fileio.write_pgm(img.magnitude, out / "image.pgm")
    fileio.write_image_csv(img, out / "image.csv")
    if len(cfg.scene) and np.any(img.values):
        metrics = artifact_metrics(img, cfg.scene, cfg.trajectory, s_samples=grid.s_axis[:: max(1, grid.n_s // 16)])
    else:
        metrics = {"n_peaks": 0, "scatterers": [], "peaks": []}
    metrics["image_grid"] = cfg.image_grid.to_dict()
    metrics["beam"] = cfg.beam.to_dict()
    metrics["filter"] = cfg.filter
    fileio.write_json(metrics, out / "metrics.json")
    print(json.dumps({"n_peaks": metrics["n_peaks"], "metrics": str(out / "metrics.json")}))
    return EXIT_OK


def _analyze_linear(cfg, rng):
    traj, P, a = cfg.trajectory, cfg.params, cfg.analyze
    x1 = np.linspace(-3, 3, a["n_sigma"])
    cls = []
    for k in range(a["n_classify"]):
        c = [float(a["s"]) + 0.1 * k, float(a["tau"]), float(rng.uniform(-3, 3)), 0.0]
        for proj in ("left", "right"):
            r = cn.classify_singularity(traj, P, c, proj, cfg.model if cfg.model != "raw-oracle" else "start-stop")
            cls.append({"chart_point": c, "projection": proj, **r.to_dict()})
    return {
        "sigma": {"defining_function": "x2", "description": "Sigma is the line x2 = 0"},
        "classifications": cls,
    }, [(float(v), 0.0, float(v), 0.0) for v in x1]


def _analyze_circular(cfg, rng):
    circ, P, a = cfg.trajectory, cfg.params, cfg.analyze
    h, s = circ.h, float(a["s"])
    p0 = cn.sigma11_root(h)
    pts = cn.sample_sigma_curve(h, a["n_sigma"])
    x = cn.pq_to_ground(circ, s, pts[:, 0], pts[:, 1])
    grads = np.linalg.norm(cn.g_tilde_grad(h, pts[:, 0], pts[:, 1]), axis=1)
    cls = []
    for k in range(a["n_classify"]):
        p, q = pts[1 + (k * 7) % (len(pts) - 1)]
        uv = cn.uv_coordinates(circ, s, cn.pq_to_ground(circ, s, p, q))
        c = [s, float(a["tau"]), float(uv.u), float(uv.v)]
        cls.append({"chart_point": c, "projection": "left", "stratum": "Sigma_1",
                    **cn.classify_singularity(circ, P, c, "left").to_dict()})
    v0 = float(np.arcsinh(p0 / h))
    c = [s, float(a["tau"]), 0.0, v0]
    cls.append({"chart_point": c, "projection": "right", "stratum": "Sigma_11",
                **cn.classify_singularity(circ, P, c, "right").to_dict()})
    inner, outer = cn.region_thresholds(circ)
    vmax = cn.inj_v_max(circ)
    inside = cn.brute_force_injectivity(circ, 0.0, (vmax - 5.0, vmax - 1e-9), 1000)
    ce = COUNTEREXAMPLE
    outside = cn.brute_force_injectivity(CircularPath(ce["rho"], ce["h"]), ce["u"], ce["v_interval"], ce["n_samples"])
    report = {
        "sigma": {
            "sigma11_root": {"p": p0, "q": 0.0, "u": 0.0, "v": v0},
            "n_samples": int(len(pts)),
            "min_grad_g_tilde": float(grads.min()),
        },
        "regions": {
            "injective_radius": inner,
            "graph_radius": outer,
            "labels_at": {
                f"{r:g}": cn.region_check(circ, [r, 0.0]) for r in (0.0, 0.5 * inner, 0.75 * outer, 1.5 * outer)
            },
        },
        "injectivity": {
            "inside_condition": {"u": 0.0, "v_interval": [vmax - 5.0, vmax], **inside.to_dict()},
            "counterexample": {**ce, **outside.to_dict()},
        },
        "classifications": cls,
    }
    rows = [(float(xx[0]), float(xx[1]), float(p), float(q)) for xx, (p, q) in zip(x, pts)]
    return report, rows


def run_analyze(args) -> int:
    cfg = _need_config(args)
    out = _out_dir(args, cfg)
    seed = args.seed if args.seed is not None else cfg.seed
    rng = np.random.default_rng(seed)
    if isinstance(cfg.trajectory, LinearPath):
        report, rows = _analyze_linear(cfg, rng)
    else:
        report, rows = _analyze_circular(cfg, rng)
    report.update(trajectory=cfg.trajectory.to_dict(), scenario=cfg.params.to_dict(), seed=seed)
    fileio.write_json(report, out / "analysis.json")
    with open(out / "sigma.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "p", "q"])
        w.writerows(rows)
    labels = [c["label"] for c in report["classifications"]]
    print(json.dumps({"classifications": {k: labels.count(k) for k in sorted(set(labels))}}))
    return EXIT_OK


def run_verify(args) -> int:
    cfg = load(args.config) if args.config else None
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    report = run_suite(args.suite, seed=seed, threads=_threads(args, cfg))
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out or cfg:
        out = _out_dir(args, cfg)
        (out / f"verify_{args.suite}.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK if report["passed"] else EXIT_CHECK


COMMANDS = {"simulate": run_simulate, "image": run_image, "analyze": run_analyze, "verify": run_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"dsar: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"dsar: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"dsar: numerical failure: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
