"""Command-line harness: synthetic images, noise injection, segmentation,
denoising and metric reports.

Exit codes: 0 success, 2 configuration/contract error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .energy import IndicatorSet, SegState, gray_indicator
from .errors import ConfigError, NumericalFailure
from .fileio import (
    ExperimentConfig,
    config_lines,
    load_config,
    read_field,
    read_pgm,
    write_f64,
    write_pgm,
)
from .metrics import match_phases, multiphase_report, score_masks
from .noise import corrupt
from .solve import segment, update_image
from .synth import generate

ENERGY_COLUMNS = ["outer_iter", "inner_iter", "E_fit", "E_len", "E_idiv",
                  "E_tv", "E_total", "E_u", "z_sq", "xi", "err1", "err2"]


def _fmt(x) -> str:
    return "" if x is None else f"{x:.12g}"


def _write_energy_csv(path, log) -> None:
    inner_by_outer: dict[int, list] = {}
    for rec in log.inners:
        inner_by_outer.setdefault(rec.outer, []).append(rec)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ENERGY_COLUMNS)
        outers = log.outers or []
        outer_ids = [r.outer for r in outers] or sorted(inner_by_outer)
        for k in outer_ids:
            for rec in inner_by_outer.get(k, []):
                writer.writerow([k, rec.inner, _fmt(rec.fit), "", _fmt(rec.idiv),
                                 _fmt(rec.tv), _fmt(rec.energy), "",
                                 _fmt(rec.z_sq), _fmt(rec.xi), "", _fmt(rec.err2)])
            for rec in outers:
                if rec.outer != k:
                    continue
                e = rec.energy
                writer.writerow([k, "", _fmt(e.fit), _fmt(e.length), _fmt(e.idiv),
                                 _fmt(e.tv), _fmt(e.total), _fmt(rec.eu_after),
                                 "", "", _fmt(rec.err1), ""])


def _write_manifest(path, cfg: ExperimentConfig, extras: dict | None = None) -> None:
    lines = [f"# ictmseg {__version__} run manifest"]
    lines += config_lines(cfg)
    for key, value in (extras or {}).items():
        lines.append(f"# {key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _build_init(spec_text: str | None, f: np.ndarray, n: int) -> IndicatorSet:
    """Initial partition from a contour spec.

    The contour interior is phase 0; for n > 2 the exterior is split among
    the remaining phases by intensity quantiles of f (deterministic).
    """
    if spec_text is None:
        raise ConfigError("segmentation requires an 'init' contour spec")
    kind, _, args = spec_text.partition(":")
    kind = kind.strip()
    h, w = f.shape
    if kind == "mask":
        labels = read_pgm(args.strip())
        if labels.shape != f.shape:
            raise ConfigError("init mask dimensions do not match the image")
        if labels.max() >= n:
            raise ConfigError(f"init mask labels exceed n_phases={n}")
        return IndicatorSet.from_labels(labels.astype(np.int64), n)
    if kind == "checkerboard":
        cell = int(float(args))
        if cell < 1:
            raise ConfigError("checkerboard cell must be >= 1")
        yy, xx = np.mgrid[0:h, 0:w]
        return IndicatorSet.from_labels(((yy // cell) + (xx // cell)) % n, n)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    if kind == "circle":
        cx, cy, r = (float(v) for v in args.split(","))
        interior = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    elif kind == "rect":
        x, y, rw, rh = (float(v) for v in args.split(","))
        interior = (xx >= x) & (xx < x + rw) & (yy >= y) & (yy < y + rh)
    else:
        raise ConfigError(f"unknown init kind {kind!r} "
                          "(circle|rect|checkerboard|mask)")
    labels = np.zeros((h, w), dtype=np.int64)
    outside = ~interior
    if n == 2:
        labels[outside] = 1
    elif outside.any():
        vals = f[outside]
        qs = np.quantile(vals, [k / (n - 1) for k in range(1, n - 1)])
        labels[outside] = 1 + np.searchsorted(qs, vals, side="right")
    return IndicatorSet.from_labels(labels, n)


def _resolve_image(cfg: ExperimentConfig):
    """Produce (f, truth_or_None, bias_or_None) from the configured source,
    with corruption applied and load clamping to [0, 255]."""
    if cfg.synth is not None:
        clean, truth, bias = generate(cfg.synth)
    else:
        clean = read_field(cfg.input)
        bias = None
        truth = None
        if cfg.truth is not None:
            labels = read_pgm(cfg.truth).astype(np.int64)
            truth = IndicatorSet.from_labels(labels, int(labels.max()) + 1)
    f = corrupt(clean, cfg.noise)
    f = np.clip(f, 0.0, 255.0)
    return f, truth, bias


def _score_rows(pred: IndicatorSet, truth: IndicatorSet) -> list[dict]:
    if truth.n != pred.n:
        raise ConfigError(f"truth has {truth.n} phases, prediction {pred.n}")
    matched = match_phases(pred, truth)
    return multiphase_report(matched, truth)


def _write_metric_rows(path, rows: list[dict], quiet: bool) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["class", "dsc", "iou",
                                                "accuracy", "kappa"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v)
                             for k, v in row.items()})
    if not quiet:
        for row in rows:
            print(f"{row['class']}: DSC={row['dsc']:.4f} IoU={row['iou']:.4f} "
                  f"Acc={row['accuracy']:.4f} kappa={row['kappa']:.4f}")


# --------------------------------------------------------------------------
# commands

def cmd_synth(cfg: ExperimentConfig, out: Path, quiet: bool) -> int:
    if cfg.synth is None:
        raise ConfigError("synth command requires synth.* keys")
    clean, truth, bias = generate(cfg.synth)
    write_pgm(out / "clean.pgm", clean)
    write_f64(out / "clean.f64", clean)
    write_pgm(out / "truth.pgm", truth.labels().astype(np.float64),
              scale_clamp=True)
    write_f64(out / "bias.f64", bias)
    _write_manifest(out / "manifest.txt", cfg)
    if not quiet:
        print(f"wrote clean/truth/bias to {out}")
    return 0


def cmd_noise(cfg: ExperimentConfig, out: Path, quiet: bool) -> int:
    if cfg.noise.kind == "none":
        raise ConfigError("noise command requires noise.kind != none")
    if cfg.synth is not None:
        clean, _, _ = generate(cfg.synth)
    else:
        clean = read_field(cfg.input)
    noisy = corrupt(clean, cfg.noise)
    write_pgm(out / "noisy.pgm", noisy)      # 8-bit view, clamped
    write_f64(out / "noisy.f64", noisy)      # exact values, unclamped
    _write_manifest(out / "manifest.txt", cfg)
    if not quiet:
        print(f"wrote noisy image to {out}")
    return 0


def cmd_segment(cfg: ExperimentConfig, out: Path, quiet: bool) -> int:
    f, truth, _ = _resolve_image(cfg)
    init = _build_init(cfg.init, f, cfg.params.n_phases)
    progress = None
    if not quiet:
        def progress(rec):
            print(f"outer {rec.outer:4d}  E={rec.energy.total:.6e}  "
                  f"E_u={rec.eu_after:.6e}  err1={rec.err1:.3e}")
    state, log = segment(f, init, cfg.params, progress=progress)

    for i in range(state.u.n):
        write_pgm(out / f"mask_{i}.pgm", state.u.masks[i] * 255.0)
    write_pgm(out / "labels.pgm", state.u.labels().astype(np.float64))
    write_pgm(out / "denoised.pgm", state.g)
    write_f64(out / "denoised.f64", state.g)
    write_f64(out / "bias.f64", state.b)
    corrected = f / np.maximum(state.b, np.finfo(float).tiny)
    write_f64(out / "corrected.f64", corrected)
    write_pgm(out / "corrected.pgm", np.clip(corrected, 0.0, 255.0))
    _write_energy_csv(out / "energy.csv", log)
    if truth is not None:
        write_pgm(out / "truth.pgm", truth.labels().astype(np.float64))
        _write_metric_rows(out / "metrics.csv", _score_rows(state.u, truth), quiet)
    _write_manifest(out / "manifest.txt", cfg, extras={
        "outer_iterations": len(log.outers),
        "final_err1": log.outers[-1].err1 if log.outers else "",
        "means": ",".join(f"{c:.6g}" for c in state.c),
    })
    if not quiet:
        print(f"finished in {len(log.outers)} outer iterations; outputs in {out}")
    return 0


def cmd_denoise(cfg: ExperimentConfig, out: Path, quiet: bool) -> int:
    """Run only the smooth-image subproblem: unit bias, zero fitting weight.

    Unlike segmentation, the flow runs long (default cap 500 steps unless the
    config sets max_inner) since there is no partition to co-evolve with.
    """
    f, _, _ = _resolve_image(cfg)
    params = replace(cfg.params, lambdas=(0.0,) * cfg.params.n_phases)
    if "max_inner" not in cfg.raw:
        params = replace(params, max_inner=500)
    f_norm = f / params.intensity_scale
    n = params.n_phases
    masks = np.zeros((n,) + f.shape)
    masks[0] = 1.0
    state = SegState(c=np.zeros(n), b=np.ones_like(f),
                     g=np.maximum(f_norm, params.g_floor),
                     u=IndicatorSet(masks, check=False))
    alpha = gray_indicator(f_norm, params.sigma, params.p)
    g, records, hit_cap = update_image(state, f_norm, alpha, params)
    g = g * params.intensity_scale
    from .solve import IterationLog

    log = IterationLog(inners=records)
    if hit_cap:
        log.warnings.append(f"inner loop hit max_inner={params.max_inner}")
    write_pgm(out / "denoised.pgm", g)
    write_f64(out / "denoised.f64", g)
    _write_energy_csv(out / "energy.csv", log)
    _write_manifest(out / "manifest.txt", cfg,
                    extras={"inner_iterations": len(records)})
    if not quiet:
        print(f"denoised in {len(records)} flow steps; outputs in {out}")
    return 0


def cmd_metrics(pred_path: str, truth_path: str, out: Path | None,
                quiet: bool) -> int:
    pred = read_pgm(pred_path)
    truth = read_pgm(truth_path)
    if pred.shape != truth.shape:
        raise ConfigError("prediction and truth dimensions differ")
    classes = np.union1d(np.unique(pred), np.unique(truth))
    rows = []
    if classes.size <= 2:
        fg = classes[-1]
        rows.append({"class": "foreground",
                     **score_masks((pred == fg).astype(float) if fg > 0 else pred,
                                   (truth == fg).astype(float) if fg > 0 else truth)})
    else:
        for v in classes:
            rows.append({"class": f"label_{int(v)}",
                         **score_masks((pred == v).astype(float),
                                       (truth == v).astype(float))})
    if out is not None:
        _write_metric_rows(out / "metrics.csv", rows, quiet)
    elif not quiet:
        for row in rows:
            print(f"{row['class']}: DSC={row['dsc']:.4f} IoU={row['iou']:.4f} "
                  f"Acc={row['accuracy']:.4f} kappa={row['kappa']:.4f}")
    return 0


# --------------------------------------------------------------------------
# entry point

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ictmseg",
        description="Joint denoising, bias correction and segmentation "
                    "for Poisson / multiplicative-Gamma noise.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synth", "noise", "segment", "denoise"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--quiet", action="store_true")
    m = sub.add_parser("metrics")
    m.add_argument("pred", help="predicted mask / label map (PGM)")
    m.add_argument("truth", help="ground-truth mask / label map (PGM)")
    m.add_argument("--out", default=None, help="also write metrics.csv here")
    m.add_argument("--quiet", action="store_true")
    return parser


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "metrics":
        out = None
        if args.out is not None:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
        return cmd_metrics(args.pred, args.truth, out, args.quiet)
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.noise = replace(cfg.noise, seed=args.seed)
    if args.out is not None:
        cfg.out = args.out
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = {"synth": cmd_synth, "noise": cmd_noise,
               "segment": cmd_segment, "denoise": cmd_denoise}[args.command]
    return handler(cfg, out, args.quiet)


def main(argv=None) -> int:
    try:
        return run(argv)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
