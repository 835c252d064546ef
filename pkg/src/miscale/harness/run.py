"""End-to-end experiment runs: data or GMRF samples in, curve artifacts out."""

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .. import __version__
from .._rng import derive_seed, make_rng
from ..dataio import center_crop, load_idx_images, load_matrix, prepare_images, rescale_unit, ImageDataset
from ..entangle import (
    bin_featurize,
    build_empirical_state,
    discrete_mi,
    entanglement_entropy,
    schmidt_spectrum,
)
from ..estimator import MiEstimate, ScalingCurve, scaling_curve
from ..exceptions import ConfigError
from ..gmrf import GmrfModel, analytic_mi, sample
from ..grid import inner_square_partition
from .plots import plot_curve

# stream keys under the run seed
SAMPLE_STREAM = 1
SUBSET_STREAM = 2

ENTANGLE_HEADER = ("L", "discrete_mi_nats", "entropy_sqrt_probability_nats", "entropy_sample_sum_nats",
                   "log_n_nats", "n_rows")


@dataclass
class RunResult:
    out: Path
    curve: ScalingCurve
    summary: dict
    artifacts: list = field(default_factory=list)


def build_model(cfg):
    return GmrfModel.from_family(cfg.family, cfg.grid, cfg.q, seed=cfg.family_seed)


def gmrf_samples(cfg, model=None):
    model = model or build_model(cfg)
    return sample(model, cfg.n_samples, derive_seed(cfg.seed, SAMPLE_STREAM))


def load_dataset(cfg):
    """Prepared ``[0, 1]`` images (or raw sample rows) named by ``cfg.data``."""
    paths = [p.strip() for p in cfg.data.split(",") if p.strip()]
    for p in paths:
        if not Path(p).exists():
            raise ConfigError(f"data file {p} does not exist")
    if cfg.data_format == "idx":
        parts = [load_idx_images(p) for p in paths]
        shapes = {d.shape for d in parts}
        if len(shapes) != 1:
            raise ConfigError(f"IDX files disagree on image shape: {sorted(map(str, shapes))}")
        d = ImageDataset(np.vstack([d.images for d in parts]), parts[0].shape, raw=True)
        d = rescale_unit(d)
        if cfg.crop:
            d = center_crop(d, cfg.crop)
        X, shape = d.images, d.shape
    else:
        X = np.vstack([np.asarray(load_matrix(p), dtype=np.float64) for p in paths])
        if cfg.source_shape:
            d = prepare_images(X, cfg.source_shape, channels=cfg.channels, target=cfg.crop or None)
            X, shape = d.images, d.shape
        else:
            shape = cfg.grid
    if shape != cfg.grid:
        raise ConfigError(f"data grid {shape} does not match configured shape {cfg.grid}")
    if cfg.max_rows and X.shape[0] > cfg.max_rows:
        keep = np.sort(make_rng(cfg.seed, SUBSET_STREAM).choice(X.shape[0], cfg.max_rows, replace=False))
        X = X[keep]
    return X


def _descriptor(cfg, n_rows):
    if cfg.data:
        return f"{cfg.data_format}:{cfg.data}:rows={n_rows}"
    return f"gmrf:{cfg.family}:q={cfg.q!r}:{cfg.shape}:rows={n_rows}"


def _joint_rows(cfg, model=None):
    if cfg.data:
        return load_dataset(cfg)
    return gmrf_samples(cfg, model)


def _to_unit(X):
    """Map each column through the standard normal CDF of its z-score."""
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return ndtr((X - X.mean(axis=0)) / sd)


def entanglement_curve(X, shape, Ls, n_bins):
    """Discrete MI and empirical-state entropies per ``L`` for ``[0, 1]`` data."""
    d = bin_featurize(X, n_bins, shape)
    rows, entries, timings = [], [], {}
    for L in Ls:
        t0 = time.perf_counter()
        p = inner_square_partition(shape, L)
        mi = discrete_mi(d, p)
        ent = {m: entanglement_entropy(schmidt_spectrum(build_empirical_state(d, p, m)))
               for m in ("sqrt_probability", "sample_sum")}
        rows.append((L, mi, ent["sqrt_probability"], ent["sample_sum"], math.log(d.n_samples), d.n_samples))
        entries.append((L, MiEstimate.exact(mi)))
        timings[L] = time.perf_counter() - t0
    return ScalingCurve(entries, "discrete", trials=1, timings=timings), rows


def compute(cfg):
    """Run the experiment in memory; returns ``(curve, extras)``."""
    kind = cfg.kind
    extras = {}
    if kind == "gmrf_analytic":
        model = build_model(cfg)
        curve = scaling_curve(None, cfg.grid, cfg.Ls, readout="analytic", model=model,
                              dataset=_descriptor(cfg, 0))
        return curve, extras
    if kind in ("gmrf_estimate", "data_estimate"):
        model = build_model(cfg) if not cfg.data else None
        X = _joint_rows(cfg, model)
        curve = scaling_curve(X, cfg.grid, cfg.Ls, cfg=cfg.train_config(), trials=cfg.trials,
                              readout=cfg.readout, threads=cfg.threads, dataset=_descriptor(cfg, len(X)))
        if model is not None:
            extras["analytic_nats"] = {L: analytic_mi(model.covariance, inner_square_partition(cfg.grid, L))
                                       for L in cfg.Ls}
        return curve, extras
    if kind == "gaussian_fit":
        X = _joint_rows(cfg)
        curve = scaling_curve(X, cfg.grid, cfg.Ls, readout="gaussian_fit", ridge=cfg.ridge,
                              dataset=_descriptor(cfg, len(X)))
        return curve, extras
    # entanglement
    X = _joint_rows(cfg)
    if not cfg.data:
        X = _to_unit(X)
    curve, rows = entanglement_curve(X, cfg.grid, cfg.Ls, cfg.n_bins)
    curve.dataset = _descriptor(cfg, len(X))
    extras["entanglement_rows"] = rows
    return curve, extras


def _json_safe(v):
    if isinstance(v, float):
        return v if math.isfinite(v) else None
    if isinstance(v, dict):
        return {str(k): _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, np.generic):
        return _json_safe(v.item())
    return v


def _dump_json(obj):
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def build_summary(cfg, curve, extras):
    results = []
    analytic = extras.get("analytic_nats", {})
    for (L, est), row in zip(curve.entries, curve.rows()):
        item = {
            "L": int(L),
            "mi_mean_nats": row[1],
            "mi_std_nats": row[2],
            "n_trials": row[3],
            "flags": list(est.flags),
        }
        if not est.deterministic:
            item["direct_per_trial"] = est.direct_values
            item["dv_per_trial"] = est.dv_values
            item["validation_bce"] = [float(v) for v in est.validation_losses]
            item["failures"] = list(est.failures)
        if L in analytic:
            item["analytic_nats"] = float(analytic[L])
        results.append(item)
    flags = sorted({f for _, est in curve.entries for f in est.flags})
    return {
        "config": cfg.to_dict(),
        "dataset": curve.dataset,
        "flags": flags,
        "readout": curve.readout,
        "results": results,
        "version": __version__,
    }


def _write_entangle_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENTANGLE_HEADER)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else str(v) for v in row])


def run(cfg):
    """Execute ``cfg`` and write its artifacts into ``cfg.out``.

    Artifacts are first written with a ``.partial`` suffix and renamed once
    every file is complete. On failure the partial files stay behind, with a
    ``summary.json.partial`` naming the error, and the exception propagates.

    Writes ``curve.csv``, ``summary.json`` (resolved config, results and
    flags; byte-reproducible), ``timing.json`` (wall-clock seconds, not
    reproducible), ``entanglement.csv`` for the entanglement kind and
    ``curve.svg`` unless ``cfg.plot`` is false.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        curve, extras = compute(cfg)
    except Exception as exc:
        (out / "summary.json.partial").write_text(
            _dump_json({"config": cfg.to_dict(), "error": f"{type(exc).__name__}: {exc}"}), encoding="utf-8")
        raise
    total = time.perf_counter() - t0

    pending = []

    def stage(name, writer):
        part = out / (name + ".partial")
        writer(part)
        pending.append((part, out / name))

    stage("curve.csv", curve.to_csv)
    summary = build_summary(cfg, curve, extras)
    stage("summary.json", lambda p: p.write_text(_dump_json(summary), encoding="utf-8"))
    timing = {"per_L_seconds": {str(L): dt for L, dt in sorted(curve.timings.items())}, "total_seconds": total}
    stage("timing.json", lambda p: p.write_text(_dump_json(timing), encoding="utf-8"))
    if "entanglement_rows" in extras:
        stage("entanglement.csv", lambda p: _write_entangle_csv(p, extras["entanglement_rows"]))
    if cfg.plot:
        # the plot reads the finished CSV
        stage("curve.svg", lambda p: plot_curve(pending[0][0], p, band=True, series=curve.readout))
    for part, final in pending:
        os.replace(part, final)
    stale = out / "summary.json.partial"
    if stale.exists():
        stale.unlink()
    return RunResult(out, curve, summary, [final for _, final in pending])
