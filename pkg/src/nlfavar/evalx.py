"""Expanding-window one-step forecast evaluation with RMSE and CRPS.

Forecasts are labelled by their target period: the forecast made with rows
``0..t-1`` is scored against row ``t``, which also fixes its crisis label.
"""
import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .bvar import VarData, build_prior, gibbs_sample
from .errors import AlignmentError, FavarError, OriginError, ParameterError
from .reduce import ReducerSpec, reduce
from .rng import derive_seed, substream
from .simgen import CLASSES
from .structural import linearize

PERIODS = ("crisis", "tranquil")
CELL_CLASSES = ("overall",) + CLASSES


def crps(ensemble, y):
    """Empirical CRPS of an ensemble forecast.

    ``(1/m) sum |x_i - y| - (1/(2 m^2)) sum_ij |x_i - x_j|``, evaluated in
    O(m log m) through the sorted ensemble.  ``ensemble`` may be (m,) or
    (m, ...) with ``y`` broadcasting against the trailing shape.
    """
    x = np.asarray(ensemble, float)
    if x.shape[0] == 0:
        raise ParameterError("ensemble is empty")
    y = np.asarray(y, float)
    m = x.shape[0]
    first = np.mean(np.abs(x - y), axis=0)
    xs = np.sort(x, axis=0)
    w = (2.0 * np.arange(1, m + 1) - m - 1).reshape((m,) + (1,) * (x.ndim - 1))
    spread = np.sum(w * xs, axis=0) / m**2
    return np.maximum(first - spread, 0.0)


def rmse(errors):
    e = np.asarray(errors, float).ravel()
    if e.size == 0:
        raise ParameterError("no errors to average")
    return float(np.sqrt(np.mean(e**2)))


@dataclass(frozen=True)
class ModelSpec:
    """A FAVAR forecasting model: reducer plus BVAR settings."""

    name: str
    reducer: ReducerSpec
    p: int = 4
    S: int = 500
    burn: int = 500
    draws: int = 500

    def to_dict(self):
        return {"name": self.name, "reducer": self.reducer.to_dict(), "p": self.p,
                "S": self.S, "burn": self.burn, "draws": self.draws}


@dataclass
class ForecastRun:
    """One-step predictive results; arrays are indexed (origin, variable)."""

    model: str
    targets: np.ndarray
    realized: np.ndarray
    point: np.ndarray
    crps: np.ndarray
    draws: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.targets = np.asarray(self.targets, int)
        if np.any(np.diff(self.targets) <= 0):
            raise ParameterError("forecast origins must be strictly increasing")

    @property
    def errors(self):
        return self.point - self.realized


def _fit(X, model, p, rng_seed, rep, j):
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    std = np.where(std > 0, std, 1.0)
    Z = (X - mean) / std
    spec = model.reducer
    if spec.kind == "autoencoder":
        spec = replace(spec, ae=replace(spec.ae, seed=derive_seed(rng_seed, "ae-init", rep, j)))
    fs = reduce(Z, spec)
    load = linearize(fs.factors, Z)
    vd = VarData(fs.factors, p)
    post = gibbs_sample(vd, build_prior(vd), S=model.S, burn=model.burn,
                        rng=substream(rng_seed, "sampler", rep, j), seed=rng_seed)
    return {"mean": mean, "std": std, "fs": fs, "F": fs.factors, "theta": load.theta,
            "resid_sd": np.sqrt(load.fitted_residual_variance), "post": post, "n": X.shape[0]}


def expanding_forecast(data, model, holdout, refit_every=1, seed=0, replication=0, keep_draws=False):
    """Expanding-window one-step-ahead predictive ensembles for every panel column.

    Parameters
    ----------
    data : array, Panel or DgpSample, T x N
    model : ModelSpec
    holdout : int
        Number of target periods, the last ``holdout`` rows.
    refit_every : int
        Re-estimate reducer, loadings and BVAR every this many origins; in
        between, new rows are mapped through the fitted reducer and the last
        posterior is reused.  1 refits at every origin.
    """
    X = np.asarray(getattr(data, "panel", getattr(data, "values", data)), float)
    T, N = X.shape
    if not 0 < holdout < T:
        raise ParameterError(f"holdout must lie in (0, {T})")
    if refit_every < 1:
        raise ParameterError("refit_every must be positive")
    targets = np.arange(T - holdout, T)
    point = np.empty((holdout, N))
    scores = np.empty((holdout, N))
    kept = np.empty((holdout, model.draws, N)) if keep_draws else None
    state = None
    for j, t in enumerate(targets):
        try:
            if j % refit_every == 0:
                state = _fit(X[:t], model, model.p, seed, replication, j)
                F = state["F"]
            else:
                Znew = (X[state["n"] : t] - state["mean"]) / state["std"]
                F = np.vstack([state["F"], state["fs"].model.transform(Znew)])
            post = state["post"]
            rng = substream(seed, "predictive", replication, j)
            idx = np.arange(model.draws) % post.S
            f_next = post.predictive(F[-model.p :], rng, idx)
            z = f_next @ state["theta"] + rng.standard_normal((idx.size, N)) * state["resid_sd"]
            ens = z * state["std"] + state["mean"]
            if not np.all(np.isfinite(ens)):
                raise FavarError("non-finite predictive draws")
        except FavarError as exc:
            raise OriginError(int(t), exc) from exc
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise OriginError(int(t), exc) from exc
        point[j] = ens.mean(axis=0)
        scores[j] = crps(ens, X[t])
        if keep_draws:
            kept[j] = ens
    return ForecastRun(model.name, targets, X[targets], point, scores, kept)


@dataclass
class EvalReport:
    """Absolute and baseline-relative metrics per cell.

    ``absolute[model][(period, cls)]`` holds ``{"rmse", "crps", "n"}`` or
    ``None`` for an empty cell; ``relative[model][(period, cls)]`` holds
    ``{"rmse", "crps"}`` ratios or ``None``.
    """

    baseline: str
    absolute: dict
    relative: dict

    def cell(self, model, period, cls="overall", metric="rmse", kind="relative"):
        c = getattr(self, kind)[model][(period, cls)]
        return None if c is None else c[metric]

    def rows(self):
        for model in self.absolute:
            for period in PERIODS:
                for cls in CELL_CLASSES:
                    a = self.absolute[model][(period, cls)]
                    r = self.relative[model][(period, cls)]
                    yield {
                        "model": model, "period": period, "variables": cls,
                        "n": 0 if a is None else a["n"],
                        "rmse": None if a is None else a["rmse"], "crps": None if a is None else a["crps"],
                        "rel_rmse": None if r is None else r["rmse"], "rel_crps": None if r is None else r["crps"],
                    }

    def to_csv(self, path):
        cols = ["model", "period", "variables", "n", "rmse", "crps", "rel_rmse", "rel_crps"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in self.rows():
                w.writerow([_fmt(row[c]) for c in cols])

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"baseline": self.baseline, "cells": list(self.rows())}, fh, indent=2, sort_keys=True)


def _fmt(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return f"{v:.12g}" if isinstance(v, float) else str(v)


def _cell_metrics(run, mask):
    if not mask.any():
        return None
    e = run.errors[mask]
    return {"rmse": float(np.sqrt(np.mean(e**2))), "crps": float(np.mean(run.crps[mask])), "n": int(mask.sum())}


def cell_masks(crisis, classes):
    """Boolean (origin, variable) masks for every report cell."""
    crisis = np.asarray(crisis, bool)
    classes = np.asarray(classes)
    out = {}
    for period in PERIODS:
        rows = crisis if period == "crisis" else ~crisis
        for cls in CELL_CLASSES:
            cols = np.ones(classes.shape[0], bool) if cls == "overall" else classes == cls
            out[(period, cls)] = rows[:, None] & cols[None, :]
    return out


def stratify_report(runs, baseline, crisis, classes):
    """Stratified metrics table.

    Parameters
    ----------
    runs : dict
        ``{model name: ForecastRun}``; must include ``baseline``.
    crisis : bool array, one per forecast target
    classes : affectedness label per variable
    """
    if baseline not in runs:
        raise ParameterError(f"baseline model {baseline!r} is not among the runs")
    ref = runs[baseline]
    for name, run in runs.items():
        if not np.array_equal(run.targets, ref.targets):
            raise AlignmentError(f"model {name!r} forecasts different origins than the baseline")
        if run.realized.shape != ref.realized.shape:
            raise AlignmentError(f"model {name!r} forecasts a different set of variables")
    if len(crisis) != len(ref.targets):
        raise AlignmentError("one crisis label per forecast target is required")
    masks = cell_masks(crisis, classes)
    absolute = {name: {k: _cell_metrics(run, m) for k, m in masks.items()} for name, run in runs.items()}
    relative = {}
    for name in runs:
        relative[name] = {}
        for k in masks:
            a, b = absolute[name][k], absolute[baseline][k]
            if a is None or b is None or b["rmse"] <= 0 or b["crps"] <= 0:
                relative[name][k] = None
            else:
                relative[name][k] = {"rmse": a["rmse"] / b["rmse"], "crps": a["crps"] / b["crps"]}
    return EvalReport(baseline, absolute, relative)


@dataclass
class CombinedReport:
    """Across-replication summary.

    ``mean_relative`` averages per-replication ratios over the replications in
    which the cell is present; ``pooled`` holds ratios of metrics pooled over
    all replications' squared errors and CRPS values.
    """

    baseline: str
    mean_relative: dict
    pooled: dict
    present: dict
    n_replications: int

    def value(self, model, period, cls="overall", metric="rmse", kind="mean_relative"):
        c = getattr(self, kind)[model][(period, cls)]
        return None if c is None else c[metric]

    def rows(self):
        for model in self.mean_relative:
            for period in PERIODS:
                for cls in CELL_CLASSES:
                    k = (period, cls)
                    m, p = self.mean_relative[model][k], self.pooled[model][k]
                    yield {
                        "model": model, "period": period, "variables": cls,
                        "replications": self.present[model][k],
                        "rel_rmse": None if m is None else m["rmse"], "rel_crps": None if m is None else m["crps"],
                        "pooled_rel_rmse": None if p is None else p["rmse"],
                        "pooled_rel_crps": None if p is None else p["crps"],
                    }

    def to_csv(self, path):
        cols = ["model", "period", "variables", "replications", "rel_rmse", "rel_crps",
                "pooled_rel_rmse", "pooled_rel_crps"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in self.rows():
                w.writerow([_fmt(row[c]) for c in cols])

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"baseline": self.baseline, "replications": self.n_replications,
                       "cells": list(self.rows())}, fh, indent=2, sort_keys=True)


def combine_reports(reports):
    """Average a list of :class:`EvalReport` objects from independent replications."""
    if not reports:
        raise ParameterError("no reports to combine")
    base = reports[0].baseline
    models = list(reports[0].absolute)
    keys = list(reports[0].absolute[models[0]])
    mean_rel, pooled, present = {}, {}, {}
    for model in models:
        mean_rel[model], pooled[model], present[model] = {}, {}, {}
        for k in keys:
            rel = [r.relative[model][k] for r in reports if r.relative[model][k] is not None]
            present[model][k] = len(rel)
            mean_rel[model][k] = None if not rel else {
                m: float(np.mean([c[m] for c in rel])) for m in ("rmse", "crps")}
            num = [r.absolute[model][k] for r in reports]
            den = [r.absolute[base][k] for r in reports]
            pairs = [(a, b) for a, b in zip(num, den) if a is not None and b is not None]
            if not pairs:
                pooled[model][k] = None
                continue
            n = sum(a["n"] for a, _ in pairs)
            mse_a = sum(a["rmse"] ** 2 * a["n"] for a, _ in pairs) / n
            mse_b = sum(b["rmse"] ** 2 * b["n"] for _, b in pairs) / n
            crps_a = sum(a["crps"] * a["n"] for a, _ in pairs) / n
            crps_b = sum(b["crps"] * b["n"] for _, b in pairs) / n
            pooled[model][k] = {"rmse": float(np.sqrt(mse_a / mse_b)), "crps": float(crps_a / crps_b)}
    return CombinedReport(base, mean_rel, pooled, present, len(reports))
