"""End-to-end workflows shared by the CLI and the acceptance tests."""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .bvar import VarData, build_prior, gibbs_sample
from .config import RunConfig
from .errors import MetadataError, ParameterError
from .evalx import ModelSpec, combine_reports, expanding_forecast, stratify_report
from .importance import align_factors, group_importance, npe_importance, pca_importance, shapley_importance
from .panel import load_csv, load_metadata, prepare
from .reduce import AutoencoderSpec, ReducerSpec, reduce
from .rng import derive_seed
from .simgen import DgpSpec, classify_variables, draw_dgp, label_periods
from .structural import linearize_blocks, irf, policy_scheme, proxy_scheme, uncertainty_index

logger = logging.getLogger(__name__)

KIND = {"linear": "pca", "lle": "lle", "ae": "autoencoder"}


def reducer_spec(model, rcfg, seed=0, q=None, hidden_sizes=None):
    """ReducerSpec for a model name from a reducer config section."""
    if model not in KIND:
        raise ParameterError(f"unknown model {model!r}")
    hidden = rcfg.hidden_sizes if hidden_sizes is None else hidden_sizes
    ae = AutoencoderSpec(
        hidden_sizes=hidden if hidden == "auto" else tuple(hidden),
        activation=rcfg.activation, epochs=rcfg.epochs, minibatch=rcfg.minibatch,
        learning_rate=rcfg.learning_rate, seed=derive_seed(seed, "ae-init"),
    )
    return ReducerSpec(KIND[model], q=rcfg.q if q is None else q, lle_k=rcfg.lle_k,
                       lle_candidates=tuple(rcfg.lle_candidates), ae=ae)


# ----------------------------------------------------------------- empirical


def load_prepared(cfg, end_date=None):
    if not cfg.data.path:
        raise ParameterError("no data file configured (data.path)")
    meta = load_metadata(cfg.data.metadata)
    panel = load_csv(cfg.data.path, metadata=meta, select=True)
    return prepare(panel, cfg.data.start_date, end_date or cfg.data.end_date)


@dataclass
class FavarFit:
    model: str
    scheme_name: str
    factors: object  # FactorSet
    var_names: tuple
    vardata: VarData
    posterior: object
    loadings: object
    scheme: object
    scales: dict
    info_panel: object = field(repr=False, default=None)
    reducer_input: np.ndarray = field(repr=False, default=None)


def factor_input(prepared, cfg, scheme_name):
    """Informational columns fed to the reducer and their mask within the panel."""
    info = prepared.informational
    if scheme_name == "policy" and cfg.data.factor_source == "slow":
        mask = np.array([m.speed == "slow" for m in info.meta])
    else:
        mask = np.ones(info.N, bool)
    if not mask.any():
        raise MetadataError("no slow-moving informational series to extract factors from")
    return info.values[:, mask], mask


def fit_favar(prepared, cfg, model=None, scheme_name=None):
    """Reduce, estimate the BVAR and build the observable mapping for one model and scheme.

    Variable order is ``[factors, observed, policy]`` for the policy scheme
    and ``[uncertainty index, factors, observed, policy]`` for the
    uncertainty scheme.  Under the policy scheme slow series load only on
    the variables ordered before the policy rate.
    """
    model = model or cfg.model
    scheme_name = scheme_name or cfg.scheme
    info = prepared.informational
    X, _ = factor_input(prepared, cfg, scheme_name)
    spec = reducer_spec(model, cfg.reducer, cfg.seed)
    fs = reduce(X, spec)
    q = fs.Q
    obs = prepared.observed
    pol = prepared.policy
    blocks, names, stationary = [fs.factors], [f"F{i + 1}" for i in range(q)], [True] * q
    if scheme_name == "uncertainty":
        u = uncertainty_index(info.values)
        blocks.insert(0, u[:, None])
        names.insert(0, "UNCERTAINTY")
        stationary.insert(0, True)
    for part in (obs, pol):
        if part.N:
            blocks.append(part.values)
            names += part.mnemonics
            stationary += [m.transform_code != 1 for m in part.meta]
    Y = np.column_stack(blocks)
    K = Y.shape[1]
    if scheme_name == "policy":
        if pol.N != 1:
            raise MetadataError("the policy scheme needs exactly one policy series")
        regressors = [range(K - 1) if m.speed == "slow" else range(K) for m in info.meta]
        scheme = policy_scheme(K, cfg.irf.policy_shock)
    else:
        regressors = [range(K)] * info.N
        scheme = proxy_scheme(cfg.irf.uncertainty_shock)
    loadings = linearize_blocks(Y, info.values, regressors, names=tuple(info.mnemonics))
    vd = VarData(Y, cfg.var.p, tuple(names))
    prior = build_prior(vd, stationary, xi1=cfg.var.xi1, xi2=cfg.var.xi2)
    post = gibbs_sample(vd, prior, S=cfg.var.S, burn=cfg.var.burn, seed=cfg.seed)
    scales = {}
    if cfg.irf.original_units:
        scales = {m: float(s) for m, s in zip(info.mnemonics, info.standardization[:, 1])}
        scales.update({n: 1.0 for n in names[q + (scheme_name == "uncertainty"):]})
    return FavarFit(model, scheme_name, fs, tuple(names), vd, post, loadings, scheme, scales, info, X)


def impulse_responses(fit, cfg, targets=None):
    return irf(fit.posterior, fit.scheme, cfg.irf.horizons, fit.loadings,
               targets if targets is not None else cfg.irf.targets, fit.var_names,
               fit.scales or None, cfg.irf.max_radius)


def factor_importance(fit, cfg):
    """Importance table for the fitted model's factors."""
    fs, X = fit.factors, fit.reducer_input
    names = [m.mnemonic for m, keep in zip(fit.info_panel.meta, _factor_mask(fit)) if keep]
    if fit.model == "linear":
        return pca_importance(fs.loadings, names)
    if fit.model == "lle":
        return npe_importance(X, fs.Q, fs.info["lle_k"], names)
    rows = [-1] if cfg.importance.snapshot else None
    return shapley_importance(fs.model.transform, X, names, mode=cfg.importance.shapley_mode,
                              budget=cfg.importance.shapley_budget, rows=rows, seed=cfg.seed)


def _factor_mask(fit):
    n = fit.reducer_input.shape[1]
    if n == fit.info_panel.N:
        return np.ones(n, bool)
    return np.array([m.speed == "slow" for m in fit.info_panel.meta])


def importance_report(fit, cfg, reference=None):
    """Aligned importance table and group summary; ``reference`` is the linear fit."""
    table = factor_importance(fit, cfg)
    alignment = align_factors(reference.factors if reference else fit.factors, fit.factors)
    table = table.permuted(alignment)
    groups = {m.mnemonic: m.group for m in fit.info_panel.meta}
    labels = [groups[n] for n in table.names]
    if any(not g for g in labels):
        missing = [n for n, g in zip(table.names, labels) if not g]
        raise MetadataError(f"series without a group label: {missing}")
    return table, alignment, group_importance(table, labels, top=cfg.importance.top)


# ---------------------------------------------------------------- simulation


def dgp_spec(cfg):
    s = cfg.simulation
    return DgpSpec(T=s.T, N=s.N, Q=s.Q, loading_std=s.loading_std, coef_std=s.coef_std,
                   holdout=cfg.evaluation.holdout, seed=cfg.seed, clamp_eps=s.clamp_eps, burn_in=s.burn_in)


def simulate(cfg):
    spec = dgp_spec(cfg)
    return [draw_dgp(spec, r) for r in range(cfg.simulation.replications)]


def model_specs(cfg):
    e = cfg.evaluation
    out = []
    for name in e.models:
        spec = reducer_spec(name, cfg.reducer, cfg.seed, q=e.q, hidden_sizes=e.hidden_sizes)
        out.append(ModelSpec(name, spec, p=e.p, S=e.S, burn=e.burn, draws=e.draws))
    return out


def evaluate_replication(sample, cfg, replication=None):
    """Forecast runs of every model on one sample and the stratified report."""
    e = cfg.evaluation
    rep = sample.replication if replication is None else replication
    runs = {}
    for m in model_specs(cfg):
        runs[m.name] = expanding_forecast(sample, m, e.holdout, refit_every=e.refit_every,
                                          seed=cfg.seed, replication=rep)
    targets = runs[e.baseline].targets
    crisis = label_periods(sample.factors)[targets]
    classes = classify_variables(sample.panel)
    return runs, stratify_report(runs, e.baseline, crisis, classes)


def simulation_study(cfg, samples=None, progress=None):
    """Run every replication; returns (per-replication reports, combined report)."""
    samples = samples if samples is not None else simulate(cfg)
    reports = []
    for i, s in enumerate(samples):
        _, rep = evaluate_replication(s, cfg)
        reports.append(rep)
        if progress:
            progress(i, rep)
    return reports, combine_reports(reports)


def study_config(seed=0, **evaluation):
    """Default configuration for the simulation study with evaluation overrides."""
    cfg = RunConfig(seed=seed)
    cfg.evaluation = replace(cfg.evaluation, **evaluation)
    return cfg.validate()
