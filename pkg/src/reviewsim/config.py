"""YAML experiment configs.

Schema (all blocks are mappings)::

    prior:  {kind: categorical, values: [...], probs: [...]}
          | {kind: continuous, family: gaussian|laplace|cauchy, params: {loc, scale}}
    review: {kind: categorical, scores: [...], confusion: [[...]]}
          | {kind: binary, beta: b} | {kind: gaussian, sigma: s}
    author: {kind: noiseless|noisy|same-as-review, alpha: ..., V: v, eta: e}   (or rho instead of V)
    policy: {kind: threshold, tau, r} | {kind: time-limited, tau, r, T}
          | {kind: round-dependent, taus: [...]}
          | {kind: review-following, taus: [...], fixed_rounds: [...], tail_rule: per_round|cumulative}
    m, n, T, seed, strategy, lambda_r, lambda_a, tie_break
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .model import (
    AuthorModel,
    BinaryReviews,
    CategoricalPrior,
    CategoricalReviews,
    ContinuousPrior,
    GaussianNoiseReviews,
    ModelError,
    ReviewFollowing,
    RoundDependent,
    Setting,
    Threshold,
    TimeLimitedFixed,
    mix_rows_uniform,
)


class ConfigError(ModelError):
    def __init__(self, where: str, msg: str):
        super().__init__(f"{where}: {msg}")
        self.field = where


def _get(d: Mapping, key: str, where: str, default=...):
    if not isinstance(d, Mapping):
        raise ConfigError(where, "expected a mapping")
    if key in d:
        return d[key]
    if default is ...:
        raise ConfigError(f"{where}.{key}", "missing field")
    return default


def _num(x, where: str) -> float:
    if isinstance(x, str) and x.strip().lower() in ("inf", "+inf", "-inf"):
        return float(x)
    try:
        return float(x)
    except (TypeError, ValueError):
        raise ConfigError(where, f"expected a number, got {x!r}") from None


def _guard(where: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (ModelError, ValueError, TypeError) as e:
        raise ConfigError(where, str(e)) from None


def normalize_rows(mat) -> np.ndarray:
    a = np.asarray(mat, dtype=float)
    return a / a.sum(axis=-1, keepdims=True)


@dataclass
class ExperimentConfig:
    """A parsed config: model setting plus run parameters.

    ``base_confusion`` keeps the unmixed review matrix so that
    ``lambda_r``/``lambda_a`` can be reapplied on override.
    """

    setting: Setting
    policy: Any = None
    n: int = 10_000
    T: int = 10
    seed: int = 0
    strategy: str = "myopic"
    tie_break: str = "not-submit"
    lambda_r: float = 1.0
    lambda_a: float = 1.0
    author_kind: str = "noiseless"
    base_confusion: np.ndarray | None = None
    base_alpha: Any = None
    name: str = ""
    extra: dict = field(default_factory=dict)

    def rebuild(self, **changes) -> "ExperimentConfig":
        """Apply overrides and recompute the mixed review/author matrices."""
        cfg = replace(self, **changes)
        s = cfg.setting
        review = s.review
        if cfg.base_confusion is not None:
            review = CategoricalReviews(review.scores, mix_rows_uniform(cfg.base_confusion, cfg.lambda_r))
        signal = None
        if cfg.author_kind == "same-as-review":
            if cfg.base_confusion is not None:
                signal = mix_rows_uniform(cfg.base_confusion, cfg.lambda_a)
            elif isinstance(review, BinaryReviews):
                signal = BinaryReviews(review.beta).as_categorical().confusion
                signal = mix_rows_uniform(signal, cfg.lambda_a)
            else:
                raise ConfigError("author.kind", "same-as-review needs a categorical or binary review model")
        elif cfg.author_kind == "noisy":
            signal = mix_rows_uniform(cfg.base_alpha, cfg.lambda_a)
        author = AuthorModel(s.author.V, s.author.eta, signal)
        cfg.setting = _guard("config", Setting, s.prior, review, author, s.m)
        return cfg


def parse_prior(d: Mapping, normalize: bool = False) -> CategoricalPrior | ContinuousPrior:
    kind = _get(d, "kind", "prior")
    if kind == "categorical":
        probs = _get(d, "probs", "prior")
        if normalize:
            probs = normalize_rows(probs)
        return _guard("prior", CategoricalPrior, _get(d, "values", "prior"), probs)
    if kind == "continuous":
        params = _get(d, "params", "prior", {})
        return _guard(
            "prior",
            ContinuousPrior,
            _get(d, "family", "prior"),
            _num(_get(params, "loc", "prior.params", 0.0), "prior.params.loc"),
            _num(_get(params, "scale", "prior.params", 1.0), "prior.params.scale"),
        )
    raise ConfigError("prior.kind", f"unknown kind {kind!r}")


def parse_review(d: Mapping, normalize: bool = False):
    kind = _get(d, "kind", "review")
    if kind == "categorical":
        conf = _get(d, "confusion", "review")
        if normalize:
            conf = normalize_rows(conf)
        return _guard("review", CategoricalReviews, _get(d, "scores", "review"), conf)
    if kind == "binary":
        return _guard("review", BinaryReviews, _num(_get(d, "beta", "review"), "review.beta"))
    if kind == "gaussian":
        return _guard("review", GaussianNoiseReviews, _num(_get(d, "sigma", "review"), "review.sigma"))
    raise ConfigError("review.kind", f"unknown kind {kind!r}")


def parse_policy(d: Mapping | None):
    if d is None:
        return None
    kind = _get(d, "kind", "policy")
    r = d.get("r")
    r = None if r is None else _num(r, "policy.r")
    if kind == "threshold":
        return _guard("policy", Threshold, _num(_get(d, "tau", "policy"), "policy.tau"), r)
    if kind == "time-limited":
        return _guard("policy", TimeLimitedFixed, _num(_get(d, "tau", "policy"), "policy.tau"), int(_get(d, "T", "policy")), r)
    if kind == "round-dependent":
        return _guard("policy", RoundDependent, [_num(t, "policy.taus") for t in _get(d, "taus", "policy")])
    if kind == "review-following":
        return _guard(
            "policy",
            ReviewFollowing,
            [_num(t, "policy.taus") for t in _get(d, "taus", "policy")],
            frozenset(int(x) for x in d.get("fixed_rounds", ())),
            d.get("tail_rule", "per_round"),
        )
    raise ConfigError("policy.kind", f"unknown kind {kind!r}")


def config_from_dict(d: Mapping, normalize: bool = False) -> ExperimentConfig:
    prior = parse_prior(_get(d, "prior", "config"), normalize)
    review = parse_review(_get(d, "review", "config"), normalize)
    a = _get(d, "author", "config")
    kind = _get(a, "kind", "author", "noiseless")
    eta = _num(_get(a, "eta", "author", 0.7), "author.eta")
    if "rho" in a:
        V = _num(a["rho"], "author.rho") * (1 - eta) + eta
    else:
        V = _num(_get(a, "V", "author"), "author.V")
    author = _guard("author", AuthorModel, V, eta, None)
    alpha = None
    if kind == "noisy":
        alpha = _get(a, "alpha", "author")
        if np.isscalar(alpha):
            alpha = BinaryReviews(_num(alpha, "author.alpha")).as_categorical().confusion
        alpha = np.asarray(alpha, dtype=float)
        if normalize:
            alpha = normalize_rows(alpha)
    elif kind not in ("noiseless", "same-as-review"):
        raise ConfigError("author.kind", f"unknown kind {kind!r}")
    m = int(d.get("m", 1))
    base = review.confusion if isinstance(review, CategoricalReviews) else None
    cfg = ExperimentConfig(
        setting=_guard("config", Setting, prior, review, author, m),
        policy=parse_policy(d.get("policy")),
        n=int(d.get("n", 10_000)),
        T=int(d.get("T", 10)),
        seed=int(d.get("seed", 0)),
        strategy=str(d.get("strategy", "myopic")),
        tie_break=str(d.get("tie_break", "not-submit")),
        lambda_r=_num(d.get("lambda_r", 1.0), "lambda_r"),
        lambda_a=_num(d.get("lambda_a", 1.0), "lambda_a"),
        author_kind=kind,
        base_confusion=base,
        base_alpha=alpha,
        name=str(d.get("name", "")),
    )
    return cfg.rebuild()


def load_config(path: str | Path, normalize: bool = False) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config ({e.strerror})") from None
    except yaml.YAMLError as e:
        raise ConfigError(str(path), f"invalid YAML: {e}") from None
    if not isinstance(data, Mapping):
        raise ConfigError(str(path), "top level must be a mapping")
    return config_from_dict(data, normalize)


def setting_to_dict(setting: Setting, **extra) -> dict:
    """Inverse of :func:`config_from_dict` for the model part."""
    p = setting.prior
    if isinstance(p, CategoricalPrior):
        prior = {"kind": "categorical", "values": p.values.tolist(), "probs": p.probs.tolist()}
    else:
        prior = {"kind": "continuous", "family": p.family, "params": {"loc": p.loc, "scale": p.scale}}
    r = setting.review
    if isinstance(r, CategoricalReviews):
        review = {"kind": "categorical", "scores": r.scores.tolist(), "confusion": r.confusion.tolist()}
    elif isinstance(r, BinaryReviews):
        review = {"kind": "binary", "beta": r.beta}
    else:
        review = {"kind": "gaussian", "sigma": r.sigma}
    a = setting.author
    author = {"kind": "noiseless", "V": a.V, "eta": a.eta}
    if a.signal is not None:
        author = {"kind": "noisy", "alpha": a.signal.tolist(), "V": a.V, "eta": a.eta}
    return {"prior": prior, "review": review, "author": author, "m": setting.m, **extra}


def dump_yaml(d: Mapping, fh) -> None:
    yaml.safe_dump(dict(d), fh, default_flow_style=None, sort_keys=False, width=200)
