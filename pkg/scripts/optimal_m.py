"""Optimal review count at maximum conference quality, over a grid of review quality and V.

Prints CSV rows ``model,quality_param,V,m_star,burden`` for noiseless authors.
With ``--max-rounds`` the smallest m keeping the expected number of rounds
per submitted paper within the bound is reported instead.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from reviewsim.model import AuthorModel, BinaryReviews
from reviewsim.presets import noiseless, preset
from reviewsim.search import constrained_m_search, optimal_m_search
from reviewsim.config import load_config


def _settings(model: str, config: str | None, qualities, V: float, eta: float):
    for x in qualities:
        if model == "binary":
            cfg = noiseless(load_config(config))
            s = cfg.setting
            s = s.with_(review=BinaryReviews(float(x)))
        else:
            s = noiseless(preset("ICLR2020-L4", lambda_r=float(x))).setting
        yield x, s.with_(author=AuthorModel(V=V, eta=eta))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", choices=["binary", "iclr"], default="binary")
    ap.add_argument("--config", default="scripts/configs/binary.yaml", help="binary model config")
    ap.add_argument("--quality", type=float, nargs="+", help="beta values (binary) or lambda_R values (iclr)")
    ap.add_argument("--V", type=float, nargs="+", default=[1.5, 2, 3, 5, 10])
    ap.add_argument("--eta", type=float, default=0.7)
    ap.add_argument("--m-max", type=int, default=10)
    ap.add_argument("--max-rounds", type=float, default=None)
    a = ap.parse_args(argv)
    qualities = a.quality or (np.round(np.linspace(0.55, 0.99, 12), 3) if a.model == "binary" else np.round(np.linspace(0.1, 1.0, 10), 2))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["model", "quality_param", "V", "m_star", "burden"])
    for V in a.V:
        for x, s in _settings(a.model, a.config, qualities, V, a.eta):
            ms = range(1, a.m_max + 1)
            if a.max_rounds is None:
                res = optimal_m_search(s, ms)
                m, b = res.m_star, res.burden.get(res.m_star)
            else:
                res = constrained_m_search(s, a.max_rounds, ms)
                m, b = res.m, res.burden
            w.writerow([a.model, x, V, "" if m is None else m, "" if b is None else f"{b:.6g}"])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
