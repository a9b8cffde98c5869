"""Benchmark sweeps over the number of measurements and their CSV/SVG reports."""

import hashlib
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import UnsupportedCombination
from .linalg import pseudoinverse
from .measurement import b_matrix, outcomes, projector_set
from .metrics import bures, bures_raw, error_map, psd_stats
from .mle import MleConfig, mle_batch
from .reconstruct import analytic_1q, pauli_expand
from .states import make_rng

METHODS = ("pinv", "mle", "analytic_1q", "corrector", "lstm")
CSV_COLUMNS = "method,n_qubits,M,mean_bures,std_bures,n_samples,seed"


@dataclass
class SweepRow:
    m: int
    mean_bures: float
    std_bures: float
    n_samples: int


@dataclass
class SweepResult:
    method: str
    n_qubits: int
    seed: int
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def row(self, m):
        for r in self.rows:
            if r.m == m:
                return r
        raise KeyError(m)

    def to_csv(self, header=True):
        out = io.StringIO()
        if header:
            for key, val in self.metadata.items():
                out.write(f"# {key}: {val}\n")
            out.write(CSV_COLUMNS + "\n")
        for r in self.rows:
            out.write(f"{self.method},{self.n_qubits},{r.m},{r.mean_bures!r},{r.std_bures!r},{r.n_samples},{self.seed}\n")
        return out.getvalue()


def read_sweep_csv(text):
    """Parse a sweep CSV back into ``SweepResult`` objects (one per method)."""
    results, meta = {}, {}
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(": ")
            meta[key] = val
            continue
        if not line or line == CSV_COLUMNS:
            continue
        method, n, m, mean, std, count, seed = line.split(",")
        res = results.setdefault(method, SweepResult(method, int(n), int(seed), metadata=dict(meta)))
        res.rows.append(SweepRow(int(m), float(mean), float(std), int(count)))
    return list(results.values())


def config_hash(values):
    return hashlib.sha256(repr(sorted(values.items())).encode()).hexdigest()[:16]


# ---------------------------------------------------------------- collections


def sample_collections(rng, total, m, count):
    """``count`` distinct sorted 1-based collections of size ``m`` (all of them if fewer exist)."""
    if math.comb(total, m) <= count:
        return [tuple(c) for c in combinations(range(1, total + 1), m)]
    seen, out = set(), []
    while len(out) < count:
        c = tuple(int(v) + 1 for v in np.sort(rng.choice(total, m, replace=False)))
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def pinv_batch(states, subset, n_qubits):
    """Pseudoinverse reconstructions of a batch measured on one collection."""
    pset = projector_set(n_qubits)
    m = outcomes(states, pset, subset)
    x = m @ pseudoinverse(b_matrix(pset, subset)).T
    return pauli_expand(x, n_qubits)


def mle_collection(states, subset, n_qubits, cfg=None):
    pset = projector_set(n_qubits)
    m = outcomes(states, pset, subset)
    return mle_batch(pset.projectors[np.asarray(subset) - 1], m, cfg or MleConfig())


def _collection_task(args):
    method, states, subset, n_qubits, mle_cfg = args
    if method == "pinv":
        rec = pinv_batch(states, subset, n_qubits)
        return bures_raw(rec, states)
    rec = mle_collection(states, subset, n_qubits, mle_cfg)
    return bures(rec, states)


def _summarise(m, values):
    values = np.concatenate([np.atleast_1d(v) for v in values]) if values else np.zeros(0)
    return SweepRow(m, float(values.mean()), float(values.std()), int(values.size))


def baseline_bures(states):
    """M = 0 anchor: Bures distance of every state to the maximally mixed state."""
    d = states.shape[-1]
    return bures(np.broadcast_to(np.eye(d) / d, states.shape), states)


def bures_sweep(states, method, m_values, collections=100, seed=0, n_qubits=None, models=None,
                mle_cfg=None, jobs=1):
    """Mean/std Bures distance per ``M`` for one method.

    * ``pinv``, ``mle``: averaged over test states and up to ``collections``
      sampled measurement collections per ``M``.
    * ``analytic_1q``: one qubit, ``M = 2`` only, over all six pairs.
    * ``corrector``: ``models`` is a list of corrector models; each covers its
      own ``M`` (its fixed collection, or sampled collections when amortised).
    * ``lstm``: ``models`` holds one selector/reconstructor; every step of
      each episode gives the value for that ``M``.

    ``M = 0`` always means the maximally mixed guess. Raw reconstructions are
    PSD-repaired before the distance is taken. Parallel runs (``jobs > 1``)
    aggregate in collection order, so results do not depend on ``jobs``.
    """
    states = np.asarray(states)
    n_qubits = n_qubits or int(round(np.log2(states.shape[-1])))
    total = 4**n_qubits
    if method not in METHODS:
        raise UnsupportedCombination(f"unknown method {method!r}")
    m_values = [int(m) for m in m_values]
    if any(m < 0 or m > total for m in m_values):
        raise UnsupportedCombination(f"M must lie in 0..{total}")
    rng = make_rng(seed)
    result = SweepResult(method, n_qubits, seed, metadata={"seed": seed, "collections": collections,
                                                           "n_states": len(states), "psd_repair": "clip+renormalise"})
    if method in ("corrector", "lstm") and not models:
        raise UnsupportedCombination(f"method {method} needs a trained model")
    if method == "analytic_1q" and (n_qubits != 1 or any(m not in (0, 2) for m in m_values)):
        raise UnsupportedCombination("analytic_1q exists for one qubit and M = 2 only")

    lstm_bures = None
    if method == "lstm":
        from .models.lstm import run_episodes

        model = models[0] if isinstance(models, (list, tuple)) else models
        steps = max([m for m in m_values if m > 0], default=0)
        if steps:
            ep = run_episodes(model, states, steps, rng=make_rng(seed))
            lstm_bures = [bures_raw(ep.reconstructions[:, l], states) for l in range(steps)]
    by_m = {}
    if method == "corrector":
        for model in models:
            by_m.setdefault(model.m, []).append(model)

    for m in m_values:
        if m == 0:
            result.rows.append(_summarise(0, [baseline_bures(states)]))
            continue
        if method == "lstm":
            result.rows.append(_summarise(m, [lstm_bures[m - 1]]))
        elif method == "analytic_1q":
            values = []
            for pair in combinations(range(1, 5), 2):
                mm = outcomes(states, projector_set(1), pair)
                rec = np.stack([analytic_1q(pair, row) for row in mm])
                values.append(bures_raw(rec, states))
            result.rows.append(_summarise(m, values))
        elif method == "corrector":
            from .models.corrector import reconstruct_batch

            if m not in by_m:
                raise UnsupportedCombination(f"no corrector model for M={m}")
            values = []
            for model in by_m[m]:
                subsets = [model.subset] if model.subset else sample_collections(rng, total, m, collections)
                for subset in subsets:
                    values.append(bures_raw(reconstruct_batch(model, states, subset), states))
            result.rows.append(_summarise(m, values))
        else:
            subsets = sample_collections(rng, total, m, collections)
            tasks = [(method, states, s, n_qubits, mle_cfg) for s in subsets]
            if jobs > 1:
                with ProcessPoolExecutor(jobs) as pool:
                    values = list(pool.map(_collection_task, tasks))
            else:
                values = [_collection_task(t) for t in tasks]
            result.rows.append(_summarise(m, values))
    return result


# -------------------------------------------------------------- other reports


def error_maps_1q(states, reconstruct):
    """Error maps for all six 1-qubit pairs; ``reconstruct(pair, m) -> (B, 2, 2)``."""
    out = {}
    for pair in combinations(range(1, 5), 2):
        m = outcomes(states, projector_set(1), pair)
        out[pair] = error_map(states, reconstruct(pair, m))
    return out


def error_map_csv(maps):
    lines = ["pair,alpha,beta,value"]
    for pair, mat in maps.items():
        tag = "-".join(str(p) for p in pair)
        for (a, b), v in np.ndenumerate(mat):
            lines.append(f"{tag},{a},{b},{float(v)!r}")
    return "\n".join(lines) + "\n"


def psd_stats_csv(per_method):
    """``per_method[(method, M)] = raw reconstructions`` -> CSV of eigenvalue statistics."""
    lines = ["method,M,lowest_mean,lowest_std,second_mean,second_std"]
    for (method, m), recs in per_method.items():
        s = psd_stats(recs)
        lines.append(f"{method},{m},{s['lowest_mean']!r},{s['lowest_std']!r},{s['second_mean']!r},{s['second_std']!r}")
    return "\n".join(lines) + "\n"


def svg_chart(results, width=480, height=320, margin=40):
    """Minimal line chart of mean Bures against M: axes plus one polyline per result."""
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#ff7f0e"]
    xs = [r.m for res in results for r in res.rows] or [0, 1]
    ys = [r.mean_bures for res in results for r in res.rows] or [0, 1]
    x0, x1 = min(xs), max(max(xs), min(xs) + 1)
    y1 = max(max(ys), 1e-12)
    sx = lambda x: margin + (x - x0) / (x1 - x0) * (width - 2 * margin)
    sy = lambda y: height - margin - y / y1 * (height - 2 * margin)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">M</text>',
        f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})">mean Bures</text>',
        f'<text x="{margin - 4}" y="{margin + 4}" text-anchor="end" font-size="10">{y1:.3g}</text>',
    ]
    for i, res in enumerate(results):
        pts = " ".join(f"{sx(r.m):.2f},{sy(r.mean_bures):.2f}" for r in res.rows)
        colour = colours[i % len(colours)]
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - margin}" y="{margin + 14 * i}" text-anchor="end" font-size="11" fill="{colour}">{res.method}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def raw_reconstructions(states, method, m, collections=10, seed=0, models=None, mle_cfg=None):
    """Unrepaired reconstructions at one ``M``, stacked over sampled collections."""
    states = np.asarray(states)
    n_qubits = int(round(np.log2(states.shape[-1])))
    total = 4**n_qubits
    rng = make_rng(seed)
    if method == "pinv":
        return np.concatenate([pinv_batch(states, s, n_qubits) for s in sample_collections(rng, total, m, collections)])
    if method == "mle":
        return np.concatenate([mle_collection(states, s, n_qubits, mle_cfg) for s in sample_collections(rng, total, m, collections)])
    if method == "corrector":
        from .models.corrector import reconstruct_batch

        out = []
        for model in models or []:
            if model.m == m:
                subsets = [model.subset] if model.subset else sample_collections(rng, total, m, collections)
                out.extend(reconstruct_batch(model, states, s) for s in subsets)
        if not out:
            raise UnsupportedCombination(f"no corrector model for M={m}")
        return np.concatenate(out)
    if method == "lstm":
        from .models.lstm import run_episodes

        if not models:
            raise UnsupportedCombination("method lstm needs a trained model")
        model = models[0] if isinstance(models, (list, tuple)) else models
        return run_episodes(model, states, m, rng=make_rng(seed)).reconstructions[:, m - 1]
    raise UnsupportedCombination(f"no raw reconstructions for method {method!r}")
