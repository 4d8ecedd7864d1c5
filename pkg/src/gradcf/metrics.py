"""Evaluation of explanation batches.

Four quantities per counterfactual: phi1 counts features that moved by at
least 0.001 (sub-threshold noise is ignored, and exactly 0.001 counts), phi2
is the Euclidean distance to the input, coherence is the largest ratio of
counterfactual distance to input distance over near neighbors (a local
Lipschitz estimate; similar inputs should receive similar recourse), and
logit_distance measures how far the counterfactual's logits sit from the
target class's reference mean.

phi2 accumulates squares with math.fsum, so its value is the correctly
rounded sum of squares and independent reimplementations agree bitwise.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import run_baseline
from .construction import ExplainConfig, ExplainSession, run
from .data import Dataset, ReferenceLogitStats, sample_reference_set
from .net import NetworkModel, as_vector, forward, forward_batch

PHI1_THRESHOLD = 1e-3

CSV_COLUMNS = [
    "method",
    "dataset",
    "phi1_mean",
    "phi1_std",
    "phi2_mean",
    "phi2_std",
    "coherence_mean",
    "coherence_std",
    "logit_dist_mean",
    "success_rate",
]


def _pair(x, x_prime):
    a, b = as_vector(x), as_vector(x_prime)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def phi1(x, x_prime) -> int:
    """Number of features whose change reaches the 0.001 noise floor."""
    a, b = _pair(x, x_prime)
    return int(np.count_nonzero(np.abs(a - b) >= PHI1_THRESHOLD))


def phi2(x, x_prime) -> float:
    a, b = _pair(x, x_prime)
    d = a - b
    return math.sqrt(math.fsum(v * v for v in d))


def coherence(x_o, x_o_prime, neighbors, eps: float = 3.0) -> float | None:
    """Max over {X_i : phi1(X_i, X_o) <= eps, X_i != X_o} of
    ||X'_i - X'_o|| / ||X_i - X_o||; None when no neighbor qualifies.

    neighbors: iterable of (x_i, x_i_prime) pairs whose counterfactuals were
    produced with the same configuration as x_o's.
    """
    xo = as_vector(x_o)
    xop = as_vector(x_o_prime)
    best: float | None = None
    for x_i, x_i_prime in neighbors:
        xi = as_vector(x_i)
        denom = phi2(xi, xo)
        if denom == 0.0:  # identical input, ratio undefined
            continue
        if phi1(xi, xo) > eps:
            continue
        ratio = phi2(as_vector(x_i_prime), xop) / denom
        if best is None or ratio > best:
            best = ratio
    return best


@dataclass
class LogitDivergence:
    """Box-plot data for counterfactual logits against the reference set."""

    target: int
    cf_quartiles: np.ndarray  # (K, 3): 25/50/75th percentile per class
    ref_quartiles: np.ndarray
    distances: list[float]
    mean_distance: float


def logit_divergence(
    model: NetworkModel, sessions: list[ExplainSession], ref: ReferenceLogitStats
) -> LogitDivergence:
    if not sessions:
        raise ValueError("logit divergence needs at least one session")
    targets = {s.target for s in sessions}
    if targets != {ref.target}:
        raise ValueError(f"sessions target {sorted(targets)}, reference is for {ref.target}")
    cf_logits = forward_batch(model, np.stack([s.x_prime for s in sessions]))
    distances = [
        math.sqrt(math.fsum(v * v for v in row - ref.mean_logits)) for row in cf_logits
    ]
    q = [25, 50, 75]
    return LogitDivergence(
        target=ref.target,
        cf_quartiles=np.percentile(cf_logits, q, axis=0).T,
        ref_quartiles=np.percentile(ref.sample_logits, q, axis=0).T,
        distances=distances,
        mean_distance=float(np.mean(distances)),
    )


# ---------------------------------------------------------------- batch evaluation

def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    return float(np.mean(values)), float(np.std(values))


@dataclass
class MetricsReport:
    method: str
    dataset: str
    phi1_values: list[int] = field(default_factory=list)
    phi2_values: list[float] = field(default_factory=list)
    coherence_values: list[float] = field(default_factory=list)
    coherence_undefined: int = 0
    logit_distances: list[float] = field(default_factory=list)
    n_total: int = 0
    n_success: int = 0
    instance_rows: list[dict] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.n_success / self.n_total if self.n_total else float("nan")

    def row(self) -> dict:
        p1m, p1s = _mean_std(self.phi1_values)
        p2m, p2s = _mean_std(self.phi2_values)
        com, cos = _mean_std(self.coherence_values)
        ldm, _ = _mean_std(self.logit_distances)
        return {
            "method": self.method,
            "dataset": self.dataset,
            "phi1_mean": p1m,
            "phi1_std": p1s,
            "phi2_mean": p2m,
            "phi2_std": p2s,
            "coherence_mean": com,
            "coherence_std": cos,
            "logit_dist_mean": ldm,
            "success_rate": self.success_rate,
        }


def _target_for(policy, pred: int, logits: np.ndarray, k: int) -> int:
    if isinstance(policy, int):
        return policy
    if policy == "second":
        order = np.argsort(-logits, kind="stable")
        return int(order[1]) if order[0] == pred else int(order[0])
    if policy == "opposite":
        if k != 2:
            raise ValueError("opposite target policy needs a binary classifier")
        return 1 - pred
    raise ValueError(f"unknown target policy {policy!r}")


def _instance_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def _thread_count() -> int:
    raw = os.environ.get("GRADCF_THREADS", "").strip()
    if not raw:
        return 1
    return max(1, int(raw))


def evaluate_batch(
    model: NetworkModel,
    test: Dataset,
    train: Dataset,
    config: ExplainConfig,
    n: int | None = None,
    target_policy="second",
    eps: float = 3.0,
    seed: int = 0,
    method: str | None = None,
    dataset_name: str = "dataset",
) -> tuple[MetricsReport, list[ExplainSession]]:
    """Explain n sampled test instances and aggregate the metrics.

    Sessions that exhaust their budget are excluded from the means; their
    rate shows up as 1 - success_rate. Coherence for each instance uses the
    other successful instances of this batch as the neighborhood.
    """
    if len(test) == 0:
        raise ValueError("empty test dataset")
    if n is not None and n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    count = len(test) if n is None else min(n, len(test))
    picked = sorted(rng.choice(len(test), size=count, replace=False))

    refs: dict[int, ReferenceLogitStats] = {}

    def ref_for(c_t: int) -> ReferenceLogitStats:
        if c_t not in refs:
            refs[c_t] = sample_reference_set(train, model, c_t, n=config.n_ref, seed=seed)
        return refs[c_t]

    # resolve targets up-front so reference stats exist before workers start
    jobs = []
    for idx in picked:
        x = test.instances[idx]
        logits = forward(model, x)
        pred = int(logits.argmax())
        c_t = _target_for(target_policy, pred, logits, model.class_count)
        jobs.append((idx, x, c_t, ref_for(c_t)))

    runner = run if config.objective == "gradual" else run_baseline

    def explain(job):
        idx, x, c_t, ref = job
        cfg = dataclasses.replace(config, seed=_instance_seed(config.seed, idx))
        return runner(model, x, c_t, ref, cfg)

    workers = _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sessions = list(pool.map(explain, jobs))
    else:
        sessions = [explain(job) for job in jobs]

    report = MetricsReport(
        method=method or config.objective + ("-full" if config.scope == "full" else ""),
        dataset=dataset_name,
        n_total=len(jobs),
    )
    successes = [
        (idx, x, c_t, ref, s)
        for (idx, x, c_t, ref), s in zip(jobs, sessions)
        if s.outcome == "success"
    ]
    report.n_success = len(successes)

    for pos, (idx, x, c_t, ref, s) in enumerate(successes):
        xp = s.x_prime
        p1 = phi1(x, xp)
        p2 = phi2(x, xp)
        neighborhood = [
            (ox.values, os_.x_prime)
            for opos, (_, ox, _, _, os_) in enumerate(successes)
            if opos != pos
        ]
        coh = coherence(x.values, xp, neighborhood, eps=eps)
        ld = math.sqrt(math.fsum(v * v for v in forward(model, xp) - ref.mean_logits))
        report.phi1_values.append(p1)
        report.phi2_values.append(p2)
        if coh is None:
            report.coherence_undefined += 1
        else:
            report.coherence_values.append(coh)
        report.logit_distances.append(ld)
        report.instance_rows.append(
            {
                "index": int(idx),
                "target": int(c_t),
                "outcome": s.outcome,
                "phi1": p1,
                "phi2": p2,
                "coherence": coh,
                "logit_distance": ld,
                "masked_units": s.mask.masked_unit_count(),
            }
        )
    for (idx, _, c_t, _), s in zip(jobs, sessions):
        if s.outcome != "success":
            report.instance_rows.append(
                {"index": int(idx), "target": int(c_t), "outcome": s.outcome}
            )
    report.instance_rows.sort(key=lambda r: r["index"])
    return report, sessions


def write_report_csv(reports: list[MetricsReport], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for rep in reports:
            writer.writerow(rep.row())


def write_report_json(reports: list[MetricsReport], path) -> None:
    doc = [
        {**rep.row(), "instances": rep.instance_rows, "coherence_undefined": rep.coherence_undefined}
        for rep in reports
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
