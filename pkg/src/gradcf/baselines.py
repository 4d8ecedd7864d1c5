"""Comparison objectives on the same masking scaffold.

Both alternatives swap only the scalar loss the composition step minimizes:

- wachter: maximize the target-class probability, penalized by distance to
  the input. In "full" scope every feature is free from the start and the
  search begins at the input itself, emulating the classic unstructured
  counterfactual search.
- ablation: the same probability term but mask-scoped, i.e. the gradual
  method with logit matching removed. Differences against the gradual
  objective isolate what the matching term buys.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .construction import ExplainConfig, ExplainSession, run
from .data import ReferenceLogitStats
from .net import NetworkModel, as_vector, forward, softmax_prob


@dataclass
class ObjectiveKind:
    tag: str = "wachter"
    lam: float = 0.3
    scope: str = "masked"  # "full": all features free, no gradual masking

    def __post_init__(self) -> None:
        if self.tag not in ("gradual", "wachter", "ablation"):
            raise ValueError(f"unknown objective {self.tag!r}")
        if self.scope not in ("masked", "full"):
            raise ValueError("scope must be 'masked' or 'full'")


def wachter_loss(x_prime, x, c_t: int, lam: float, model: NetworkModel) -> float:
    """-prob(c_t | X') + lam * ||X' - X||, the minimization form of
    probability ascent with a proximity penalty."""
    prob = float(softmax_prob(forward(model, x_prime))[c_t])
    return -prob + lam * float(np.linalg.norm(as_vector(x_prime) - as_vector(x)))


def ablation_loss(x_prime, x, c_t: int, lam: float, model: NetworkModel, mask) -> float:
    """Same value as wachter_loss; the mask argument asserts the scaffold is
    active (optimization touches masked coordinates only, enforced upstream)."""
    bits = as_vector(mask)
    if not bits.any():
        raise ValueError("ablation objective needs a non-empty mask")
    return wachter_loss(x_prime, x, c_t, lam, model)


def run_baseline(
    model: NetworkModel,
    x,
    c_t: int,
    ref: ReferenceLogitStats | None,
    config: ExplainConfig,
) -> ExplainSession:
    """Identical loop to the gradual objective with the loss swapped in."""
    if config.objective not in ("wachter", "ablation"):
        raise ValueError(f"run_baseline handles wachter/ablation, not {config.objective!r}")
    return run(model, x, c_t, ref, config)


def make_config(kind: ObjectiveKind, base: ExplainConfig) -> ExplainConfig:
    return dataclasses.replace(
        base, objective=kind.tag, lam=kind.lam, scope=kind.scope
    )
