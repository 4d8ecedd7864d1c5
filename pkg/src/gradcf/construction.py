"""Gradual construction of counterfactuals.

The loop alternates two moves until the classifier assigns the target class
with probability tau: a masking step opens one more feature (or image block),
chosen by gradient magnitude on the original input, and a composition step
runs sigma Adam updates of the replacement values at the open positions. The
perturbed instance is always the composition

    X' = (1 - M) * X + M * C                                  (elementwise)

so coordinates outside the mask provably never move. C is drawn from N(0,1)
once per session and warm-started across outer iterations.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .data import ReferenceLogitStats
from .net import (
    AdamState,
    NetworkModel,
    adam_step,
    as_vector,
    backprop_to_input,
    forward,
    forward_trace,
    input_gradient,
    softmax_prob,
)

OBJECTIVES = ("gradual", "wachter", "ablation")


class MaskBudgetError(RuntimeError):
    """Asked to mask more units than the input has."""


# ---------------------------------------------------------------- mask

def _block_partition(image_shape: tuple[int, int], block: tuple[int, int]) -> list[np.ndarray]:
    """Row-major tiles; right/bottom remainders become smaller blocks."""
    h, w = image_shape
    bh, bw = block
    if bh < 1 or bw < 1:
        raise ValueError("block dimensions must be positive")
    units = []
    for r0 in range(0, h, bh):
        for c0 in range(0, w, bw):
            rows = np.arange(r0, min(r0 + bh, h))
            cols = np.arange(c0, min(c0 + bw, w))
            units.append((rows[:, None] * w + cols[None, :]).ravel())
    return units


@dataclass
class BinaryMask:
    """0/1 vector plus the unit partition it grows by (features or blocks)."""

    bits: np.ndarray
    units: list[np.ndarray]
    block: tuple[int, int] | None = None

    @classmethod
    def for_input(
        cls,
        d: int,
        image_shape: tuple[int, int] | None = None,
        block: tuple[int, int] | None = None,
    ) -> "BinaryMask":
        if block is not None:
            if image_shape is None:
                raise ValueError("block masks need an image shape")
            units = _block_partition(image_shape, block)
        else:
            units = [np.array([i]) for i in range(d)]
        return cls(bits=np.zeros(d), units=units, block=block)

    @property
    def unit_count(self) -> int:
        return len(self.units)

    def set_unit(self, u: int) -> None:
        self.bits[self.units[u]] = 1.0

    def masked_unit_count(self) -> int:
        return sum(1 for idx in self.units if self.bits[idx].all())

    def validate(self) -> None:
        if not np.isin(self.bits, (0.0, 1.0)).all():
            raise ValueError("mask bits must be exactly 0 or 1")
        for idx in self.units:
            vals = self.bits[idx]
            if vals.any() and not vals.all():
                raise ValueError("bits within one block must be equal")


@dataclass
class Composite:
    """Candidate replacement values; only masked coordinates ever matter."""

    values: np.ndarray


# ---------------------------------------------------------------- config / session

@dataclass
class ExplainConfig:
    tau: float = 0.5
    sigma: int = 500
    lam: float = 0.3
    eta: float = 0.3
    beta: float = 2.0
    n_ref: int = 100
    lr: float = 0.1
    block: tuple[int, int] | None = None
    objective: str = "gradual"
    scope: str = "masked"  # "full" = unstructured baseline, wachter only
    rank_mode: str = "static"
    logit_term: str = "vector"
    grad_of: str = "probability"
    clamp: bool = False
    warm_start: bool = True
    max_outer: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0,1)")
        if self.sigma < 1:
            raise ValueError("sigma must be at least 1")
        if self.lam < 0 or self.eta < 0:
            raise ValueError("lambda and eta must be nonnegative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.max_outer is not None and self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.rank_mode not in ("static", "recompute"):
            raise ValueError("rank_mode must be 'static' or 'recompute'")
        if self.logit_term not in ("vector", "scalar"):
            raise ValueError("logit_term must be 'vector' or 'scalar'")
        if self.scope not in ("masked", "full"):
            raise ValueError("scope must be 'masked' or 'full'")
        if self.scope == "full" and self.objective != "wachter":
            raise ValueError("full scope is only defined for the wachter objective")
        if self.block is not None:
            self.block = (int(self.block[0]), int(self.block[1]))


@dataclass
class ExplainSession:
    """All mutable state of one explanation run plus its traces."""

    original: np.ndarray
    target: int
    mask: BinaryMask
    composite: np.ndarray
    config: ExplainConfig
    image_shape: tuple[int, int] | None = None
    bounds: tuple[float, float] = (0.0, 1.0)
    selection_order: list[int] = field(default_factory=list)
    prob_trace: list[float] = field(default_factory=list)
    loss_trace: list[list[float]] = field(default_factory=list)
    outcome: str = "pending"
    diverged: bool = False

    @property
    def x_prime(self) -> np.ndarray:
        return compose(self.original, self.mask.bits, self.composite)

    @property
    def counterfactual(self) -> np.ndarray:
        return self.x_prime

    def final_loss(self) -> float | None:
        for trace in reversed(self.loss_trace):
            if trace:
                return trace[-1]
        return None

    def to_dict(self) -> dict:
        cfg = dataclasses.asdict(self.config)
        cfg["target"] = self.target
        return {
            "original": self.original.tolist(),
            "counterfactual": self.x_prime.tolist(),
            "mask": self.mask.bits.astype(int).tolist(),
            "selection_order": [int(u) for u in self.selection_order],
            "prob_trace": self.prob_trace,
            "outcome": self.outcome,
            "config": cfg,
        }


def save_session(session: ExplainSession, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(session.to_dict(), fh, sort_keys=True)


def write_pgm(image: np.ndarray, path) -> None:
    """P5 grayscale, maxval 255; values clipped to the displayable range."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("write_pgm needs a 2-D array")
    pixels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


# ---------------------------------------------------------------- primitives

def compose(x, m, c, clamp: bool = False, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """(1-m)*x + m*c elementwise; optional clamp touches masked coordinates only."""
    xv, mv, cv = as_vector(x), as_vector(m), as_vector(c)
    if not (xv.size == mv.size == cv.size):
        raise ValueError(f"length mismatch: x={xv.size}, m={mv.size}, c={cv.size}")
    if clamp:
        cv = np.clip(cv, lo, hi)
    return (1.0 - mv) * xv + mv * cv


def rank_features(
    model: NetworkModel,
    x,
    c_t: int,
    units: list[np.ndarray] | None = None,
    grad_of: str = "probability",
) -> list[int]:
    """Units ordered by descending summed |gradient of the target score|,
    ties broken by ascending unit index."""
    g = np.abs(input_gradient(model, x, target=c_t, of=grad_of))
    if units is None:
        units = [np.array([i]) for i in range(g.size)]
    scores = np.array([g[idx].sum() for idx in units])
    return sorted(range(len(units)), key=lambda u: (-scores[u], u))


def masking_step(
    session: ExplainSession,
    ranking: list[int],
    n: int,
    model: NetworkModel | None = None,
) -> BinaryMask:
    """Grow the mask to n units: the first n of the static ranking, or (in
    recompute mode) the best currently-unmasked unit under a fresh ranking."""
    mask = session.mask
    if n > mask.unit_count:
        raise MaskBudgetError(f"cannot mask {n} of {mask.unit_count} units")
    if session.config.rank_mode == "recompute" and model is not None:
        fresh = rank_features(
            model,
            session.x_prime,
            session.target,
            units=mask.units,
            grad_of=session.config.grad_of,
        )
        already = set(session.selection_order)
        pick = next(u for u in fresh if u not in already)
        mask.set_unit(pick)
        session.selection_order.append(pick)
        return mask
    for u in ranking[:n]:
        mask.set_unit(u)
        if u not in session.selection_order:
            session.selection_order.append(u)
    return mask


# ---------------------------------------------------------------- losses

def gradual_loss(
    x_prime,
    x,
    ref: ReferenceLogitStats,
    lam: float,
    model: NetworkModel,
    logit_term: str = "vector",
) -> float:
    """Distance of X' logits to the reference class mean, plus lam * ||X'-X||."""
    diff = forward(model, x_prime) - ref.mean_logits
    if logit_term == "vector":
        fit = float(np.linalg.norm(diff))
    else:
        fit = float(abs(diff.sum()))
    return fit + lam * float(np.linalg.norm(as_vector(x_prime) - as_vector(x)))


def tv_regularizer(x_prime, beta: float = 2.0) -> float:
    """Total variation over the image grid; boundary pixels use only the
    neighbors they have. Differences enter via |.| so fractional beta stays real."""
    img = _require_image(x_prime)
    value, _ = _tv_value_grad(img, beta)
    return value


def _require_image(x) -> np.ndarray:
    shape = getattr(x, "image_shape", None)
    if shape is not None:
        return np.asarray(getattr(x, "values", x), dtype=np.float64).reshape(shape)
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    raise ValueError("total variation needs an image-shaped input")


def _tv_value_grad(img: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    dh = img[:, 1:] - img[:, :-1]  # (i, j+1) - (i, j)
    dv = img[1:, :] - img[:-1, :]  # (i+1, j) - (i, j)
    inner = np.zeros_like(img)
    inner[:, :-1] += np.abs(dh) ** beta
    inner[:-1, :] += np.abs(dv) ** beta
    value = float((inner ** (beta / 2.0)).sum())

    outer = np.where(inner > 0.0, (beta / 2.0) * inner ** (beta / 2.0 - 1.0), 0.0)
    grad = np.zeros_like(img)
    gh = outer[:, :-1] * beta * np.abs(dh) ** (beta - 1.0) * np.sign(dh)
    grad[:, 1:] += gh
    grad[:, :-1] -= gh
    gv = outer[:-1, :] * beta * np.abs(dv) ** (beta - 1.0) * np.sign(dv)
    grad[1:, :] += gv
    grad[:-1, :] -= gv
    return value, grad


def _proximity_value_grad(xp: np.ndarray, x: np.ndarray) -> tuple[float, np.ndarray]:
    d = xp - x
    nrm = float(np.linalg.norm(d))
    if nrm == 0.0:
        return 0.0, np.zeros_like(d)
    return nrm, d / nrm


def _logit_match_value_grad(model, xp, ref, logit_term):
    logits, caches = forward_trace(model, xp[None, :])
    diff = logits[0] - ref.mean_logits
    if logit_term == "vector":
        nrm = float(np.linalg.norm(diff))
        cot = diff / nrm if nrm > 0.0 else np.zeros_like(diff)
        value = nrm
    else:
        s = float(diff.sum())
        cot = np.sign(s) * np.ones_like(diff)
        value = abs(s)
    return value, backprop_to_input(model, caches, cot[None, :])[0]


def _target_prob_value_grad(model, xp, c_t):
    logits, caches = forward_trace(model, xp[None, :])
    p = softmax_prob(logits[0])
    onehot = np.zeros_like(p)
    onehot[c_t] = 1.0
    cot = p[c_t] * (onehot - p)
    return float(p[c_t]), backprop_to_input(model, caches, cot[None, :])[0]


def objective_value_grad(
    model: NetworkModel,
    xp: np.ndarray,
    x: np.ndarray,
    c_t: int,
    ref: ReferenceLogitStats | None,
    config: ExplainConfig,
) -> tuple[float, np.ndarray]:
    """Scalar loss and its gradient with respect to X' for the configured
    objective; the TV term for images is added by the caller."""
    if config.objective == "gradual":
        if ref is None:
            raise ValueError("gradual objective needs reference logit statistics")
        fit, g = _logit_match_value_grad(model, xp, ref, config.logit_term)
    else:
        # wachter and ablation both maximize the target probability
        p, gp = _target_prob_value_grad(model, xp, c_t)
        fit, g = -p, -gp
    prox, gprox = _proximity_value_grad(xp, x)
    return fit + config.lam * prox, g + config.lam * gprox


# ---------------------------------------------------------------- steps

def composition_step(
    session: ExplainSession,
    model: NetworkModel,
    ref: ReferenceLogitStats | None,
    config: ExplainConfig | None = None,
) -> np.ndarray:
    """sigma Adam updates of the composite at masked coordinates. Returns the
    new composite; unmasked coordinates come back bit-identical (their
    gradient is exactly zero, so Adam leaves them alone)."""
    cfg = config or session.config
    m = session.mask.bits
    if not m.any():
        raise ValueError("composition needs at least one masked unit")
    x = session.original
    c = session.composite.copy()
    start = session.composite.copy()
    lo, hi = session.bounds
    use_tv = session.image_shape is not None and cfg.eta > 0.0
    state = AdamState(lr=cfg.lr)
    trace: list[float] = []

    def evaluate(comp):
        xp = compose(x, m, comp)
        loss, g = objective_value_grad(model, xp, x, session.target, ref, cfg)
        if use_tv:
            tv, gtv = _tv_value_grad(xp.reshape(session.image_shape), cfg.beta)
            loss += cfg.eta * tv
            g = g + cfg.eta * gtv.ravel()
        return loss, g

    for _ in range(cfg.sigma):
        loss, g_xp = evaluate(c)
        if not np.isfinite(loss):
            session.diverged = True
            session.loss_trace.append(trace)
            session.composite = start  # divergence guard: undo the whole step
            return session.composite
        trace.append(loss)
        c = adam_step(state, c, m * g_xp)
        if cfg.clamp:
            c = np.where(m == 1.0, np.clip(c, lo, hi), c)

    final_loss, _ = evaluate(c)
    if not np.isfinite(final_loss):
        session.diverged = True
        session.loss_trace.append(trace)
        session.composite = start
        return session.composite
    trace.append(final_loss)
    session.loss_trace.append(trace)
    session.composite = c
    return c


def _target_probability(model: NetworkModel, xp: np.ndarray, c_t: int) -> float:
    return float(softmax_prob(forward(model, xp))[c_t])


def _init_session(model, x, c_t, config) -> ExplainSession:
    xv = as_vector(x).copy()
    if xv.size != model.input_dim:
        raise ValueError(f"input width {xv.size} != model width {model.input_dim}")
    if not 0 <= c_t < model.class_count:
        raise ValueError(f"class index {c_t} outside [0, {model.class_count})")
    image_shape = getattr(x, "image_shape", None) or model.image_shape
    mask = BinaryMask.for_input(xv.size, image_shape=image_shape, block=config.block)
    rng = np.random.default_rng(config.seed)
    composite = rng.standard_normal(xv.size)
    lo = float(np.min(getattr(x, "lo", 0.0)))
    hi = float(np.max(getattr(x, "hi", 1.0)))
    return ExplainSession(
        original=xv,
        target=c_t,
        mask=mask,
        composite=composite,
        config=config,
        image_shape=image_shape,
        bounds=(lo, hi),
    )


def run(
    model: NetworkModel,
    x,
    c_t: int,
    ref: ReferenceLogitStats | None,
    config: ExplainConfig,
) -> ExplainSession:
    """Alternate masking and composition until prob(c_t) >= tau or the outer
    budget is spent. An input that already satisfies the threshold returns
    immediately with an empty mask."""
    session = _init_session(model, x, c_t, config)
    prob = _target_probability(model, session.original, c_t)
    session.prob_trace.append(prob)
    if prob >= config.tau:
        session.outcome = "success"
        return session

    if config.scope == "full":
        return _run_full_scope(session, model, ref, config)

    ranking = rank_features(
        model, session.original, c_t, units=session.mask.units, grad_of=config.grad_of
    )
    max_outer = config.max_outer or session.mask.unit_count
    max_outer = min(max_outer, session.mask.unit_count)
    for n in range(1, max_outer + 1):
        masking_step(session, ranking, n, model=model)
        if not config.warm_start:
            rng = np.random.default_rng((config.seed, n))
            session.composite = rng.standard_normal(session.original.size)
        composition_step(session, model, ref, config)
        prob = _target_probability(model, session.x_prime, c_t)
        session.prob_trace.append(prob)
        if prob >= config.tau:
            session.outcome = "success"
            return session
    session.outcome = "budget_exhausted"
    return session


def _run_full_scope(session, model, ref, config) -> ExplainSession:
    """Unstructured baseline: every feature opens at once and the composite
    starts at the input itself, so optimization walks away from X directly."""
    session.mask.bits[:] = 1.0
    session.selection_order = list(range(session.mask.unit_count))
    session.composite = session.original.copy()
    max_outer = config.max_outer or session.mask.unit_count
    for _ in range(max_outer):
        composition_step(session, model, ref, config)
        prob = _target_probability(model, session.x_prime, session.target)
        session.prob_trace.append(prob)
        if prob >= config.tau:
            session.outcome = "success"
            return session
    session.outcome = "budget_exhausted"
    return session


def generate_from_seed(
    model: NetworkModel,
    seed_image,
    c_t: int,
    ref: ReferenceLogitStats | None,
    config: ExplainConfig,
) -> ExplainSession:
    """Run with the proximity weight forced to zero: the composite is free to
    leave the seed image entirely, which turns the machinery into a
    class-conditional generator."""
    image_shape = getattr(seed_image, "image_shape", None) or model.image_shape
    if image_shape is None:
        raise ValueError("generation needs an image-shaped input")
    cfg = dataclasses.replace(config, lam=0.0)
    return run(model, seed_image, c_t, ref, cfg)
