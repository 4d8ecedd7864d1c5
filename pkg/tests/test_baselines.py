import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcf import baselines as bl
from gradcf import construction as gc
from gradcf import net


def constant_model(logits, d=3):
    w = np.zeros((len(logits), d))
    return net.NetworkModel(
        layers=[net.Layer(w=w, b=np.asarray(logits, dtype=float), act="identity")]
    )


# ---------------------------------------------------------------- wachter loss

def test_wachter_probability_term_only():
    # bias logits chosen so prob(class 0) = 0.7 regardless of the input
    p = 0.7
    model = constant_model([np.log(p), np.log(1 - p)])
    loss = bl.wachter_loss([9.0, 9.0, 9.0], [0.0, 0.0, 0.0], c_t=0, lam=0.0, model=model)
    assert loss == pytest.approx(-0.7)


def test_wachter_zero_proximity_at_input():
    model = constant_model([1.0, 0.0])
    x = np.array([0.2, 0.4, 0.6])
    p = net.softmax_prob(net.forward(model, x))[0]
    assert bl.wachter_loss(x, x, c_t=0, lam=2.5, model=model) == pytest.approx(-p)


def test_wachter_penalty_linear_in_distance():
    model = constant_model([0.3, -0.3])  # fixed prob, any input
    x = np.zeros(3)
    near = np.array([0.1, 0.0, 0.0])
    far = 2.0 * near
    lam = 0.8
    base = bl.wachter_loss(x, x, 0, lam, model)
    d_near = bl.wachter_loss(near, x, 0, lam, model) - base
    d_far = bl.wachter_loss(far, x, 0, lam, model) - base
    assert d_far == pytest.approx(2.0 * d_near)


@settings(max_examples=40)
@given(
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.floats(min_value=0.0, max_value=10.0),
)
def test_wachter_bounded_below(xp, lam):
    model = constant_model([0.5, -0.5])
    loss = bl.wachter_loss(np.array(xp), np.zeros(3), 0, lam, model)
    assert loss >= -1.0


# ---------------------------------------------------------------- ablation loss

def test_ablation_equals_wachter_at_lam_zero():
    model = constant_model([0.2, 0.9])
    x = np.array([0.1, 0.2, 0.3])
    xp = np.array([0.5, 0.2, 0.3])
    a = bl.ablation_loss(xp, x, 1, 0.0, model, mask=[1, 0, 0])
    w = bl.wachter_loss(xp, x, 1, 0.0, model)
    assert a == w


def test_ablation_global_minimum_is_minus_one():
    model = constant_model([50.0, -50.0])  # prob(class 0) == 1 to double precision
    x = np.zeros(3)
    assert bl.ablation_loss(x, x, 0, 0.0, model, mask=[1, 1, 1]) == pytest.approx(-1.0)


def test_ablation_requires_mask():
    model = constant_model([0.0, 0.0])
    with pytest.raises(ValueError):
        bl.ablation_loss(np.zeros(3), np.zeros(3), 0, 0.3, model, mask=[0, 0, 0])


def test_objective_kind_validation():
    with pytest.raises(ValueError):
        bl.ObjectiveKind(tag="lime")
    with pytest.raises(ValueError):
        bl.ObjectiveKind(scope="everything")


# ---------------------------------------------------------------- scaffold sharing

def flip_target(model, x):
    return 1 - int(net.forward(model, x).argmax())


def test_identical_selection_order_across_objectives(blobs):
    # the loop differs only in the scalar loss; under static ranking all three
    # must open units in exactly the same order
    x = blobs.test.instances[11]
    tgt = flip_target(blobs.model, x)
    orders = {}
    for objective in ("gradual", "wachter", "ablation"):
        cfg = gc.ExplainConfig(
            tau=0.999999, sigma=4, max_outer=5, objective=objective, seed=4
        )
        runner = gc.run if objective == "gradual" else bl.run_baseline
        s = runner(blobs.model, x, tgt, blobs.refs[tgt], cfg)
        orders[objective] = s.selection_order
    assert orders["gradual"] == orders["wachter"] == orders["ablation"]


def test_run_baseline_rejects_gradual():
    with pytest.raises(ValueError):
        bl.run_baseline(None, None, 0, None, gc.ExplainConfig(objective="gradual"))


def test_ablation_succeeds_on_blobs(blobs):
    cfg = gc.ExplainConfig(tau=0.5, sigma=300, objective="ablation", seed=8)
    hits = 0
    for i in range(10):
        x = blobs.test.instances[i]
        tgt = flip_target(blobs.model, x)
        s = bl.run_baseline(blobs.model, x, tgt, blobs.refs[tgt], cfg)
        if s.outcome == "success":
            hits += 1
            prob = net.softmax_prob(net.forward(blobs.model, s.x_prime))[tgt]
            assert prob >= cfg.tau
    assert hits >= 8


def test_gradual_matches_reference_logits_better(blobs):
    # removing logit matching should leave the counterfactuals farther from
    # the target-class logit mean
    gw, aw = [], []
    for i in range(12):
        x = blobs.test.instances[i]
        tgt = flip_target(blobs.model, x)
        ref = blobs.refs[tgt]
        sg = gc.run(blobs.model, x, tgt, ref, gc.ExplainConfig(sigma=300, seed=2))
        sa = bl.run_baseline(
            blobs.model, x, tgt, ref,
            gc.ExplainConfig(sigma=300, objective="ablation", seed=2),
        )
        gw.append(np.linalg.norm(net.forward(blobs.model, sg.x_prime) - ref.mean_logits))
        aw.append(np.linalg.norm(net.forward(blobs.model, sa.x_prime) - ref.mean_logits))
    assert np.mean(gw) < np.mean(aw)


def test_wachter_full_scope_changes_more_features(blobs):
    cfg_g = gc.ExplainConfig(tau=0.5, sigma=300, seed=3)
    cfg_w = gc.ExplainConfig(tau=0.5, sigma=300, seed=3, objective="wachter", scope="full")
    phi_g, phi_w = [], []
    for i in range(15):
        x = blobs.test.instances[i]
        tgt = flip_target(blobs.model, x)
        sg = gc.run(blobs.model, x, tgt, blobs.refs[tgt], cfg_g)
        sw = bl.run_baseline(blobs.model, x, tgt, blobs.refs[tgt], cfg_w)
        if sg.outcome == "success":
            phi_g.append(int((np.abs(sg.x_prime - x.values) >= 0.001).sum()))
        if sw.outcome == "success":
            phi_w.append(int((np.abs(sw.x_prime - x.values) >= 0.001).sum()))
    assert phi_g and phi_w
    assert np.mean(phi_g) < np.mean(phi_w)


def test_full_scope_starts_from_input(blobs):
    # one outer round with a tiny budget barely moves the composite, so the
    # counterfactual stays near the input rather than near noise
    x = blobs.test.instances[13]
    tgt = flip_target(blobs.model, x)
    cfg = gc.ExplainConfig(
        tau=0.999999, sigma=1, max_outer=1, objective="wachter", scope="full", seed=0
    )
    s = bl.run_baseline(blobs.model, x, tgt, blobs.refs[tgt], cfg)
    assert s.outcome == "budget_exhausted"
    assert np.abs(s.x_prime - x.values).max() < 0.5


def test_lambda_sweep_shrinks_distance(blobs):
    # statistical: over 10 seeds, heavier proximity weight never helps distance
    d0, d10 = [], []
    for seed in range(10):
        x = blobs.test.instances[20 + seed]
        tgt = flip_target(blobs.model, x)
        for lam, sink in ((0.0, d0), (10.0, d10)):
            cfg = gc.ExplainConfig(
                tau=0.5, sigma=200, lam=lam, objective="ablation", seed=seed
            )
            s = bl.run_baseline(blobs.model, x, tgt, blobs.refs[tgt], cfg)
            sink.append(np.linalg.norm(s.x_prime - x.values))
    assert np.mean(d10) <= np.mean(d0)


def test_make_config_applies_kind(blobs):
    base = gc.ExplainConfig(tau=0.5, sigma=10)
    cfg = bl.make_config(bl.ObjectiveKind(tag="wachter", lam=1.5, scope="full"), base)
    assert cfg.objective == "wachter"
    assert cfg.lam == 1.5
    assert cfg.scope == "full"
