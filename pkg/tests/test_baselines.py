import numpy as np
import pytest

from hedgegad import autodiff as ad
from hedgegad.baselines import BaselineConfig, BaselineModel, train_baseline
from hedgegad.csbm import CsbmParams, generate
from hedgegad.graph import make_split


def test_mlp_ignores_edges():
    s = generate(CsbmParams((1.0, 0.0), (0.0, 1.0), 4, 0.5, 0.5, 20, 0))
    other = generate(CsbmParams((1.0, 0.0), (0.0, 1.0), 4, 0.5, 0.5, 20, 1)).graph
    rewired = s.graph.with_relation(0, other.edge_array(0))
    a = BaselineModel(s.graph, BaselineConfig(kind="mlp", hidden_dim=8)).predict()[0]
    b = BaselineModel(rewired, BaselineConfig(kind="mlp", hidden_dim=8)).predict()[0]
    np.testing.assert_array_equal(a, b)


def test_gcn_easy_regime():
    g = generate(CsbmParams((2.0, 0.0), (0.0, 2.0), 10, 1.0, 1.0, 100, 0)).graph
    rep = train_baseline(g, BaselineConfig(kind="gcn", hidden_dim=16, epochs=50)).report
    assert rep.auc > 0.9


@pytest.mark.parametrize("kind", ["gcn", "sage", "mlp"])
def test_baseline_gradcheck(kind):
    g = generate(CsbmParams((1.0, 0.0), (0.0, 1.0), 4, 0.75, 0.25, 6, 0)).graph
    model = BaselineModel(g, BaselineConfig(kind=kind, hidden_dim=4, beta=1e-3))
    subset = np.arange(0, 12, 2)
    # nonzero biases keep pre-activations off the ReLU kink at exactly 0
    rng = np.random.default_rng(1)
    for name, p in model.params.items():
        if name.endswith(".b"):
            p.data[...] = rng.uniform(0.1, 0.5, p.shape)
    err = ad.gradcheck(lambda: model.loss(subset)[0], list(model.params.values()))
    assert err < 1e-6


def test_config_validation():
    with pytest.raises(ValueError):
        BaselineConfig(kind="gat")
    with pytest.raises(ValueError, match="unknown"):
        BaselineConfig.from_dict({"kind": "gcn", "dropout": 0.5})


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason=(
    "symmetrizing CSBM-C(0.95, 0.05) gives class 0 about 2.5x the degree of class 1; "
    "GCN reads class from degree alone and scores AUC 1.0 even with identical feature means"))
def test_gcn_degrades_under_class_dependent_homophily():
    hi, lo = [], []
    for seed in range(5):
        p = dict(mu0=(0.5, 0.0), mu1=(-0.5, 0.0), d=20, n_per_class=100, seed=seed)
        for h, out in (((0.95, 0.95), hi), ((0.95, 0.05), lo)):
            g = generate(CsbmParams(h0=h[0], h1=h[1], **p)).graph
            split = make_split(g, (0.4, 0.3, 0.3), seed)
            out.append(train_baseline(g, BaselineConfig(kind="gcn", seed=seed, epochs=100), split).report.auc)
    assert np.mean(lo) < np.mean(hi)


def test_class_dependent_homophily_splits_degrees():
    # in-edges make the union degree roughly d*(1 + h0 + 1 - h1) for class 0 and d*(1 + h1 + 1 - h0) for class 1
    g = generate(CsbmParams((0.5, 0.0), (-0.5, 0.0), 20, 0.95, 0.05, 200, 0)).graph
    deg = g.degrees(0)
    assert deg[g.labels == 0].mean() > 2 * deg[g.labels == 1].mean()
    control = generate(CsbmParams((0.5, 0.0), (-0.5, 0.0), 20, 0.95, 0.95, 200, 0)).graph
    dc = control.degrees(0)
    assert abs(dc[control.labels == 0].mean() - dc[control.labels == 1].mean()) < 2
