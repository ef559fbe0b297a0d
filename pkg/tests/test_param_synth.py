import math
from fractions import Fraction

import numpy as np
import pytest

from dips.budget import PrivacyBudget, PrivacyLedger
from dips.dataset import CategoricalColumn, ContinuousColumn, TabularDataset
from dips.param_synth import (
    BernoulliModel,
    GaussianMixtureModel,
    NormalModel,
    _md_alpha,
    bbmr_synthesizer,
    md_synthesizer,
    modips_release,
)
from dips.randvar import RngStream


def test_pseudo_count_oracle():
    # [DERIVED] n / (e^eps - 1) at n=100, eps=1
    assert _md_alpha(100, 1.0) == pytest.approx(100 / (math.e - 1), rel=1e-14)
    # huge eps degrades to a harmless positive floor instead of overflowing
    assert 0 < _md_alpha(100, 1e6) < 1e-250
    with pytest.raises(ValueError):
        _md_alpha(100, 0.0)


def test_md_shapes_and_ledger():
    rng = RngStream(7)
    counts = np.array([30, 50, 20])
    ledger = PrivacyLedger(PrivacyBudget(1.5))
    rel = md_synthesizer(rng, counts, eps=1.5, m=3, ledger=ledger)
    assert rel.m == 3
    for ds in rel.sets:
        assert ds.n == 100
        assert set(np.unique(ds.column("cell"))) <= {0, 1, 2}
    assert ledger.effective_spend_exact() == Fraction(1.5)


def test_md_tiny_eps_flattens_toward_uniform():
    # alpha* dominates the observed counts, so cell proportions are pulled
    # to 1/K regardless of the data
    rng = RngStream(11)
    counts = np.array([990, 5, 5])
    props = []
    for r in range(400):
        rel = md_synthesizer(rng.substream(r), counts, eps=0.001)
        c = np.bincount(rel.sets[0].column("cell"), minlength=3)
        props.append(c / 1000)
    mean_p = np.mean(props, axis=0)
    assert np.all(np.abs(mean_p - 1 / 3) < 0.02)


def test_md_huge_eps_reproduces_observed_proportions():
    rng = RngStream(13)
    counts = np.array([700, 200, 100])
    props = []
    for r in range(400):
        rel = md_synthesizer(rng.substream(r), counts, eps=1e6)
        c = np.bincount(rel.sets[0].column("cell"), minlength=3)
        props.append(c / 1000)
    mean_p = np.mean(props, axis=0)
    assert np.all(np.abs(mean_p - counts / 1000) < 0.01)


def test_md_validation():
    rng = RngStream(1)
    with pytest.raises(ValueError):
        md_synthesizer(rng, np.array([0, 0]), eps=1.0)
    with pytest.raises(ValueError):
        md_synthesizer(rng, np.array([1, 2]), eps=-1.0)


def test_bbmr_mean_matches_shrunk_proportion():
    n, n1, eps = 200, 60, 1.0
    alpha = 1 / math.expm1(eps / n)
    p_star = (n1 + alpha) / (n + 2 * alpha)
    rng = RngStream(17)
    means = [bbmr_synthesizer(rng.substream(r), n1, n, eps)
             .sets[0].column("x").mean() for r in range(600)]
    se = math.sqrt(p_star * (1 - p_star) / n / 600)
    assert np.mean(means) == pytest.approx(p_star, abs=5 * se)


def test_bbmr_ledger_and_validation():
    ledger = PrivacyLedger(PrivacyBudget(0.5))
    rel = bbmr_synthesizer(RngStream(3), 10, 50, 0.5, ledger=ledger)
    assert rel.m == 1
    assert rel.sets[0].n == 50
    assert ledger.effective_spend_exact() == Fraction(0.5)
    with pytest.raises(ValueError):
        bbmr_synthesizer(RngStream(3), 60, 50, 0.5)
    with pytest.raises(ValueError):
        bbmr_synthesizer(RngStream(3), 10, 50, 0.0)


def _binary_data(n1, n):
    x = np.zeros(n, dtype=np.int64)
    x[:n1] = 1
    col = CategoricalColumn("x", (0, 1))
    return TabularDataset([col], {"x": x})


def test_modips_bernoulli_ledger_exact_with_allocation():
    data = _binary_data(30, 100)
    ledger = PrivacyLedger(PrivacyBudget(0.7))
    rel = modips_release(RngStream(5), data, BernoulliModel(), eps=0.7, m=4,
                         ledger=ledger)
    assert rel.m == 4
    assert rel.per_set_eps == pytest.approx(0.7 / 4)
    assert ledger.effective_spend_exact() == Fraction(0.7)
    for records in rel.sanitized_stats:
        assert [r.label for r in records] == ["n1"]


def test_modips_normal_uneven_allocation_sums_exactly():
    rng = RngStream(23)
    x = np.clip(rng.generator.normal(0.0, 1.0, size=80), -5, 5)
    cols = [ContinuousColumn("x", -5.0, 5.0)]
    data = TabularDataset(cols, {"x": x})
    ledger = PrivacyLedger(PrivacyBudget(1.0))
    modips_release(RngStream(29), data, NormalModel(-5.0, 5.0), eps=1.0, m=3,
                   allocation=[1.0, 2.0], ledger=ledger)
    assert ledger.effective_spend_exact() == Fraction(1)


def test_modips_allocation_length_checked():
    data = _binary_data(10, 40)
    with pytest.raises(ValueError, match="allocation"):
        modips_release(RngStream(1), data, BernoulliModel(), eps=1.0,
                       allocation=[1.0, 1.0])


def test_modips_without_sanitization_charges_nothing():
    data = _binary_data(30, 100)
    ledger = PrivacyLedger(PrivacyBudget(1.0))
    rel = modips_release(RngStream(5), data, BernoulliModel(), eps=1.0, m=2,
                         ledger=ledger, sanitize=False)
    assert ledger.effective_spend_exact() == 0
    assert rel.sanitized_stats == [[], []]


def test_modips_bernoulli_posterior_mean_at_large_eps():
    # with negligible noise the long-run proportion should match the
    # Beta(1/3 + n1, 1/3 + n - n1) posterior-predictive mean
    n1, n = 30, 100
    data = _binary_data(n1, n)
    target = (n1 + 1 / 3) / (n + 2 / 3)
    means = [modips_release(RngStream(1000 + r), data, BernoulliModel(),
                            eps=1e5).sets[0].column("x").mean()
             for r in range(500)]
    assert np.mean(means) == pytest.approx(target, abs=0.012)


def test_normal_model_conjoint_single_group():
    x = np.linspace(-1, 1, 50)
    data = TabularDataset([ContinuousColumn("x", -2.0, 2.0)], {"x": x})
    model = NormalModel(-2.0, 2.0, mode="conjoint")
    groups = model.sufficient_statistics(data)
    assert len(groups) == 1
    assert groups[0].label == "mean_var"
    r = 4.0
    assert groups[0].delta_s == pytest.approx((r + r ** 2) / 50)
    indiv = NormalModel(-2.0, 2.0).sufficient_statistics(data)
    assert [g.label for g in indiv] == ["mean", "var"]
    assert indiv[0].delta_s == pytest.approx(r / 50)
    assert indiv[1].delta_s == pytest.approx(r ** 2 / 50)
    with pytest.raises(ValueError):
        NormalModel(-2.0, 2.0, mode="joint")


def test_normal_model_variance_cap():
    model = NormalModel(0.0, 1.0)
    assert model._var_upper(10) == pytest.approx(0.25 * 10 / 9)


def test_normal_model_degenerate_variance_flagged():
    x = np.linspace(-1, 1, 50)
    data = TabularDataset([ContinuousColumn("x", -2.0, 2.0)], {"x": x})
    model = NormalModel(-2.0, 2.0)
    model.sufficient_statistics(data)
    flags = []
    mu, sigma2 = model.posterior_draw(
        RngStream(2), {"mean": np.array([0.0]), "var": np.array([0.0])}, flags)
    assert flags == ["PosteriorDegenerate:var"]
    assert sigma2 > 0


def test_modips_normal_recovers_moments_at_large_eps():
    rng = RngStream(31)
    x = np.clip(rng.generator.normal(1.0, 0.5, size=2000), -4, 4)
    data = TabularDataset([ContinuousColumn("x", -4.0, 4.0)], {"x": x})
    rel = modips_release(RngStream(37), data, NormalModel(-4.0, 4.0), eps=1e5)
    synth = rel.sets[0].column("x")
    assert synth.mean() == pytest.approx(x.mean(), abs=0.06)
    assert synth.var(ddof=1) == pytest.approx(x.var(ddof=1), rel=0.15)


def _mixture_model():
    lower = np.array([[-4.0, -4.0], [-1.0, -1.0]])
    upper = np.array([[1.0, 1.0], [4.0, 4.0]])
    return GaussianMixtureModel((2,), lower, upper,
                                ((-4.0, 4.0), (-4.0, 4.0)))


def _mixture_data(rng, n):
    cells = rng.generator.integers(0, 2, size=n)
    mu = np.where(cells[:, None] == 0, -1.5, 1.5)
    z = np.clip(mu + rng.generator.normal(0, 0.5, size=(n, 2)), -4, 4)
    cols = [CategoricalColumn("w1", (0, 1)),
            ContinuousColumn("z1", -4.0, 4.0),
            ContinuousColumn("z2", -4.0, 4.0)]
    return TabularDataset(cols, {"w1": cells.astype(np.int64),
                                 "z1": z[:, 0], "z2": z[:, 1]},
                          validate=False)


def test_mixture_statistic_groups():
    model = _mixture_model()
    data = _mixture_data(RngStream(41), 300)
    groups = model.sufficient_statistics(data)
    assert [g.label for g in groups] == [
        "counts", "zbar1", "zbar2", "var1", "var2", "cov"]
    counts = groups[0].value
    assert counts.sum() == 300
    # per-cell mean sensitivity is range / realized count (both cells span 5)
    np.testing.assert_allclose(groups[1].delta_s, 5.0 / counts, atol=1e-12)


def test_mixture_release_respects_schema_and_ledger():
    model = _mixture_model()
    data = _mixture_data(RngStream(43), 300)
    ledger = PrivacyLedger(PrivacyBudget(1.0))
    rel = modips_release(RngStream(47), data, model, eps=1.0, m=2,
                         ledger=ledger)
    assert ledger.effective_spend_exact() == Fraction(1)
    for ds in rel.sets:
        assert ds.n == 300
        assert set(np.unique(ds.column("w1"))) <= {0, 1}
        for name in ("z1", "z2"):
            v = ds.column(name)
            assert v.min() >= -4.0 and v.max() <= 4.0


def test_mixture_empty_cell_gets_uniform_location():
    model = _mixture_model()
    # all rows in cell 0; cell 1 is empty
    n = 200
    z = np.clip(RngStream(53).generator.normal(-1.5, 0.3, size=(n, 2)), -4, 4)
    cols = [CategoricalColumn("w1", (0, 1)),
            ContinuousColumn("z1", -4.0, 4.0),
            ContinuousColumn("z2", -4.0, 4.0)]
    data = TabularDataset(cols, {"w1": np.zeros(n, dtype=np.int64),
                                 "z1": z[:, 0], "z2": z[:, 1]})
    groups = model.sufficient_statistics(data)
    assert groups[1].defined is not None
    assert list(groups[1].defined) == [True, False]
    flags = []
    stats = {g.label: np.atleast_1d(np.asarray(g.value, float))
             for g in groups}
    pi, mus, sigma = model.posterior_draw(RngStream(59), stats, flags)
    # empty cell's location drawn inside its declared box
    assert -1.0 <= mus[1, 0] <= 4.0 and -1.0 <= mus[1, 1] <= 4.0
    assert np.all(np.linalg.eigvalsh(sigma) > 0)


def test_mixture_recovers_structure_at_large_eps():
    model = _mixture_model()
    data = _mixture_data(RngStream(61), 1500)
    rel = modips_release(RngStream(67), data, model, eps=1e5)
    synth = rel.sets[0]
    for cell, mu in ((0, -1.5), (1, 1.5)):
        mask = synth.column("w1") == cell
        assert mask.sum() > 500
        assert synth.column("z1")[mask].mean() == pytest.approx(mu, abs=0.15)
