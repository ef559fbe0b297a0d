"""Monte-Carlo benchmark harness: four simulation studies comparing the
synthesizers on bias, RMSE, 95% CI coverage, and CI width.

Study 1: Bernoulli data; proportion inference.
Study 2: bounded normal data; mean and variance inference.
Study 3: Gaussian mixture over a 2x3x4 cross-tabulation with bivariate
         continuous measurements; correlation, variances, marginals.
Study 4: bivariate normal covariates plus three sequential logistic
         outcomes; means, covariance, regression coefficients.

Every replication owns its own ledger and derived random stream, so the
loop over (eps, method, rep) can be reordered or parallelized without
changing any draw.  Per-replication failures are recorded as unusable and
never abort a study.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .budget import PrivacyBudget, PrivacyLedger
from .dataset import CategoricalColumn, ContinuousColumn, TabularDataset
from .hist_synth import (
    AllCellsZero,
    BinnedAxis,
    GridSpec,
    bin_count_from_width,
    bin_width_scott,
    build_histogram,
    laplace_sanitizer_crosstab,
    perturb_histogram,
    sample_from_histogram,
    smooth_histogram,
)
from .inference import (
    DegenerateEstimate,
    NonConvergence,
    combine,
    estimate_correlation,
    estimate_mean,
    estimate_proportion,
    estimate_variance,
    excess_kurtosis,
    firth_logistic,
    fit_multinomial_logit,
)
from .param_synth import (
    BernoulliModel,
    GaussianMixtureModel,
    NormalModel,
    SequentialLogisticModel,
    bbmr_synthesizer,
    md_synthesizer,
    modips_release,
)
from .randvar import RngStream

__all__ = [
    "StudyConfig",
    "MetricRow",
    "METRIC_COLUMNS",
    "STUDY_METHODS",
    "run_study",
    "report",
    "empty_cell_study",
    "simulate_truth_sim1",
    "simulate_truth_sim2",
    "simulate_truth_sim3",
    "simulate_truth_sim4",
]


# mixture truth: per-cell bivariate means and cell probabilities over the
# 2x3x4 cross-tabulation (24 cells), shared unit variances, correlation 0.5
SIM3_MU1 = np.array([
    1.371, 0.363, 0.404, 1.512, 2.018, 1.305, -1.389, -0.133, -0.284,
    -2.440, -0.307, -0.172, 1.895, -0.257, 0.460, 0.455, 1.035, 0.505,
    -0.784, -2.414, 0.206, 0.758, -1.368, -0.811,
])
SIM3_MU2 = np.array([
    -0.565, 0.633, -0.106, -0.095, -0.063, 2.287, -0.279, 0.636, -2.656,
    1.320, -1.781, 1.215, -0.430, -1.763, -0.640, 0.705, -0.609, -1.717,
    -0.851, 0.036, -0.361, -0.727, 0.433, 1.444,
])
SIM3_PI = np.array([
    0.041, 0.076, 0.024, 0.062, 0.045, 0.041, 0.038, 0.007, 0.064,
    0.064, 0.031, 0.048, 0.053, 0.007, 0.021, 0.065, 0.070, 0.012,
    0.024, 0.028, 0.048, 0.011, 0.058, 0.062,
])
SIM3_LEVELS = (2, 3, 4)
SIM3_SIGMA = 1.0
SIM3_RHO = 0.5

# sequential logistic truth: three regressions on z (and previously drawn
# outcomes), coefficient vectors for the two binary and the three-level
# responses
SIM4_BETA1 = np.array([-1.0, 0.5, -1.0])
SIM4_BETA2 = np.array([-2.0, -1.0, 1.5, 0.5])
SIM4_BETA3 = np.array([0.0, -2.5, 1.0, 0.5, 0.4])
SIM4_BETA4 = np.array([0.1, -1.0, -0.5, 0.0, 1.5])
SIM4_RHO = 0.5


def sim3_cell_bounds() -> tuple[np.ndarray, np.ndarray]:
    """Per-cell truncation bounds [mu_kj - 4, mu_kj + 4] (unit variances)."""
    lower = np.column_stack([SIM3_MU1 - 4 * SIM3_SIGMA,
                             SIM3_MU2 - 4 * SIM3_SIGMA])
    upper = np.column_stack([SIM3_MU1 + 4 * SIM3_SIGMA,
                             SIM3_MU2 + 4 * SIM3_SIGMA])
    return lower, upper


def sim3_z_bounds() -> tuple[tuple[float, float], tuple[float, float]]:
    lower, upper = sim3_cell_bounds()
    return ((float(lower[:, 0].min()), float(upper[:, 0].max())),
            (float(lower[:, 1].min()), float(upper[:, 1].max())))


SIM4_Z_BOUNDS = ((-4.0, 4.0), (-4.0, 4.0))

STUDY_METHODS = {
    "sim1": ("modips-bernoulli", "laplace", "md", "bbmr", "ms", "original"),
    "sim2": ("modips-normal", "modips-normal-conjoint", "pert-hist",
             "smooth-hist", "ms", "original"),
    "sim3": ("modips-mixture", "np-dips", "ms", "original"),
    "sim4": ("modips-logistic", "np-dips", "ms", "original"),
}

METRIC_COLUMNS = ["study", "method", "parameter", "eps", "bias", "rmse",
                  "coverage", "ci_width", "usable_fraction", "reps_used"]


@dataclass
class StudyConfig:
    study: str
    n: int
    truth: dict = field(default_factory=dict)
    eps_grid: list[float] = field(default_factory=lambda: [1.0])
    m: int = 5
    reps: int = 500
    methods: list[str] | None = None
    seed: int = 0
    postprocess: str = "BIT"
    parameters: list[str] | None = None

    def __post_init__(self):
        if self.study not in STUDY_METHODS:
            raise ValueError(f"unknown study {self.study!r}")
        if self.n < 1 or self.reps < 1 or self.m < 1:
            raise ValueError("n, reps, and m must be positive")
        if not self.eps_grid or any(e <= 0 for e in self.eps_grid):
            raise ValueError("eps_grid must be nonempty and positive")
        if list(self.eps_grid) != sorted(self.eps_grid):
            raise ValueError("eps_grid must be sorted ascending")
        if self.postprocess not in ("BIT", "truncate"):
            raise ValueError(f"unknown postprocess {self.postprocess!r}")
        if self.methods is None:
            self.methods = list(STUDY_METHODS[self.study])
        else:
            bad = set(self.methods) - set(STUDY_METHODS[self.study])
            if bad:
                raise ValueError(f"methods {sorted(bad)} not valid for "
                                 f"{self.study}")


@dataclass(frozen=True)
class MetricRow:
    study: str
    method: str
    parameter: str
    eps: float
    bias: float
    rmse: float
    coverage: float
    ci_width: float
    usable_fraction: float
    reps_used: int

    def __post_init__(self):
        for name in ("coverage", "usable_fraction"):
            v = getattr(self, name)
            if math.isfinite(v) and not (0 <= v <= 1):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


# -- truth simulators --------------------------------------------------------

def simulate_truth_sim1(rng: RngStream, n: int, pi: float) -> TabularDataset:
    if not (0 < pi < 1):
        raise ValueError(f"pi must be in (0,1), got {pi}")
    x = (rng.generator.random(n) < pi).astype(np.int64)
    return TabularDataset([CategoricalColumn("x", (0, 1))], {"x": x})


def _truncated_normal(gen, n, mean, sd, lo, hi):
    """Vectorized rejection: redraw out-of-bound values until all fit."""
    out = gen.normal(mean, sd, size=n)
    bad = (out < lo) | (out > hi)
    while bad.any():
        out[bad] = gen.normal(mean, sd, size=int(bad.sum()))
        bad = (out < lo) | (out > hi)
    return out


def simulate_truth_sim2(rng: RngStream, n: int, mu: float = 0.0,
                        sigma2: float = 1.0,
                        bounds: str = "asymmetric") -> TabularDataset:
    sd = math.sqrt(sigma2)
    if bounds == "asymmetric":
        c0, c1 = mu - 3 * sd, mu + 4 * sd
    elif bounds == "symmetric":
        c0, c1 = mu - 4 * sd, mu + 4 * sd
    else:
        raise ValueError(f"unknown bounds variant {bounds!r}")
    x = _truncated_normal(rng.generator, n, mu, sd, c0, c1)
    return TabularDataset([ContinuousColumn("x", c0, c1)], {"x": x})


def _sim3_columns():
    zb = sim3_z_bounds()
    return [
        CategoricalColumn("w1", tuple(range(SIM3_LEVELS[0]))),
        CategoricalColumn("w2", tuple(range(SIM3_LEVELS[1]))),
        CategoricalColumn("w3", tuple(range(SIM3_LEVELS[2]))),
        ContinuousColumn("z1", *zb[0]),
        ContinuousColumn("z2", *zb[1]),
    ]


def simulate_truth_sim3(rng: RngStream, n: int,
                        rho: float = SIM3_RHO) -> TabularDataset:
    gen = rng.generator
    counts = gen.multinomial(n, SIM3_PI / SIM3_PI.sum())
    cells = np.repeat(np.arange(24), counts)
    gen.shuffle(cells)
    cov = np.array([[1.0, rho], [rho, 1.0]]) * SIM3_SIGMA ** 2
    chol = np.linalg.cholesky(cov)
    lower, upper = sim3_cell_bounds()
    mus = np.column_stack([SIM3_MU1, SIM3_MU2])
    z = mus[cells] + gen.standard_normal((n, 2)) @ chol.T
    lo, hi = lower[cells], upper[cells]
    bad = ((z < lo) | (z > hi)).any(axis=1)
    while bad.any():
        idx = np.flatnonzero(bad)
        z[idx] = mus[cells[idx]] + gen.standard_normal((len(idx), 2)) @ chol.T
        bad[idx] = ((z[idx] < lo[idx]) | (z[idx] > hi[idx])).any(axis=1)
    w = np.unravel_index(cells, SIM3_LEVELS)
    return TabularDataset(_sim3_columns(), {
        "w1": w[0].astype(np.int64), "w2": w[1].astype(np.int64),
        "w3": w[2].astype(np.int64), "z1": z[:, 0], "z2": z[:, 1]})


def _sim4_columns():
    return [
        CategoricalColumn("w1", (0, 1)),
        CategoricalColumn("w2", (0, 1)),
        CategoricalColumn("w3", (0, 1, 2)),
        ContinuousColumn("z1", *SIM4_Z_BOUNDS[0]),
        ContinuousColumn("z2", *SIM4_Z_BOUNDS[1]),
    ]


def simulate_truth_sim4(rng: RngStream, n: int,
                        rho: float = SIM4_RHO) -> TabularDataset:
    gen = rng.generator
    cov = np.array([[1.0, rho], [rho, 1.0]])
    chol = np.linalg.cholesky(cov)
    z = gen.standard_normal((n, 2)) @ chol.T
    bad = (np.abs(z) > 4.0).any(axis=1)
    while bad.any():
        idx = np.flatnonzero(bad)
        z[idx] = gen.standard_normal((len(idx), 2)) @ chol.T
        bad[idx] = (np.abs(z[idx]) > 4.0).any(axis=1)
    x1 = np.column_stack([np.ones(n), z])
    p1 = 1.0 / (1.0 + np.exp(-x1 @ SIM4_BETA1))
    w1 = (gen.random(n) < p1).astype(np.int64)
    x2 = np.column_stack([x1, w1])
    p2 = 1.0 / (1.0 + np.exp(-x2 @ SIM4_BETA2))
    w2 = (gen.random(n) < p2).astype(np.int64)
    x3 = np.column_stack([x1, w1, w2])
    a = np.exp(x3 @ SIM4_BETA3)
    b = np.exp(x3 @ SIM4_BETA4)
    u = gen.random(n) * (1.0 + a + b)
    w3 = np.where(u < 1.0, 0, np.where(u < 1.0 + a, 1, 2)).astype(np.int64)
    return TabularDataset(_sim4_columns(), {
        "w1": w1, "w2": w2, "w3": w3, "z1": z[:, 0], "z2": z[:, 1]})


# -- truth values per (study, parameter) -------------------------------------

def _truth_values(config: StudyConfig) -> dict[str, float]:
    if config.study == "sim1":
        return {"pi": float(config.truth.get("pi", 0.25))}
    if config.study == "sim2":
        return {"mu": float(config.truth.get("mu", 0.0)),
                "sigma2": float(config.truth.get("sigma2", 1.0))}
    if config.study == "sim3":
        probs = (SIM3_PI / SIM3_PI.sum()).reshape(SIM3_LEVELS)
        vals = {
            "rho": SIM3_RHO, "sigma1": SIM3_SIGMA ** 2,
            "sigma2": SIM3_SIGMA ** 2,
            "pw1_1": float(probs[1].sum()),
            "pw2_1": float(probs[:, 1].sum()),
            "pw2_2": float(probs[:, 2].sum()),
            "pw3_1": float(probs[:, :, 1].sum()),
            "pw3_2": float(probs[:, :, 2].sum()),
            "pw3_3": float(probs[:, :, 3].sum()),
        }
        return vals
    vals = {"mu1": 0.0, "mu2": 0.0, "sigma1": 1.0, "sigma2": 1.0,
            "rho": SIM4_RHO}
    for tag, beta in (("b1", SIM4_BETA1), ("b2", SIM4_BETA2),
                      ("b3", SIM4_BETA3), ("b4", SIM4_BETA4)):
        for i, v in enumerate(beta):
            vals[f"{tag}_{i}"] = float(v)
    return vals


# -- per-study method runners ------------------------------------------------
# each returns a list of synthetic sets (or raw arrays) for analysis

def _sim1_sets(method, rng, data, eps, m, ledger, postprocess="BIT"):
    """Return a list of binary arrays, one per released set."""
    x = data.column("x")
    n = len(x)
    if method == "original":
        return [x]
    if method == "ms":
        rel = modips_release(rng, data, BernoulliModel(), eps, m,
                             sanitize=False, method="ms")
        return [s.column("x") for s in rel.sets]
    if method == "modips-bernoulli":
        rel = modips_release(rng, data, BernoulliModel(), eps, m,
                             ledger=ledger, postprocess=postprocess,
                             method="modips")
        return [s.column("x") for s in rel.sets]
    if method == "md":
        counts = np.array([n - x.sum(), x.sum()])
        rel = md_synthesizer(rng, counts, eps, m, ledger=ledger)
        return [s.column("cell") for s in rel.sets]
    if method == "bbmr":
        rel = bbmr_synthesizer(rng, int(x.sum()), n, eps, ledger=ledger)
        return [rel.sets[0].column("x")]
    if method == "laplace":
        sets = []
        for j in range(m):
            share = Fraction(eps) / m
            try:
                _, codes = laplace_sanitizer_crosstab(
                    rng.substream(j), data, ["x"], float(share),
                    ledger=ledger, label=f"laplace-set{j}",
                    charge_eps=share)
                sets.append(codes["x"])
            except AllCellsZero:
                if ledger is not None:
                    ledger.charge(f"laplace-set{j}", share,
                                  mode="parallel", group=f"laplace-set{j}")
        return sets
    raise ValueError(f"unknown sim1 method {method!r}")


def _sim2_sets(method, rng, data, eps, m, ledger, config):
    x = data.column("x")
    col = data.columns[0]
    c0, c1 = col.lo, col.hi
    n = len(x)
    if method == "original":
        return [x]
    if method in ("ms", "modips-normal", "modips-normal-conjoint"):
        mode = "conjoint" if method.endswith("conjoint") else "individual"
        model = NormalModel(c0, c1, mode=mode)
        rel = modips_release(rng, data, model, eps, m,
                             ledger=None if method == "ms" else ledger,
                             sanitize=method != "ms",
                             postprocess=config.postprocess, method=method)
        return [s.column("x") for s in rel.sets]
    sd = float(x.std(ddof=1))
    width = bin_width_scott(max(sd, 1e-12), n)
    bins = bin_count_from_width(c0, c1, width)
    grid = GridSpec((BinnedAxis(c0, c1, bins),))
    hist = build_histogram(data, grid, column_names=["x"])
    if method == "smooth-hist":
        density = smooth_histogram(hist, eps, ledger=ledger)
        draw = sample_from_histogram(rng, grid, density, n)
        return [draw["axis0"]]
    if method == "pert-hist":
        sets = []
        for j in range(m):
            share = Fraction(eps) / m
            try:
                sanitized = perturb_histogram(
                    rng.substream(j), hist, float(share), ledger=ledger,
                    label=f"pert-set{j}", charge_eps=share)
                draw = sample_from_histogram(rng.substream(j, 1), grid,
                                             sanitized.density(), n)
                sets.append(draw["axis0"])
            except AllCellsZero:
                if ledger is not None:
                    ledger.charge(f"pert-set{j}", share, mode="parallel",
                                  group=f"pert-set{j}")
        return sets
    raise ValueError(f"unknown sim2 method {method!r}")


def _scott_grid_2d(z, lower, upper):
    """Two-dimensional binned grid over a rectangle, bin counts by Scott's
    rule per coordinate on the supplied points."""
    axes = []
    for j in range(2):
        n = len(z)
        sd = float(z[:, j].std(ddof=1)) if n > 1 else 0.0
        if sd <= 0:
            bins = 1
        else:
            bins = bin_count_from_width(lower[j], upper[j],
                                        bin_width_scott(sd, n))
        axes.append(BinnedAxis(lower[j], upper[j], bins))
    return GridSpec(tuple(axes))


def _sim3_np_set(rng, data, eps_set_frac, ledger, tag):
    """One NP-DIPS release for the mixture study: Laplace-sanitized
    cross-tabulation of w plus a perturbed 2-D histogram of z per cell,
    the per-set budget split 1:1 between the two."""
    half = eps_set_frac / 2
    lower, upper = sim3_cell_bounds()
    sanitized, codes = laplace_sanitizer_crosstab(
        rng.substream(0), data, ["w1", "w2", "w3"], float(half),
        ledger=ledger, label=f"{tag}-counts", charge_eps=half)
    cells_orig = np.ravel_multi_index(
        [data.column("w1"), data.column("w2"), data.column("w3")],
        SIM3_LEVELS)
    z = np.column_stack([data.column("z1"), data.column("z2")])
    cells_new = np.ravel_multi_index(
        [codes["w1"], codes["w2"], codes["w3"]], SIM3_LEVELS)
    n = data.n
    z_new = np.zeros((n, 2))
    hist_group_charged = False
    for k in range(24):
        take = cells_new == k
        n_new = int(take.sum())
        if n_new == 0:
            continue
        sub = rng.substream(1, k)
        orig = z[cells_orig == k]
        drawn = None
        if len(orig) >= 2:
            grid = _scott_grid_2d(orig, lower[k], upper[k])
            clipped = np.clip(orig, lower[k], upper[k])
            cell_cols = [ContinuousColumn("a", lower[k][0], upper[k][0]),
                         ContinuousColumn("b", lower[k][1], upper[k][1])]
            hist = build_histogram(
                TabularDataset(cell_cols,
                               {"a": clipped[:, 0], "b": clipped[:, 1]},
                               validate=False),
                grid, column_names=["a", "b"])
            try:
                pert = perturb_histogram(sub, hist, float(half),
                                         ledger=ledger,
                                         label=f"{tag}-hist",
                                         charge_eps=half)
                hist_group_charged = True
                draw = sample_from_histogram(sub.substream(1), grid,
                                             pert.density(), n_new)
                drawn = np.column_stack([draw["axis0"], draw["axis1"]])
            except AllCellsZero:
                drawn = None
        if drawn is None:
            drawn = sub.generator.uniform(lower[k], upper[k], size=(n_new, 2))
        z_new[take] = drawn
    if ledger is not None and not hist_group_charged:
        ledger.charge(f"{tag}-hist", half, mode="parallel",
                      group=f"{tag}-hist")
    return TabularDataset(_sim3_columns(), {
        "w1": codes["w1"], "w2": codes["w2"], "w3": codes["w3"],
        "z1": z_new[:, 0], "z2": z_new[:, 1]}, validate=False)


def _sim3_sets(method, rng, data, eps, m, ledger, postprocess="BIT"):
    if method == "original":
        return [data]
    if method in ("ms", "modips-mixture"):
        lower, upper = sim3_cell_bounds()
        model = GaussianMixtureModel(SIM3_LEVELS, lower, upper,
                                     sim3_z_bounds())
        rel = modips_release(rng, data, model, eps, m,
                             ledger=None if method == "ms" else ledger,
                             sanitize=method != "ms",
                             postprocess=postprocess, method=method)
        return rel.sets
    if method == "np-dips":
        return [_sim3_np_set(rng.substream(j), data, Fraction(eps) / m,
                             ledger, tag=f"np-set{j}")
                for j in range(m)]
    raise ValueError(f"unknown sim3 method {method!r}")


def _sim4_sets(method, rng, data, eps, m, ledger, postprocess="BIT"):
    if method == "original":
        return [data]
    if method in ("ms", "modips-logistic"):
        model = SequentialLogisticModel(SIM4_Z_BOUNDS)
        rel = modips_release(rng, data, model, eps, m,
                             ledger=None if method == "ms" else ledger,
                             sanitize=method != "ms",
                             postprocess=postprocess, method=method)
        return rel.sets
    if method == "np-dips":
        z = np.column_stack([data.column("z1"), data.column("z2")])
        axes = list(_scott_grid_2d(z, [b[0] for b in SIM4_Z_BOUNDS],
                                   [b[1] for b in SIM4_Z_BOUNDS]).axes)
        from .hist_synth import CategoricalAxis
        grid = GridSpec(tuple(axes) + (CategoricalAxis(2), CategoricalAxis(2),
                                       CategoricalAxis(3)))
        hist = build_histogram(data, grid,
                               column_names=["z1", "z2", "w1", "w2", "w3"])
        sets = []
        n = data.n
        for j in range(m):
            share = Fraction(eps) / m
            sub = rng.substream(j)
            try:
                pert = perturb_histogram(sub, hist, float(share),
                                         ledger=ledger, label=f"np-set{j}",
                                         charge_eps=share)
                draw = sample_from_histogram(sub.substream(1), grid,
                                             pert.density(), n)
                sets.append(TabularDataset(_sim4_columns(), {
                    "w1": draw["axis2"], "w2": draw["axis3"],
                    "w3": draw["axis4"], "z1": draw["axis0"],
                    "z2": draw["axis1"]}, validate=False))
            except AllCellsZero:
                if ledger is not None:
                    ledger.charge(f"np-set{j}", share, mode="parallel",
                                  group=f"np-set{j}")
        return sets
    raise ValueError(f"unknown sim4 method {method!r}")


# -- per-set analyzers -------------------------------------------------------

def _sim3_set_estimates(ds: TabularDataset, params) -> dict:
    w1 = ds.column("w1")
    w2 = ds.column("w2")
    w3 = ds.column("w3")
    z = np.column_stack([ds.column("z1"), ds.column("z2")])
    n = ds.n
    cells = np.ravel_multi_index([w1, w2, w3], SIM3_LEVELS)
    counts = np.bincount(cells, minlength=24)
    resid = z.copy()
    for k in np.flatnonzero(counts > 0):
        resid[cells == k] -= z[cells == k].mean(axis=0)
    s_mat = resid.T @ resid / n
    out = {}
    s11, s22, s12 = s_mat[0, 0], s_mat[1, 1], s_mat[0, 1]
    if "rho" in params:
        if s11 <= 0 or s22 <= 0:
            raise DegenerateEstimate("pooled variance collapsed")
        out["rho"] = estimate_correlation(
            None, r=float(s12 / math.sqrt(s11 * s22)), n=n)
    for name, col, vals in (("sigma1", 0, resid[:, 0]),
                            ("sigma2", 1, resid[:, 1])):
        if name in params:
            s2 = s_mat[col, col] * n / (n - 1)
            if s2 <= 0:
                raise DegenerateEstimate("pooled variance collapsed")
            kappa = excess_kurtosis(vals)
            out[name] = _variance_estimate(float(s2), kappa, n)
    marg = {
        "pw1_1": (w1 == 1), "pw2_1": (w2 == 1), "pw2_2": (w2 == 2),
        "pw3_1": (w3 == 1), "pw3_2": (w3 == 2), "pw3_3": (w3 == 3),
    }
    for name, mask in marg.items():
        if name in params:
            out[name] = estimate_proportion(mask.astype(float))
    return out


def _variance_estimate(s2: float, kappa: float, n: int):
    from .inference import PerSetEstimate
    var = s2 ** 2 * (2.0 / (n - 1) + kappa / n)
    return PerSetEstimate(s2, max(var, 0.0))


def _sim4_set_estimates(ds: TabularDataset, params) -> dict:
    z1, z2 = ds.column("z1"), ds.column("z2")
    w1 = ds.column("w1").astype(float)
    w2 = ds.column("w2").astype(float)
    w3 = ds.column("w3")
    n = ds.n
    out = {}
    if "mu1" in params:
        out["mu1"] = estimate_mean(z1)
    if "mu2" in params:
        out["mu2"] = estimate_mean(z2)
    if "sigma1" in params:
        out["sigma1"] = estimate_variance(z1)
    if "sigma2" in params:
        out["sigma2"] = estimate_variance(z2)
    if "rho" in params:
        out["rho"] = estimate_correlation(z1, z2)
    want_b1 = any(p.startswith("b1_") for p in params)
    want_b2 = any(p.startswith("b2_") for p in params)
    want_b34 = any(p.startswith(("b3_", "b4_")) for p in params)
    x1 = np.column_stack([np.ones(n), z1, z2])
    if want_b1:
        for i, e in enumerate(firth_logistic(x1, w1)):
            out[f"b1_{i}"] = e
    if want_b2:
        x2 = np.column_stack([x1, w1])
        for i, e in enumerate(firth_logistic(x2, w2)):
            out[f"b2_{i}"] = e
    if want_b34:
        x3 = np.column_stack([x1, w1, w2])
        blocks = fit_multinomial_logit(x3, w3)
        for tag, block in zip(("b3", "b4"), blocks):
            for i, e in enumerate(block):
                out[f"{tag}_{i}"] = e
    return {k: v for k, v in out.items() if k in params}


# -- replication drivers -----------------------------------------------------

DEFAULT_PARAMS = {
    "sim1": ["pi"],
    "sim2": ["mu", "sigma2"],
    "sim3": ["rho", "sigma1", "sigma2", "pw1_1", "pw2_1", "pw2_2",
             "pw3_1", "pw3_2", "pw3_3"],
    "sim4": ["mu1", "mu2", "rho"],
}

_NO_BUDGET_METHODS = ("ms", "original")


def _run_rep(config: StudyConfig, method: str, rng: RngStream,
             eps: float, params) -> tuple[dict, dict]:
    """One replication: simulate truth, synthesize, analyze, combine.

    Returns ({parameter: CombinedEstimate or None}, extras)."""
    truth_rng = rng.substream(0)
    method_rng = rng.substream(1)
    n, m = config.n, config.m
    ledger = None
    if method not in _NO_BUDGET_METHODS:
        ledger = PrivacyLedger(PrivacyBudget(eps))
    extras = {}
    if config.study == "sim1":
        data = simulate_truth_sim1(truth_rng, n,
                                   float(config.truth.get("pi", 0.25)))
        sets = _sim1_sets(method, method_rng, data, eps, m, ledger,
                          config.postprocess)
        union = (np.concatenate(sets) if sets else np.array([]))
        usable = union.size > 0 and 0.0 < union.mean() < 1.0
        results = {"pi": None}
        if usable:
            results["pi"] = combine([estimate_proportion(s) for s in sets
                                     if s.size])
    elif config.study == "sim2":
        data = simulate_truth_sim2(truth_rng, n,
                                   float(config.truth.get("mu", 0.0)),
                                   float(config.truth.get("sigma2", 1.0)),
                                   config.truth.get("bounds", "asymmetric"))
        sets = _sim2_sets(method, method_rng, data, eps, m, ledger, config)
        results = {}
        for param, estimator in (("mu", estimate_mean),
                                 ("sigma2", estimate_variance)):
            if param not in params:
                continue
            per_set = []
            for s in sets:
                try:
                    per_set.append(estimator(s))
                except DegenerateEstimate:
                    continue
            results[param] = combine(per_set) if per_set else None
    else:
        simulate = (simulate_truth_sim3 if config.study == "sim3"
                    else simulate_truth_sim4)
        runner = _sim3_sets if config.study == "sim3" else _sim4_sets
        analyzer = (_sim3_set_estimates if config.study == "sim3"
                    else _sim4_set_estimates)
        data = simulate(truth_rng, n)
        sets = runner(method, method_rng, data, eps, m, ledger,
                      config.postprocess)
        per_param: dict[str, list] = {p: [] for p in params}
        empties = []
        for s in sets:
            if config.study == "sim3":
                cells = np.ravel_multi_index(
                    [s.column("w1"), s.column("w2"), s.column("w3")],
                    SIM3_LEVELS)
                empties.append(int((np.bincount(cells, minlength=24) == 0)
                                   .sum()))
            try:
                ests = analyzer(s, params)
            except (DegenerateEstimate, NonConvergence):
                continue
            for p, e in ests.items():
                per_param[p].append(e)
        results = {p: (combine(lst) if lst else None)
                   for p, lst in per_param.items()}
        if empties:
            extras["empty_cells"] = float(np.mean(empties))
    if ledger is not None:
        spend = ledger.effective_spend_exact()
        if spend != Fraction(eps):
            raise RuntimeError(
                f"ledger audit failure: {method} spent {spend} != {eps}")
        extras["ledger_exact"] = True
    return results, extras


def run_study(config: StudyConfig) -> list[MetricRow]:
    """Run the configured Monte-Carlo study; one MetricRow per
    (eps, method, parameter)."""
    params = config.parameters or DEFAULT_PARAMS[config.study]
    truth = _truth_values(config)
    unknown = set(params) - set(truth)
    if unknown:
        raise ValueError(f"unknown parameters {sorted(unknown)} for "
                         f"{config.study}")
    study_idx = list(STUDY_METHODS).index(config.study)
    rows = []
    for eps_idx, eps in enumerate(config.eps_grid):
        for method_idx, method in enumerate(config.methods):
            acc = {p: {"points": [], "covered": [], "widths": []}
                   for p in params}
            usable_count = {p: 0 for p in params}
            failures = 0
            for rep in range(config.reps):
                rng = RngStream(config.seed).substream(
                    study_idx, eps_idx, method_idx, rep)
                try:
                    results, _ = _run_rep(config, method, rng, eps, params)
                except (AllCellsZero, NonConvergence, DegenerateEstimate,
                        np.linalg.LinAlgError):
                    failures += 1
                    continue
                for p in params:
                    est = results.get(p)
                    if est is None:
                        continue
                    usable_count[p] += 1
                    acc[p]["points"].append(est.point)
                    acc[p]["covered"].append(
                        est.ci_low <= truth[p] <= est.ci_high)
                    acc[p]["widths"].append(est.ci_high - est.ci_low)
            for p in params:
                pts = np.array(acc[p]["points"])
                scale = (truth[p] if config.study == "sim2"
                         and p == "sigma2" else 1.0)
                if pts.size:
                    bias = float(pts.mean() - truth[p]) / scale
                    rmse = float(np.sqrt(np.mean((pts - truth[p]) ** 2)))
                    rmse /= scale
                    coverage = float(np.mean(acc[p]["covered"]))
                    width = float(np.mean(acc[p]["widths"])) / scale
                else:
                    bias = rmse = coverage = width = math.nan
                rows.append(MetricRow(
                    config.study, method, p, eps, bias, rmse, coverage,
                    width, usable_count[p] / config.reps, usable_count[p]))
    return rows


def empty_cell_study(eps: float, reps: int, seed: int, method: str,
                     n: int = 1000, m: int = 5) -> float:
    """Average number of empty categorical cells (out of 24) per released
    set in the mixture study."""
    config = StudyConfig("sim3", n, eps_grid=[eps], m=m, reps=reps,
                         methods=[method], seed=seed, parameters=["rho"])
    values = []
    for rep in range(reps):
        rng = RngStream(seed).substream(2, 0, 0, rep)
        try:
            _, extras = _run_rep(config, method, rng, eps, ["rho"])
        except (AllCellsZero, NonConvergence, DegenerateEstimate):
            continue
        if "empty_cells" in extras:
            values.append(extras["empty_cells"])
    if not values:
        raise RuntimeError("no usable replications")
    return float(np.mean(values))


# -- reporting ---------------------------------------------------------------

def _format_field(value):
    if isinstance(value, float):
        return repr(float(value))
    return value


def report(rows: list[MetricRow], out_dir: str | Path,
           config: StudyConfig | None = None) -> dict:
    """Write one CSV per study plus a JSON index; returns the index."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from . import __version__
    studies = sorted({r.study for r in rows}) or (
        [config.study] if config else [])
    index = {"version": __version__, "files": {},
             "config": (config.__dict__ if config else None)}
    for study in studies or ["empty"]:
        path = out_dir / f"{study}_metrics.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRIC_COLUMNS)
            for r in rows:
                if r.study != study:
                    continue
                writer.writerow([_format_field(getattr(r, c))
                                 for c in METRIC_COLUMNS])
        index["files"][study] = path.name
    with open(out_dir / "index.json", "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
    return index


def load_metrics(path: str | Path) -> list[MetricRow]:
    """Parse a metrics CSV back into rows (bit-exact for repr'd floats)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            rows.append(MetricRow(
                rec["study"], rec["method"], rec["parameter"],
                float(rec["eps"]), float(rec["bias"]), float(rec["rmse"]),
                float(rec["coverage"]), float(rec["ci_width"]),
                float(rec["usable_fraction"]), int(rec["reps_used"])))
    return rows
