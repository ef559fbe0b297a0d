"""Pooling an analysis across multiple synthetic sets.

Each set yields a point estimate and a within-set variance; the combiner
averages the points, adds the between-set spread to the variance, and
widens the t interval accordingly.  With one set (or zero between-set
spread) it falls back gracefully.
"""

import numpy as np

from dips import (
    BernoulliModel,
    CategoricalColumn,
    PrivacyBudget,
    PrivacyLedger,
    RngStream,
    TabularDataset,
    combine,
    estimate_proportion,
    modips_release,
)

rng = RngStream(5)
x = (rng.substream(0).generator.random(400) < 0.25).astype(np.int64)
data = TabularDataset([CategoricalColumn("x", (0, 1))], {"x": x})

release = modips_release(rng.substream(1), data, BernoulliModel(), 1.0,
                         m=5, ledger=PrivacyLedger(PrivacyBudget(1.0)))
per_set = [estimate_proportion(s.column("x")) for s in release.sets]
for j, e in enumerate(per_set):
    print(f"set {j + 1}: estimate {e.estimate:.4f}, "
          f"within-variance {e.within_variance:.2e}")

pooled = combine(per_set)
print(f"pooled: {pooled.point:.4f}, between B={pooled.between_B:.2e}, "
      f"within W={pooled.within_W:.2e}, total T={pooled.total_T:.2e}")
print(f"95% interval ({pooled.ci_low:.4f}, {pooled.ci_high:.4f}) "
      f"on {pooled.df:.1f} degrees of freedom "
      f"(source proportion {x.mean():.4f})")

single = combine(per_set[:1])
print(f"single-set fallback: interval ({single.ci_low:.4f}, "
      f"{single.ci_high:.4f}), single_set={single.single_set}")
