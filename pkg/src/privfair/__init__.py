"""privfair: differential-privacy / group-fairness benchmark toolkit.

Building blocks: seeded random-matrix primitives, a Renyi-DP accountant for the
(subsampled) Gaussian mechanism, DP-SGD training, Wishart-noised DP-PCA, GroupDRO,
group-fairness metrics, correlation analysis, and an experiment harness with a
representation-leakage attack.
"""

__version__ = "0.1.0"

from . import randmat, accountant, dpsgd, models, dppca, fairmetrics, analysis, datasets  # noqa: F401
