"""Synthetic datasets and problem-parameter generators for the benchmarks.

The prediction dataset follows a structural causal recipe: latent features
drawn from a correlated Gaussian pass through a fixed random nonlinearity
to produce labels, then small observation noise is added on both sides.
Problem parameters for the three applications (synthetic LP, portfolio
selection, resource provisioning) are generated with the documented
distributions; a generic CSV loader lets real data replace any of them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .problems import Family, PredictionTarget, ProblemInstance
from .randomness import substream

__all__ = [
    "GenConfig",
    "PredictionDataset",
    "DatasetFormatError",
    "gen_prediction_dataset",
    "gen_lp_problem",
    "gen_portfolio_problem",
    "gen_resource_provisioning",
    "save_csv_dataset",
    "load_csv_dataset",
    "default_batch_size",
]


class DatasetFormatError(ValueError):
    """CSV rows that violate the documented schema; carries the line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        suffix = f" (line {line})" if line is not None else ""
        super().__init__(message + suffix)


@dataclass
class GenConfig:
    family: Family = Family.LINEAR
    n: int = 40
    m1: int = 40
    m2: int = 0
    m3: int = 20
    N: int = 1000
    feature_dim: int = 10
    latent_dim: int = 10
    latent_rank: int = 5
    seed: int = 0
    split: tuple[float, float, float] = (0.5, 0.25, 0.25)
    # portfolio knobs
    soft_density: float = 0.1
    alpha_budget: float = 15.0
    cov_shrinkage: float = 0.1
    # resource-provisioning knobs
    hours: int = 24
    regions: int = 8
    ratio_pair: tuple[float, float] = (50.0, 0.5)

    def __post_init__(self):
        self.family = Family(self.family)
        for name in ("n", "N", "feature_dim", "latent_dim", "latent_rank"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


@dataclass
class PredictionDataset:
    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    valid_idx: np.ndarray
    test_idx: np.ndarray
    label_shape: tuple = ()

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on the sample count")
        if not self.label_shape:
            self.label_shape = (self.labels.shape[1],)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    def indices(self, split: str) -> np.ndarray:
        try:
            return {"train": self.train_idx, "valid": self.valid_idx, "test": self.test_idx}[split]
        except KeyError:
            raise ValueError(f"unknown split {split!r}") from None

    def subset(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.indices(split)
        return self.features[idx], self.labels[idx]


def _split_indices(N: int, fractions) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_train = int(round(N * fractions[0]))
    n_valid = int(round(N * fractions[1]))
    idx = np.arange(N)
    return idx[:n_train], idx[n_train : n_train + n_valid], idx[n_train + n_valid :]


def _truncated_normal(rng: np.random.Generator, size, lo: float, hi: float) -> np.ndarray:
    out = np.empty(size).reshape(-1)
    filled = 0
    while filled < out.size:
        draw = rng.standard_normal(out.size - filled)
        keep = draw[(draw >= lo) & (draw <= hi)]
        out[filled : filled + keep.size] = keep
        filled += keep.size
    return out.reshape(size)


def _fixed_mlp(rng: np.random.Generator, dims: tuple[int, ...]):
    mats = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        mats.append(rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out)))

    def apply(Z):
        H = Z
        for i, W in enumerate(mats):
            H = H @ W
            if i < len(mats) - 1:
                H = np.tanh(H)
        return H

    return apply


def gen_prediction_dataset(cfg: GenConfig, label_dim: int | None = None) -> PredictionDataset:
    """Correlated-Gaussian features through a fixed random nonlinearity.

    xi* ~ N(0, I + QQ^T); z = sin(2*pi*xi* B) with binary B; labels are a
    fixed two-hidden-layer map of z, min-max normalized to (0, 1] per
    dimension, plus 0.01-scale truncated-normal noise; observed features
    get 0.01-scale Gaussian noise. Split is contiguous 50/25/25.
    """
    label_dim = cfg.n if label_dim is None else label_dim
    k = cfg.feature_dim
    rng_sigma = substream(cfg.seed, "dataset-sigma")
    rng_feat = substream(cfg.seed, "dataset-features")
    rng_map = substream(cfg.seed, "dataset-map")
    rng_noise = substream(cfg.seed, "dataset-noise")

    Qmix = rng_sigma.uniform(0.0, 1.0, size=(k, cfg.latent_rank))
    sigma = np.eye(k) + Qmix @ Qmix.T
    chol = np.linalg.cholesky(sigma)
    xi_star = rng_feat.standard_normal((cfg.N, k)) @ chol.T

    B = rng_map.integers(0, 2, size=(k, cfg.latent_dim)).astype(float)
    z = np.sin(2.0 * np.pi * (xi_star @ B))
    h = _fixed_mlp(rng_map, (cfg.latent_dim, 32, 32, label_dim))
    raw = h(z)
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    span = np.where(hi - lo < 1e-12, 1.0, hi - lo)
    labels = (raw - lo) / span
    labels = labels + 0.01 * _truncated_normal(rng_noise, labels.shape, 0.0, 1.5)
    features = xi_star + 0.01 * rng_noise.standard_normal(xi_star.shape)

    train, valid, test = _split_indices(cfg.N, cfg.split)
    return PredictionDataset(
        features=features,
        labels=labels,
        train_idx=train,
        valid_idx=valid,
        test_idx=test,
        label_shape=(label_dim,),
    )


def _masked_uniform_rows(rng: np.random.Generator, rows: int, cols: int, keep_prob: float) -> np.ndarray:
    """Uniform(0,1) entries zeroed at random; all-zero rows are redrawn."""
    out = np.empty((rows, cols))
    for r in range(rows):
        while True:
            row = rng.uniform(0.0, 1.0, size=cols) * (rng.random(cols) < keep_prob)
            if np.any(row > 0.0):
                out[r] = row
                break
    return out


def _bernoulli_rows(rng: np.random.Generator, rows: int, cols: int, one_prob: float) -> np.ndarray:
    out = np.empty((rows, cols))
    for r in range(rows):
        while True:
            row = (rng.random(cols) < one_prob).astype(float)
            if np.any(row > 0.0):
                out[r] = row
                break
    return out


def gen_lp_problem(cfg: GenConfig) -> ProblemInstance:
    """Synthetic LP template: masked-uniform A and C, b = 0.5 A 1, d = 0.25 C 1."""
    if cfg.family is not Family.LINEAR:
        raise ValueError("gen_lp_problem generates the linear family")
    rng = substream(cfg.seed, "problem-lp")
    A = _masked_uniform_rows(rng, cfg.m1, cfg.n, 0.5)
    C = _masked_uniform_rows(rng, cfg.m3, cfg.n, 0.5)
    ones = np.ones(cfg.n)
    return ProblemInstance(
        family=Family.LINEAR,
        n=cfg.n,
        theta=np.zeros(cfg.n),
        A=A,
        b=0.5 * A @ ones,
        C=C,
        d=0.25 * C @ ones,
        alpha=rng.uniform(0.0, 0.2, size=cfg.m3),
        prediction_target=PredictionTarget.THETA,
    )


def gen_portfolio_problem(cfg: GenConfig, dataset: PredictionDataset) -> ProblemInstance:
    """Budget-simplex portfolio template with sparse binary soft rows.

    The risk matrix is the train-split label covariance shrunk toward its
    diagonal; m3 = round(0.4 n) soft rows with Bernoulli(soft_density)
    entries, alpha = (alpha_budget / n) * Uniform(0,1), d = 0.25 C 1.
    """
    if cfg.family is not Family.QUADRATIC:
        raise ValueError("gen_portfolio_problem generates the quadratic family")
    rng = substream(cfg.seed, "problem-portfolio")
    n = cfg.n
    m3 = int(round(0.4 * n))
    C = _bernoulli_rows(rng, m3, n, cfg.soft_density)
    _, train_labels = dataset.subset("train")
    cov = np.cov(train_labels.T)
    Q = (1.0 - cfg.cov_shrinkage) * cov + cfg.cov_shrinkage * np.diag(np.diag(cov))
    Q = 0.5 * (Q + Q.T)
    ones = np.ones(n)
    return ProblemInstance(
        family=Family.QUADRATIC,
        n=n,
        theta=np.zeros(n),
        Q=Q,
        B=ones.reshape(1, -1),
        c=np.array([1.0]),
        C=C,
        d=0.25 * C @ ones,
        alpha=(cfg.alpha_budget / n) * rng.uniform(0.0, 1.0, size=m3),
        prediction_target=PredictionTarget.THETA,
    )


def gen_resource_provisioning(cfg: GenConfig) -> tuple[ProblemInstance, PredictionDataset]:
    """Synthetic hourly load stream with daily/weekly seasonality.

    Labels are the next ``hours`` x ``regions`` load matrix (flattened);
    features are the previous day's loads plus calendar encodings. The
    decision allocates over the regions simplex; d is drawn once per
    instance as 0.5 + 0.1 N(0,1), and (alpha1, alpha2) come from the
    configured ratio pair.
    """
    if cfg.family is not Family.ASYMMETRIC:
        raise ValueError("gen_resource_provisioning generates the asymmetric family")
    rng = substream(cfg.seed, "problem-resource")
    H, R = cfg.hours, cfg.regions
    total_hours = (cfg.N + 2) * H

    t = np.arange(total_hours)
    base = rng.uniform(0.35, 0.65, size=R)
    amp_day = rng.uniform(0.10, 0.25, size=R)
    amp_week = rng.uniform(0.03, 0.10, size=R)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=R)
    hours_of_day = (t % 24)[:, None]
    day_frac = (t / 24.0)[:, None]
    series = (
        base[None, :]
        + amp_day[None, :] * np.sin(2.0 * np.pi * hours_of_day / 24.0 + phase[None, :])
        + amp_week[None, :] * np.sin(2.0 * np.pi * day_frac / 7.0)
        + 0.03 * rng.standard_normal((total_hours, R))
    )
    series = np.clip(series, 0.05, None)

    features = np.empty((cfg.N, H * R + 4))
    labels = np.empty((cfg.N, H * R))
    for i in range(cfg.N):
        past = series[i * H : (i + 1) * H]
        future = series[(i + 1) * H : (i + 2) * H]
        hour0 = ((i + 1) * H) % 24
        dow = (((i + 1) * H) // 24) % 7
        features[i] = np.concatenate(
            [
                past.reshape(-1),
                [
                    math.sin(2.0 * np.pi * hour0 / 24.0),
                    math.cos(2.0 * np.pi * hour0 / 24.0),
                    math.sin(2.0 * np.pi * dow / 7.0),
                    math.cos(2.0 * np.pi * dow / 7.0),
                ],
            ]
        )
        labels[i] = future.reshape(-1)

    train, valid, test = _split_indices(cfg.N, cfg.split)
    dataset = PredictionDataset(
        features=features,
        labels=labels,
        train_idx=train,
        valid_idx=valid,
        test_idx=test,
        label_shape=(H, R),
    )

    a1, a2 = cfg.ratio_pair
    problem = ProblemInstance(
        family=Family.ASYMMETRIC,
        n=R,
        B=np.ones((1, R)),
        c=np.array([1.0]),
        C=series[:H].copy(),
        d=0.5 * np.ones(H) + 0.1 * rng.standard_normal(H),
        alpha=a1 * np.ones(H),
        alpha2=a2 * np.ones(H),
        prediction_target=PredictionTarget.C,
    )
    return problem, dataset


def default_batch_size(N: int) -> int:
    if N <= 100:
        return 10
    if N <= 1000:
        return 50
    return 125


# ---------------------------------------------------------------------------
# CSV interchange: header of f_* feature columns, y_* label columns, and an
# optional split column with values train/valid/test.


def save_csv_dataset(dataset: PredictionDataset, path):
    k = dataset.features.shape[1]
    L = dataset.labels.shape[1]
    split_names = np.empty(dataset.size, dtype=object)
    split_names[dataset.train_idx] = "train"
    split_names[dataset.valid_idx] = "valid"
    split_names[dataset.test_idx] = "test"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f_{j}" for j in range(k)] + [f"y_{j}" for j in range(L)] + ["split"])
        for i in range(dataset.size):
            writer.writerow(
                [repr(v) for v in dataset.features[i]]
                + [repr(v) for v in dataset.labels[i]]
                + [split_names[i]]
            )


def load_csv_dataset(path, split=(0.5, 0.25, 0.25)) -> PredictionDataset:
    """Parse the documented CSV schema; malformed cells fail with line numbers."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError("empty file", line=1) from None
        f_cols = [i for i, name in enumerate(header) if name.startswith("f_")]
        y_cols = [i for i, name in enumerate(header) if name.startswith("y_")]
        split_col = header.index("split") if "split" in header else None
        if not f_cols or not y_cols:
            raise DatasetFormatError("header must declare f_* feature and y_* label columns", line=1)

        features, labels, split_names = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"expected {len(header)} cells, found {len(row)}", line=line_no
                )
            try:
                fvals = [float(row[i]) for i in f_cols]
                yvals = [float(row[i]) for i in y_cols]
            except ValueError as exc:
                raise DatasetFormatError(f"unparseable numeric cell: {exc}", line=line_no) from None
            if not all(math.isfinite(v) for v in fvals + yvals):
                raise DatasetFormatError("non-finite cell value", line=line_no)
            features.append(fvals)
            labels.append(yvals)
            if split_col is not None:
                if row[split_col] not in ("train", "valid", "test"):
                    raise DatasetFormatError(
                        f"split must be train/valid/test, got {row[split_col]!r}", line=line_no
                    )
                split_names.append(row[split_col])

    if not features:
        raise DatasetFormatError("no data rows", line=2)
    features = np.asarray(features)
    labels = np.asarray(labels)
    if split_names:
        names = np.asarray(split_names)
        train = np.nonzero(names == "train")[0]
        valid = np.nonzero(names == "valid")[0]
        test = np.nonzero(names == "test")[0]
    else:
        train, valid, test = _split_indices(len(features), split)
    return PredictionDataset(
        features=features,
        labels=labels,
        train_idx=train,
        valid_idx=valid,
        test_idx=test,
    )
