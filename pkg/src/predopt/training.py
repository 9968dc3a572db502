"""Training loops: surrogate-gradient learning, two-stage and SPO+ baselines.

The surrogate method follows the decision-focused recipe: predict the
unknown parameter block, solve the original problem under the prediction,
read off the segment assignment at that optimum, and push the closed-form
Jacobian-times-true-gradient back through the predictor. Baselines train
on plain prediction losses. All methods share the evaluation protocol:
validation/test regret against the reference optimum under true
parameters, early stopping on validation regret, best checkpoint restored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.stats

from . import mlp
from .datagen import PredictionDataset, default_batch_size
from .penalty import empirical_beta, recommended_beta
from .problems import (
    Family,
    PredictionTarget,
    ProblemInstance,
    feasibility_violation,
    true_objective,
    unify,
)
from .randomness import substream
from .solver import SolveStatus, extended_cost_vector, solve_extended_lp, solve_original
from .surrogate import (
    SingularSystem,
    grad_loss_C,
    grad_loss_Q,
    grad_loss_theta,
    segment_state,
)

__all__ = [
    "TrainConfig",
    "EvalReport",
    "TTestResult",
    "TrainingDiverged",
    "train_surrogate",
    "train_two_stage",
    "train_spo_plus",
    "train_method",
    "evaluate",
    "paired_ttest",
    "estimate_gradient_bound",
]

METHODS = ("surrogate", "two_stage_l1", "two_stage_l2", "weighted_l1", "spo_plus")


class TrainingDiverged(RuntimeError):
    """Raised when too many samples hit singular segment systems."""


@dataclass
class TrainConfig:
    method: str = "surrogate"
    epochs: int = 40
    batch_size: int | None = None
    learning_rate: float = 0.01
    clip_norm: float | None = 1e-4
    optimizer: str = "adagrad"
    hidden: tuple[int, int] = (128, 128)
    K: float = 25.0
    beta_policy: str = "empirical"
    beta_k: float = 5.0
    beta_step: int = 0
    early_stop_patience: int = 4
    seed: int = 0
    solver_tol: float = 1e-8
    singular_fail_fraction: float = 0.10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.beta_policy not in ("empirical", "theorem"):
            raise ValueError("beta_policy must be 'empirical' or 'theorem'")
        if self.epochs < 0 or self.early_stop_patience < 1:
            raise ValueError("epochs must be >= 0 and patience >= 1")


@dataclass
class EvalReport:
    mean_regret: float
    std_regret: float
    mean_mse: float
    epochs_run: int
    regrets: np.ndarray
    mses: np.ndarray
    max_violation: float
    violations: np.ndarray
    solver_failures: int


@dataclass
class TTestResult:
    t: float
    p: float
    df: int
    degenerate: bool


def estimate_gradient_bound(dataset: PredictionDataset, problem: ProblemInstance) -> float:
    """Data-driven E: largest train-label gradient scale plus soft-term slope."""
    _, labels = dataset.subset("train")
    if problem.prediction_target is PredictionTarget.C:
        row_norm = max(
            float(np.max(np.linalg.norm(lbl.reshape(problem.m3, problem.n), axis=1)))
            for lbl in labels
        )
        E = float(np.sum(problem.alpha)) * row_norm
        if problem.alpha2 is not None:
            E += float(np.sum(problem.alpha2)) * row_norm
        return E
    theta_cap = float(np.max(np.linalg.norm(labels, axis=1)))
    E = theta_cap
    if problem.m3:
        max_row = float(np.max(np.linalg.norm(problem.C, axis=1)))
        E += float(np.sum(problem.alpha)) * max_row
        if problem.alpha2 is not None:
            E += float(np.sum(problem.alpha2)) * max_row
    return E


def _resolve_beta(cfg: TrainConfig, dataset: PredictionDataset, problem: ProblemInstance) -> float:
    E = estimate_gradient_bound(dataset, problem)
    if cfg.beta_policy == "theorem":
        return recommended_beta(problem, E)
    return empirical_beta(problem, E, k=cfg.beta_k, step=cfg.beta_step)


def _build_model(cfg: TrainConfig, in_dim: int, out_dim: int) -> mlp.MlpModel:
    sizes = [in_dim, *cfg.hidden, out_dim]
    return mlp.init_mlp(sizes, substream(cfg.seed, "mlp-init"))


def _true_solution(problem: ProblemInstance, label: np.ndarray, tol: float):
    inst = problem.with_predicted_block(label)
    report = solve_original(inst, tol)
    return inst, report


class _TrueSolveCache:
    """Reference optima under true parameters, keyed by sample index."""

    def __init__(self, problem: ProblemInstance, labels: np.ndarray, tol: float):
        self.problem = problem
        self.labels = labels
        self.tol = tol
        self._store: dict[int, tuple[ProblemInstance, object]] = {}

    def get(self, i: int):
        if i not in self._store:
            self._store[i] = _true_solution(self.problem, self.labels[i], self.tol)
        return self._store[i]


def evaluate(
    model: mlp.MlpModel,
    dataset: PredictionDataset,
    split: str,
    problem: ProblemInstance,
    cfg: TrainConfig,
    true_cache: _TrueSolveCache | None = None,
    epochs_run: int = 0,
) -> EvalReport:
    """Predict, optimize under the prediction, score under the truth."""
    idx = dataset.indices(split)
    features, labels = dataset.features, dataset.labels
    cache = true_cache or _TrueSolveCache(problem, labels, cfg.solver_tol)
    regrets, mses, violations = [], [], []
    failures = 0
    for i in idx:
        pred, _ = mlp.forward(model, features[i])
        inst_true, true_report = cache.get(int(i))
        pred_report = solve_original(problem.with_predicted_block(pred), cfg.solver_tol)
        mses.append(float(np.mean((pred - labels[i]) ** 2)))
        if (
            true_report.status is not SolveStatus.OPTIMAL
            or pred_report.status is not SolveStatus.OPTIMAL
        ):
            failures += 1
            regrets.append(np.nan)
            violations.append(np.nan)
            continue
        x_hat = pred_report.x_opt
        value = true_objective(inst_true, true_report.x_opt) - true_objective(inst_true, x_hat)
        regrets.append(float(value))
        violations.append(feasibility_violation(inst_true, x_hat))
    regrets = np.asarray(regrets)
    mses = np.asarray(mses)
    violations = np.asarray(violations)
    good = ~np.isnan(regrets)
    return EvalReport(
        mean_regret=float(np.mean(regrets[good])) if good.any() else math.nan,
        std_regret=float(np.std(regrets[good])) if good.any() else math.nan,
        mean_mse=float(np.mean(mses)),
        epochs_run=epochs_run,
        regrets=regrets,
        mses=mses,
        max_violation=float(np.nanmax(violations)) if good.any() else math.nan,
        violations=violations,
        solver_failures=failures,
    )


def _epoch_batches(rng: np.random.Generator, indices: np.ndarray, batch_size: int):
    order = rng.permutation(indices)
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]


def _early_stop_loop(cfg, model, dataset, problem, run_epoch, true_cache):
    """Shared epoch loop: validate on regret, keep the best checkpoint."""
    history = []
    best_regret = math.inf
    best_model = mlp.clone_model(model)
    best_epoch = 0
    since_best = 0
    for epoch in range(1, cfg.epochs + 1):
        train_metric = run_epoch(epoch)
        report = evaluate(model, dataset, "valid", problem, cfg, true_cache, epochs_run=epoch)
        history.append(
            {
                "epoch": epoch,
                "train_metric": train_metric,
                "valid_regret": report.mean_regret,
                "valid_mse": report.mean_mse,
            }
        )
        if report.mean_regret < best_regret - 1e-12:
            best_regret = report.mean_regret
            best_model = mlp.clone_model(model)
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                break
    model.weights = best_model.weights
    model.biases = best_model.biases
    return history, best_epoch


def train_surrogate(
    dataset: PredictionDataset,
    problem: ProblemInstance,
    cfg: TrainConfig,
) -> tuple[mlp.MlpModel, list[dict]]:
    """Decision-focused training through the smoothed penalty system."""
    target = problem.prediction_target
    out_dim = int(np.prod(dataset.label_shape))
    model = _build_model(cfg, dataset.features.shape[1], out_dim)
    opt = mlp.make_optimizer(model, cfg.optimizer, cfg.learning_rate, cfg.clip_norm)
    rng = substream(cfg.seed, "train-shuffle")
    batch_size = cfg.batch_size or default_batch_size(len(dataset.train_idx) * 2)
    beta = _resolve_beta(cfg, dataset, problem)
    K = cfg.K
    shared_uf = None
    if target is not PredictionTarget.C:
        shared_uf = unify(problem, beta)
    true_cache = _TrueSolveCache(problem, dataset.labels, cfg.solver_tol)

    def run_epoch(epoch: int) -> float:
        del epoch
        singular = 0
        seen = 0
        value_sum = 0.0
        for batch in _epoch_batches(rng, dataset.train_idx, batch_size):
            grads = None
            used = 0
            for i in batch:
                seen += 1
                xi = dataset.features[i]
                pred, fcache = mlp.forward(model, xi)
                inst_pred = problem.with_predicted_block(pred)
                inst_true = problem.with_predicted_block(dataset.labels[i])
                pred_report = solve_original(inst_pred, cfg.solver_tol)
                if pred_report.status is not SolveStatus.OPTIMAL:
                    singular += 1
                    continue
                x_hat = pred_report.x_opt
                uf = shared_uf if shared_uf is not None else unify(inst_pred, beta)
                state = segment_state(uf.Cp @ x_hat - uf.dp, K)
                try:
                    if target is PredictionTarget.THETA:
                        upstream = grad_loss_theta(uf, inst_true, x_hat, state, K)
                    elif target is PredictionTarget.Q:
                        upstream = grad_loss_Q(
                            uf, inst_true, x_hat, state, K, inst_pred.Q
                        ).reshape(-1)
                    else:
                        upstream = grad_loss_C(
                            uf, inst_true, x_hat, state, K, inst_pred.C
                        ).reshape(-1)
                except SingularSystem:
                    singular += 1
                    continue
                sample = mlp.backward(model, fcache, -upstream)
                if grads is None:
                    grads = sample
                else:
                    for acc, g in zip(grads.arrays(), sample.arrays()):
                        acc += g
                used += 1
                value_sum += true_objective(inst_true, x_hat)
            if grads is not None and used:
                for g in grads.arrays():
                    g /= used
                mlp.step(model, grads, opt)
        if seen and singular / seen > cfg.singular_fail_fraction:
            raise TrainingDiverged(
                f"{singular}/{seen} samples hit singular segment systems; "
                "reconsider K or the penalty multiplier"
            )
        return value_sum / max(seen - singular, 1)

    history, _ = _early_stop_loop(cfg, model, dataset, problem, run_epoch, true_cache)
    return model, history


def _prediction_loss_grad(method: str, pred, label, problem: ProblemInstance):
    """Pointwise loss gradient for the two-stage objectives."""
    diff = pred - label
    L = diff.size
    if method == "two_stage_l2":
        return float(np.mean(diff * diff)), 2.0 * diff / L
    if method == "two_stage_l1":
        return float(np.mean(np.abs(diff))), np.sign(diff) / L
    # weighted_l1: the second penalty weight prices overestimation, the
    # first prices underestimation, broadcast over the predicted block
    a1 = problem.alpha
    a2 = problem.alpha2 if problem.alpha2 is not None else problem.alpha
    shape = (problem.m3, problem.n) if problem.prediction_target is PredictionTarget.C else (-1,)
    d2 = diff.reshape(shape)
    w_over = a2.reshape(-1, *([1] * (d2.ndim - 1)))
    w_under = a1.reshape(-1, *([1] * (d2.ndim - 1)))
    loss = np.mean(w_over * np.maximum(d2, 0.0) + w_under * np.maximum(-d2, 0.0))
    grad = (w_over * (d2 > 0.0) - w_under * (d2 < 0.0)) / L
    return float(loss), grad.reshape(pred.shape)


def train_two_stage(
    dataset: PredictionDataset,
    problem: ProblemInstance,
    cfg: TrainConfig,
) -> tuple[mlp.MlpModel, list[dict]]:
    """Supervised baseline on L1/L2/weighted-L1 prediction losses."""
    if cfg.method not in ("two_stage_l1", "two_stage_l2", "weighted_l1"):
        raise ValueError("train_two_stage expects a two-stage method")
    out_dim = int(np.prod(dataset.label_shape))
    model = _build_model(cfg, dataset.features.shape[1], out_dim)
    opt = mlp.make_optimizer(model, cfg.optimizer, cfg.learning_rate, cfg.clip_norm)
    rng = substream(cfg.seed, "train-shuffle")
    batch_size = cfg.batch_size or default_batch_size(len(dataset.train_idx) * 2)
    true_cache = _TrueSolveCache(problem, dataset.labels, cfg.solver_tol)

    def run_epoch(epoch: int) -> float:
        del epoch
        total = 0.0
        count = 0
        for batch in _epoch_batches(rng, dataset.train_idx, batch_size):
            grads = None
            for i in batch:
                pred, fcache = mlp.forward(model, dataset.features[i])
                loss, upstream = _prediction_loss_grad(cfg.method, pred, dataset.labels[i], problem)
                total += loss
                count += 1
                sample = mlp.backward(model, fcache, upstream)
                if grads is None:
                    grads = sample
                else:
                    for acc, g in zip(grads.arrays(), sample.arrays()):
                        acc += g
            if grads is not None:
                for g in grads.arrays():
                    g /= len(batch)
                mlp.step(model, grads, opt)
        return total / max(count, 1)

    history, _ = _early_stop_loop(cfg, model, dataset, problem, run_epoch, true_cache)
    return model, history


def train_spo_plus(
    dataset: PredictionDataset,
    problem: ProblemInstance,
    cfg: TrainConfig,
) -> tuple[mlp.MlpModel, list[dict]]:
    """SPO+ subgradient training on the slack-LP rewrite (theta targets only)."""
    if problem.family is not Family.LINEAR or problem.prediction_target is not PredictionTarget.THETA:
        raise ValueError("SPO+ applies to linear-family theta prediction only")
    out_dim = int(np.prod(dataset.label_shape))
    model = _build_model(cfg, dataset.features.shape[1], out_dim)
    opt = mlp.make_optimizer(model, cfg.optimizer, cfg.learning_rate, cfg.clip_norm)
    rng = substream(cfg.seed, "train-shuffle")
    batch_size = cfg.batch_size or default_batch_size(len(dataset.train_idx) * 2)
    true_cache = _TrueSolveCache(problem, dataset.labels, cfg.solver_tol)
    n = problem.n

    true_ext: dict[int, np.ndarray] = {}

    def run_epoch(epoch: int) -> float:
        del epoch
        total = 0.0
        count = 0
        for batch in _epoch_batches(rng, dataset.train_idx, batch_size):
            grads = None
            for i in batch:
                i = int(i)
                label = dataset.labels[i]
                if i not in true_ext:
                    true_ext[i] = solve_extended_lp(problem, extended_cost_vector(problem, label))
                pred, fcache = mlp.forward(model, dataset.features[i])
                v_spo = solve_extended_lp(
                    problem, extended_cost_vector(problem, 2.0 * pred - label)
                )
                subgrad = (true_ext[i] - v_spo)[:n]
                total += float(np.linalg.norm(subgrad))
                count += 1
                sample = mlp.backward(model, fcache, -subgrad)
                if grads is None:
                    grads = sample
                else:
                    for acc, g in zip(grads.arrays(), sample.arrays()):
                        acc += g
            if grads is not None:
                for g in grads.arrays():
                    g /= len(batch)
                mlp.step(model, grads, opt)
        return total / max(count, 1)

    history, _ = _early_stop_loop(cfg, model, dataset, problem, run_epoch, true_cache)
    return model, history


def train_method(
    dataset: PredictionDataset,
    problem: ProblemInstance,
    cfg: TrainConfig,
) -> tuple[mlp.MlpModel, list[dict], EvalReport]:
    """Train per cfg.method, then evaluate on the test split."""
    if cfg.method == "surrogate":
        model, history = train_surrogate(dataset, problem, cfg)
    elif cfg.method == "spo_plus":
        model, history = train_spo_plus(dataset, problem, cfg)
    else:
        model, history = train_two_stage(dataset, problem, cfg)
    epochs_run = history[-1]["epoch"] if history else 0
    report = evaluate(model, dataset, "test", problem, cfg, epochs_run=epochs_run)
    return model, history, report


def paired_ttest(a, b) -> TTestResult:
    """One-tailed paired t-test of mean(a - b) > 0.

    Returns the statistic, the upper-tail p-value with r-1 degrees of
    freedom, and a degenerate flag when the differences have zero
    variance (identical samples give 0/0).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be equal-length vectors")
    r = a.size
    if r < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    df = r - 1
    if sd == 0.0:
        return TTestResult(t=math.nan, p=math.nan, df=df, degenerate=True)
    t = float(np.mean(d) / (sd / math.sqrt(r)))
    p = float(scipy.stats.t.sf(t, df))
    return TTestResult(t=t, p=p, df=df, degenerate=False)
