"""Bayesian hyperparameter search: GP surrogate + lower-confidence-bound.

The search space is a finite grid (17280 configurations), so the acquisition
function is minimized by exhaustive scan instead of an inner optimizer.
Objectives are minimized; the pipeline feeds in the negative validation
balanced accuracy.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalError, UsageError
from .model.train import TrainConfig

LCB_FACTOR = 2.6
COLD_START_TRIALS = 1  # random draws before the surrogate takes over
MIN_TRIALS_FOR_HYPER_FIT = 5
MAX_JITTER = 1e-4


@dataclass(frozen=True)
class SearchSpace:
    reconstruction_losses: tuple = ("mae", "mape", "mse", "msle")
    optimizers: tuple = ("sgd", "rmsprop", "adam", "adadelta")
    learning_rates: tuple = (1e-5, 1e-4, 1e-3)
    hidden_activations: tuple = ("leaky_relu", "relu", "sigmoid", "tanh")
    output_activations: tuple = ("linear", "sigmoid")
    patiences: tuple = (5, 10, 15)
    batch_sizes: tuple = (32, 64, 128)
    dropout_rates: tuple = (0.1, 0.2, 0.3, 0.4, 0.5)

    def size(self) -> int:
        return (
            len(self.reconstruction_losses)
            * len(self.optimizers)
            * len(self.learning_rates)
            * len(self.hidden_activations)
            * len(self.output_activations)
            * len(self.patiences)
            * len(self.batch_sizes)
            * len(self.dropout_rates)
        )

    def all_configs(self, base: TrainConfig = TrainConfig()) -> list[TrainConfig]:
        configs = []
        for rl, opt, lr, ha, oa, pat, bs, dr in itertools.product(
            self.reconstruction_losses,
            self.optimizers,
            self.learning_rates,
            self.hidden_activations,
            self.output_activations,
            self.patiences,
            self.batch_sizes,
            self.dropout_rates,
        ):
            configs.append(
                replace(
                    base,
                    reconstruction_loss=rl,
                    optimizer=opt,
                    learning_rate=lr,
                    hidden_activation=ha,
                    output_activation=oa,
                    patience=pat,
                    batch_size=bs,
                    dropout_rate=dr,
                )
            )
        return configs


def config_key(c: TrainConfig) -> tuple:
    return (
        c.reconstruction_loss,
        c.optimizer,
        c.learning_rate,
        c.hidden_activation,
        c.output_activation,
        c.patience,
        c.batch_size,
        c.dropout_rate,
    )


def _one_hot(value, choices) -> list[float]:
    if value not in choices:
        raise UsageError(f"{value!r} is not in the search space axis {choices}")
    return [1.0 if value == ch else 0.0 for ch in choices]


def _scale(value, choices) -> float:
    lo, hi = min(choices), max(choices)
    return (value - lo) / (hi - lo)


def encode_config(c: TrainConfig, space: SearchSpace = SearchSpace()) -> np.ndarray:
    """Map a configuration into [0, 1]^d: one-hot categoricals, log-scaled
    learning rate, min-max scaled dropout/patience/batch size."""
    vec = []
    vec.extend(_one_hot(c.reconstruction_loss, space.reconstruction_losses))
    vec.extend(_one_hot(c.optimizer, space.optimizers))
    vec.extend(_one_hot(c.hidden_activation, space.hidden_activations))
    vec.extend(_one_hot(c.output_activation, space.output_activations))
    log_lrs = [math.log10(lr) for lr in space.learning_rates]
    vec.append(_scale(math.log10(c.learning_rate), log_lrs))
    vec.append(_scale(c.dropout_rate, space.dropout_rates))
    vec.append(_scale(c.patience, space.patiences))
    vec.append(_scale(c.batch_size, space.batch_sizes))
    return np.array(vec, dtype=np.float64)


# ---------------------------------------------------------------------------
# Gaussian-process regression with a Matern-5/2 ARD kernel

def _matern52(x1: np.ndarray, x2: np.ndarray, length_scales: np.ndarray, signal_var: float) -> np.ndarray:
    d = x1[:, None, :] / length_scales - x2[None, :, :] / length_scales
    r = np.sqrt(np.maximum((d * d).sum(axis=-1), 0.0))
    a = math.sqrt(5.0) * r
    return signal_var * (1.0 + a + a * a / 3.0) * np.exp(-a)


@dataclass
class GpSurrogate:
    x: np.ndarray  # (n, d) encoded configurations
    y_center: float
    y_scale: float
    length_scales: np.ndarray
    signal_var: float
    noise_var: float
    chol: np.ndarray
    alpha: np.ndarray  # K^-1 y_std


def _chol_with_jitter(k: np.ndarray, noise_var: float) -> tuple[np.ndarray, float]:
    jitter = 0.0
    n = len(k)
    while True:
        try:
            return np.linalg.cholesky(k + (noise_var + jitter) * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-10)
            if jitter > MAX_JITTER:
                raise NumericalError("GP kernel matrix stays singular even with maximum jitter") from None


def _log_marginal_likelihood(x, y_std, ls, sv, nv) -> float:
    k = _matern52(x, x, ls, sv)
    try:
        chol, _ = _chol_with_jitter(k, nv)
    except NumericalError:
        return -np.inf
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y_std))
    return float(-0.5 * y_std @ alpha - np.log(np.diag(chol)).sum() - 0.5 * len(y_std) * math.log(2 * math.pi))


def fit_gp(
    x: np.ndarray,
    y: np.ndarray,
    fit_hyperparameters: bool = True,
    length_scales: np.ndarray | None = None,
    signal_var: float = 1.0,
    noise_var: float = 1e-6,
    seed: int = 0,
) -> GpSurrogate:
    """Exact GP regression on standardized objectives.

    With >= MIN_TRIALS_FOR_HYPER_FIT points (and fit_hyperparameters=True)
    the kernel hyperparameters maximize the marginal likelihood via a
    seeded multi-start random search plus one per-dimension refinement pass;
    otherwise fixed defaults are used.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or len(x) != len(y) or len(y) == 0:
        raise UsageError("GP fit needs a non-empty (n, d) X and matching y")
    n, d = x.shape
    y_center = float(y.mean())
    y_scale = float(max(y.std(), 1e-12))
    y_std = (y - y_center) / y_scale

    if length_scales is None:
        length_scales = np.full(d, 1.0)
    else:
        length_scales = np.asarray(length_scales, dtype=np.float64)

    if fit_hyperparameters and n >= MIN_TRIALS_FOR_HYPER_FIT:
        rng = np.random.default_rng(seed)
        best = (_log_marginal_likelihood(x, y_std, length_scales, signal_var, noise_var),
                length_scales, signal_var, noise_var)
        for _ in range(40):
            ls = np.full(d, 10.0 ** rng.uniform(-1.0, 1.0))
            sv = 10.0 ** rng.uniform(-0.5, 0.7)
            nv = 10.0 ** rng.uniform(-6.0, -1.0)
            lml = _log_marginal_likelihood(x, y_std, ls, sv, nv)
            if lml > best[0]:
                best = (lml, ls, sv, nv)
        _, ls, sv, nv = best
        ls = ls.copy()
        for dim in range(d):  # one coordinate pass with a coarse grid
            base = ls[dim]
            for factor in (0.3, 3.0):
                trial = ls.copy()
                trial[dim] = base * factor
                lml = _log_marginal_likelihood(x, y_std, trial, sv, nv)
                if lml > best[0]:
                    best = (lml, trial, sv, nv)
                    ls = trial.copy()
        _, length_scales, signal_var, noise_var = best

    k = _matern52(x, x, length_scales, signal_var)
    chol, _ = _chol_with_jitter(k, noise_var)
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y_std))
    return GpSurrogate(x, y_center, y_scale, np.asarray(length_scales), signal_var, noise_var, chol, alpha)


def gp_posterior(s: GpSurrogate, xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean/std at query points (de-standardized units)."""
    xq = np.atleast_2d(np.asarray(xq, dtype=np.float64))
    ks = _matern52(xq, s.x, s.length_scales, s.signal_var)
    mean_std = ks @ s.alpha
    v = np.linalg.solve(s.chol, ks.T)
    var = np.maximum(s.signal_var - (v * v).sum(axis=0), 0.0)
    return mean_std * s.y_scale + s.y_center, np.sqrt(var) * s.y_scale


def lcb(s: GpSurrogate, xq: np.ndarray, k: float = LCB_FACTOR) -> np.ndarray:
    """Lower confidence bound mean - k * std (objective is minimized)."""
    mean, std = gp_posterior(s, xq)
    return mean - k * std


@dataclass
class Trial:
    index: int
    config: TrainConfig
    objective: float
    status: str  # "ok" | "failed"
    wall_s: float


def gp_fit(trials: list[Trial], space: SearchSpace = SearchSpace(), seed: int = 0) -> GpSurrogate:
    """Fit the surrogate to every trial with a finite objective."""
    usable = [t for t in trials if np.isfinite(t.objective)]
    if not usable:
        raise UsageError("GP fit needs at least one trial with a finite objective")
    x = np.stack([encode_config(t.config, space) for t in usable])
    y = np.array([t.objective for t in usable])
    return fit_gp(x, y, seed=seed)


def suggest_next(
    surrogate: GpSurrogate | None,
    space: SearchSpace,
    evaluated: set,
    rng: np.random.Generator,
    base: TrainConfig = TrainConfig(),
    k: float = LCB_FACTOR,
    _grid: tuple[list[TrainConfig], np.ndarray] | None = None,
) -> TrainConfig:
    """Pick the unevaluated grid point minimizing the LCB (exhaustive scan).

    With no surrogate yet (cold start) an rng-uniform unevaluated config is
    returned. Exact LCB ties break by rng choice.
    """
    if _grid is None:
        configs = space.all_configs(base)
        encoded = np.stack([encode_config(c, space) for c in configs])
    else:
        configs, encoded = _grid
    remaining = [i for i, c in enumerate(configs) if config_key(c) not in evaluated]
    if not remaining:
        raise UsageError("the search space is exhausted")
    if surrogate is None:
        return configs[remaining[int(rng.integers(len(remaining)))]]
    values = lcb(surrogate, encoded[remaining], k=k)
    ties = np.flatnonzero(values == values.min())
    pick = ties[int(rng.integers(len(ties)))]
    return configs[remaining[int(pick)]]


def tune(
    budget: int,
    runner,
    seed: int = 0,
    space: SearchSpace = SearchSpace(),
    base: TrainConfig = TrainConfig(),
    k: float = LCB_FACTOR,
    log_fn=None,
) -> tuple[Trial, list[Trial]]:
    """Sequential BO loop: suggest, run, record.

    `runner(config, trial_seed)` returns the objective (lower is better) and
    may raise; failures are logged with a worst-plus-one-sigma penalty so the
    surrogate avoids the region. Returns (best ok trial, full log).
    """
    if budget < 1:
        raise UsageError(f"tuning budget must be >= 1, got {budget}")
    rng = np.random.default_rng(seed)
    configs = space.all_configs(base)
    encoded = np.stack([encode_config(c, space) for c in configs])
    grid = (configs, encoded)

    trials: list[Trial] = []
    evaluated: set = set()
    for index in range(budget):
        fit_ok = [t for t in trials if np.isfinite(t.objective)]
        surrogate = None
        if index >= COLD_START_TRIALS and fit_ok:
            x = np.stack([encode_config(t.config, space) for t in fit_ok])
            y = np.array([t.objective for t in fit_ok])
            surrogate = fit_gp(x, y, fit_hyperparameters=len(fit_ok) >= MIN_TRIALS_FOR_HYPER_FIT, seed=seed)
        config = suggest_next(surrogate, space, evaluated, rng, base, k=k, _grid=grid)
        evaluated.add(config_key(config))

        start = time.perf_counter()
        try:
            objective = float(runner(config, seed * 100003 + index))
            status = "ok"
        except Exception:
            ok_objectives = [t.objective for t in trials if t.status == "ok"]
            if ok_objectives:
                objective = max(ok_objectives) + float(np.std(ok_objectives))
            else:
                objective = np.inf
            status = "failed"
        wall = time.perf_counter() - start
        trial = Trial(index, config, objective, status, wall)
        trials.append(trial)
        if log_fn is not None:
            log_fn(trial)

    ok = [t for t in trials if t.status == "ok"]
    if not ok:
        raise NumericalError("every tuning trial failed")
    best = min(ok, key=lambda t: t.objective)
    return best, trials


def format_trial(t: Trial) -> str:
    c = t.config
    fields = [
        f"trial={t.index}",
        f"objective={t.objective!r}",
        f"status={t.status}",
        f"wall_s={t.wall_s:.3f}",
        f"reconstruction_loss={c.reconstruction_loss}",
        f"optimizer={c.optimizer}",
        f"learning_rate={c.learning_rate!r}",
        f"hidden_activation={c.hidden_activation}",
        f"output_activation={c.output_activation}",
        f"patience={c.patience}",
        f"batch_size={c.batch_size}",
        f"dropout_rate={c.dropout_rate!r}",
    ]
    return " ".join(fields)
