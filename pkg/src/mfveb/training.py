"""Deterministic optimization of the mean and variance networks.

The mean network minimizes mean squared error over all paths and steps.
The variance network minimizes the negative log-likelihood of squared
residuals under a Gamma(shape, rate) model; its default form is the
standard Gamma NLL, consistent with variance = shape/rate.  A "literal"
form with rate/residual in place of rate*residual is kept behind a switch
for comparison (see ``gamma_nll_loss``); it is not a usable training
objective.

Gradients accumulate over fixed-order path chunks, so full-batch training
is exact and bounded in memory regardless of dataset size.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteLossError, ParamVector
from .datagen import Normalizer
from .networks import MeanNetwork, VarianceNetwork
from .numerics import RngStream

__all__ = [
    "AdamState",
    "DivergenceError",
    "EmptyBatchError",
    "MeanModel",
    "TrainConfig",
    "VarianceModel",
    "adam_step",
    "fit_mean_model",
    "fit_variance_model",
    "gamma_nll_loss",
    "mse_loss",
    "train_mean",
    "train_variance",
]

RESIDUAL_FLOOR = 1e-12


class EmptyBatchError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    lr: float = 1e-3
    batch_size: int = 0          # 0 means full batch
    val_fraction: float = 0.0
    seed: int = 0
    chunk: int = 256             # paths per gradient accumulation chunk

    def __post_init__(self):
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")
        if self.epochs < 0 or self.lr <= 0 or self.chunk < 1:
            raise ValueError("invalid training configuration")


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def init(params: ParamVector, lr: float) -> "AdamState":
        return AdamState(m=np.zeros_like(params.values),
                         v=np.zeros_like(params.values), lr=lr)


def adam_step(state: AdamState, params: ParamVector, gradient: ParamVector):
    """One bias-corrected Adam update; returns (new params, new state)."""
    g = gradient.values
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    t = state.step + 1
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_values = params.values - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = replace(state, m=m, v=v, step=t)
    return params.with_values(new_values), new_state


# ---------------------------------------------------------------------------
# Losses (graph builders return sums over paths; public entry points scale)
# ---------------------------------------------------------------------------

def mse_sum_graph(net: MeanNetwork, p, x: np.ndarray, y: np.ndarray):
    """Sum over paths, steps and components of squared prediction error."""
    outputs, _ = net.unroll(p, x)
    total = None
    for t, out_t in enumerate(outputs):
        term = ad.sum_all(ad.square(ad.sub(out_t, y[:, t, :])))
        total = term if total is None else ad.add(total, term)
    return total


def mse_loss(net: MeanNetwork, params: ParamVector, x: np.ndarray, y: np.ndarray) -> float:
    """(1 / (N*T)) * sum of squared errors, summed over output components."""
    if x.shape[0] == 0:
        raise EmptyBatchError("mse_loss requires a nonempty batch")
    n, t_steps = x.shape[0], x.shape[1]
    total = mse_sum_graph(net, params.unflatten(), x, y)
    return float(total) / (n * t_steps)


def floor_residuals(resid_sq: np.ndarray, floor: float | None = RESIDUAL_FLOOR) -> np.ndarray:
    if floor is None:
        if np.any(resid_sq <= 0.0):
            raise ValueError("squared residuals must be positive when flooring is disabled")
        return np.asarray(resid_sq, dtype=np.float64)
    return np.maximum(resid_sq, floor)


def gamma_nll_sum_graph(vnet: VarianceNetwork, p, x: np.ndarray, resid_sq: np.ndarray,
                        form: str = "standard"):
    """Gamma negative log-likelihood of squared residuals, summed over n,t,j.

    standard: lgamma(a) - a*log(b) - (a-1)*log(r) + b*r   (rate b, data r)
    literal:  a*(log(b) - lgamma(a)) - (a-1)*log(r) + b/r
    """
    if form not in ("standard", "literal"):
        raise ValueError(f"unknown gamma loss form {form!r}")
    pairs = vnet.gamma_params(p, x)
    log_r = np.log(resid_sq)
    total = None
    for t, (alpha, lam) in enumerate(pairs):
        r_t = resid_sq[:, t, :]
        lr_t = log_r[:, t, :]
        if form == "standard":
            elem = ad.add(
                ad.sub(ad.lgamma(alpha), ad.mul(alpha, ad.log(lam))),
                ad.sub(ad.mul(lam, r_t), ad.mul(ad.sub(alpha, 1.0), lr_t)),
            )
        else:
            elem = ad.add(
                ad.sub(ad.mul(alpha, ad.sub(ad.log(lam), ad.lgamma(alpha))),
                       ad.mul(ad.sub(alpha, 1.0), lr_t)),
                ad.mul(lam, 1.0 / r_t),
            )
        term = ad.sum_all(elem)
        total = term if total is None else ad.add(total, term)
    return total


def gamma_nll_loss(vnet: VarianceNetwork, params: ParamVector, x: np.ndarray,
                   resid_sq: np.ndarray, form: str = "standard",
                   floor: float | None = RESIDUAL_FLOOR) -> float:
    if x.shape[0] == 0:
        raise EmptyBatchError("gamma_nll_loss requires a nonempty batch")
    resid_sq = floor_residuals(resid_sq, floor)
    return float(gamma_nll_sum_graph(vnet, params.unflatten(), x, resid_sq, form))


def gamma_nll_elementwise(alpha, lam, resid_sq, form: str = "standard"):
    """Numpy twin of the per-element Gamma NLL, for oracle checks."""
    from scipy.special import gammaln
    log_r = np.log(resid_sq)
    if form == "standard":
        return gammaln(alpha) - alpha * np.log(lam) - (alpha - 1.0) * log_r + lam * resid_sq
    return alpha * (np.log(lam) - gammaln(alpha)) - (alpha - 1.0) * log_r + lam / resid_sq


# ---------------------------------------------------------------------------
# Chunked value-and-gradient accumulation
# ---------------------------------------------------------------------------

def _chunked_value_grad(sum_graph: Callable, params: ParamVector, n_paths: int,
                        chunk: int):
    """Accumulate (value, gradient) of a per-path sum over fixed-order chunks.

    ``sum_graph(p, sl)`` must build the scalar sum restricted to path slice
    ``sl``.  Chunking changes nothing but peak memory.
    """
    total_value = 0.0
    total_grad = np.zeros_like(params.values)
    for start in range(0, n_paths, chunk):
        sl = slice(start, min(start + chunk, n_paths))
        leaves = {name: ad.leaf(arr) for name, arr in params.unflatten().items()}
        out = sum_graph(leaves, sl)
        if not isinstance(out, ad.Tensor):
            total_value += float(out)
            continue
        if not np.isfinite(out.value):
            raise NonFiniteLossError(params.first_nonfinite_name() or "<loss>")
        ad.backward(out)
        total_value += float(out.value)
        offset = 0
        for name, shape in params.layout:
            n = int(np.prod(shape, dtype=np.int64)) if shape else 1
            node = leaves[name]
            if node.grad is not None:
                total_grad[offset:offset + n] += np.asarray(node.grad).ravel()
            offset += n
    return total_value, params.with_values(total_grad)


# ---------------------------------------------------------------------------
# Trainers
# ---------------------------------------------------------------------------

def _epoch_batches(n: int, batch_size: int, rng: RngStream):
    if batch_size <= 0 or batch_size >= n:
        yield np.arange(n)
        return
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_mean(net: MeanNetwork, x: np.ndarray, y: np.ndarray, cfg: TrainConfig,
               x_val: np.ndarray | None = None, y_val: np.ndarray | None = None):
    """Fit the mean network with Adam; keep the best-validation snapshot.

    Returns (params, log) where log rows are (epoch, train_mse, val_mse).
    When no validation data exists (cooperative training), the best
    snapshot is selected on the training loss instead.
    """
    if x.shape[0] == 0:
        raise EmptyBatchError("train_mean requires nonempty data")
    rng = RngStream(cfg.seed)
    if x_val is None and cfg.val_fraction > 0.0:
        order = rng.substream(1).permutation(x.shape[0])
        n_val = max(1, int(round(cfg.val_fraction * x.shape[0])))
        val_idx, train_idx = order[:n_val], order[n_val:]
        x, y, x_val, y_val = x[train_idx], y[train_idx], x[val_idx], y[val_idx]

    params = net.init(rng.substream(0))
    state = AdamState.init(params, cfg.lr)
    n, t_steps = x.shape[0], x.shape[1]
    batch_rng = rng.substream(2)

    def selection_loss(p):
        if x_val is not None:
            return mse_loss(net, p, x_val, y_val)
        return mse_loss(net, p, x, y)

    best = params
    best_score = selection_loss(params) if cfg.epochs > 0 else None
    log = []
    for epoch in range(cfg.epochs):
        train_total = 0.0
        for idx in _epoch_batches(n, cfg.batch_size, batch_rng):
            xb, yb = x[idx], y[idx]

            def sum_graph(p, sl, xb=xb, yb=yb):
                return mse_sum_graph(net, p, xb[sl], yb[sl])

            try:
                value, g = _chunked_value_grad(sum_graph, params, xb.shape[0], cfg.chunk)
            except NonFiniteLossError as err:
                raise DivergenceError(f"mean training diverged at epoch {epoch}: {err}") from err
            scale = 1.0 / (xb.shape[0] * t_steps)
            params, state = adam_step(state, params, g.with_values(g.values * scale))
            train_total += value
        train_mse = train_total / (n * t_steps)
        if not np.isfinite(train_mse):
            raise DivergenceError(f"mean training diverged at epoch {epoch}")
        val_mse = mse_loss(net, params, x_val, y_val) if x_val is not None else train_mse
        log.append((epoch, train_mse, val_mse))
        score = val_mse if x_val is not None else train_mse
        if best_score is None or score < best_score:
            best, best_score = params, score
    return best, log


def train_variance(vnet: VarianceNetwork, mean_pred: np.ndarray, x: np.ndarray,
                   y: np.ndarray, cfg: TrainConfig, form: str = "standard",
                   floor: float | None = RESIDUAL_FLOOR):
    """Fit the variance network to squared residuals around a frozen mean.

    Returns (params, log) with log rows (epoch, train_nll).  The mean
    prediction is an input, never touched.
    """
    if x.shape[0] == 0:
        raise EmptyBatchError("train_variance requires nonempty data")
    resid_sq = floor_residuals((mean_pred - y) ** 2, floor)
    rng = RngStream(cfg.seed)
    params = vnet.init(rng.substream(0))
    state = AdamState.init(params, cfg.lr)
    n = x.shape[0]
    batch_rng = rng.substream(2)

    best = params
    best_score = None
    log = []
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in _epoch_batches(n, cfg.batch_size, batch_rng):
            xb, rb = x[idx], resid_sq[idx]

            def sum_graph(p, sl, xb=xb, rb=rb):
                return gamma_nll_sum_graph(vnet, p, xb[sl], rb[sl], form)

            try:
                value, g = _chunked_value_grad(sum_graph, params, xb.shape[0], cfg.chunk)
            except NonFiniteLossError as err:
                raise DivergenceError(f"variance training diverged at epoch {epoch}: {err}") from err
            params, state = adam_step(state, params, g)
            total += value
        if not np.isfinite(total):
            raise DivergenceError(f"variance training diverged at epoch {epoch}")
        log.append((epoch, total))
        if best_score is None or total < best_score:
            best, best_score = params, total
    return best, log


# ---------------------------------------------------------------------------
# Trained-model bundles (network + parameters + shared normalizer)
# ---------------------------------------------------------------------------

@dataclass
class MeanModel:
    net: MeanNetwork
    params: ParamVector
    normalizer: Normalizer
    log: list = field(default_factory=list, repr=False)

    def predict(self, strain: np.ndarray) -> np.ndarray:
        out, _ = self.net.predict(self.params, self.normalizer.encode_x(strain))
        return self.normalizer.decode_y(out)

    def hidden(self, strain: np.ndarray) -> np.ndarray:
        _, h = self.net.predict(self.params, self.normalizer.encode_x(strain))
        return h


@dataclass
class VarianceModel:
    net: VarianceNetwork
    params: ParamVector
    normalizer: Normalizer
    log: list = field(default_factory=list, repr=False)

    def aleatoric_var(self, strain: np.ndarray) -> np.ndarray:
        _, _, s2 = self.net.predict(self.params, self.normalizer.encode_x(strain))
        return self.normalizer.decode_var(s2)


def fit_mean_model(x: np.ndarray, y: np.ndarray, net: MeanNetwork,
                   cfg: TrainConfig) -> MeanModel:
    """Split, normalize on the training portion only, train, and bundle."""
    if cfg.val_fraction > 0.0:
        order = RngStream(cfg.seed).substream(1).permutation(x.shape[0])
        n_val = max(1, int(round(cfg.val_fraction * x.shape[0])))
        val_idx, train_idx = order[:n_val], order[n_val:]
        norm = Normalizer.fit(x[train_idx], y[train_idx])
        params, log = train_mean(
            net, norm.encode_x(x[train_idx]), norm.encode_y(y[train_idx]), cfg,
            x_val=norm.encode_x(x[val_idx]), y_val=norm.encode_y(y[val_idx]))
    else:
        norm = Normalizer.fit(x, y)
        params, log = train_mean(net, norm.encode_x(x), norm.encode_y(y), cfg)
    return MeanModel(net=net, params=params, normalizer=norm, log=log)


def fit_variance_model(mean_model: MeanModel, x: np.ndarray, y: np.ndarray,
                       vnet: VarianceNetwork, cfg: TrainConfig,
                       mean_pred: np.ndarray | None = None) -> VarianceModel:
    """Train the variance network against a frozen mean, sharing its normalizer."""
    norm = mean_model.normalizer
    if mean_pred is None:
        mean_pred = mean_model.predict(x)
    params, log = train_variance(
        vnet, norm.encode_y(mean_pred), norm.encode_x(x), norm.encode_y(y), cfg)
    return VarianceModel(net=vnet, params=params, normalizer=norm, log=log)
