"""Bayesian treatment of the mean network.

Posterior sampling uses preconditioned stochastic-gradient Langevin
dynamics: gradient ascent on the log posterior with a diagonal
RMSProp-style preconditioner and calibrated Gaussian noise, no
accept/reject step.  Hamiltonian and Langevin Monte Carlo with
Metropolis correction are provided as small-scale oracles to validate
the sampler on analytic targets.

The cooperative loop alternates a deterministic mean fit, a variance fit
against the frozen mean, and posterior re-sampling of the mean with the
variance frozen, keeping the iteration whose marginal-likelihood
surrogate is highest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtri

from . import autodiff as ad
from .autodiff import NonFiniteLossError, ParamVector
from .datagen import Normalizer
from .networks import MeanNetwork, VarianceNetwork
from .numerics import RngStream, gaussian_logpdf
from .training import (DivergenceError, TrainConfig, VarianceModel,
                       _chunked_value_grad, train_mean, train_variance)

__all__ = [
    "CooperativeModel",
    "GaussianSequenceTarget",
    "PosteriorEnsemble",
    "PredictiveResult",
    "PsgldConfig",
    "cooperative_train",
    "hmc_sample",
    "lmc_sample",
    "log_marginal_likelihood",
    "log_posterior",
    "predictive",
    "psgld_sample",
]

_DENSITY_FLOOR = 1e-300
_VAR_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Posterior target: Gaussian sequence likelihood with fixed variances
# ---------------------------------------------------------------------------

class GaussianSequenceTarget:
    """log p(theta) + log p(Y | theta) for a mean network.

    Likelihood: independent Gaussians per path/step/component with frozen
    variances ``s2``.  Prior: unit Gaussian on every parameter.  Data are
    expected in the network's (normalized) training space.
    """

    def __init__(self, net: MeanNetwork, x: np.ndarray, y: np.ndarray,
                 s2: np.ndarray, chunk: int = 256):
        s2 = np.maximum(np.asarray(s2, dtype=np.float64), _VAR_FLOOR)
        if np.shape(s2) != np.shape(y):
            s2 = np.broadcast_to(s2, np.shape(y)).copy()
        self.net = net
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.s2 = s2
        self.chunk = chunk
        self._weights = 1.0 / (2.0 * s2)
        self._const_per_path = -0.5 * np.log(2.0 * np.pi * s2).sum(axis=(1, 2))

    @property
    def n_data(self) -> int:
        return self.x.shape[0]

    def log_prior(self, theta: np.ndarray) -> float:
        return float(-0.5 * theta.size * np.log(2.0 * np.pi) - 0.5 * np.dot(theta, theta))

    def grad_log_prior(self, theta: np.ndarray) -> np.ndarray:
        return -theta

    def _weighted_sse_graph(self, p, x, y, w):
        outputs, _ = self.net.unroll(p, x)
        total = None
        for t, out_t in enumerate(outputs):
            term = ad.sum_all(ad.mul(ad.square(ad.sub(out_t, y[:, t, :])), w[:, t, :]))
            total = term if total is None else ad.add(total, term)
        return total

    def log_lik_and_grad(self, params: ParamVector, idx: np.ndarray):
        """(sum of log-likelihoods over idx, its gradient)."""
        x, y, w = self.x[idx], self.y[idx], self._weights[idx]

        def sum_graph(p, sl):
            return self._weighted_sse_graph(p, x[sl], y[sl], w[sl])

        value, g = _chunked_value_grad(sum_graph, params, x.shape[0], self.chunk)
        loglik = -value + float(self._const_per_path[idx].sum())
        return loglik, g.with_values(-g.values)

    def log_lik(self, params: ParamVector, idx: np.ndarray | None = None) -> float:
        if idx is None:
            idx = np.arange(self.n_data)
        pred, _ = self.net.predict(params, self.x[idx])
        return float(gaussian_logpdf(self.y[idx], pred, self.s2[idx]).sum())


def log_posterior(params: ParamVector, net: MeanNetwork, x: np.ndarray,
                  y: np.ndarray, s2: np.ndarray) -> float:
    """Gaussian log-likelihood with fixed variances plus unit-Gaussian prior."""
    s2 = np.asarray(s2, dtype=np.float64)
    if np.any(s2 <= 0.0):
        raise ValueError("aleatoric variances must be positive")
    pred, _ = net.predict(params, x)
    loglik = float(gaussian_logpdf(y, pred, np.broadcast_to(s2, y.shape)).sum()) \
        if y.size else 0.0
    prior = float(gaussian_logpdf(params.values, 0.0, 1.0).sum())
    out = loglik + prior
    if not np.isfinite(out):
        raise NonFiniteLossError(params.first_nonfinite_name() or "<log-posterior>")
    return out


# ---------------------------------------------------------------------------
# pSGLD
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PsgldConfig:
    step_size: float = 1e-3
    beta_pre: float = 0.99
    eps_pre: float = 1e-5
    burn_in: int = 50
    n_samples: int = 100
    sample_stride: int = 10
    minibatch: int = 0                  # 0 = full batch
    preconditioner: str = "rmsprop"     # "rmsprop" | "identity"
    inject_noise: bool = True           # False = deterministic ascent (test mode)
    divergence_limit: float = 1e6
    decay_gamma: float = 0.0            # step_t = step * (1 + t)^(-gamma)
    drift_clip: float | None = 10.0     # max drift per coord, in noise-scale units

    def __post_init__(self):
        if self.step_size < 0:
            raise ValueError("step_size must be non-negative")
        if self.decay_gamma < 0:
            raise ValueError("decay_gamma must be non-negative")
        if self.drift_clip is not None and self.drift_clip <= 0:
            raise ValueError("drift_clip must be positive when set")
        if not 0.0 < self.beta_pre < 1.0:
            raise ValueError("beta_pre must be in (0, 1)")
        if self.sample_stride < 1 or self.n_samples < 1 or self.burn_in < 0:
            raise ValueError("invalid sampling schedule")
        if self.preconditioner not in ("rmsprop", "identity"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")

    @property
    def total_epochs(self) -> int:
        return self.burn_in + self.n_samples * self.sample_stride


@dataclass
class PosteriorEnsemble:
    """Parameter samples approximating the posterior, plus sampler metadata."""

    samples: np.ndarray                 # (S, P)
    layout: tuple
    burn_in: int
    stride: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[0] == 0:
            raise ValueError("ensemble requires at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("ensemble contains non-finite samples")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def param_vector(self, s: int) -> ParamVector:
        return ParamVector(self.samples[s], self.layout)

    def mean_params(self) -> ParamVector:
        return ParamVector(self.samples.mean(axis=0), self.layout)


def psgld_sample(cfg: PsgldConfig, init: ParamVector, target,
                 rng: RngStream) -> PosteriorEnsemble:
    """Sample the posterior by preconditioned Langevin dynamics.

    Update per epoch, with G the diagonal preconditioner and N/n the
    minibatch scaling:

        delta = (eps/2) * G * (grad log prior + (N/n) * sum_batch grad log lik)
                + eta,   eta ~ N(0, eps * G)

    G is 1/(eps_pre + sqrt(v)) with v an exponential moving average of the
    squared mean per-datum likelihood gradient; the curvature correction
    term of the full update is dropped.  Samples are collected after
    ``burn_in`` epochs, every ``sample_stride`` epochs.
    """
    if not np.all(np.isfinite(init.values)):
        raise ValueError("initial parameters must be finite")
    theta = init.values.copy()
    n_params = theta.size
    n_data = target.n_data
    v = np.zeros(n_params)
    noise_rng = rng.substream(0)
    batch_rng = rng.substream(1)
    samples = np.empty((cfg.n_samples, n_params))
    collected = 0
    for epoch in range(cfg.total_epochs):
        if cfg.minibatch > 0 and cfg.minibatch < n_data:
            idx = batch_rng.integers(0, n_data, size=cfg.minibatch)
        else:
            idx = np.arange(n_data)
        params = init.with_values(theta)
        _, g_lik = target.log_lik_and_grad(params, idx)
        g_prior = target.grad_log_prior(theta)
        g_bar = g_lik.values / max(len(idx), 1)
        if cfg.preconditioner == "rmsprop":
            v = cfg.beta_pre * v + (1.0 - cfg.beta_pre) * g_bar * g_bar
            precond = 1.0 / (cfg.eps_pre + np.sqrt(v))
        else:
            precond = np.ones(n_params)
        step_t = cfg.step_size * (1.0 + epoch) ** (-cfg.decay_gamma)
        scale = n_data / max(len(idx), 1)
        delta = 0.5 * step_t * precond * (g_prior + scale * g_lik.values)
        if cfg.drift_clip is not None and step_t > 0:
            # Trust region scaled to the injected-noise amplitude: inert at
            # stationarity, bounds the warm-up transient.
            cap = cfg.drift_clip * np.sqrt(step_t * precond)
            delta = np.clip(delta, -cap, cap)
        if cfg.inject_noise:
            delta = delta + np.sqrt(step_t * precond) * noise_rng.normal(size=n_params)
        theta = theta + delta
        if np.max(np.abs(theta)) > cfg.divergence_limit or not np.all(np.isfinite(theta)):
            raise DivergenceError(f"pSGLD diverged at epoch {epoch}")
        if epoch >= cfg.burn_in and (epoch - cfg.burn_in + 1) % cfg.sample_stride == 0:
            samples[collected] = theta
            collected += 1
    return PosteriorEnsemble(
        samples=samples[:collected], layout=init.layout, burn_in=cfg.burn_in,
        stride=cfg.sample_stride,
        meta={"step_size": cfg.step_size, "preconditioner": cfg.preconditioner,
              "minibatch": cfg.minibatch, "seed": rng.seed, "stream_id": rng.stream_id})


# ---------------------------------------------------------------------------
# Small-scale oracle samplers (analytic targets; dimension <= 50)
# ---------------------------------------------------------------------------

def _check_oracle_dim(init: np.ndarray):
    if init.size > 50:
        raise ValueError("oracle samplers are restricted to dimension <= 50")


def hmc_sample(target, init: np.ndarray, n_iterations: int, step: float,
               n_leapfrog: int, rng: RngStream, mass: np.ndarray | float = 1.0,
               burn_in: int = 0):
    """Hamiltonian Monte Carlo with leapfrog integration and MH correction.

    ``target`` exposes ``log_prob`` and ``grad_log_prob``.  Returns
    (samples after burn-in, acceptance rate).
    """
    theta = np.asarray(init, dtype=np.float64).copy()
    _check_oracle_dim(theta)
    mass_vec = np.broadcast_to(np.asarray(mass, dtype=np.float64), theta.shape).copy()
    inv_mass = 1.0 / mass_vec

    def grad_energy(q):
        return -np.asarray(target.grad_log_prob(q), dtype=np.float64)

    def hamiltonian(q, p):
        return -float(target.log_prob(q)) + 0.5 * float(np.dot(p, inv_mass * p))

    out = []
    accepted = 0
    for it in range(n_iterations):
        momentum = np.sqrt(mass_vec) * rng.normal(size=theta.shape)
        q = theta.copy()
        p_half = momentum - 0.5 * step * grad_energy(q)
        for _ in range(n_leapfrog - 1):
            q = q + step * inv_mass * p_half
            p_half = p_half - step * grad_energy(q)
        q = q + step * inv_mass * p_half
        p_end = p_half - 0.5 * step * grad_energy(q)
        log_alpha = hamiltonian(theta, momentum) - hamiltonian(q, p_end)
        alpha = min(1.0, float(np.exp(min(log_alpha, 0.0))))
        if rng.uniform() < alpha:
            theta = q
            accepted += 1
        out.append(theta.copy())
    samples = np.asarray(out[burn_in:])
    return samples, accepted / max(n_iterations, 1)


def lmc_sample(target, init: np.ndarray, n_iterations: int, step: float,
               rng: RngStream, mass: np.ndarray | float = 1.0, burn_in: int = 0):
    """Langevin Monte Carlo: drifted Gaussian proposal with MH correction.

    Implemented from its own update equations (position drifted by the
    energy gradient, momentum refreshed and half-stepped on both ends);
    coincides in distribution with single-leapfrog HMC.
    """
    theta = np.asarray(init, dtype=np.float64).copy()
    _check_oracle_dim(theta)
    mass_vec = np.broadcast_to(np.asarray(mass, dtype=np.float64), theta.shape).copy()
    inv_mass = 1.0 / mass_vec

    def grad_energy(q):
        return -np.asarray(target.grad_log_prob(q), dtype=np.float64)

    def hamiltonian(q, p):
        return -float(target.log_prob(q)) + 0.5 * float(np.dot(p, inv_mass * p))

    out = []
    accepted = 0
    for it in range(n_iterations):
        momentum = np.sqrt(mass_vec) * rng.normal(size=theta.shape)
        g0 = grad_energy(theta)
        proposal = theta - 0.5 * step * step * inv_mass * g0 + step * inv_mass * momentum
        p_end = momentum - 0.5 * step * g0 - 0.5 * step * grad_energy(proposal)
        log_alpha = hamiltonian(theta, momentum) - hamiltonian(proposal, p_end)
        alpha = min(1.0, float(np.exp(min(log_alpha, 0.0))))
        if rng.uniform() < alpha:
            theta = proposal
            accepted += 1
        out.append(theta.copy())
    samples = np.asarray(out[burn_in:])
    return samples, accepted / max(n_iterations, 1)


# ---------------------------------------------------------------------------
# Posterior predictive
# ---------------------------------------------------------------------------

@dataclass
class PredictiveResult:
    """Posterior-predictive mean with disentangled variances and intervals.

    Intervals cover the epistemic distribution of the mean at confidence
    1 - alpha_conf; total variance is epistemic + aleatoric elementwise.
    """

    mean: np.ndarray
    epistemic_var: np.ndarray
    aleatoric_var: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha_conf: float

    @property
    def total_var(self) -> np.ndarray:
        return self.epistemic_var + self.aleatoric_var


def _ensemble_moments(net: MeanNetwork, ensemble: PosteriorEnsemble, x: np.ndarray):
    """Streaming mean and unbiased variance of f(x; theta_s) over samples."""
    count = 0
    mean = None
    m2 = None
    for s in range(ensemble.n_samples):
        pred, _ = net.predict(ensemble.param_vector(s), x)
        count += 1
        if mean is None:
            mean = pred.copy()
            m2 = np.zeros_like(pred)
        else:
            delta = pred - mean
            mean += delta / count
            m2 += delta * (pred - mean)
    var = m2 / (count - 1) if count > 1 else np.zeros_like(mean)
    return mean, var


def predictive(net: MeanNetwork, ensemble: PosteriorEnsemble,
               normalizer: Normalizer, strain: np.ndarray,
               variance_model: VarianceModel | None = None,
               alpha_conf: float = 0.05,
               interval: str = "gaussian") -> PredictiveResult:
    """Ensemble-averaged prediction with epistemic/aleatoric decomposition.

    mean and epistemic variance come from the sample mean/variance of the
    decoded outputs; aleatoric variance is the variance network's estimate
    (zero when absent).  Gaussian intervals are mean +/- z * epistemic std;
    ``interval="quantile"`` uses empirical ensemble quantiles instead.
    """
    if ensemble.n_samples == 0:
        raise ValueError("posterior ensemble is empty")
    xn = normalizer.encode_x(strain)
    mean_n, var_n = _ensemble_moments(net, ensemble, xn)
    mean = normalizer.decode_y(mean_n)
    epi_var = normalizer.decode_var(var_n)
    if variance_model is not None:
        alea_var = variance_model.aleatoric_var(strain)
    else:
        alea_var = np.zeros_like(mean)
    if interval == "gaussian":
        z = float(ndtri(1.0 - alpha_conf / 2.0))
        half = z * np.sqrt(epi_var)
        lower, upper = mean - half, mean + half
    elif interval == "quantile":
        preds = np.stack([
            normalizer.decode_y(net.predict(ensemble.param_vector(s), xn)[0])
            for s in range(ensemble.n_samples)
        ])
        lower = np.quantile(preds, alpha_conf / 2.0, axis=0)
        upper = np.quantile(preds, 1.0 - alpha_conf / 2.0, axis=0)
    else:
        raise ValueError(f"unknown interval mode {interval!r}")
    return PredictiveResult(mean=mean, epistemic_var=epi_var, aleatoric_var=alea_var,
                            lower=lower, upper=upper, alpha_conf=alpha_conf)


def log_marginal_likelihood(net: MeanNetwork, ensemble: PosteriorEnsemble,
                            x: np.ndarray, y: np.ndarray, s2: np.ndarray):
    """Surrogate marginal likelihood plus the posterior-predictive mean.

    Sums log( (1/S) sum_s N(y; f(x; theta_s), s2) ) over every observation
    and returns the ensemble-averaged prediction computed in the same pass.
    """
    s2 = np.maximum(np.broadcast_to(np.asarray(s2, dtype=np.float64), y.shape), _VAR_FLOOR)
    density_sum = np.zeros_like(y)
    mean = np.zeros_like(y)
    for s in range(ensemble.n_samples):
        pred, _ = net.predict(ensemble.param_vector(s), x)
        density_sum += np.exp(gaussian_logpdf(y, pred, s2))
        mean += pred
    mean /= ensemble.n_samples
    lmglk = float(np.log(np.maximum(density_sum / ensemble.n_samples, _DENSITY_FLOOR)).sum())
    return lmglk, mean


# ---------------------------------------------------------------------------
# Cooperative training
# ---------------------------------------------------------------------------

@dataclass
class CooperativeModel:
    """Mean-network posterior plus variance network, sharing one normalizer."""

    net: MeanNetwork
    ensemble: PosteriorEnsemble
    variance: VarianceModel
    normalizer: Normalizer
    selection_log: list = field(default_factory=list, repr=False)
    mean_log: list = field(default_factory=list, repr=False)

    def predict(self, strain: np.ndarray) -> np.ndarray:
        return self.predictive(strain).mean

    def hidden(self, strain: np.ndarray) -> np.ndarray:
        """Hidden states of the ensemble-mean parameter vector."""
        _, h = self.net.predict(self.ensemble.mean_params(),
                                self.normalizer.encode_x(strain))
        return h

    def predictive(self, strain: np.ndarray, alpha_conf: float = 0.05,
                   interval: str = "gaussian") -> PredictiveResult:
        return predictive(self.net, self.ensemble, self.normalizer, strain,
                          variance_model=self.variance, alpha_conf=alpha_conf,
                          interval=interval)


def cooperative_train(x: np.ndarray, y: np.ndarray, net: MeanNetwork,
                      vnet: VarianceNetwork, mean_cfg: TrainConfig,
                      var_cfg: TrainConfig, psgld_cfg: PsgldConfig,
                      k_iterations: int, rng: RngStream,
                      gamma_form: str = "standard") -> CooperativeModel:
    """Alternate variance fitting and posterior sampling, keep the best pass.

    Step 1 fits the mean deterministically (no validation split).  Each
    iteration then refits the variance network against the current mean
    (the posterior-predictive mean after the first pass), re-samples the
    mean posterior with the variance frozen (warm-started from the previous
    chain's last state), and records the marginal-likelihood surrogate.
    The iteration with the highest surrogate wins.
    """
    if k_iterations < 1:
        raise ValueError("k_iterations must be >= 1")
    norm = Normalizer.fit(x, y)
    xn, yn = norm.encode_x(x), norm.encode_y(y)

    theta_hat, mean_log = train_mean(net, xn, yn, mean_cfg)
    mean_for_resid, _ = net.predict(theta_hat, xn)

    warm_start = theta_hat
    best = None
    selection_log = []
    for i in range(1, k_iterations + 1):
        phi, _ = train_variance(vnet, mean_for_resid, xn, yn, var_cfg, form=gamma_form)
        _, _, s2 = vnet.predict(phi, xn)
        target = GaussianSequenceTarget(net, xn, yn, s2, chunk=mean_cfg.chunk)
        ensemble = psgld_sample(psgld_cfg, warm_start, target, rng.substream(100 + i))
        warm_start = ensemble.param_vector(ensemble.n_samples - 1)
        lmglk, post_mean = log_marginal_likelihood(net, ensemble, xn, yn, s2)
        mean_for_resid = post_mean
        selection_log.append({"iteration": i, "lmglk": lmglk,
                              "warm_start": "step1" if i == 1 else "previous-chain"})
        if best is None or lmglk > best[0]:
            best = (lmglk, ensemble, phi)
    _, ensemble, phi = best
    variance = VarianceModel(net=vnet, params=phi, normalizer=norm)
    return CooperativeModel(net=net, ensemble=ensemble, variance=variance,
                            normalizer=norm, selection_log=selection_log,
                            mean_log=mean_log)
