"""Two-fidelity model composition, training, and budget allocation.

The high-fidelity prediction is g(f_l(x), x) + r(x) with four concrete
wirings:

* nest_output:       g is a network on [x, f_l(x)], no residual;
* nest_hidden:       g is a network on [x, h_l(x)], no residual;
* residual_original: g is the identity, r is a network on x alone,
                     trained on y - f_l(x);
* residual_hidden:   g is the identity, r is a network on [x, h_l(x)],
                     trained on y - f_l(x).

h_l is the last-layer hidden sequence of the low-fidelity network
evaluated on high-fidelity inputs.  Either side can be deterministic or
Bayesian; a Bayesian high-fidelity side yields full uncertainty
decomposition for the high-fidelity prediction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .bayes import (CooperativeModel, PredictiveResult, PsgldConfig,
                    cooperative_train)
from .datagen import Dataset
from .metrics import (MetricReport, mpiw, picp, relative_error_detail, tll,
                      wasserstein)
from .networks import MeanNetwork, VarianceNetwork
from .numerics import RngStream
from .training import MeanModel, TrainConfig, fit_mean_model

__all__ = [
    "BudgetSpec",
    "MfModel",
    "MfVariant",
    "ModelSpec",
    "SWEEP_COLUMNS",
    "budget_sweep",
    "evaluate_on",
    "fit_single_fidelity",
    "mf_predict",
    "mf_train",
    "total_cost",
]


class MfVariant(enum.Enum):
    NEST_OUTPUT = "nest_output"
    NEST_HIDDEN = "nest_hidden"
    RESIDUAL_ORIGINAL = "residual_original"
    RESIDUAL_HIDDEN = "residual_hidden"

    @property
    def is_residual(self) -> bool:
        return self in (MfVariant.RESIDUAL_ORIGINAL, MfVariant.RESIDUAL_HIDDEN)

    @property
    def uses_hidden(self) -> bool:
        return self in (MfVariant.NEST_HIDDEN, MfVariant.RESIDUAL_HIDDEN)


@dataclass(frozen=True)
class BudgetSpec:
    """Path counts and per-path cost ratios for both fidelities."""

    n_hf: int
    n_lf: int
    c_hf: float
    c_lf: float

    def __post_init__(self):
        if self.n_hf < 0 or self.n_lf < 0:
            raise ValueError("path counts must be non-negative")
        if self.c_hf <= 0 or self.c_lf <= 0:
            raise ValueError("cost ratios must be positive")


def total_cost(budget: BudgetSpec) -> float:
    """Total data-generation cost: n_hf * c_hf + n_lf * c_lf."""
    return budget.n_hf * budget.c_hf + budget.n_lf * budget.c_lf


# ---------------------------------------------------------------------------
# Single-model specification (architecture + training schedule)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to build and train one predictor.

    kind "rnn" is a deterministic mean network; kind "veb" adds the
    variance network and posterior sampling via the cooperative loop.
    """

    kind: str = "rnn"
    hidden: int = 128
    layers: int = 2
    var_hidden: int = 8
    var_layers: int = 1
    mean_cfg: TrainConfig = field(default_factory=TrainConfig)
    var_cfg: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=4000, lr=1e-2))
    psgld_cfg: PsgldConfig = field(default_factory=PsgldConfig)
    k_iterations: int = 2

    def __post_init__(self):
        if self.kind not in ("rnn", "veb"):
            raise ValueError(f"unknown model kind {self.kind!r}")


def _stage_seed(rng: RngStream, k: int) -> int:
    return int(rng.substream(k).integers(0, 2 ** 31 - 1))


def fit_single_fidelity(spec: ModelSpec, x: np.ndarray, y: np.ndarray,
                        rng: RngStream):
    """Train one predictor on (x, y) per its spec; returns the model bundle."""
    net = MeanNetwork(input_dim=x.shape[2], output_dim=y.shape[2],
                      hidden_dim=spec.hidden, n_layers=spec.layers)
    mean_cfg = replace(spec.mean_cfg, seed=_stage_seed(rng, 0))
    if spec.kind == "rnn":
        return fit_mean_model(x, y, net, mean_cfg)
    vnet = VarianceNetwork(input_dim=x.shape[2], output_dim=y.shape[2],
                           hidden_dim=spec.var_hidden, n_layers=spec.var_layers)
    # Cooperative training works without a validation split.
    mean_cfg = replace(mean_cfg, val_fraction=0.0)
    var_cfg = replace(spec.var_cfg, seed=_stage_seed(rng, 1), val_fraction=0.0)
    return cooperative_train(x, y, net, vnet, mean_cfg, var_cfg, spec.psgld_cfg,
                             spec.k_iterations, rng.substream(2))


# ---------------------------------------------------------------------------
# Multi-fidelity model
# ---------------------------------------------------------------------------

@dataclass
class MfModel:
    """A trained low-fidelity predictor plus its high-fidelity companion.

    For residual variants the transfer map is the identity and ``hf_model``
    is the residual network; for nest variants ``hf_model`` is the transfer
    network itself.
    """

    variant: MfVariant
    lf_model: object        # MeanModel | CooperativeModel | MfModel
    hf_model: object        # MeanModel | CooperativeModel
    pairing: tuple

    def _composed_input(self, strain: np.ndarray) -> np.ndarray:
        if self.variant is MfVariant.RESIDUAL_ORIGINAL:
            return strain
        if self.variant.uses_hidden:
            extra = self.lf_model.hidden(strain)
        else:
            extra = self.lf_model.predict(strain)
        return np.concatenate([strain, extra], axis=-1)

    @property
    def bayesian_hf(self) -> bool:
        return isinstance(self.hf_model, CooperativeModel)

    def predict(self, strain: np.ndarray) -> np.ndarray:
        out = self.mf_predictive(strain)
        return out.mean if isinstance(out, PredictiveResult) else out

    def hidden(self, strain: np.ndarray) -> np.ndarray:
        """High-fidelity-side hidden states (enables stacking more fidelities)."""
        return self.hf_model.hidden(self._composed_input(strain))

    def mf_predictive(self, strain: np.ndarray, alpha_conf: float = 0.05):
        """Mean prediction; full PredictiveResult when the HF side is Bayesian.

        Residual variants add the low-fidelity mean to the residual
        network's output, exactly; uncertainty comes from the residual
        model alone.
        """
        z = self._composed_input(strain)
        if self.variant.is_residual:
            base = self.lf_model.predict(strain)
            if self.bayesian_hf:
                res = self.hf_model.predictive(z, alpha_conf=alpha_conf)
                return PredictiveResult(
                    mean=base + res.mean,
                    epistemic_var=res.epistemic_var,
                    aleatoric_var=res.aleatoric_var,
                    lower=base + res.lower,
                    upper=base + res.upper,
                    alpha_conf=alpha_conf,
                )
            return base + self.hf_model.predict(z)
        if self.bayesian_hf:
            return self.hf_model.predictive(z, alpha_conf=alpha_conf)
        return self.hf_model.predict(z)


def mf_train(lf_x: np.ndarray, lf_y: np.ndarray, hf_x: np.ndarray, hf_y: np.ndarray,
             variant: MfVariant, lf_spec: ModelSpec, hf_spec: ModelSpec,
             rng: RngStream, lf_model=None) -> MfModel:
    """Train the low-fidelity model first, then the high-fidelity side.

    ``lf_model`` short-circuits the first stage with an already-trained
    predictor (also how a trained MfModel becomes the low-fidelity model
    of a deeper stack).  Low-fidelity parameters are never touched by the
    high-fidelity stage.
    """
    if hf_x.shape[0] == 0:
        raise ValueError("mf_train requires nonempty high-fidelity data")
    if lf_model is None:
        if lf_x.shape[0] == 0:
            raise ValueError("mf_train requires nonempty low-fidelity data")
        lf_model = fit_single_fidelity(lf_spec, lf_x, lf_y, rng.substream(0))
    stub = MfModel(variant=variant, lf_model=lf_model, hf_model=None,
                   pairing=(lf_spec.kind, hf_spec.kind))
    z = stub._composed_input(hf_x)
    target = hf_y - lf_model.predict(hf_x) if variant.is_residual else hf_y
    hf_model = fit_single_fidelity(hf_spec, z, target, rng.substream(1))
    stub.hf_model = hf_model
    return stub


def mf_predict(model: MfModel, strain: np.ndarray, alpha_conf: float = 0.05):
    if model.hf_model is None:
        raise ValueError("multi-fidelity model is not trained")
    return model.mf_predictive(strain, alpha_conf=alpha_conf)


# ---------------------------------------------------------------------------
# Evaluation and budget sweeps
# ---------------------------------------------------------------------------

def evaluate_on(model, test: Dataset, alpha_conf: float = 0.05) -> MetricReport:
    """All five metrics for Bayesian predictions; relative error otherwise."""
    if isinstance(model, MfModel):
        out = model.mf_predictive(test.strain, alpha_conf=alpha_conf)
    elif isinstance(model, CooperativeModel):
        out = model.predictive(test.strain, alpha_conf=alpha_conf)
    else:
        out = model.predict(test.strain)
    truth = test.stress
    if isinstance(out, PredictiveResult):
        eps_r, skipped = relative_error_detail(out.mean, truth)
        true_std = np.zeros_like(truth) if test.true_std is None else test.true_std
        return MetricReport(
            eps_r=eps_r,
            tll=tll(out.mean, out.epistemic_var, truth),
            wa=wasserstein(out.mean, np.sqrt(out.aleatoric_var), truth, true_std),
            picp=picp(out.lower, out.upper, truth),
            mpiw=mpiw(out.lower, out.upper),
            alpha_conf=alpha_conf,
            n_skipped_steps=skipped,
        )
    eps_r, skipped = relative_error_detail(out, truth)
    return MetricReport(eps_r=eps_r, alpha_conf=alpha_conf, n_skipped_steps=skipped)


SWEEP_COLUMNS = ("variant", "n_lf", "n_hf", "T_c",
                 "eps_r_id", "eps_r_ood", "tll_id", "tll_ood",
                 "wa_id", "wa_ood", "picp_id", "picp_ood",
                 "mpiw_id", "mpiw_ood", "seed")


def metrics_row(variant: str, n_lf: int, n_hf: int, t_c: float, seed: int,
                id_report: MetricReport | None,
                ood_report: MetricReport | None) -> dict:
    row = {"variant": variant, "n_lf": n_lf, "n_hf": n_hf, "T_c": t_c, "seed": seed}
    for split, rep in (("id", id_report), ("ood", ood_report)):
        for name in ("eps_r", "tll", "wa", "picp", "mpiw"):
            row[f"{name}_{split}"] = None if rep is None else getattr(rep, name)
    return row


def budget_sweep(total_budget: float, lf_fractions, c_hf: float, c_lf: float,
                 data_builder: Callable, variant: MfVariant, lf_spec: ModelSpec,
                 hf_spec: ModelSpec, seed: int, alpha_conf: float = 0.05) -> list:
    """Train and evaluate one model per low-fidelity budget fraction.

    ``data_builder(n_hf, n_lf)`` returns (lf_x, lf_y, hf_x, hf_y, id_test,
    ood_test); unused slots may be empty.  Fraction 0 trains a pure
    high-fidelity model; fraction 1 trains the low-fidelity model only and
    leaves the high-fidelity metrics absent.  A grid point whose
    allocation has zero paths on both sides produces a degenerate row
    rather than an error.
    """
    rows = []
    for frac in lf_fractions:
        if not 0.0 <= frac <= 1.0:
            raise ValueError("lf fractions must lie in [0, 1]")
        n_lf = int(round(frac * total_budget / c_lf))
        n_hf = int(round((1.0 - frac) * total_budget / c_hf))
        t_c = total_cost(BudgetSpec(n_hf=n_hf, n_lf=n_lf, c_hf=c_hf, c_lf=c_lf))
        rng = RngStream(seed).substream(int(round(frac * 10 ** 6)))
        lf_x, lf_y, hf_x, hf_y, id_test, ood_test = data_builder(n_hf, n_lf)
        if n_hf == 0 and n_lf == 0:
            rows.append(metrics_row(variant.value, n_lf, n_hf, t_c, seed, None, None))
            continue
        if n_hf == 0:
            fit_single_fidelity(lf_spec, lf_x, lf_y, rng.substream(0))
            rows.append(metrics_row(variant.value, n_lf, n_hf, t_c, seed, None, None))
            continue
        if n_lf == 0:
            model = fit_single_fidelity(hf_spec, hf_x, hf_y, rng.substream(1))
        else:
            model = mf_train(lf_x, lf_y, hf_x, hf_y, variant, lf_spec, hf_spec, rng)
        rows.append(metrics_row(
            variant.value, n_lf, n_hf, t_c, seed,
            evaluate_on(model, id_test, alpha_conf),
            evaluate_on(model, ood_test, alpha_conf)))
    return rows
