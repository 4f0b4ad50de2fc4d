"""Gated recurrent sequence networks: mean and variance estimators.

Both networks share the same stacked-GRU body; they differ in the decoder.
The mean network decodes one value per output component.  The variance
network decodes two raw values per component, mapped through softplus plus
a small floor to the strictly positive shape/rate pair of a Gamma model of
squared residuals; the ratio shape/rate is the heteroscedastic variance
estimate.

The unroll is written against :mod:`mfveb.autodiff` operations, so the same
code produces a differentiable graph when fed graph leaves and plain numpy
arrays when fed raw parameter values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamVector
from .numerics import RngStream, ShapeError

__all__ = [
    "MeanNetwork",
    "VarianceNetwork",
    "gru_forward",
    "init_params",
    "variance_forward",
]

# Weight/bias entries per GRU layer, in layout order.
_LAYER_FIELDS = ("W_xz", "W_hz", "W_xr", "W_hr", "W_xh", "W_hh",
                 "b_xz", "b_hz", "b_xr", "b_hr", "b_xh", "b_hh")


def _layer_layout(prefix: str, in_dim: int, hidden: int):
    shapes = {
        "W_xz": (hidden, in_dim), "W_hz": (hidden, hidden),
        "W_xr": (hidden, in_dim), "W_hr": (hidden, hidden),
        "W_xh": (hidden, in_dim), "W_hh": (hidden, hidden),
        "b_xz": (hidden,), "b_hz": (hidden,),
        "b_xr": (hidden,), "b_hr": (hidden,),
        "b_xh": (hidden,), "b_hh": (hidden,),
    }
    return [(f"{prefix}.{field}", shapes[field]) for field in _LAYER_FIELDS]


def _gru_step(p, prefix, x_t, h_prev):
    z = ad.sigmoid(ad.add(ad.linear(x_t, p[f"{prefix}.W_xz"], p[f"{prefix}.b_xz"]),
                          ad.linear(h_prev, p[f"{prefix}.W_hz"], p[f"{prefix}.b_hz"])))
    r = ad.sigmoid(ad.add(ad.linear(x_t, p[f"{prefix}.W_xr"], p[f"{prefix}.b_xr"]),
                          ad.linear(h_prev, p[f"{prefix}.W_hr"], p[f"{prefix}.b_hr"])))
    cand = ad.tanh(ad.add(ad.linear(x_t, p[f"{prefix}.W_xh"], p[f"{prefix}.b_xh"]),
                          ad.mul(r, ad.linear(h_prev, p[f"{prefix}.W_hh"], p[f"{prefix}.b_hh"]))))
    return ad.add(ad.mul(z, h_prev), ad.mul(ad.sub(1.0, z), cand))


@dataclass(frozen=True)
class _GruBase:
    input_dim: int
    output_dim: int
    hidden_dim: int
    n_layers: int

    @property
    def decoder_outputs(self) -> int:
        return self.output_dim

    def layout(self):
        entries = []
        for k in range(self.n_layers):
            in_dim = self.input_dim if k == 0 else self.hidden_dim
            entries.extend(_layer_layout(f"gru{k}", in_dim, self.hidden_dim))
        entries.append(("dec.W", (self.decoder_outputs, self.hidden_dim)))
        entries.append(("dec.b", (self.decoder_outputs,)))
        return tuple(entries)

    def init(self, rng: RngStream) -> ParamVector:
        """Weights uniform in (-1/sqrt(hidden), +1/sqrt(hidden)); zero biases."""
        bound = 1.0 / np.sqrt(self.hidden_dim)
        tensors = {}
        for name, shape in self.layout():
            if name.split(".")[-1].startswith("W"):
                tensors[name] = rng.uniform(-bound, bound, size=shape)
            else:
                tensors[name] = np.zeros(shape)
        return ParamVector.flatten(tensors, self.layout())

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeError(
                f"expected input of shape (n_paths, T, {self.input_dim}), got {x.shape}")
        return x

    def unroll(self, p, x: np.ndarray):
        """Last-layer hidden states and decoded outputs, one entry per step.

        ``p`` maps layout names to graph leaves (gradient mode) or numpy
        arrays (value mode).  Hidden state starts at zero.
        """
        x = self._check_input(x)
        n, t_steps, _ = x.shape
        seq = [x[:, t, :] for t in range(t_steps)]
        for k in range(self.n_layers):
            h = np.zeros((n, self.hidden_dim))
            layer_out = []
            for t in range(t_steps):
                h = _gru_step(p, f"gru{k}", seq[t], h)
                layer_out.append(h)
            seq = layer_out
        outputs = [ad.linear(h_t, p["dec.W"], p["dec.b"]) for h_t in seq]
        return outputs, seq


@dataclass(frozen=True)
class MeanNetwork(_GruBase):
    """Stacked GRU decoding one value per output component per step."""

    hidden_dim: int = 128
    n_layers: int = 2

    def predict(self, params: ParamVector, x: np.ndarray):
        """Pure-numpy forward: returns (outputs (N,T,out), hidden (N,T,H))."""
        outputs, hiddens = self.unroll(params.unflatten(), x)
        return np.stack(outputs, axis=1), np.stack(hiddens, axis=1)


@dataclass(frozen=True)
class VarianceNetwork(_GruBase):
    """Stacked GRU decoding Gamma (shape, rate) per output component."""

    hidden_dim: int = 8
    n_layers: int = 1
    eps_pos: float = 1e-6

    @property
    def decoder_outputs(self) -> int:
        return 2 * self.output_dim

    def gamma_params(self, p, x: np.ndarray):
        """Per-step (shape, rate) nodes, each strictly positive."""
        raw, _ = self.unroll(p, x)
        d = self.output_dim
        pairs = []
        for raw_t in raw:
            alpha = ad.add(ad.softplus(ad.slice_cols(raw_t, 0, d)), self.eps_pos)
            lam = ad.add(ad.softplus(ad.slice_cols(raw_t, d, 2 * d)), self.eps_pos)
            pairs.append((alpha, lam))
        return pairs

    def predict(self, params: ParamVector, x: np.ndarray):
        """Pure-numpy forward: (alpha, rate, s2) arrays of shape (N,T,out)."""
        pairs = self.gamma_params(params.unflatten(), x)
        alpha = np.stack([a for a, _ in pairs], axis=1)
        lam = np.stack([b for _, b in pairs], axis=1)
        return alpha, lam, alpha / lam


def gru_forward(net: MeanNetwork, params: ParamVector, x: np.ndarray):
    """Decoded outputs plus the last layer's hidden sequence."""
    return net.predict(params, x)


def variance_forward(net: VarianceNetwork, params: ParamVector, x: np.ndarray):
    """Gamma shape/rate and their ratio (the variance estimate) per step."""
    return net.predict(params, x)


def init_params(net, rng: RngStream) -> ParamVector:
    return net.init(rng)
