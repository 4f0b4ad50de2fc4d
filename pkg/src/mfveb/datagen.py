"""Synthetic history-dependent bi-fidelity data with known noise.

Replaces expensive physics solvers with an analytic stand-in that keeps the
three properties the learning stack actually exercises:

* history dependence: a per-component 1-D elastoplastic recursion with
  power-law isotropic hardening, so unloading/reloading paths differ;
* a biased low-fidelity twin: same recursion with perturbed modulus and
  hardening, systematically wrong but strongly correlated;
* controllable heteroscedastic noise: Gaussian with std a0 + a1*|stress|,
  recorded exactly so metrics can compare against the true distribution.

Inputs are random polynomial strain paths: uniform control points per
component, a least-squares quadratic through them, discretized to T steps
and clamped to the sampling range.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .numerics import RngStream

__all__ = [
    "BenchmarkSuite",
    "Dataset",
    "Normalizer",
    "OracleConfig",
    "SUITE_IDS",
    "add_noise",
    "build_benchmark",
    "generate_strain_paths",
    "hf_oracle",
    "lf_oracle",
    "load_dataset",
    "save_dataset",
]

SUITE_IDS = ("s1", "s2", "s3", "s4")

_BISECT_ITERS = 100


@dataclass(frozen=True)
class OracleConfig:
    """Constitutive and noise parameters of the synthetic solver."""

    elastic_modulus: float = 20.0
    yield_stress: float = 0.5
    hardening_modulus: float = 0.5
    hardening_exponent: float = 0.4
    lf_modulus_factor: float = 0.9
    lf_hardening_factor: float = 1.1
    noise_floor: float = 0.05
    noise_slope: float = 0.15

    def __post_init__(self):
        if self.elastic_modulus <= 0:
            raise ValueError("elastic_modulus must be positive")
        if self.yield_stress < 0 or self.hardening_modulus < 0:
            raise ValueError("yield parameters must be non-negative")
        if not 0 < self.hardening_exponent <= 1:
            raise ValueError("hardening_exponent must be in (0, 1]")
        if self.noise_floor < 0 or self.noise_slope < 0:
            raise ValueError("noise parameters must be non-negative")

    def tag(self) -> str:
        payload = json.dumps(self.__dict__, sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:12]


def generate_strain_paths(n: int, strain_range=(-0.1, 0.1), t_steps: int = 100,
                          n_control: int = 6, rng: RngStream | None = None,
                          seed: int | None = None) -> np.ndarray:
    """Random polynomial strain paths of shape (n, t_steps, 3).

    Per component: ``n_control`` values drawn uniformly in the range at
    equispaced abscissae, a quadratic least-squares fit through them,
    evaluated at ``t_steps`` equispaced points and clamped to the range.
    """
    lo, hi = float(strain_range[0]), float(strain_range[1])
    if not lo < hi:
        raise ValueError(f"invalid strain range ({lo}, {hi}): need lo < hi")
    if n_control < 3:
        raise ValueError("need at least 3 control points for a quadratic fit")
    if rng is None:
        rng = RngStream(0 if seed is None else seed)
    control = rng.uniform(lo, hi, size=(n, 3, n_control))
    return quadratic_paths_from_controls(control, t_steps, lo, hi)


def quadratic_paths_from_controls(control: np.ndarray, t_steps: int,
                                  lo: float, hi: float) -> np.ndarray:
    """Least-squares quadratic through control points, sampled at t_steps.

    ``control`` has shape (n, components, n_control); control abscissae and
    evaluation points are both equispaced on [0, 1].
    """
    n, comps, n_control = control.shape
    xc = np.linspace(0.0, 1.0, n_control)
    xt = np.linspace(0.0, 1.0, t_steps)
    coeffs = np.polyfit(xc, control.reshape(n * comps, n_control).T, 2)
    values = np.polynomial.polynomial.polyval(xt, coeffs[::-1])  # (n*comps, T)
    paths = values.reshape(n, comps, t_steps).transpose(0, 2, 1)
    return np.clip(paths, lo, hi)


def _return_mapping(strain: np.ndarray, modulus: float, yield_stress: float,
                    hardening: float, exponent: float) -> np.ndarray:
    """Integrate the per-component elastoplastic recursion over all paths.

    Trial stress from the previous converged state; if it exceeds the
    current yield stress, bisect for the plastic multiplier that returns
    the stress to the (hardened) yield surface.  Bisection runs a fixed
    iteration count so results are reproducible to the last bit.
    """
    squeeze = strain.ndim == 2
    strain = np.asarray(strain, dtype=np.float64)
    if squeeze:
        strain = strain[None, ...]
    n, t_steps, comps = strain.shape
    sigma = np.zeros((n, comps))
    ebar = np.zeros((n, comps))
    eps_prev = np.zeros((n, comps))
    out = np.empty((n, t_steps, comps))
    for t in range(t_steps):
        deps = strain[:, t, :] - eps_prev
        trial = sigma + modulus * deps
        abs_trial = np.abs(trial)
        sy = yield_stress + hardening * ebar ** exponent
        plastic = abs_trial > sy
        sigma = trial.copy()
        if np.any(plastic):
            tr = abs_trial[plastic]
            eb = ebar[plastic]
            lo = np.zeros_like(tr)
            hi = tr / modulus
            for _ in range(_BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                g = tr - modulus * mid - (yield_stress + hardening * (eb + mid) ** exponent)
                above = g > 0.0
                lo = np.where(above, mid, lo)
                hi = np.where(above, hi, mid)
            dlam = 0.5 * (lo + hi)
            sign = np.where(trial[plastic] >= 0.0, 1.0, -1.0)
            sigma[plastic] = sign * (tr - modulus * dlam)
            ebar = ebar.copy()
            ebar[plastic] = eb + dlam
        out[:, t, :] = sigma
        eps_prev = strain[:, t, :]
    return out[0] if squeeze else out


def hf_oracle(cfg: OracleConfig, strain: np.ndarray) -> np.ndarray:
    """High-fidelity clean stress response for strain paths."""
    return _return_mapping(strain, cfg.elastic_modulus, cfg.yield_stress,
                           cfg.hardening_modulus, cfg.hardening_exponent)


def lf_oracle(cfg: OracleConfig, strain: np.ndarray) -> np.ndarray:
    """Low-fidelity twin: modulus and hardening scaled by the bias factors."""
    return _return_mapping(strain, cfg.elastic_modulus * cfg.lf_modulus_factor,
                           cfg.yield_stress,
                           cfg.hardening_modulus * cfg.lf_hardening_factor,
                           cfg.hardening_exponent)


def noise_std(cfg: OracleConfig, clean_stress: np.ndarray) -> np.ndarray:
    return cfg.noise_floor + cfg.noise_slope * np.abs(clean_stress)


def add_noise(stress: np.ndarray, cfg: OracleConfig, rng: RngStream):
    """Perturb each component with N(0, (a0 + a1*|stress|)^2).

    Returns (noisy stress, true std) so the generating distribution stays
    available for metric evaluation.
    """
    std = noise_std(cfg, stress)
    noisy = stress + std * rng.normal(size=stress.shape)
    return noisy, std


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Normalizer:
    """Per-component standardization statistics for inputs and targets."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    @staticmethod
    def fit(x: np.ndarray, y: np.ndarray) -> "Normalizer":
        flat_x = x.reshape(-1, x.shape[-1])
        flat_y = y.reshape(-1, y.shape[-1])
        return Normalizer(
            x_mean=flat_x.mean(axis=0),
            x_std=np.maximum(flat_x.std(axis=0), 1e-8),
            y_mean=flat_y.mean(axis=0),
            y_std=np.maximum(flat_y.std(axis=0), 1e-8),
        )

    def encode_x(self, x):
        return (x - self.x_mean) / self.x_std

    def encode_y(self, y):
        return (y - self.y_mean) / self.y_std

    def decode_y(self, y):
        return y * self.y_std + self.y_mean

    def decode_var(self, var):
        return var * self.y_std ** 2

    def to_dict(self) -> dict:
        return {k: list(map(float, getattr(self, k))) for k in
                ("x_mean", "x_std", "y_mean", "y_std")}

    @staticmethod
    def from_dict(d: dict) -> "Normalizer":
        return Normalizer(**{k: np.asarray(d[k], dtype=np.float64) for k in
                             ("x_mean", "x_std", "y_mean", "y_std")})


# ---------------------------------------------------------------------------
# Datasets and benchmark suites
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Paired strain/stress paths of one fidelity.

    Training sets store observed (possibly noisy) stresses.  Test sets
    store the clean ground-truth mean in ``stress``, the generating noise
    std in ``true_std`` (zeros for deterministic scenarios), and optional
    replicate noise draws.
    """

    fidelity: str
    noisy: bool
    strain: np.ndarray                      # (N, T, 3)
    stress: np.ndarray                      # (N, T, 3)
    true_std: np.ndarray | None = None      # (N, T, 3)
    replicates: np.ndarray | None = None    # (N, R, T, 3)
    seed: int = 0
    oracle_tag: str = ""
    strain_range: tuple = (-0.1, 0.1)

    @property
    def n_paths(self) -> int:
        return self.strain.shape[0]

    @property
    def t_steps(self) -> int:
        return self.strain.shape[1]

    def normalizer(self) -> Normalizer:
        return Normalizer.fit(self.strain, self.stress)

    def subset(self, idx) -> "Dataset":
        return replace(
            self,
            strain=self.strain[idx],
            stress=self.stress[idx],
            true_std=None if self.true_std is None else self.true_std[idx],
            replicates=None if self.replicates is None else self.replicates[idx],
        )


@dataclass
class BenchmarkSuite:
    suite: str
    hf: Dataset
    lf: Dataset | None
    id_test: Dataset
    ood_test: Dataset
    config: OracleConfig = field(default_factory=OracleConfig)
    seed: int = 0


def _make_train(fidelity: str, oracle, noisy: bool, n: int, rng_paths: RngStream,
                rng_noise: RngStream, cfg: OracleConfig, strain_range, t_steps,
                n_control, seed) -> Dataset:
    strain = generate_strain_paths(n, strain_range, t_steps, n_control, rng=rng_paths)
    clean = oracle(cfg, strain)
    if noisy:
        stress, std = add_noise(clean, cfg, rng_noise)
    else:
        stress, std = clean, None
    return Dataset(fidelity=fidelity, noisy=noisy, strain=strain, stress=stress,
                   true_std=std, seed=seed, oracle_tag=cfg.tag(),
                   strain_range=tuple(strain_range))


def _make_test(noisy: bool, n: int, n_replicates: int, rng_paths: RngStream,
               rng_noise: RngStream, cfg: OracleConfig, strain_range, t_steps,
               n_control, seed) -> Dataset:
    strain = generate_strain_paths(n, strain_range, t_steps, n_control, rng=rng_paths)
    clean = hf_oracle(cfg, strain)
    if noisy:
        std = noise_std(cfg, clean)
        reps = clean[:, None, :, :] + std[:, None, :, :] * rng_noise.normal(
            size=(n, n_replicates) + clean.shape[1:])
    else:
        std = np.zeros_like(clean)
        reps = None
    return Dataset(fidelity="hf", noisy=noisy, strain=strain, stress=clean,
                   true_std=std, replicates=reps, seed=seed, oracle_tag=cfg.tag(),
                   strain_range=tuple(strain_range))


def build_benchmark(suite: str, seed: int, n_hf: int = 1000, n_lf: int = 2000,
                    n_test: int = 100, n_replicates: int = 100, t_steps: int = 100,
                    n_control: int = 6, strain_range=(-0.1, 0.1),
                    ood_extrapolation: float = 0.25,
                    cfg: OracleConfig | None = None) -> BenchmarkSuite:
    """Assemble one of the four learning scenarios.

    s1: noisy single fidelity (no LF data);
    s2: clean LF + clean HF;
    s3: noisy LF + noisy HF;
    s4: noisy LF + clean HF.

    Test ground-truth means come from the clean high-fidelity oracle and
    are identical across suites for the same seed.
    """
    suite = suite.lower()
    if suite not in SUITE_IDS:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITE_IDS}")
    cfg = cfg or OracleConfig()
    hf_noisy = suite in ("s1", "s3")
    lf_noisy = suite in ("s3", "s4")
    has_lf = suite != "s1"

    root = RngStream(seed)
    hf = _make_train("hf", hf_oracle, hf_noisy, n_hf, root.substream(0),
                     root.substream(2), cfg, strain_range, t_steps, n_control, seed)
    lf = None
    if has_lf:
        lf = _make_train("lf", lf_oracle, lf_noisy, n_lf, root.substream(1),
                         root.substream(3), cfg, strain_range, t_steps, n_control, seed)
    lo, hi = strain_range
    ood_range = (lo * (1.0 + ood_extrapolation), hi * (1.0 + ood_extrapolation))
    id_test = _make_test(hf_noisy, n_test, n_replicates, root.substream(4),
                         root.substream(6), cfg, strain_range, t_steps, n_control, seed)
    ood_test = _make_test(hf_noisy, n_test, n_replicates, root.substream(5),
                          root.substream(7), cfg, ood_range, t_steps, n_control, seed)
    return BenchmarkSuite(suite=suite, hf=hf, lf=lf, id_test=id_test,
                          ood_test=ood_test, config=cfg, seed=seed)


# ---------------------------------------------------------------------------
# Serialization: JSON Lines records plus a sidecar manifest
# ---------------------------------------------------------------------------

def _nested(a: np.ndarray):
    return [[float(v) for v in row] for row in a]


def save_dataset(ds: Dataset, path) -> None:
    """One record per path (plus one per noise replicate) as JSON Lines.

    A ``<name>.manifest.json`` sidecar stores provenance and normalization
    statistics.  Floats serialize via repr, so a load reproduces every
    value bit for bit.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for i in range(ds.n_paths):
            rec = {
                "path_id": i,
                "fidelity": ds.fidelity,
                "strain": _nested(ds.strain[i]),
                "stress": _nested(ds.stress[i]),
                "true_std": None if ds.true_std is None else _nested(ds.true_std[i]),
                "replicate": None,
            }
            fh.write(json.dumps(rec) + "\n")
            if ds.replicates is not None:
                for r in range(ds.replicates.shape[1]):
                    rep = {
                        "path_id": i,
                        "fidelity": ds.fidelity,
                        "strain": _nested(ds.strain[i]),
                        "stress": _nested(ds.replicates[i, r]),
                        "true_std": None,
                        "replicate": r,
                    }
                    fh.write(json.dumps(rep) + "\n")
    norm = ds.normalizer()
    manifest = {
        "schema": 1,
        "seed": ds.seed,
        "fidelity": ds.fidelity,
        "noisy": ds.noisy,
        "n_paths": ds.n_paths,
        "t_steps": ds.t_steps,
        "n_replicates": 0 if ds.replicates is None else int(ds.replicates.shape[1]),
        "strain_range": list(ds.strain_range),
        "oracle_tag": ds.oracle_tag,
        "normalization": norm.to_dict(),
    }
    manifest_path = path.with_suffix(path.suffix + ".manifest.json") \
        if path.suffix != ".jsonl" else path.with_name(path.stem + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    manifest_path = path.with_suffix(path.suffix + ".manifest.json") \
        if path.suffix != ".jsonl" else path.with_name(path.stem + ".manifest.json")
    manifest = json.loads(manifest_path.read_text())
    base = {}
    reps = {}
    with path.open() as fh:
        for line in fh:
            rec = json.loads(line)
            pid = rec["path_id"]
            if rec["replicate"] is None:
                base[pid] = rec
            else:
                reps.setdefault(pid, {})[rec["replicate"]] = rec["stress"]
    ids = sorted(base)
    strain = np.array([base[i]["strain"] for i in ids])
    stress = np.array([base[i]["stress"] for i in ids])
    if all(base[i]["true_std"] is None for i in ids):
        true_std = None
    else:
        true_std = np.array([base[i]["true_std"] for i in ids])
    replicates = None
    if reps:
        n_rep = manifest["n_replicates"]
        replicates = np.array([[reps[i][r] for r in range(n_rep)] for i in ids])
    return Dataset(
        fidelity=manifest["fidelity"],
        noisy=manifest["noisy"],
        strain=strain,
        stress=stress,
        true_std=true_std,
        replicates=replicates,
        seed=manifest["seed"],
        oracle_tag=manifest["oracle_tag"],
        strain_range=tuple(manifest["strain_range"]),
    )
