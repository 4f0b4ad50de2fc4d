import pickle, time
import numpy as np
from pathlib import Path
from mfveb.bayes import (GaussianSequenceTarget, PosteriorEnsemble, PsgldConfig,
                         log_marginal_likelihood, predictive, psgld_sample)
from mfveb.datagen import Normalizer, build_benchmark
from mfveb.metrics import mpiw, picp, relative_error, wasserstein
from mfveb.networks import MeanNetwork, VarianceNetwork
from mfveb.numerics import RngStream
from mfveb.training import TrainConfig, VarianceModel, train_mean, train_variance

cache = Path(".calib/c3cache.pkl")
suite = build_benchmark("s1", seed=0, n_hf=400, n_lf=0, n_test=50,
                        n_replicates=5, t_steps=100)
net = MeanNetwork(input_dim=3, output_dim=3, hidden_dim=32, n_layers=1)
vnet = VarianceNetwork(input_dim=3, output_dim=3, hidden_dim=8, n_layers=1)
norm = Normalizer.fit(suite.hf.strain, suite.hf.stress)
xn, yn = norm.encode_x(suite.hf.strain), norm.encode_y(suite.hf.stress)

if cache.exists():
    theta, phi = pickle.loads(cache.read_bytes())
else:
    t0 = time.time()
    theta, _ = train_mean(net, xn, yn, TrainConfig(epochs=1000, lr=1e-2, batch_size=64, seed=11))
    mean_pred, _ = net.predict(theta, xn)
    phi, _ = train_variance(vnet, mean_pred, xn, yn, TrainConfig(epochs=600, lr=2e-2, batch_size=64, seed=12))
    cache.write_bytes(pickle.dumps((theta, phi)))
    print(f"trained steps 1+2 in {time.time()-t0:.0f}s", flush=True)

mean_pred, _ = net.predict(theta, xn)
det_eps = relative_error(norm.decode_y(net.predict(theta, norm.encode_x(suite.id_test.strain))[0]), suite.id_test.stress)
_, _, s2 = vnet.predict(phi, xn)
vm = VarianceModel(net=vnet, params=phi, normalizer=norm)
sig_err = np.abs(np.sqrt(vm.aleatoric_var(suite.id_test.strain)) - suite.id_test.true_std).mean()
print(f"step1 det eps_r={det_eps:.2f}%  vnet |dsigma| on test={sig_err:.4f} (mean std {suite.id_test.true_std.mean():.4f})", flush=True)

target = GaussianSequenceTarget(net, xn, yn, s2)
for step, mb, burn in [(1e-4, 64, 100), (3e-5, 64, 100), (1e-5, 64, 100), (3e-5, 0, 100)]:
    t0 = time.time()
    cfg = PsgldConfig(step_size=step, burn_in=burn, n_samples=50, sample_stride=10, minibatch=mb)
    try:
        ens = psgld_sample(cfg, theta, target, RngStream(5))
    except Exception as e:
        print(f"step={step} mb={mb}: {type(e).__name__} {e}", flush=True)
        continue
    res = predictive(net, ens, norm, suite.id_test.strain, variance_model=vm)
    eps = relative_error(res.mean, suite.id_test.stress)
    wa = wasserstein(res.mean, np.sqrt(res.aleatoric_var), suite.id_test.stress, suite.id_test.true_std)
    pi = picp(res.lower, res.upper, suite.id_test.stress)
    lmglk, _ = log_marginal_likelihood(net, ens, xn, yn, s2)
    print(f"step={step} mb={mb} burn={burn}: eps={eps:.2f}% WA={wa:.4f} picp={pi:.3f} "
          f"mpiw={mpiw(res.lower,res.upper):.4f} lmglk/pt={lmglk/yn.size:.3f} wall={time.time()-t0:.0f}s", flush=True)
