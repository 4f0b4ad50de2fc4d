import time
import numpy as np
from mfveb.bayes import PsgldConfig, cooperative_train
from mfveb.datagen import build_benchmark
from mfveb.metrics import picp, relative_error, wasserstein
from mfveb.multifidelity import evaluate_on, fit_single_fidelity, ModelSpec
from mfveb.networks import MeanNetwork, VarianceNetwork
from mfveb.numerics import RngStream
from mfveb.training import TrainConfig

t0 = time.time()
suite = build_benchmark("s1", seed=0, n_hf=400, n_lf=0, n_test=50,
                        n_replicates=5, t_steps=100)
print(f"data {time.time()-t0:.0f}s; mean|sigma_clean|={np.abs(suite.id_test.stress).mean():.3f} "
      f"mean true std={suite.id_test.true_std.mean():.4f}")

for label, layers, mepochs, vepochs, psgld in [
    ("A 1L m400 v800 ps600mb64", 1, 400, 800,
     PsgldConfig(step_size=5e-4, burn_in=100, n_samples=50, sample_stride=10, minibatch=64)),
]:
    t0 = time.time()
    spec = ModelSpec(kind="veb", hidden=32, layers=layers, var_hidden=8,
                     mean_cfg=TrainConfig(epochs=mepochs, lr=2e-3),
                     var_cfg=TrainConfig(epochs=vepochs, lr=2e-2),
                     psgld_cfg=psgld, k_iterations=2)
    model = fit_single_fidelity(spec, suite.hf.strain, suite.hf.stress, RngStream(1))
    wall = time.time() - t0
    rep = evaluate_on(model, suite.id_test)
    target = 0.25 * suite.id_test.true_std.mean()
    res = model.predictive(suite.id_test.strain)
    sigma_only = np.abs(np.sqrt(res.aleatoric_var) - suite.id_test.true_std).mean()
    print(f"{label}: wall={wall:.0f}s eps_r={rep.eps_r:.2f}% WA={rep.wa:.4f} "
          f"(target {target:.4f}) |dsigma|={sigma_only:.4f} picp={rep.picp:.3f} mpiw={rep.mpiw:.4f} tll={rep.tll:.2f}")
