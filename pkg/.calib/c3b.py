import time
import numpy as np
from mfveb.bayes import PsgldConfig
from mfveb.datagen import build_benchmark
from mfveb.multifidelity import ModelSpec, evaluate_on, fit_single_fidelity
from mfveb.numerics import RngStream
from mfveb.training import TrainConfig

t0 = time.time()
suite = build_benchmark("s1", seed=0, n_hf=400, n_lf=0, n_test=50,
                        n_replicates=5, t_steps=100)
print(f"mean|s|={np.abs(suite.id_test.stress).mean():.3f} mean_std={suite.id_test.true_std.mean():.4f}", flush=True)
spec = ModelSpec(kind="veb", hidden=32, layers=1, var_hidden=8,
                 mean_cfg=TrainConfig(epochs=1000, lr=1e-2, batch_size=64),
                 var_cfg=TrainConfig(epochs=600, lr=2e-2, batch_size=64),
                 psgld_cfg=PsgldConfig(step_size=5e-4, burn_in=100, n_samples=50,
                                       sample_stride=10, minibatch=64),
                 k_iterations=2)
model = fit_single_fidelity(spec, suite.hf.strain, suite.hf.stress, RngStream(1))
wall = time.time() - t0
rep = evaluate_on(model, suite.id_test)
target = 0.25 * float(suite.id_test.true_std.mean())
res = model.predictive(suite.id_test.strain)
dsig = np.abs(np.sqrt(res.aleatoric_var) - suite.id_test.true_std).mean()
print(f"wall={wall:.0f}s eps_r={rep.eps_r:.2f}% WA={rep.wa:.4f} target={target:.4f} "
      f"|dsigma|={dsig:.4f} picp={rep.picp:.3f} mpiw={rep.mpiw:.4f} tll={rep.tll:.2f}", flush=True)
print("selection:", model.selection_log)
