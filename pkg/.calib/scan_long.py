import time
import numpy as np
from mfveb.datagen import build_benchmark, lf_oracle
from mfveb.metrics import relative_error
from mfveb.multifidelity import ModelSpec, fit_single_fidelity
from mfveb.numerics import RngStream
from mfveb.training import TrainConfig

suite = build_benchmark("s2", seed=0, n_hf=10, n_lf=500, n_test=40,
                        n_replicates=2, t_steps=100)
lf_truth_id = lf_oracle(suite.config, suite.id_test.strain)

def trial(hidden, layers, epochs, lr, batch, t_steps=100):
    t0 = time.time()
    if t_steps != 100:
        s2 = build_benchmark("s2", seed=0, n_hf=10, n_lf=500, n_test=40,
                             n_replicates=2, t_steps=t_steps)
        x, y = s2.lf.strain, s2.lf.stress
        truth = lf_oracle(s2.config, s2.id_test.strain)
        xt = s2.id_test.strain
    else:
        x, y, truth, xt = suite.lf.strain, suite.lf.stress, lf_truth_id, suite.id_test.strain
    spec = ModelSpec(kind="rnn", hidden=hidden, layers=layers,
                     mean_cfg=TrainConfig(epochs=epochs, lr=lr, batch_size=batch,
                                          val_fraction=0.2))
    m = fit_single_fidelity(spec, x, y, RngStream(1))
    err = relative_error(m.predict(xt), truth)
    print(f"h={hidden} L={layers} ep={epochs} lr={lr} b={batch} T={t_steps}: "
          f"eps_r={err:.2f}% wall={time.time()-t0:.0f}s", flush=True)

trial(32, 1, 1000, 1e-2, 64)
trial(32, 2, 1000, 5e-3, 64)
trial(64, 1, 1000, 5e-3, 64)
trial(32, 1, 2000, 1e-2, 64, t_steps=50)
