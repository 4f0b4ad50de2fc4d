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

def trial(hidden, layers, epochs, lr, batch):
    t0 = time.time()
    spec = ModelSpec(kind="rnn", hidden=hidden, layers=layers,
                     mean_cfg=TrainConfig(epochs=epochs, lr=lr, batch_size=batch,
                                          val_fraction=0.2))
    m = fit_single_fidelity(spec, suite.lf.strain, suite.lf.stress, RngStream(1))
    err = relative_error(m.predict(suite.id_test.strain), lf_truth_id)
    print(f"h={hidden} L={layers} ep={epochs} lr={lr} b={batch}: "
          f"eps_r={err:.2f}% wall={time.time()-t0:.0f}s", flush=True)

trial(32, 1, 150, 5e-3, 64)
trial(32, 1, 300, 5e-3, 64)
trial(32, 1, 300, 1e-2, 64)
trial(32, 2, 300, 5e-3, 64)
trial(48, 1, 300, 5e-3, 64)
trial(32, 1, 600, 5e-3, 64)
