import time
import numpy as np
from mfveb.datagen import build_benchmark
from mfveb.metrics import relative_error
from mfveb.multifidelity import ModelSpec, fit_single_fidelity
from mfveb.numerics import RngStream
from mfveb.training import TrainConfig

suite = build_benchmark("s1", seed=0, n_hf=400, n_lf=0, n_test=50,
                        n_replicates=5, t_steps=100)
for b, ep, lr in ((32, 1000, 1e-2), (64, 2000, 1e-2)):
    t0 = time.time()
    spec = ModelSpec(kind="rnn", hidden=32, layers=1,
                     mean_cfg=TrainConfig(epochs=ep, lr=lr, batch_size=b, val_fraction=0.0))
    m = fit_single_fidelity(spec, suite.hf.strain, suite.hf.stress, RngStream(11))
    err = relative_error(m.predict(suite.id_test.strain), suite.id_test.stress)
    print(f"b={b} ep={ep}: eps={err:.2f}% wall={time.time()-t0:.0f}s", flush=True)
