import time
import numpy as np
from mfveb.datagen import OracleConfig, build_benchmark, lf_oracle
from mfveb.metrics import relative_error
from mfveb.multifidelity import ModelSpec, fit_single_fidelity
from mfveb.numerics import RngStream
from mfveb.training import TrainConfig

def trial(E, s0, hidden, epochs, lr, batch=64, layers=1):
    cfg = OracleConfig(elastic_modulus=E, yield_stress=s0)
    suite = build_benchmark("s2", seed=0, n_hf=10, n_lf=500, n_test=40,
                            n_replicates=2, t_steps=100, cfg=cfg)
    truth = lf_oracle(cfg, suite.id_test.strain)
    t0 = time.time()
    spec = ModelSpec(kind="rnn", hidden=hidden, layers=layers,
                     mean_cfg=TrainConfig(epochs=epochs, lr=lr, batch_size=batch,
                                          val_fraction=0.2))
    m = fit_single_fidelity(spec, suite.lf.strain, suite.lf.stress, RngStream(1))
    err = relative_error(m.predict(suite.id_test.strain), truth)
    scale = np.abs(suite.id_test.stress).mean()
    print(f"E={E} s0={s0} h={hidden} ep={epochs} lr={lr}: eps_r={err:.2f}% "
          f"mean|sigma|={scale:.3f} wall={time.time()-t0:.0f}s", flush=True)

trial(20.0, 0.5, 32, 300, 1e-2)
trial(20.0, 0.3, 32, 300, 1e-2)
trial(10.0, 0.3, 32, 300, 1e-2)
trial(20.0, 0.3, 32, 800, 1e-2)
