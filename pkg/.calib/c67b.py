import time
import numpy as np
from mfveb.datagen import build_benchmark
from mfveb.multifidelity import (BudgetSpec, MfVariant, ModelSpec, evaluate_on,
                                 fit_single_fidelity, mf_train, total_cost)
from mfveb.numerics import RngStream
from mfveb.training import TrainConfig

C_HF, C_LF = 1/20, 1/120
N_HF, N_LF = 20, 500
tc = total_cost(BudgetSpec(N_HF, N_LF, C_HF, C_LF))
n_sf = int(round(tc / C_HF))
print(f"T_c={tc:.3f} matched sf={n_sf}", flush=True)

def spec(hidden, epochs, batch=64):
    return ModelSpec(kind="rnn", hidden=hidden, layers=1,
                     mean_cfg=TrainConfig(epochs=epochs, lr=1e-2, batch_size=batch,
                                          val_fraction=0.2))

rows = []
for seed in range(5):
    t0 = time.time()
    suite = build_benchmark("s2", seed=seed, n_hf=max(N_HF, n_sf), n_lf=N_LF,
                            n_test=40, n_replicates=2, t_steps=100)
    rng = RngStream(seed)
    hf_x, hf_y = suite.hf.strain[:N_HF], suite.hf.stress[:N_HF]
    lf_model = fit_single_fidelity(spec(32, 500), suite.lf.strain, suite.lf.stress, rng.substream(0))
    mf_h = mf_train(None, None, hf_x, hf_y, MfVariant.RESIDUAL_HIDDEN,
                    spec(32, 500), spec(16, 300, batch=8), rng.substream(1), lf_model=lf_model)
    mf_o = mf_train(None, None, hf_x, hf_y, MfVariant.RESIDUAL_ORIGINAL,
                    spec(32, 500), spec(16, 300, batch=8), rng.substream(2), lf_model=lf_model)
    sf = fit_single_fidelity(spec(32, 500), suite.hf.strain[:n_sf],
                             suite.hf.stress[:n_sf], rng.substream(3))
    r = dict(seed=seed,
             lf=evaluate_on(lf_model, suite.id_test).eps_r,
             mfh=evaluate_on(mf_h, suite.id_test).eps_r,
             mfo=evaluate_on(mf_o, suite.id_test).eps_r,
             sf=evaluate_on(sf, suite.id_test).eps_r,
             wall=time.time()-t0)
    rows.append(r)
    print({k: (round(v,2) if isinstance(v,float) else v) for k,v in r.items()}, flush=True)
med = lambda k: np.median([r[k] for r in rows])
print(f"medians: lf={med('lf'):.2f} mfh={med('mfh'):.2f} mfo={med('mfo'):.2f} sf={med('sf'):.2f}")
print("criterion6:", med('mfh') < med('sf'), " criterion7:", med('mfh') <= med('mfo'))
