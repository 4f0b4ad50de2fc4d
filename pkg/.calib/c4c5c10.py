import time
import numpy as np
from mfveb.bayes import PsgldConfig
from mfveb.datagen import build_benchmark
from mfveb.multifidelity import (MfVariant, ModelSpec, budget_sweep, evaluate_on,
                                 fit_single_fidelity, mf_train)
from mfveb.numerics import RngStream
from mfveb.training import TrainConfig

print("== C5: data scaling on s1, sizes x seeds ==", flush=True)
def c5_run(n, seed):
    t0 = time.time()
    suite = build_benchmark("s1", seed=seed, n_hf=n, n_lf=0, n_test=40,
                            n_replicates=3, t_steps=100)
    spec = ModelSpec(kind="veb", hidden=16, layers=1, var_hidden=8,
                     mean_cfg=TrainConfig(epochs=500, lr=1e-2, batch_size=64),
                     var_cfg=TrainConfig(epochs=500, lr=2e-2, batch_size=64),
                     psgld_cfg=PsgldConfig(step_size=3e-5, burn_in=80, n_samples=40,
                                           sample_stride=8, minibatch=64),
                     k_iterations=1)
    model = fit_single_fidelity(spec, suite.hf.strain, suite.hf.stress, RngStream(1000+seed))
    rep = evaluate_on(model, suite.id_test)
    print(f"  n={n} seed={seed}: eps={rep.eps_r:.2f}% mpiw={rep.mpiw:.4f} picp={rep.picp:.3f} wall={time.time()-t0:.0f}s", flush=True)
    return rep.eps_r, rep.mpiw

res = {}
for n in (50, 200, 800):
    vals = [c5_run(n, s) for s in range(2)]
    res[n] = vals
for n, vals in res.items():
    print(f"n={n}: eps med={np.median([v[0] for v in vals]):.2f} mpiw med={np.median([v[1] for v in vals]):.4f}", flush=True)

print("== C4: noiseless collapse s2 rnn+veb ==", flush=True)
t0 = time.time()
suite = build_benchmark("s2", seed=0, n_hf=60, n_lf=300, n_test=40,
                        n_replicates=2, t_steps=100)
lf_spec = ModelSpec(kind="rnn", hidden=24, layers=1,
                    mean_cfg=TrainConfig(epochs=400, lr=1e-2, batch_size=64, val_fraction=0.2))
hf_spec = ModelSpec(kind="veb", hidden=16, layers=1, var_hidden=8,
                    mean_cfg=TrainConfig(epochs=400, lr=1e-2, batch_size=16),
                    var_cfg=TrainConfig(epochs=600, lr=2e-2, batch_size=16),
                    psgld_cfg=PsgldConfig(step_size=1e-5, burn_in=60, n_samples=30,
                                          sample_stride=6, minibatch=16),
                    k_iterations=1)
model = mf_train(suite.lf.strain, suite.lf.stress, suite.hf.strain, suite.hf.stress,
                 MfVariant.RESIDUAL_HIDDEN, lf_spec, hf_spec, RngStream(3))
out = model.mf_predictive(suite.id_test.strain)
ratio = out.aleatoric_var.mean() / suite.id_test.stress.var()
rep = evaluate_on(model, suite.id_test)
print(f"  aleatoric/output_var = {ratio:.2e} (need <=1e-3) eps={rep.eps_r:.2f}% picp={rep.picp:.3f} wall={time.time()-t0:.0f}s", flush=True)

print("== C10: sweep boundary sanity s4 ==", flush=True)
t0 = time.time()
c_hf, c_lf = 1/20, 1/120
total = 5.0
pool = build_benchmark("s4", seed=0, n_hf=int(total/c_hf), n_lf=int(total/c_lf),
                       n_test=30, n_replicates=3, t_steps=100)
def builder(n_hf, n_lf):
    lf = pool.lf
    return (lf.strain[:n_lf], lf.stress[:n_lf], pool.hf.strain[:n_hf],
            pool.hf.stress[:n_hf], pool.id_test, pool.ood_test)
spec = ModelSpec(kind="rnn", hidden=24, layers=1,
                 mean_cfg=TrainConfig(epochs=400, lr=1e-2, batch_size=64, val_fraction=0.2))
rows = budget_sweep(total, [0.0, 0.5, 1.0], c_hf, c_lf, builder,
                    MfVariant.RESIDUAL_HIDDEN, spec, spec, seed=0)
for r in rows:
    print(f"  frac_nlf={r['n_lf']}: n_hf={r['n_hf']} eps_id={r['eps_r_id']}", flush=True)
mid = rows[1]["eps_r_id"]; b0 = rows[0]["eps_r_id"]
print(f"  mid={mid:.2f} boundary={b0:.2f} ratio={mid/b0:.2f} (need <=2) wall={time.time()-t0:.0f}s", flush=True)
