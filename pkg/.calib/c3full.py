import time
import numpy as np
from mfveb.bayes import PsgldConfig
from mfveb.datagen import OracleConfig, build_benchmark
from mfveb.multifidelity import ModelSpec, evaluate_on, fit_single_fidelity
from mfveb.numerics import RngStream
from mfveb.training import TrainConfig

cfg = OracleConfig(noise_floor=0.12, noise_slope=0.08)
suite = build_benchmark("s1", seed=0, n_hf=400, n_lf=0, n_test=50,
                        n_replicates=5, t_steps=100, cfg=cfg)
print(f"mean_std={suite.id_test.true_std.mean():.4f} target_wa={0.25*suite.id_test.true_std.mean():.4f}", flush=True)

for vh, vep in ((8, 800), (16, 800)):
    t0 = time.time()
    spec = ModelSpec(kind="veb", hidden=32, layers=1, var_hidden=vh,
                     mean_cfg=TrainConfig(epochs=1000, lr=1e-2, batch_size=64),
                     var_cfg=TrainConfig(epochs=vep, lr=2e-2, batch_size=64),
                     psgld_cfg=PsgldConfig(step_size=3e-5, burn_in=100, n_samples=60,
                                           sample_stride=10, minibatch=64),
                     k_iterations=2)
    model = fit_single_fidelity(spec, suite.hf.strain, suite.hf.stress, RngStream(1))
    rep = evaluate_on(model, suite.id_test)
    res = model.predictive(suite.id_test.strain)
    dsig = np.abs(np.sqrt(res.aleatoric_var) - suite.id_test.true_std).mean()
    print(f"vh={vh}: eps={rep.eps_r:.2f}% WA={rep.wa:.4f} |dsig|={dsig:.4f} picp={rep.picp:.3f} "
          f"mpiw={rep.mpiw:.4f} tll={rep.tll:.2f} wall={time.time()-t0:.0f}s", flush=True)
    print("  lmglk:", [round(e["lmglk"]/120000, 4) for e in model.selection_log if "lmglk" in e], flush=True)
