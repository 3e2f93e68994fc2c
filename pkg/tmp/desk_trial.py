import sys, time
sys.path.insert(0, "src")
import numpy as np
from comfno.models import FnoConfig, ComFnoConfig, LayerBlockSpec
from comfno.training import build_dataset, train_loop, TrainConfig
from comfno.metrics import evaluate_model

t0 = time.time()
train = build_dataset("1d-plain", 200, 201, 1e-3, seed=0, fine_n=4096)
test = build_dataset("1d-plain", 100, 201, 1e-3, seed=0, fine_n=4096, index_start=200)
print(f"datasets: {time.time()-t0:.1f}s", flush=True)

fcfg = FnoConfig(width=64, modes=16, depth=4)
ccfg = ComFnoConfig(base=FnoConfig(width=64, modes=16, depth=4))

t0 = time.time()
fp, fh = train_loop(fcfg, train, TrainConfig(lr=1e-3, epochs=200, batch_size=50, seed=0))
print(f"FNO trained {time.time()-t0:.0f}s, loss {fh[0]:.4f} -> {fh[-1]:.4f}", flush=True)
t0 = time.time()
cp, ch = train_loop(ccfg, train, TrainConfig(lr=1e-3, epochs=200, batch_size=30, seed=0))
print(f"ComFNO trained {time.time()-t0:.0f}s, loss {ch[0]:.4f} -> {ch[-1]:.4f}", flush=True)

fr, fcurve = evaluate_model(fp, fcfg, test, "fno")
cr, ccurve = evaluate_model(cp, ccfg, test, "comfno")
print(f"FNO    mean {fr.mean:.3e} inf {fr.inf_norm:.3e} var {fr.var:.3e}")
print(f"ComFNO mean {cr.mean:.3e} inf {cr.inf_norm:.3e} var {cr.var:.3e}")
print(f"ratios mean {cr.mean/fr.mean:.3f} inf {cr.inf_norm/fr.inf_norm:.3f} var {cr.var/fr.var:.3f}")
print(f"peak near x=1: FNO {fcurve[-20:].max():.3e} ComFNO {ccurve[-20:].max():.3e}")
np.save("tmp/fno_curve.npy", fcurve); np.save("tmp/comfno_curve.npy", ccurve)
