import sys, time
sys.path.insert(0, "src")
import numpy as np
from comfno import autodiff as ad
from comfno.models import FnoConfig, ComFnoConfig, init_params
from comfno.training import (AdamConfig, AdamState, adam_step, build_dataset,
                             l2_relative_loss, model_forward)
from comfno.metrics import evaluate_model

EPS = 1e-2
t0 = time.time()
train = build_dataset("1d-plain", 200, 201, EPS, seed=0, fine_n=4096)
test = build_dataset("1d-plain", 100, 201, EPS, seed=0, fine_n=4096, index_start=200)
print(f"datasets: {time.time()-t0:.1f}s", flush=True)


def run(tag, cfg, batch, lr=1e-3, epochs=200, seed=0, every=25):
    params = init_params(cfg, seed)
    state = AdamState(params)
    opt = AdamConfig(lr=lr)
    mesh = train.mesh
    t0 = time.time()
    for epoch in range(epochs):
        perm = np.random.default_rng([seed, epoch]).permutation(train.count)
        losses = []
        for s in range(0, train.count, batch):
            idx = perm[s:s + batch]
            ad.zero_grads(params)
            pred = model_forward(params, cfg, train.inputs[idx], EPS, mesh)
            loss = l2_relative_loss(pred, train.targets[idx])
            losses.append(float(loss.data))
            loss.backward()
            adam_step(params, state, opt)
        if (epoch + 1) % every == 0:
            r, _ = evaluate_model(params, cfg, test, tag)
            print(f"{tag} ep{epoch+1:3d} train {np.mean(losses):.4f} "
                  f"test mean {r.mean:.3e} inf {r.inf_norm:.3e} var {r.var:.3e} "
                  f"[{time.time()-t0:.0f}s]", flush=True)
    return params


fcfg = FnoConfig(width=64, modes=16, depth=4)
ccfg = ComFnoConfig(base=FnoConfig(width=64, modes=16, depth=4))
fp = run("fno   ", fcfg, batch=50)
cp = run("comfno", ccfg, batch=30)

fr, fcurve = evaluate_model(fp, fcfg, test, "fno")
cr, ccurve = evaluate_model(cp, ccfg, test, "comfno")
print(f"FNO    mean {fr.mean:.3e} inf {fr.inf_norm:.3e} var {fr.var:.3e}")
print(f"ComFNO mean {cr.mean:.3e} inf {cr.inf_norm:.3e} var {cr.var:.3e}")
print(f"ratios mean {cr.mean/fr.mean:.3f} inf {cr.inf_norm/fr.inf_norm:.3f} var {cr.var/fr.var:.3f}")
print(f"peak near x=1: FNO {fcurve[-20:].max():.3e} ComFNO {ccurve[-20:].max():.3e}")
np.save("tmp/fno_curve4.npy", fcurve); np.save("tmp/comfno_curve4.npy", ccurve)
