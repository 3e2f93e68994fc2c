"""Usage: trial.py TAG EPS FNO_LR FNO_BATCH COM_LR COM_BATCH EPOCHS SEED [RES [NTRAIN NTEST]]"""
import sys, time
sys.path.insert(0, "src")
import numpy as np
from comfno import autodiff as ad
from comfno.models import FnoConfig, ComFnoConfig, init_params
from comfno.training import (AdamConfig, AdamState, adam_step, build_dataset,
                             l2_relative_loss, model_forward)
from comfno.metrics import evaluate_model

tag = sys.argv[1]
EPS = float(sys.argv[2])
flr, fb = float(sys.argv[3]), int(sys.argv[4])
clr, cb = float(sys.argv[5]), int(sys.argv[6])
epochs = int(sys.argv[7])
seed = int(sys.argv[8])
res = int(sys.argv[9]) if len(sys.argv) > 9 else 201
ntrain = int(sys.argv[10]) if len(sys.argv) > 10 else 200
ntest = int(sys.argv[11]) if len(sys.argv) > 11 else 100
cdepth = int(sys.argv[12]) if len(sys.argv) > 12 else 4
skip_fno = len(sys.argv) > 13 and sys.argv[13] == "skipfno"

t0 = time.time()
train = build_dataset("1d-plain", ntrain, res, EPS, seed=0, fine_n=4096)
test = build_dataset("1d-plain", ntest, res, EPS, seed=0, fine_n=4096, index_start=ntrain)
print(f"[{tag}] eps {EPS} res {res} fno lr {flr} b{fb} comfno lr {clr} b{cb} "
      f"epochs {epochs} seed {seed} | datasets {time.time()-t0:.1f}s", flush=True)


def run(name, cfg, batch, lr, every=25):
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
        if (epoch + 1) % every == 0 or epoch + 1 == epochs:
            r, _ = evaluate_model(params, cfg, test, name)
            print(f"[{tag}] {name:6s} ep{epoch+1:3d} train {np.mean(losses):.4f} "
                  f"test mean {r.mean:.3e} inf {r.inf_norm:.3e} var {r.var:.3e} "
                  f"[{time.time()-t0:.0f}s]", flush=True)
    return params


fcfg = FnoConfig(width=64, modes=16, depth=4)
ccfg = ComFnoConfig(base=FnoConfig(width=64, modes=16, depth=4))
fp = run("fno", fcfg, fb, flr)
cp = run("comfno", ccfg, cb, clr)

fr, fcurve = evaluate_model(fp, fcfg, test, "fno")
cr, ccurve = evaluate_model(cp, ccfg, test, "comfno")
print(f"[{tag}] FNO    mean {fr.mean:.3e} inf {fr.inf_norm:.3e} var {fr.var:.3e}")
print(f"[{tag}] ComFNO mean {cr.mean:.3e} inf {cr.inf_norm:.3e} var {cr.var:.3e}")
print(f"[{tag}] ratios mean {cr.mean/fr.mean:.3f} inf {cr.inf_norm/fr.inf_norm:.3f} "
      f"var {cr.var/fr.var:.3f}  (need <=0.5 / <=0.5 / <=0.25)")
nodes = test.mesh.nodes
near = nodes >= 0.9
print(f"[{tag}] peak x>=0.9: FNO {fcurve[near].max():.3e} ComFNO {ccurve[near].max():.3e}")
np.save(f"tmp/fno_curve_{tag}.npy", fcurve)
np.save(f"tmp/comfno_curve_{tag}.npy", ccurve)
