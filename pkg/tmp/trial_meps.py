"""Usage: trial_meps.py TAG FNO_LR FNO_BATCH COM_LR COM_BATCH EPOCHS SEED"""
import sys, time
sys.path.insert(0, "src")
import numpy as np
from comfno import autodiff as ad
from comfno.models import FnoConfig, ComFnoConfig, LayerBlockSpec, init_params
from comfno.training import (AdamConfig, AdamState, adam_step, build_dataset,
                             l2_relative_loss, model_forward)
from comfno.metrics import evaluate_model

tag = sys.argv[1]
flr, fb = float(sys.argv[2]), int(sys.argv[3])
clr, cb = float(sys.argv[4]), int(sys.argv[5])
epochs = int(sys.argv[6])
seed = int(sys.argv[7])

F_COUNT, EPS_COUNT, NTEST, RES = 20, 20, 20, 201
grid = np.linspace(1e-3, 1e-1, EPS_COUNT)

t0 = time.time()
f_idx = np.repeat(np.arange(F_COUNT), EPS_COUNT)
eps_tr = np.tile(grid, F_COUNT)
train = build_dataset("1d-plain", f_idx.size, RES, eps_tr, seed=0, fine_n=4096,
                      eps_as_input=True, f_indices=f_idx)
f_te = F_COUNT + np.arange(NTEST)
eps_te = grid[np.arange(NTEST) % EPS_COUNT]
test = build_dataset("1d-plain", NTEST, RES, eps_te, seed=0, fine_n=4096,
                     eps_as_input=True, f_indices=f_te)
print(f"[{tag}] multi-eps fno lr {flr} b{fb} comfno lr {clr} b{cb} epochs {epochs} "
      f"seed {seed} | datasets {time.time()-t0:.1f}s", flush=True)


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
            pred = model_forward(params, cfg, train.inputs[idx], train.eps[idx], mesh)
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


fcfg = FnoConfig(width=64, modes=16, depth=4, in_channels=3)
ccfg = ComFnoConfig(base=FnoConfig(width=64, modes=16, depth=4, in_channels=3),
                    blocks=(LayerBlockSpec(1.0),))
fp = run("fno", fcfg, fb, flr)
cp = run("comfno", ccfg, cb, clr)

fr, fcurve = evaluate_model(fp, fcfg, test, "fno")
cr, ccurve = evaluate_model(cp, ccfg, test, "comfno")
nodes = test.mesh.nodes
near = nodes >= 0.9
print(f"[{tag}] FNO    mean {fr.mean:.3e} inf {fr.inf_norm:.3e} var {fr.var:.3e} "
      f"peak {fcurve[near].max():.3e}")
print(f"[{tag}] ComFNO mean {cr.mean:.3e} inf {cr.inf_norm:.3e} var {cr.var:.3e} "
      f"peak {ccurve[near].max():.3e}")
print(f"[{tag}] need: mean ratio < 1 and peak ratio < 0.5 -> "
      f"mean {cr.mean/fr.mean:.3f} peak {ccurve[near].max()/fcurve[near].max():.3f}")
np.save(f"tmp/fno_curve_{tag}.npy", fcurve)
np.save(f"tmp/comfno_curve_{tag}.npy", ccurve)
