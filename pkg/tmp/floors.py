"""Long-horizon convergence floors for both models at desk counts.

600 epochs, metrics every 25: where does each model's test error settle,
and from which epoch onward would a 200-epoch window pass the ratio
targets? Saves per-checkpoint trajectories to tmp/floors.npz.
"""
import sys, time
sys.path.insert(0, "src")
import numpy as np
from comfno import autodiff as ad
from comfno.models import FnoConfig, ComFnoConfig, init_params
from comfno.training import (AdamConfig, AdamState, adam_step, build_dataset,
                             l2_relative_loss, model_forward)
from comfno.metrics import evaluate_model

EPS = 1e-2
EPOCHS = 600
EVERY = 25
t0 = time.time()
train = build_dataset("1d-plain", 200, 201, EPS, seed=0, fine_n=4096)
test = build_dataset("1d-plain", 100, 201, EPS, seed=0, fine_n=4096, index_start=200)
print(f"datasets {time.time()-t0:.1f}s", flush=True)


def run(name, cfg, batch, lr=1e-3, seed=0):
    params = init_params(cfg, seed)
    state = AdamState(params)
    opt = AdamConfig(lr=lr)
    mesh = train.mesh
    traj = []
    t0 = time.time()
    for epoch in range(EPOCHS):
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
        if (epoch + 1) % EVERY == 0:
            r, curve = evaluate_model(params, cfg, test, name)
            traj.append((epoch + 1, np.mean(losses), r.mean, r.inf_norm, r.var,
                         curve[test.mesh.nodes >= 0.9].max()))
            print(f"{name:6s} ep{epoch+1:3d} train {np.mean(losses):.4f} "
                  f"mean {r.mean:.3e} inf {r.inf_norm:.3e} var {r.var:.3e} "
                  f"peak {traj[-1][5]:.3e} [{time.time()-t0:.0f}s]", flush=True)
    return np.array(traj)


fcfg = FnoConfig(width=64, modes=16, depth=4)
ccfg = ComFnoConfig(base=FnoConfig(width=64, modes=16, depth=4))
ftraj = run("fno", fcfg, 50)
ctraj = run("comfno", ccfg, 30)
np.savez("tmp/floors.npz", fno=ftraj, comfno=ctraj)
print("columns: epoch, train_loss, mean, inf, var, peak(x>=0.9)")
for i in range(len(ftraj)):
    e = int(ftraj[i, 0])
    rm = ctraj[i, 2] / ftraj[i, 2]
    ri = ctraj[i, 3] / ftraj[i, 3]
    rv = ctraj[i, 4] / ftraj[i, 4]
    print(f"ep{e:3d} ratios mean {rm:.3f} inf {ri:.3f} var {rv:.3f}", flush=True)
