"""Desk-scale training run; writes the checkpoint used by the acceptance tests."""
import json
import time
import numpy as np
from ninfem import cli, ifol, nin
from ninfem.neural_field import SirenConfig, init_params, save_checkpoint

cfg = cli.load_config("desk-2d-hyper")
mesh = cli.build_mesh(cfg)
phases, _, _ = cli._sample_phases(cfg, mesh, 200, seed=0)
batch = cli.build_batch(cfg, mesh, phases)

params = init_params(SirenConfig(2, 2, (32, 32, 32), 64, omega0=10.0), seed=0)
tc = ifol.TrainConfig(epochs=2000, batch_size=50, seed=0)
t0 = time.time()
params, log = ifol.train(tc, params, batch)
wall = time.time() - t0
save_checkpoint("/root/pkg/.train_cache/desk-2d-hyper.ckpt", SirenConfig(2, 2, (32, 32, 32), 64, omega0=10.0), params)
ifol.write_training_log("/root/pkg/.train_cache/desk-2d-hyper.train.csv", log)
print(f"trained 2000 epochs in {wall:.0f}s, final loss {log[-1].mean_loss:.4e}")

ncfg = cli.build_newton_config(cfg)
out = {"train_seconds": wall, "final_loss": log[-1].mean_loss}
for res in (21, 41):
    m2 = cli.build_mesh(cfg, nodes_per_axis=(res, res))
    ph2, _, _ = cli._sample_phases(cfg, m2, 20, seed=1234)
    b2 = cli.build_batch(cfg, m2, ph2)
    rows = nin.run_benchmark(params, b2, ncfg)
    summary = nin.summarize_benchmark(rows)
    out[f"res{res}"] = summary
    print(res, json.dumps(summary))
with open("/root/pkg/.train_cache/full_train_summary.json", "w") as f:
    json.dump(out, f, indent=1)
