"""Iterative spectral compression with self-distillation
========================================================

The full pipeline: warm up an MLP, then per hidden layer (shallow to deep)
fit the noise floor of its calibration-activation spectrum, project onto
the spike directions, and fine-tune against the pre-step teacher.  The
network shrinks while validation accuracy holds.
"""
from rmtkd import (CompressionPlan, DistillConfig, SplitSpec, accuracy,
                   init_network, make_rng, normal, param_count,
                   planted_subspace_task, run_loop, split, train_until)

ds, _ = planted_subspace_task(input_dim=32, intrinsic_dim=8, num_classes=10,
                              n_samples=5000, noise_sigma=0.3, seed=0)
parts = split(ds, SplitSpec(train_fraction=0.8, calibration_fraction=0.1,
                            seed=0))
train, val, cal = parts

init_rng = make_rng(1)
net = init_network([64, 64], ds.dim, ds.num_classes,
                   lambda shape: normal(init_rng, shape))
cfg = DistillConfig(max_epochs=40, accuracy_threshold=0.95)
net, _, base_acc = train_until(net, (train, val), cfg, rng=make_rng(2))
base_params, _ = param_count(net)
print(f"baseline: {base_params} trainable params, "
      f"val accuracy {base_acc:.4f}\n")

plan = CompressionPlan(layer_order=[0, 1], quantile=0.7, accuracy_floor=0.90)
net, history = run_loop(net, parts, plan, cfg, make_rng(3))

print("iter  layer   d -> k   sigma2   lambda+   acc before -> after")
for r in history:
    print(f"{r.iteration:4d}  {r.layer_id:5d}  {r.d:3d} -> {r.k:2d}"
          f"  {r.sigma2:7.4f}  {r.lambda_plus:7.3f}"
          f"   {r.acc_before:.4f} -> {r.acc_after_finetune:.4f}")

trainable, frozen = param_count(net)
print(f"\nfinal: {trainable} trainable (+{frozen} frozen projection entries)")
print(f"reduction: {1 - trainable / base_params:.1%}")
print(f"accuracy:  {base_acc:.4f} -> {accuracy(net, val.x, val.y):.4f}")
print(f"layer widths now: {[l.out_dim for l in net.layers]}")
