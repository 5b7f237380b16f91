"""Command-line entry point.

Four subcommands over a single JSON config:

* ``train``    -- warm up a network on the configured task, write a
                  checkpoint and a per-epoch training log.
* ``spectrum`` -- eigenvalue spectrum + bulk fit of one layer's calibration
                  activations from a saved checkpoint.
* ``compress`` -- warm up, run the full compression loop, write the history,
                  final checkpoint, and a JSON summary.
* ``ablate``   -- one compression run per quantile in a grid, CSV table out.

Configs are validated strictly (unknown keys are errors) before any work
starts.  All outputs are written atomically (temp file + rename), and all
randomness derives from the single top-level seed via tagged sub-seeds, so
reruns are bit-identical.  Exit codes: 0 success, 1 runtime failure,
2 config/usage error.
"""

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from .data import Dataset, SplitSpec, load_csv, planted_subspace_task, split
from .distill import DistillConfig, accuracy, train_until
from .errors import ConfigError, InvalidInput, RmtkdError
from .network import (Checkpoint, CHECKPOINT_VERSION, init_network,
                      load_checkpoint, param_count, save_checkpoint)
from .reducer import (CompressionPlan, _hidden_layer_index, quantile_ablation,
                      run_loop)
from .rng import derive_seed, make_rng, normal, rng_state_bytes
from .spectral import (MPModel, classify, compute_covariance, eig_sym,
                       fit_sigma2, init_sigma2, spectrum_to_csv)
from .network import forward

DEFAULT_GRID = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]

_TASK_KEYS = {
    "planted": {"kind", "input_dim", "intrinsic_dim", "num_classes",
                "n_samples", "noise_sigma", "margin"},
    "csv": {"kind", "path", "label_column"},
}
_DISTILL_KEYS = {"alpha", "lr", "momentum", "batch_size", "max_epochs",
                 "accuracy_threshold", "epsilon_prob"}
_PLAN_KEYS = {"layer_order", "quantile", "min_k", "accuracy_floor",
              "max_iterations", "target_reduction"}
_SPLIT_KEYS = {"train_fraction", "calibration_fraction"}
_TOP_KEYS = {"task", "widths", "distill", "plan", "split", "seed", "output_dir"}


@dataclass
class RunConfig:
    task: dict
    widths: list
    distill: DistillConfig
    plan: CompressionPlan
    split_spec: SplitSpec
    seed: int
    output_dir: str


def _check_keys(section, given, allowed):
    unknown = sorted(set(given) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {section}")


def validate_config(raw, out_override=None, seed_override=None):
    """Validate a config dict into a RunConfig; every constraint up front."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys("config", raw, _TOP_KEYS)
    for key in ("task", "widths"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    task = raw["task"]
    if not isinstance(task, dict) or "kind" not in task:
        raise ConfigError("task must be an object with a 'kind'")
    if task["kind"] not in _TASK_KEYS:
        raise ConfigError(f"unknown task kind {task['kind']!r}")
    _check_keys("task", task, _TASK_KEYS[task["kind"]])
    if task["kind"] == "csv" and "path" not in task:
        raise ConfigError("csv task needs a 'path'")

    widths = raw["widths"]
    if (not isinstance(widths, list) or not widths
            or not all(isinstance(w, int) and w >= 1 for w in widths)):
        raise ConfigError("widths must be a non-empty list of positive integers")

    try:
        distill_raw = dict(raw.get("distill", {}))
        _check_keys("distill", distill_raw, _DISTILL_KEYS)
        distill = DistillConfig(**distill_raw)
        plan_raw = dict(raw.get("plan", {}))
        _check_keys("plan", plan_raw, _PLAN_KEYS)
        plan_raw.setdefault("layer_order", list(range(len(widths))))
        plan = CompressionPlan(**plan_raw)
        split_raw = dict(raw.get("split", {}))
        _check_keys("split", split_raw, _SPLIT_KEYS)
        split_spec = SplitSpec(**split_raw)
    except InvalidInput as e:
        raise ConfigError(str(e)) from e

    bad = [o for o in plan.layer_order
           if not isinstance(o, int) or not 0 <= o < len(widths)]
    if bad:
        raise ConfigError(f"layer_order entry {bad[0]!r} does not name a hidden layer")

    seed = raw.get("seed", 0)
    if seed_override is not None:
        seed = seed_override
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")

    output_dir = out_override or raw.get("output_dir")
    if not output_dir:
        raise ConfigError("missing output_dir (or pass --out)")
    return RunConfig(task=task, widths=widths, distill=distill, plan=plan,
                     split_spec=split_spec, seed=int(seed), output_dir=output_dir)


def build_task(cfg):
    """Materialize the configured dataset, deterministically from the seed."""
    task = cfg.task
    if task["kind"] == "planted":
        ds, _ = planted_subspace_task(
            input_dim=task.get("input_dim", 32),
            intrinsic_dim=task.get("intrinsic_dim", 8),
            num_classes=task.get("num_classes", 10),
            n_samples=task.get("n_samples", 5000),
            noise_sigma=task.get("noise_sigma", 0.3),
            seed=derive_seed(cfg.seed, "task"),
            margin=task.get("margin", 0.3),
        )
        return ds
    return load_csv(task["path"], label_column=task.get("label_column", "label"))


def _split_parts(cfg, ds):
    spec = SplitSpec(train_fraction=cfg.split_spec.train_fraction,
                     calibration_fraction=cfg.split_spec.calibration_fraction,
                     seed=derive_seed(cfg.seed, "split"))
    return split(ds, spec)


def _warm_up(cfg, parts, log_rows=None):
    train_part, val_part, _ = parts
    init_rng = make_rng(derive_seed(cfg.seed, "init"))
    net = init_network(cfg.widths, train_part.dim, train_part.num_classes,
                       lambda shape: normal(init_rng, shape))
    rng = make_rng(derive_seed(cfg.seed, "warmup"))
    net, epochs, acc = train_until(net, (train_part, val_part), cfg.distill,
                                   rng=rng, log_rows=log_rows)
    return net, epochs, acc, rng


def write_outputs(outdir, staged):
    """Atomically write {filename: str|bytes}: temp files, then renames."""
    os.makedirs(outdir, exist_ok=True)
    tmp_paths = []
    try:
        for name, content in staged.items():
            data = content.encode("utf-8") if isinstance(content, str) else content
            fd, tmp = tempfile.mkstemp(dir=outdir, prefix=f".{name}.")
            tmp_paths.append((tmp, os.path.join(outdir, name)))
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
        for tmp, final in tmp_paths:
            os.replace(tmp, final)
    except OSError:
        for tmp, _ in tmp_paths:
            try:
                os.unlink(tmp)
            except OSError:
                pass
        raise


def _checkpoint_bytes(net, rng, metrics):
    cp = Checkpoint(format_version=CHECKPOINT_VERSION, network=net,
                    rng_state=rng_state_bytes(rng), metrics=metrics)
    fd, tmp = tempfile.mkstemp()
    try:
        os.close(fd)
        save_checkpoint(cp, tmp)
        with open(tmp, "rb") as fh:
            return fh.read()
    finally:
        os.unlink(tmp)


def history_csv(history):
    lines = ["iteration,layer_id,d,k,sigma2,lambda_plus,acc_before,"
             "acc_after_finetune,params_before,params_after"]
    for r in history:
        lines.append(
            f"{r.iteration},{r.layer_id},{r.d},{r.k},{r.sigma2!r},{r.lambda_plus!r},"
            f"{r.acc_before!r},{r.acc_after_finetune!r},{r.params_before},{r.params_after}"
        )
    return "\n".join(lines) + "\n"


def cmd_train(cfg):
    parts = _split_parts(cfg, build_task(cfg))
    log_rows = []
    net, epochs, acc, rng = _warm_up(cfg, parts, log_rows)
    trainable, frozen = param_count(net)
    staged = {
        "training_log.csv": "epoch,train_loss,ce_term,kl_term,val_accuracy\n"
                            + "".join(row + "\n" for row in log_rows),
        "checkpoint.rmtk": _checkpoint_bytes(net, rng, {
            "val_accuracy": acc, "epochs_used": epochs,
            "trainable_params": trainable,
        }),
    }
    write_outputs(cfg.output_dir, staged)
    return 0


def cmd_spectrum(cfg, layer_ordinal):
    cp_path = os.path.join(cfg.output_dir, "checkpoint.rmtk")
    cp = load_checkpoint(cp_path)
    net = cp.network
    try:
        layer_id = _hidden_layer_index(net, layer_ordinal)
    except InvalidInput as e:
        raise ConfigError(str(e)) from e
    _, _, cal_part = _split_parts(cfg, build_task(cfg))
    _, trace = forward(net, cal_part.x, capture_layer=layer_id)
    spectrum, vecs = eig_sym(compute_covariance(trace), n_samples=cal_part.n)
    s2_init = init_sigma2(spectrum, cfg.plan.quantile)
    sigma2_star, fit = fit_sigma2(spectrum, s2_init)
    model = MPModel(sigma2=sigma2_star, q=spectrum.q)
    partition = classify(spectrum, vecs, model)
    model_json = model.to_json_dict()
    model_json["k"] = partition.k
    staged = {
        "eigenvalues.csv": spectrum_to_csv(spectrum),
        "histogram_fit.csv": fit.to_csv(),
        "mp_model.json": json.dumps(model_json, sort_keys=True, indent=2) + "\n",
    }
    write_outputs(cfg.output_dir, staged)
    return 0


def cmd_compress(cfg):
    parts = _split_parts(cfg, build_task(cfg))
    log_rows = []
    net, _, base_acc, _ = _warm_up(cfg, parts, log_rows)
    base_params, _ = param_count(net)
    loop_rng = make_rng(derive_seed(cfg.seed, "loop"))
    net, history = run_loop(net, parts, cfg.plan, cfg.distill, loop_rng)
    trainable, frozen = param_count(net)
    final_acc = accuracy(net, parts[1].x, parts[1].y)
    summary = {
        "baseline_accuracy": base_acc,
        "final_accuracy": final_acc,
        "reduction_fraction": 1.0 - trainable / base_params,
        "trainable_params": trainable,
        "frozen_params": frozen,
        "steps": len(history),
    }
    staged = {
        "training_log.csv": "epoch,train_loss,ce_term,kl_term,val_accuracy\n"
                            + "".join(row + "\n" for row in log_rows),
        "history.csv": history_csv(history),
        "summary.json": json.dumps(summary, sort_keys=True, indent=2) + "\n",
        "checkpoint.rmtk": _checkpoint_bytes(net, loop_rng, {
            "val_accuracy": final_acc,
            "baseline_accuracy": base_acc,
            "reduction_fraction": summary["reduction_fraction"],
        }),
    }
    write_outputs(cfg.output_dir, staged)
    return 0


def cmd_ablate(cfg, grid):
    parts = _split_parts(cfg, build_task(cfg))
    baseline, _, _, _ = _warm_up(cfg, parts)
    rows = quantile_ablation(baseline.copy, parts, grid, cfg.plan, cfg.distill,
                             seed=derive_seed(cfg.seed, "ablate"))
    lines = ["quantile,final_accuracy,reduction_fraction"]
    for qv, acc, red in rows:
        lines.append(f"{qv!r},{acc!r},{red!r}")
    write_outputs(cfg.output_dir, {"ablation.csv": "\n".join(lines) + "\n"})
    return 0


def _parse_grid(text):
    try:
        grid = [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ConfigError(f"bad quantile list {text!r}") from None
    if not grid or not all(0.0 <= g <= 1.0 for g in grid):
        raise ConfigError("quantiles must lie in [0, 1]")
    return grid


def main(argv=None):
    parser = argparse.ArgumentParser(prog="rmtkd", description=__doc__)
    parser.add_argument("command", choices=["train", "spectrum", "compress", "ablate"])
    parser.add_argument("--config", required=True, help="path to JSON run config")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="seed (overrides config)")
    parser.add_argument("--quantiles", help="comma-separated grid for ablate")
    parser.add_argument("--layer", type=int, help="hidden-layer ordinal for spectrum")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0

    try:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        cfg = validate_config(raw, out_override=args.out, seed_override=args.seed)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "spectrum":
            if args.layer is None:
                raise ConfigError("spectrum needs --layer")
            return cmd_spectrum(cfg, args.layer)
        if args.command == "compress":
            return cmd_compress(cfg)
        grid = _parse_grid(args.quantiles) if args.quantiles else list(DEFAULT_GRID)
        return cmd_ablate(cfg, grid)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except RmtkdError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
