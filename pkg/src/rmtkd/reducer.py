"""Projection construction, layer surgery, and the compression loop.

One compression step: snapshot the current model as teacher, capture
calibration activations at the target layer, fit the noise bulk of their
covariance spectrum, keep the eigen-directions above the bulk edge, insert
that projection as a frozen layer, warm-start the downstream layer at the
reduced width, and fine-tune against the teacher.  The loop walks layers
shallow-to-deep and stops on a reduction target, an accuracy floor
(with rollback), or an iteration cap.
"""

from dataclasses import dataclass, replace

import numpy as np

from .distill import accuracy, snapshot_teacher, train_until
from .errors import AlreadyProjected, DegenerateSpectrum, InvalidInput, NoSpikes
from .network import DenseLayer, forward, param_count
from .rng import derive_seed, make_rng
from .spectral import (MPModel, classify, compute_covariance, eig_sym,
                       fit_sigma2, init_sigma2)

ORTHO_TOL = 1e-8


@dataclass
class Projection:
    matrix: np.ndarray  # k x d, orthonormal rows, descending eigenvalue order
    layer_id: int
    retained_eigenvalues: list

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        k, d = self.matrix.shape
        if not 1 <= k <= d:
            raise InvalidInput("projection needs 1 <= k <= d")
        gram = self.matrix @ self.matrix.T
        if np.max(np.abs(gram - np.eye(k))) > ORTHO_TOL:
            raise InvalidInput("projection rows are not orthonormal")


@dataclass
class CompressionPlan:
    layer_order: list  # hidden-layer ordinals to reduce, shallow to deep
    quantile: float = 0.5
    min_k: int = 1
    accuracy_floor: float = 0.0
    max_iterations: int = 16
    target_reduction: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.quantile <= 1.0:
            raise InvalidInput("quantile must lie in [0, 1]")
        if self.min_k < 1:
            raise InvalidInput("min_k must be >= 1")
        if not 0.0 <= self.target_reduction <= 1.0:
            raise InvalidInput("target_reduction must lie in [0, 1]")
        if self.max_iterations < 0:
            raise InvalidInput("max_iterations must be >= 0")


@dataclass
class IterationRecord:
    iteration: int
    layer_id: int
    d: int
    k: int
    sigma2: float
    lambda_plus: float
    acc_before: float
    acc_after_finetune: float
    params_before: int
    params_after: int


def build_projection(partition, layer_id, min_k=1):
    """Projection onto the spike subspace, padded to ``min_k`` if needed.

    Rows are the spike eigenvectors in descending eigenvalue order.  When
    0 < k_spikes < min_k the next-largest bulk eigenvectors fill the
    remaining rows (the spectrum is descending, so spikes occupy a prefix).
    Raises NoSpikes when the partition has no spikes at all.
    """
    if partition.k == 0:
        raise NoSpikes("no eigenvalues above the bulk edge")
    d = partition.eigenvectors.shape[1]
    k = min(max(partition.k, min_k), d)
    return Projection(
        matrix=partition.eigenvectors[:k].copy(),
        layer_id=layer_id,
        retained_eigenvalues=[float(v) for v in partition.eigenvalues[:k]],
    )


def apply_projection(net, proj):
    """Insert a frozen projection after its layer and resize downstream.

    Returns a new network: a bias-free identity-activation layer with
    weights P follows layer ``proj.layer_id``, and the next trainable
    layer's weights W (out x d) are warm-started as W P^T (out x k).  The
    original network is left untouched.
    """
    i = proj.layer_id
    if not 0 <= i < len(net.layers) - 1:
        raise InvalidInput(f"layer {i} is not a hidden layer")
    target = net.layers[i]
    k, d = proj.matrix.shape
    if target.out_dim != d:
        raise InvalidInput(f"layer {i} outputs {target.out_dim}, projection expects {d}")
    if net.layers[i + 1].frozen:
        raise AlreadyProjected(f"layer {i} already feeds a projection")
    out = net.copy()
    p_layer = DenseLayer(weights=proj.matrix.copy(), bias=None,
                         activation="identity", frozen=True)
    out.layers.insert(i + 1, p_layer)
    down = out.layers[i + 2]
    down.weights = down.weights @ proj.matrix.T
    out.history.append((i, d, k))
    out.check_dims()
    return out


def _hidden_layer_index(net, ordinal):
    """Current index of the ``ordinal``-th non-frozen hidden layer."""
    hidden = [i for i, l in enumerate(net.layers[:-1]) if not l.frozen]
    if not 0 <= ordinal < len(hidden):
        raise InvalidInput(f"no hidden layer ordinal {ordinal}")
    return hidden[ordinal]


def compress_step(net, data, plan, cfg, layer_id, rng, iteration=0):
    """One train -> analyse -> project -> fine-tune cycle at ``layer_id``.

    ``data`` is the (train, val, calibration) triple; ``layer_id`` indexes
    the current network's layers and must name a non-frozen hidden layer.
    Returns ``(new_net, IterationRecord)``; the input network is never
    mutated.  A spectrum with no spikes is a skip: the input network is
    returned unchanged with k = d recorded.
    """
    train_part, val_part, cal_part = data
    if not 0 <= layer_id < len(net.layers) - 1 or net.layers[layer_id].frozen:
        raise InvalidInput(f"layer {layer_id} is not a reducible hidden layer")
    params_before, _ = param_count(net)
    acc_before = accuracy(net, val_part.x, val_part.y)

    _, trace = forward(net, cal_part.x, capture_layer=layer_id)
    cov = compute_covariance(trace)
    spectrum, vecs = eig_sym(cov, n_samples=cal_part.n)
    s2_init = init_sigma2(spectrum, plan.quantile)
    try:
        sigma2_star, _ = fit_sigma2(spectrum, s2_init)
    except DegenerateSpectrum:
        sigma2_star = s2_init
    model = MPModel(sigma2=sigma2_star, q=spectrum.q)
    partition = classify(spectrum, vecs, model)

    d = spectrum.d
    try:
        proj = build_projection(partition, layer_id, plan.min_k)
    except NoSpikes:
        record = IterationRecord(
            iteration=iteration, layer_id=layer_id, d=d, k=d,
            sigma2=sigma2_star, lambda_plus=model.lambda_plus,
            acc_before=acc_before, acc_after_finetune=acc_before,
            params_before=params_before, params_after=params_before,
        )
        return net, record

    teacher = snapshot_teacher(net, iteration)
    new_net = apply_projection(net, proj)
    new_net, _, acc_after = train_until(
        new_net, (train_part, val_part), cfg, teacher=teacher, rng=rng
    )
    params_after, _ = param_count(new_net)
    record = IterationRecord(
        iteration=iteration, layer_id=layer_id, d=d, k=proj.matrix.shape[0],
        sigma2=sigma2_star, lambda_plus=model.lambda_plus,
        acc_before=acc_before, acc_after_finetune=acc_after,
        params_before=params_before, params_after=params_after,
    )
    return new_net, record


def run_loop(net, data, plan, cfg, rng):
    """Iterate compress_step over the plan's layers, shallow to deep.

    Stops when the trainable-parameter reduction (vs loop entry) reaches
    plan.target_reduction, when a step's fine-tuned validation accuracy
    falls below plan.accuracy_floor (the step is rolled back to its
    pre-step state), or after plan.max_iterations attempted steps.
    Returns ``(net, history)``; rolled-back and skipped attempts stay in
    the history for audit.
    """
    base_params, _ = param_count(net)
    history = []
    steps = 0
    for ordinal in plan.layer_order:
        trainable, _ = param_count(net)
        if 1.0 - trainable / base_params >= plan.target_reduction:
            break
        if steps >= plan.max_iterations:
            break
        layer_id = _hidden_layer_index(net, ordinal)
        pre_step = net.copy()
        new_net, record = compress_step(net, data, plan, cfg, layer_id, rng,
                                        iteration=steps)
        steps += 1
        history.append(record)
        if record.k < record.d and record.acc_after_finetune < plan.accuracy_floor:
            net = pre_step  # rollback: pre-step weights, history, and widths
            break
        net = new_net
    return net, history


def quantile_ablation(net_factory, data, quantile_grid, plan, cfg, seed=0):
    """One full run_loop per quantile from identical initial conditions.

    ``net_factory()`` must return a fresh, identically-initialized (and
    warmed-up) network for every cell.  Returns a list of
    ``(quantile, final_accuracy, reduction_fraction)`` rows, one per grid
    value, in grid order.
    """
    if len(quantile_grid) == 0:
        raise InvalidInput("quantile grid is empty")
    _, val_part, _ = data
    rows = []
    for qv in quantile_grid:
        cell_net = net_factory()
        base_params, _ = param_count(cell_net)
        cell_plan = replace(plan, quantile=float(qv))
        cell_rng = make_rng(derive_seed(seed, f"ablate-{float(qv)!r}"))
        out_net, _ = run_loop(cell_net, data, cell_plan, cfg, cell_rng)
        trainable, _ = param_count(out_net)
        rows.append((
            float(qv),
            accuracy(out_net, val_part.x, val_part.y),
            1.0 - trainable / base_params,
        ))
    return rows
