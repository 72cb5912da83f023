"""Hybrid data/physics training for the stage surrogate.

The loss is ``L = L_data + lambda * L_physics``: a mean-squared data misfit
on solver samples plus the mean-squared residual of the governing equations
at freshly drawn collocation points.  Weight gradients come from the tape
in :mod:`stagecast.autodiff`; the optimizer is Adam with an exponentially
decaying learning rate.  Everything is seeded, and the supervised batch
stream is independent of the physics settings, so runs that share a seed
share their batches exactly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, grad_weights
from .geometry import G_FT_S2, ChannelGeometry, RiverScenario, friction_slope
from .solver import FlowField
from .surrogate import (
    NormalizationBox,
    SurrogateModel,
    _forward,
    _normalize,
    box_for_scenario,
    init_model,
    physics_duals,
    weight_views,
)

__all__ = [
    "TrainConfig",
    "TrainingSet",
    "AdamState",
    "HistoryRow",
    "TrainingDiverged",
    "build_training_set",
    "data_loss",
    "physics_loss",
    "total_loss",
    "init_adam",
    "adam_step",
    "train",
    "grid_search",
]


class TrainingDiverged(RuntimeError):
    """Training blew past the divergence guard; carries the partial history."""

    def __init__(self, message: str, history: list, iteration: int):
        super().__init__(message)
        self.history = history
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    ``sigma`` is consumed when a model is built for this configuration
    (grid search and the ablation builder do this); :func:`train` itself
    uses the encoder already attached to the model.  ``collocation_per_batch``
    defaults to the batch size.  The learning rate follows
    ``lr_initial * lr_decay_rate ** (i / lr_decay_every)``.
    """

    lambda_physics: float = 0.1
    sigma: float = 4.0
    batch_size: int = 1024
    collocation_per_batch: int | None = None
    lr_initial: float = 1e-3
    lr_decay_rate: float = 0.5
    lr_decay_every: int = 20_000
    max_iterations: int = 100_000
    seed: int = 0
    record_every: int = 100
    validation_fraction: float = 0.1
    extended_momentum: bool = False
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.lambda_physics < 0:
            raise ValueError("lambda_physics must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0.0 < self.lr_decay_rate <= 1.0:
            raise ValueError("lr_decay_rate must be in (0, 1]")
        if self.lr_decay_every < 1:
            raise ValueError("lr_decay_every must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")

    @property
    def collocation_count(self) -> int:
        return self.batch_size if self.collocation_per_batch is None else self.collocation_per_batch


@dataclass(frozen=True)
class TrainingSet:
    """Flattened solver samples plus the normalization box they live in."""

    x_miles: np.ndarray
    t_hours: np.ndarray
    h_ft: np.ndarray
    u_fps: np.ndarray
    norm: NormalizationBox

    def __post_init__(self):
        n = self.x_miles.size
        if not (self.t_hours.size == n and self.h_ft.size == n and self.u_fps.size == n):
            raise ValueError("training set columns differ in length")
        if n < 2:
            raise ValueError("training set needs at least two samples")

    def __len__(self) -> int:
        return self.x_miles.size


def build_training_set(field: FlowField, scenario: RiverScenario) -> TrainingSet:
    """Flatten a solved field into (x, t, h, u) samples."""
    xx, tt = np.meshgrid(field.x_miles, field.t_hours)
    return TrainingSet(
        x_miles=xx.ravel(),
        t_hours=tt.ravel(),
        h_ft=field.h.ravel(),
        u_fps=field.u.ravel(),
        norm=box_for_scenario(scenario),
    )


class HistoryRow(NamedTuple):
    iteration: int
    data_loss: float
    physics_loss: float
    total_loss: float
    lr: float


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------


def data_loss(model: SurrogateModel, batch, params=None):
    """Mean over the batch of (h_hat - h)^2 + (u_hat - u)^2.

    ``batch`` is a tuple of arrays (x_miles, t_hours, h_ft, u_fps).  With
    ``params`` given as tape leaves the result is a tape node; otherwise a
    plain float.
    """
    x, t, h_true, u_true = batch
    xhat, that = _normalize(model, x, t, clamp=False)
    v = np.column_stack([np.atleast_1d(xhat), np.atleast_1d(that)])
    h, u = _forward(model, params if params is not None else weight_views(model), v)
    err = ad.add(
        ad.square(ad.sub(h, np.atleast_1d(np.asarray(h_true, dtype=np.float64)))),
        ad.square(ad.sub(u, np.atleast_1d(np.asarray(u_true, dtype=np.float64)))),
    )
    return ad.total_mean(err)


def physics_loss(
    model,
    collocation,
    params=None,
    *,
    geometry: ChannelGeometry | None = None,
    extended_momentum: bool = False,
):
    """Mean squared residual of the governing equations at collocation points.

    Continuity: r_c = h_t + h_x u + h u_x.  Momentum: r_m = u_t + u u_x +
    g h_x, optionally extended with the g(S_f - S0) source when
    ``extended_momentum`` is set (requires ``geometry``).  Any model that
    exposes ``physics_duals(x, t)`` returning depth/velocity duals works
    here, which is how closed-form mock fields are tested.
    """
    pts = np.asarray(collocation, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("collocation must have shape (N, 2)")
    x, t = pts[:, 0], pts[:, 1]
    if isinstance(model, SurrogateModel):
        h, u = physics_duals(model, x, t, params)
    else:
        h, u = model.physics_duals(x, t)

    r_c = ad.add(ad.add(h.dt, ad.mul(h.dx, u.value)), ad.mul(h.value, u.dx))
    r_m = ad.add(ad.add(u.dt, ad.mul(u.value, u.dx)), ad.mul(G_FT_S2, h.dx))
    if extended_momentum:
        if geometry is None:
            raise ValueError("extended momentum residual needs the channel geometry")
        s_f = friction_slope(geometry.width_ft, geometry.manning_n, h.value, u.value)
        r_m = ad.add(r_m, ad.mul(G_FT_S2, ad.sub(s_f, geometry.bed_slope)))
    return ad.total_mean(ad.add(ad.square(r_c), ad.square(r_m)))


def total_loss(data, physics, lambda_physics: float):
    """L = L_data + lambda * L_physics (works on floats or tape nodes)."""
    return ad.add(data, ad.mul(lambda_physics, physics))


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    """First/second moment estimates and the bias-correction step counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(n_weights: int) -> AdamState:
    return AdamState(m=np.zeros(n_weights), v=np.zeros(n_weights))


def adam_step(weights: np.ndarray, grads: np.ndarray, state: AdamState, lr: float):
    """One bias-corrected Adam update; returns (new_weights, new_state)."""
    if weights.shape != grads.shape:
        raise ValueError(f"gradient shape {grads.shape} != weight shape {weights.shape}")
    finite = np.isfinite(grads)
    if not finite.all():
        idx = int(np.argmax(~finite))
        raise ValueError(f"non-finite gradient at component {idx}")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_weights = weights - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_weights, dataclasses.replace(state, m=m, v=v, step=t)


def _learning_rate(config: TrainConfig, iteration: int) -> float:
    return config.lr_initial * config.lr_decay_rate ** (iteration / config.lr_decay_every)


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------


def _split_indices(n: int, fraction: float, seed: int):
    """Deterministic validation split shared by train() and grid_search()."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    k_val = max(1, int(round(fraction * n)))
    if k_val >= n:
        raise ValueError("validation split leaves no training samples")
    perm = rng.permutation(n)
    return perm[k_val:], perm[:k_val]


def _param_name_at(manifest, flat_index: int) -> str:
    offset = 0
    for name, shape in manifest:
        size = int(np.prod(shape))
        if flat_index < offset + size:
            return name
        offset += size
    return f"<index {flat_index}>"


def train(
    model: SurrogateModel,
    training_set: TrainingSet,
    config: TrainConfig,
    *,
    geometry: ChannelGeometry | None = None,
):
    """Run the hybrid training loop; returns (trained model, loss history).

    A seeded 10 % holdout scores the model every ``record_every``
    iterations (plus once at the final iteration) and the returned model
    carries the best-by-validation weights.  The loop aborts with :class:`TrainingDiverged` (history
    attached) if the total loss exceeds ``divergence_factor`` times its
    initial value or stops being finite.  ``geometry`` is only needed
    when ``config.extended_momentum`` is set.
    """
    if config.extended_momentum and geometry is None:
        raise ValueError("extended momentum training needs the channel geometry")
    ss = np.random.SeedSequence(config.seed)
    batch_seed, colloc_seed = ss.spawn(2)
    rng_batch = np.random.default_rng(batch_seed)
    rng_colloc = np.random.default_rng(colloc_seed)
    train_idx, val_idx = _split_indices(len(training_set), config.validation_fraction, config.seed)

    ts = training_set
    box = ts.norm
    val_batch = (ts.x_miles[val_idx], ts.t_hours[val_idx], ts.h_ft[val_idx], ts.u_fps[val_idx])

    weights = model.weights.copy()
    state = init_adam(weights.size)
    history: list[HistoryRow] = []
    best_val = np.inf
    best_weights = weights.copy()
    initial_total = None

    for i in range(config.max_iterations):
        current = dataclasses.replace(model, weights=weights)
        tape = Tape()
        params = {name: tape.leaf(view) for name, view in weight_views(current).items()}

        pick = rng_batch.integers(0, train_idx.size, config.batch_size)
        idx = train_idx[pick]
        batch = (ts.x_miles[idx], ts.t_hours[idx], ts.h_ft[idx], ts.u_fps[idx])
        data_node = data_loss(current, batch, params)

        if config.lambda_physics > 0.0:
            colloc = np.column_stack(
                [
                    rng_colloc.uniform(box.x_min_miles, box.x_max_miles, config.collocation_count),
                    rng_colloc.uniform(box.t_min_hours, box.t_max_hours, config.collocation_count),
                ]
            )
            physics_node = physics_loss(
                current,
                colloc,
                params,
                geometry=geometry,
                extended_momentum=config.extended_momentum,
            )
            loss_node = total_loss(data_node, physics_node, config.lambda_physics)
            physics_value = float(physics_node.value)
        else:
            loss_node = data_node
            physics_value = 0.0
        total_value = float(loss_node.value)

        if initial_total is None:
            initial_total = total_value
        if not np.isfinite(total_value) or (
            initial_total > 0 and total_value > config.divergence_factor * initial_total
        ):
            history.append(
                HistoryRow(i + 1, float(data_node.value), physics_value, total_value, _learning_rate(config, i))
            )
            raise TrainingDiverged(
                f"loss {total_value:.6g} at iteration {i} exceeds "
                f"{config.divergence_factor:g} x initial {initial_total:.6g}",
                history,
                i,
            )

        grads = grad_weights(loss_node, [params[name] for name, _ in current.manifest])
        try:
            weights, state = adam_step(weights, grads, state, _learning_rate(config, i))
        except ValueError as err:
            bad = int(str(err).rsplit(" ", 1)[-1]) if "component" in str(err) else -1
            raise ValueError(
                f"non-finite gradient in parameter {_param_name_at(current.manifest, bad)!r} "
                f"at iteration {i}"
            ) from err

        if (i + 1) % config.record_every == 0 or (i + 1) == config.max_iterations:
            history.append(
                HistoryRow(
                    i + 1,
                    float(data_node.value),
                    physics_value,
                    total_value,
                    _learning_rate(config, i),
                )
            )
            candidate = dataclasses.replace(model, weights=weights)
            val = float(data_loss(candidate, val_batch))
            if val < best_val:
                best_val = val
                best_weights = weights.copy()

    if config.max_iterations == 0:
        best_weights = weights
    return dataclasses.replace(model, weights=best_weights), history


# --------------------------------------------------------------------------
# hyperparameter grid search
# --------------------------------------------------------------------------


def grid_search(
    training_set: TrainingSet,
    lambdas,
    sigmas,
    budget_iters: int,
    *,
    base_config: TrainConfig | None = None,
    width: int = 64,
    n_blocks: int = 2,
    m: int = 32,
    activation: str = "tanh",
    model_seed: int = 0,
):
    """Short-budget sweep over (lambda, sigma); returns (best pair, table).

    Every cell trains a fresh model for ``budget_iters`` iterations under
    the shared seed and is scored by stage MRAE on the validation split.
    Diverged cells score +inf instead of failing the sweep.  Ties break
    toward smaller sigma, then smaller lambda.
    """
    from .evaluation import mrae  # local import; evaluation depends on this module

    if budget_iters < 1:
        raise ValueError("budget_iters must be positive")
    base = base_config if base_config is not None else TrainConfig()
    _, val_idx = _split_indices(len(training_set), base.validation_fraction, base.seed)
    ts = training_set
    table = []
    scored = []
    for sigma in sigmas:
        for lam in lambdas:
            config = dataclasses.replace(
                base, lambda_physics=float(lam), sigma=float(sigma), max_iterations=budget_iters
            )
            model = init_model(
                ts.norm,
                n_blocks=n_blocks,
                width=width,
                m=m,
                sigma=float(sigma),
                activation=activation,
                seed=model_seed,
                use_fourier=True,
            )
            diverged = False
            score = np.inf
            try:
                trained, _ = train(model, ts, config)
                pred_h, _ = _predict_training_points(trained, ts, val_idx)
                score = mrae(pred_h, ts.h_ft[val_idx])
            except TrainingDiverged:
                diverged = True
            table.append(
                {
                    "lambda_physics": float(lam),
                    "sigma": float(sigma),
                    "val_mrae": float(score),
                    "diverged": diverged,
                }
            )
            scored.append((float(score), float(sigma), float(lam)))
    best = min(scored)
    return (best[2], best[1]), table


def _predict_training_points(model: SurrogateModel, ts: TrainingSet, idx):
    from .surrogate import predict_batch

    points = np.column_stack([ts.x_miles[idx], ts.t_hours[idx]])
    return predict_batch(model, points)
