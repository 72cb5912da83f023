"""Fourier-feature residual MLP surrogate for stage and velocity fields.

The network maps a normalized space-time coordinate to (depth, velocity)
at that point.  Coordinates are scaled into the unit square, lifted by a
random Fourier encoding whose projection matrix is frozen at
initialization, pushed through residual blocks, and decoded by a linear
head.  Depth passes through a softplus plus a small floor so predictions
are always physically positive.

All forward passes run through the same generic code path: plain numpy
arrays for inference, dual numbers for space-time derivatives, and tape
nodes for weight gradients.  What changes is the payload type, never the
arithmetic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Dual
from .geometry import HOUR_S, MILE_FT, RiverScenario

__all__ = [
    "DEPTH_FLOOR_FT",
    "ExtrapolationWarning",
    "NormalizationBox",
    "FourierEncoder",
    "SurrogateModel",
    "init_encoder",
    "init_model",
    "encode",
    "weight_views",
    "predict",
    "predict_batch",
    "physics_duals",
    "box_for_scenario",
]

DEPTH_FLOOR_FT = 0.01  # keeps predicted depth strictly positive
_ACTIVATIONS = ("relu", "tanh")


class ExtrapolationWarning(UserWarning):
    """Issued when a query point falls outside the normalization box."""


@dataclass(frozen=True)
class NormalizationBox:
    """Physical coordinate ranges mapped onto the unit square."""

    x_min_miles: float
    x_max_miles: float
    t_min_hours: float
    t_max_hours: float

    def __post_init__(self):
        if not self.x_max_miles > self.x_min_miles:
            raise ValueError("normalization box is degenerate in x")
        if not self.t_max_hours > self.t_min_hours:
            raise ValueError("normalization box is degenerate in t")


def box_for_scenario(scenario: RiverScenario) -> NormalizationBox:
    return NormalizationBox(0.0, scenario.geometry.length_miles, 0.0, scenario.t_total_hours)


@dataclass(frozen=True)
class FourierEncoder:
    """Random Fourier feature map gamma(v) = [cos(2 pi B v); sin(2 pi B v)].

    ``b_matrix`` has shape (m, 2) with entries drawn N(0, sigma^2) once and
    never trained; the array is marked read-only to keep it that way.
    """

    b_matrix: np.ndarray
    sigma: float

    def __post_init__(self):
        b = np.asarray(self.b_matrix, dtype=np.float64).copy()
        if b.ndim != 2 or b.shape[1] != 2:
            raise ValueError("b_matrix must have shape (m, 2)")
        b.setflags(write=False)
        object.__setattr__(self, "b_matrix", b)

    @property
    def m(self) -> int:
        return self.b_matrix.shape[0]

    @property
    def output_dim(self) -> int:
        return 2 * self.m


def init_encoder(m: int, sigma: float, seed: int = 0) -> FourierEncoder:
    if m < 1:
        raise ValueError("m must be at least 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rng = np.random.default_rng(seed)
    return FourierEncoder(rng.normal(0.0, sigma, size=(m, 2)), float(sigma))


def encode(encoder: FourierEncoder, v):
    """Encode normalized coordinates ``v`` of shape (..., 2) to (..., 2m).

    The cosine block comes first, then the sine block.  Works on plain
    arrays, duals, or tape nodes.
    """
    arg = ad.mul(ad.matmul(v, encoder.b_matrix.T), 2.0 * np.pi)
    return ad.concat(ad.cos(arg), ad.sin(arg), axis=-1)


@dataclass
class SurrogateModel:
    """The trainable surrogate: encoder, weights, and normalization.

    ``weights`` is one flat float64 vector; ``manifest`` records the layer
    name and shape of each contiguous segment, in storage order.  Residual
    blocks hold two affine layers with the activation between them and an
    identity skip; each block's second layer starts at zero, so a freshly
    initialized network is near-identity around its input projection.
    """

    encoder: FourierEncoder | None
    weights: np.ndarray
    manifest: tuple[tuple[str, tuple[int, ...]], ...]
    width: int
    n_blocks: int
    activation: str
    norm: NormalizationBox
    seed: int

    output_datum = "depth"  # predictions are depth above bed, not elevation

    @property
    def uses_fourier(self) -> bool:
        return self.encoder is not None

    @property
    def n_weights(self) -> int:
        return self.weights.size


def _manifest(in_dim: int, width: int, n_blocks: int):
    entries = [("proj.W", (in_dim, width)), ("proj.b", (width,))]
    for k in range(n_blocks):
        entries.append((f"block{k}.W1", (width, width)))
        entries.append((f"block{k}.b1", (width,)))
        entries.append((f"block{k}.W2", (width, width)))
        entries.append((f"block{k}.b2", (width,)))
    entries.append(("head.W", (width, 2)))
    entries.append(("head.b", (2,)))
    return tuple(entries)


def weight_views(model: SurrogateModel) -> dict[str, np.ndarray]:
    """Name -> array view into the flat weight vector (shared memory)."""
    views = {}
    offset = 0
    for name, shape in model.manifest:
        size = int(np.prod(shape))
        views[name] = model.weights[offset : offset + size].reshape(shape)
        offset += size
    return views


def init_model(
    norm: NormalizationBox,
    *,
    n_blocks: int = 6,
    width: int = 512,
    m: int = 128,
    sigma: float = 4.0,
    activation: str = "relu",
    seed: int = 0,
    use_fourier: bool = True,
) -> SurrogateModel:
    """Create a surrogate with Kaiming fan-in initialization.

    With ``use_fourier`` off the raw normalized coordinates feed the input
    projection directly (the ablation baseline).  The Fourier matrix and
    the weights come from one seeded generator, so a seed pins the entire
    starting state.
    """
    if activation not in _ACTIVATIONS:
        raise ValueError(f"activation must be one of {_ACTIVATIONS}")
    rng = np.random.default_rng(seed)
    encoder = None
    in_dim = 2
    if use_fourier:
        encoder = FourierEncoder(rng.normal(0.0, sigma, size=(m, 2)), float(sigma))
        in_dim = encoder.output_dim

    manifest = _manifest(in_dim, width, n_blocks)
    total = sum(int(np.prod(shape)) for _, shape in manifest)
    flat = np.zeros(total, dtype=np.float64)
    gain = 2.0 if activation == "relu" else 1.0
    offset = 0
    for name, shape in manifest:
        size = int(np.prod(shape))
        if name.endswith(".W") or name.endswith(".W1"):
            fan_in = shape[0]
            flat[offset : offset + size] = rng.normal(
                0.0, np.sqrt(gain / fan_in), size=size
            )
        # biases and each block's closing layer stay zero
        offset += size
    return SurrogateModel(
        encoder=encoder,
        weights=flat,
        manifest=manifest,
        width=width,
        n_blocks=n_blocks,
        activation=activation,
        norm=norm,
        seed=seed,
    )


def _forward(model: SurrogateModel, params, v):
    """Generic network forward from normalized coordinates ``v``.

    ``params`` maps manifest names to payloads (arrays or tape leaves);
    ``v`` is an (N, 2) payload or Dual.  Returns (h, u) payloads.
    """
    act = ad.relu if model.activation == "relu" else ad.tanh
    feats = encode(model.encoder, v) if model.uses_fourier else v
    z = ad.add(ad.matmul(feats, params["proj.W"]), params["proj.b"])
    for k in range(model.n_blocks):
        a1 = act(ad.add(ad.matmul(z, params[f"block{k}.W1"]), params[f"block{k}.b1"]))
        z = ad.add(z, ad.add(ad.matmul(a1, params[f"block{k}.W2"]), params[f"block{k}.b2"]))
    out = ad.add(ad.matmul(z, params["head.W"]), params["head.b"])
    h = ad.add(ad.softplus(ad.column(out, 0)), DEPTH_FLOOR_FT)
    u = ad.column(out, 1)
    return h, u


def _normalize(model: SurrogateModel, x_miles, t_hours, clamp: bool):
    box = model.norm
    x = np.asarray(x_miles, dtype=np.float64)
    t = np.asarray(t_hours, dtype=np.float64)
    if clamp:
        outside = (
            (x < box.x_min_miles)
            | (x > box.x_max_miles)
            | (t < box.t_min_hours)
            | (t > box.t_max_hours)
        )
        if np.any(outside):
            warnings.warn(
                f"{int(np.count_nonzero(outside))} query point(s) outside the "
                "normalization box; clamping to the box",
                ExtrapolationWarning,
                stacklevel=3,
            )
            x = np.clip(x, box.x_min_miles, box.x_max_miles)
            t = np.clip(t, box.t_min_hours, box.t_max_hours)
    xhat = (x - box.x_min_miles) / (box.x_max_miles - box.x_min_miles)
    that = (t - box.t_min_hours) / (box.t_max_hours - box.t_min_hours)
    return xhat, that


_INFERENCE_BLOCK = 64


def _forward_plain(model: SurrogateModel, v: np.ndarray):
    # BLAS picks different gemm kernels for different row counts and their
    # rounding can disagree in the last ulp, which would break the contract
    # that a batched prediction equals the same points predicted one at a
    # time.  Rows within a fixed-shape gemm are position-independent, so
    # every inference forward runs on exactly _INFERENCE_BLOCK rows: small
    # inputs are zero-padded, large ones processed block by block.
    n = v.shape[0]
    views = weight_views(model)
    if n == _INFERENCE_BLOCK:
        return _forward(model, views, v)
    if n < _INFERENCE_BLOCK:
        padded = np.zeros((_INFERENCE_BLOCK, v.shape[1]))
        padded[:n] = v
        h, u = _forward(model, views, padded)
        return h[:n], u[:n]
    h_parts = []
    u_parts = []
    for start in range(0, n, _INFERENCE_BLOCK):
        h, u = _forward_plain(model, v[start : start + _INFERENCE_BLOCK])
        h_parts.append(h)
        u_parts.append(u)
    return np.concatenate(h_parts), np.concatenate(u_parts)


def predict(model: SurrogateModel, x_miles: float, t_hours: float) -> tuple[float, float]:
    """Depth (ft) and velocity (ft/s) at one point.

    Points outside the normalization box are clamped onto it, with an
    :class:`ExtrapolationWarning`.
    """
    xhat, that = _normalize(model, x_miles, t_hours, clamp=True)
    v = np.array([[float(xhat), float(that)]])
    h, u = _forward_plain(model, v)
    return float(h[0]), float(u[0])


def predict_batch(model: SurrogateModel, points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`predict` over an (N, 2) array of (x_miles, t_hours)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (N, 2)")
    if pts.shape[0] == 0:
        return np.zeros(0), np.zeros(0)
    xhat, that = _normalize(model, pts[:, 0], pts[:, 1], clamp=True)
    h, u = _forward_plain(model, np.column_stack([xhat, that]))
    return np.asarray(h), np.asarray(u)


def physics_duals(model: SurrogateModel, x_miles, t_hours, params=None):
    """Forward pass carrying d/dx and d/dt tangents in physical units.

    Returns ``(h, u)`` as duals whose ``dx`` components are derivatives
    with respect to feet and ``dt`` with respect to seconds -- the units
    the governing equations are written in.  ``params`` may supply tape
    leaves in place of the stored weights for training.
    """
    if params is None:
        params = weight_views(model)
    xhat, that = _normalize(model, x_miles, t_hours, clamp=False)
    xhat = np.atleast_1d(xhat)
    that = np.atleast_1d(that)
    n = xhat.size
    box = model.norm
    dxhat_dxft = 1.0 / ((box.x_max_miles - box.x_min_miles) * MILE_FT)
    dthat_dts = 1.0 / ((box.t_max_hours - box.t_min_hours) * HOUR_S)

    v = np.column_stack([xhat, that])
    dx_seed = np.zeros((n, 2))
    dx_seed[:, 0] = dxhat_dxft
    dt_seed = np.zeros((n, 2))
    dt_seed[:, 1] = dthat_dts
    return _forward(model, params, Dual(v, dx_seed, dt_seed))
