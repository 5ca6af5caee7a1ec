"""Kernel evaluation on top of a fixed stack of feature maps.

A kernel here is a base similarity function (gaussian, linear or
polynomial) composed with zero or more affine-plus-activation feature
maps.  The maps are fixed data, not trainable parameters: every entry of
a kernel matrix is ``k(phi(x_i), phi(x_j))`` where ``phi`` is the stack
applied point-wise.

Gaussian kernels optionally carry a compact-support truncation radius.
Pairs whose mapped points lie farther apart than the radius get an exact
zero entry, which makes kernel matrices block sparse whenever the data
splits into well separated clusters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

_ACTIVATIONS = {
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
    "sigmoid": lambda z: 1.0 / (1.0 + np.exp(-z)),
    "identity": lambda z: z,
}

_OUTER_KERNELS = ("gaussian", "linear", "polynomial")

# Rows per chunk when forming pairwise distances, sized so the chunk of
# the difference tensor stays a few MB at typical dimensions.
_CHUNK_ROWS = 256


@dataclass(frozen=True)
class LayerMap:
    """One affine map followed by a point-wise activation.

    Maps a point ``x`` of dimension ``d_in`` to ``act(weight @ x + bias)``
    of dimension ``d_out``; batches of points map row-wise.
    """

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        weight = np.asarray(self.weight, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64)
        if weight.ndim != 2:
            raise ValueError(f"layer weight must be 2-d, got shape {weight.shape}")
        if bias.shape != (weight.shape[0],):
            raise ValueError(
                f"bias shape {bias.shape} does not match weight rows {weight.shape[0]}"
            )
        if not (np.isfinite(weight).all() and np.isfinite(bias).all()):
            raise ValueError("layer parameters must be finite")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(
                f"unknown activation {self.activation!r}; "
                f"expected one of {sorted(_ACTIVATIONS)}"
            )
        weight.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def apply(self, X):
        Z = X @ self.weight.T + self.bias
        return _ACTIVATIONS[self.activation](Z)

    def to_dict(self):
        return {
            "weight": self.weight.tolist(),
            "bias": self.bias.tolist(),
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            weight=np.asarray(payload["weight"], dtype=np.float64),
            bias=np.asarray(payload["bias"], dtype=np.float64),
            activation=payload.get("activation", "identity"),
        )


@dataclass(frozen=True)
class KernelSpec:
    """Full description of a kernel: outer function plus feature-map stack.

    Parameters
    ----------
    outer : str
        Outer kernel, one of ``gaussian``, ``linear``, ``polynomial``.
    sigma : float
        Bandwidth of the gaussian kernel, ``exp(-d^2 / (2 sigma^2))``.
    degree : int
        Degree of the polynomial kernel, ``(<x, z> + offset)^degree``.
    offset : float
        Additive offset of the polynomial kernel.
    truncation_radius : float or None
        If set (gaussian only), entries for pairs with mapped distance
        greater than the radius are exactly zero.
    layers : tuple of LayerMap
        Feature maps applied in order before the outer kernel.  Empty
        means the flat kernel on raw inputs.
    """

    outer: str = "gaussian"
    sigma: float = 1.0
    degree: int = 2
    offset: float = 1.0
    truncation_radius: float | None = None
    layers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.outer not in _OUTER_KERNELS:
            raise ValueError(
                f"unknown kernel {self.outer!r}; expected one of {_OUTER_KERNELS}"
            )
        if self.outer == "gaussian" and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.outer == "polynomial":
            if int(self.degree) != self.degree or self.degree < 1:
                raise ValueError(f"degree must be a positive integer, got {self.degree}")
            if self.offset < 0:
                raise ValueError(f"offset must be non-negative, got {self.offset}")
        if self.truncation_radius is not None:
            if self.outer != "gaussian":
                raise ValueError("truncation_radius is only supported for gaussian kernels")
            if not self.truncation_radius > 0:
                raise ValueError(
                    f"truncation_radius must be positive, got {self.truncation_radius}"
                )
        layers = tuple(self.layers)
        for first, second in zip(layers, layers[1:]):
            if first.out_dim != second.in_dim:
                raise ValueError(
                    f"layer output dim {first.out_dim} does not feed "
                    f"layer input dim {second.in_dim}"
                )
        object.__setattr__(self, "layers", layers)

    def to_dict(self):
        return {
            "outer": self.outer,
            "sigma": self.sigma,
            "degree": self.degree,
            "offset": self.offset,
            "truncation_radius": self.truncation_radius,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, payload):
        known = {"outer", "sigma", "degree", "offset", "truncation_radius", "layers"}
        extra = set(payload) - known
        if extra:
            raise ValueError(f"unknown kernel fields: {sorted(extra)}")
        kwargs = {k: payload[k] for k in known & set(payload) if k != "layers"}
        layers = tuple(LayerMap.from_dict(item) for item in payload.get("layers", ()))
        return cls(layers=layers, **kwargs)


def forward(layers, x):
    """Apply a stack of feature maps to a point or a batch of points.

    ``x`` may be a single vector of dimension ``d`` or an ``(n, d)``
    batch; the result keeps the input's number of dimensions.  An empty
    stack returns the input unchanged, so treat the result as read only.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2:
        raise ValueError(f"points must be 1-d or 2-d, got shape {x.shape}")
    layers = tuple(layers)
    if layers and X.shape[1] != layers[0].in_dim:
        raise ValueError(
            f"points have {X.shape[1]} features but the first layer "
            f"expects {layers[0].in_dim}"
        )
    for layer in layers:
        X = layer.apply(X)
    return X[0] if single else X


def _points_of(data):
    """Accept either a Dataset-like object or a raw (n, d) array."""
    points = getattr(data, "points", data)
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be 2-d, got shape {points.shape}")
    return points


def _squared_distances(F, G):
    """Pairwise squared distances between mapped point sets, chunked.

    Uses the subtract-then-square form, so for identical input sets the
    result is exactly symmetric entry by entry: ``(a - b)**2`` and
    ``(b - a)**2`` are the same float.
    """
    n = F.shape[0]
    out = np.empty((n, G.shape[0]), dtype=np.float64)
    step = max(1, min(n, _CHUNK_ROWS))
    for start in range(0, n, step):
        stop = min(n, start + step)
        diff = F[start:stop, None, :] - G[None, :, :]
        np.sum(diff * diff, axis=-1, out=out[start:stop])
    return out


def _outer_kernel(spec, F, G, symmetric):
    if spec.outer == "gaussian":
        d2 = _squared_distances(F, G)
        values = np.exp(d2 / (-2.0 * spec.sigma**2))
        if spec.truncation_radius is not None:
            values[d2 > spec.truncation_radius**2] = 0.0
        return values
    inner = F @ G.T
    if symmetric:
        # BLAS matmul is not exactly symmetric; mirror the lower triangle.
        inner = np.tril(inner) + np.tril(inner, -1).T
    if spec.outer == "linear":
        return inner
    return (inner + spec.offset) ** spec.degree


def cross_matrix(spec, X, Z):
    """Kernel values between two point sets, shape ``(len(X), len(Z))``."""
    F = forward(spec.layers, _points_of(X))
    G = forward(spec.layers, _points_of(Z))
    if F.shape[1] != G.shape[1]:
        raise ValueError("point sets map to different feature dimensions")
    return _outer_kernel(spec, F, G, symmetric=False)


def eval_kernel(spec, x, z):
    """Kernel value for a single pair of raw points."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    return float(cross_matrix(spec, x, z)[0, 0])


@dataclass(frozen=True)
class KernelMatrix:
    """Assembled kernel matrix with its spec and assembly time."""

    values: np.ndarray
    spec: KernelSpec
    assembly_time_s: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.values.shape[0]


def assemble(spec, data):
    """Assemble the full kernel matrix of a dataset or point array.

    The result is exactly symmetric: gaussian entries come from a
    symmetric distance computation and inner-product kernels mirror one
    triangle onto the other.  Wall-clock assembly time is recorded for
    the performance model.
    """
    points = _points_of(data)
    if points.shape[0] < 1:
        raise ValueError("cannot assemble a kernel matrix for an empty dataset")
    start = time.perf_counter()
    F = forward(spec.layers, points)
    values = _outer_kernel(spec, F, F, symmetric=True)
    elapsed = time.perf_counter() - start
    return KernelMatrix(values=values, spec=spec, assembly_time_s=elapsed)


def assemble_block(spec, data, rows, cols):
    """Kernel matrix between two index subsets of one dataset.

    Builds only the requested block, never the full matrix.  Entries
    match the corresponding slice of ``assemble(spec, data)`` up to
    roundoff in the feature maps; slice an assembled matrix instead when
    exact agreement matters.
    """
    points = _points_of(data)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    n = points.shape[0]
    for name, idx in (("rows", rows), ("cols", cols)):
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise IndexError(f"{name} contain indices outside 0..{n - 1}")
    return cross_matrix(spec, points[rows], points[cols])
