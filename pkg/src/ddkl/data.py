"""Dataset container, CSV ingestion and synthetic problem generators.

Datasets are immutable once constructed and safe to share across
concurrent workers.  CSV is the only ingestion format: comma separated,
header row, one target column, ``.`` decimal separator, UTF-8 with LF or
CRLF line endings.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels

_GENERATORS = ("smooth-sine", "piecewise-linear", "kernel-planted")

# Gaussian bandwidth used by the planted-coefficient generator.  Narrow
# enough that the planted kernel matrix stays well conditioned at unit
# point density, so recovery tests are exact at zero noise.
PLANTED_SIGMA = 0.5


def planted_kernel_spec():
    """Kernel under which ``kernel-planted`` targets were generated."""
    return kernels.KernelSpec(outer="gaussian", sigma=PLANTED_SIGMA)


@dataclass(frozen=True)
class Dataset:
    """Immutable sample container.

    Parameters
    ----------
    points : ndarray of shape (n, d)
        Feature rows; indices ``0..n-1`` double as sample ids.
    targets : ndarray of shape (n,)
        Regression targets.
    target_bound : float, optional
        Recorded bound with ``|y_i| <= target_bound``.  Defaults to the
        tight bound ``max(|y_i|)``.
    planted_coeffs : ndarray of shape (n,), optional
        Coefficients a synthetic generator used to plant the targets.
    """

    points: np.ndarray
    targets: np.ndarray
    target_bound: float = None
    planted_coeffs: np.ndarray = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if points.ndim != 2:
            raise ValueError(f"points must be 2-d, got shape {points.shape}")
        n, d = points.shape
        if n < 1 or d < 1:
            raise ValueError(f"need at least one sample and one feature, got shape {points.shape}")
        if targets.shape != (n,):
            raise ValueError(
                f"targets shape {targets.shape} does not match {n} samples"
            )
        if not np.isfinite(points).all():
            raise ValueError("points contain non-finite entries")
        if not np.isfinite(targets).all():
            raise ValueError("targets contain non-finite entries")
        tight = float(np.max(np.abs(targets)))
        bound = tight if self.target_bound is None else float(self.target_bound)
        if not np.isfinite(bound) or bound < tight:
            raise ValueError(
                f"target_bound {bound} does not dominate max |target| = {tight}"
            )
        coeffs = self.planted_coeffs
        if coeffs is not None:
            coeffs = np.asarray(coeffs, dtype=np.float64)
            if coeffs.shape != (n,):
                raise ValueError(
                    f"planted_coeffs shape {coeffs.shape} does not match {n} samples"
                )
            if not np.isfinite(coeffs).all():
                raise ValueError("planted_coeffs contain non-finite entries")
            coeffs.setflags(write=False)
        points.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "target_bound", bound)
        object.__setattr__(self, "planted_coeffs", coeffs)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic dataset; equal specs generate equal data."""

    n: int
    d: int
    generator: str = "smooth-sine"
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got n={self.n}, d={self.d}")
        if self.generator not in _GENERATORS:
            raise ValueError(
                f"unknown generator {self.generator!r}; expected one of {_GENERATORS}"
            )
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be non-negative, got {self.noise_sd}")


def generate(spec):
    """Generate a dataset from a spec, bit-for-bit reproducible per seed.

    Draw order is fixed: points first, then planted coefficients (for
    ``kernel-planted``), then noise.  Noise is drawn only when
    ``noise_sd > 0``, so a zero-noise planted dataset satisfies
    ``targets == A @ planted_coeffs`` exactly for the planted kernel
    matrix ``A``.
    """
    rng = np.random.default_rng(spec.seed)
    coeffs = None
    if spec.generator == "smooth-sine":
        X = rng.uniform(0.0, 1.0, size=(spec.n, spec.d))
        y = np.mean(np.sin(2.0 * np.pi * X), axis=1)
    elif spec.generator == "piecewise-linear":
        X = rng.uniform(0.0, 1.0, size=(spec.n, spec.d))
        slopes = 1.0 + np.arange(spec.d)
        y = np.abs(X - 0.5) @ slopes
    else:
        # Spread points at roughly unit density so the planted gaussian
        # matrix is diagonally dominant regardless of n.
        side = float(spec.n) ** (1.0 / spec.d)
        X = rng.uniform(0.0, side, size=(spec.n, spec.d))
        coeffs = rng.standard_normal(spec.n)
        y = kernels.assemble(planted_kernel_spec(), X).values @ coeffs
    if spec.noise_sd > 0:
        y = y + spec.noise_sd * rng.standard_normal(spec.n)
    return Dataset(points=X, targets=y, planted_coeffs=coeffs)


def load_csv(path, target_column="y"):
    """Read a dataset from a CSV file with a header row.

    Every non-target column becomes a feature, in file order; row order
    is preserved.  Raises ``FileNotFoundError`` for a missing file and
    ``ValueError`` for an empty file, a missing target column, a ragged
    row, or a cell that does not parse as a finite real.  Parse errors
    name the offending row and column; the header is row 1.
    """
    with open(path, newline="", encoding="utf-8-sig") as handle:
        reader = csv.reader(handle)
        try:
            header = [name.strip() for name in next(reader)]
        except StopIteration:
            raise ValueError(f"empty CSV file: {path}") from None
        if target_column not in header:
            raise ValueError(
                f"target column {target_column!r} not in header {header}"
            )
        target_idx = header.index(target_column)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(
                    f"row {line_no} has {len(row)} cells, expected {len(header)}"
                )
            parsed = []
            for name, cell in zip(header, row):
                try:
                    value = float(cell)
                except ValueError:
                    raise ValueError(
                        f"could not parse cell at row {line_no}, column {name!r}: {cell!r}"
                    ) from None
                if not np.isfinite(value):
                    raise ValueError(
                        f"non-finite value at row {line_no}, column {name!r}: {cell!r}"
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise ValueError(f"CSV file has a header but no data rows: {path}")
    table = np.asarray(rows, dtype=np.float64)
    mask = np.ones(len(header), dtype=bool)
    mask[target_idx] = False
    return Dataset(points=table[:, mask], targets=table[:, target_idx])


def write_csv(dataset, path, target_column="y"):
    """Write a dataset as CSV; numbers round-trip exactly through repr."""
    names = [f"x{j + 1}" for j in range(dataset.d)] + [target_column]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(names)
        for row, target in zip(dataset.points, dataset.targets):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])


def separated_clusters(decomposition, spacing=1.0, seed=0):
    """Build a 1-d dataset whose geometry conforms to a decomposition.

    Consecutive index regions of the decomposition (the private parts of
    each block and each overlap segment) are laid out as separate
    clusters on the line, with gaps wider than the returned truncation
    radius.  A gaussian kernel truncated at that radius therefore never
    couples points across a region boundary, which is the regime where
    solving block by block can reproduce the global solution exactly.

    Returns ``(dataset, radius)``.
    """
    n = decomposition.n
    blocks = list(decomposition.blocks)
    cuts = {0, n}
    for start, _ in blocks[1:]:
        cuts.add(start)
    for _, stop in blocks[:-1]:
        cuts.add(stop)
    edges = sorted(cuts)
    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-0.25, 0.25, size=n) * spacing
    gap = (n + 1) * spacing
    points = np.empty(n)
    base = 0.0
    for lo, hi in zip(edges, edges[1:]):
        length = hi - lo
        points[lo:hi] = base + spacing * np.arange(length) + jitter[lo:hi]
        base += spacing * (length - 1) + gap
    targets = rng.standard_normal(n)
    radius = n * spacing
    return Dataset(points=points[:, None], targets=targets), radius
