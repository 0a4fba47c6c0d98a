"""Box grids, MAC-staggered fields and the discrete calculus on them.

Scalar fields are numpy arrays of shape ``grid.cells`` holding cell-center
samples, indexed ``[i, j(, k)]`` with axis 0 along x.  Vector fields are
tuples with one array per axis; component ``i`` lives on the faces normal
to axis ``i`` and has ``cells[i] + 1`` samples along that axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    dim: int
    extents: tuple[float, ...]
    cells: tuple[int, ...]
    spacing: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {self.dim}")
        if len(self.extents) != self.dim or len(self.cells) != self.dim:
            raise GridError("extents and cells must have one entry per axis")
        if any(not (L > 0) or not math.isfinite(L) for L in self.extents):
            raise GridError(f"nonpositive extent in {self.extents}")
        if any(m < 4 for m in self.cells):
            raise GridError(f"need at least 4 cells per axis, got {self.cells}")
        object.__setattr__(self, "spacing", tuple(L / m for L, m in zip(self.extents, self.cells)))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def volume(self) -> float:
        return math.prod(self.extents)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.cells)

    def face_shape(self, axis: int) -> tuple[int, ...]:
        s = list(self.cells)
        s[axis] += 1
        return tuple(s)

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def axis_nodes(self, axis: int) -> np.ndarray:
        return np.arange(self.cells[axis] + 1) * self.spacing[axis]

    def cell_points(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*[self.axis_centers(a) for a in range(self.dim)], indexing="ij"))

    def face_points(self, axis: int) -> tuple[np.ndarray, ...]:
        coords = [self.axis_nodes(a) if a == axis else self.axis_centers(a) for a in range(self.dim)]
        return tuple(np.meshgrid(*coords, indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def zero_vector(self) -> tuple[np.ndarray, ...]:
        return tuple(np.zeros(self.face_shape(a)) for a in range(self.dim))


def make_grid(dim: int, extents, cells) -> GridSpec:
    return GridSpec(int(dim), tuple(float(L) for L in extents), tuple(int(m) for m in cells))


@dataclass(frozen=True)
class SpectralInfo:
    lambda1_neumann_continuum: float
    lambda1_neumann_discrete: float
    lambda1_stokes: float | None = None


def _sl(dim: int, axis: int, s: slice) -> tuple:
    idx = [slice(None)] * dim
    idx[axis] = s
    return tuple(idx)


def pad_faces(interior: np.ndarray, axis: int) -> np.ndarray:
    """Embed interior face values into a face array with zero boundary faces."""
    width = [(0, 0)] * interior.ndim
    width[axis] = (1, 1)
    return np.pad(interior, width)


def interior_faces(F: np.ndarray, axis: int) -> np.ndarray:
    return F[_sl(F.ndim, axis, slice(1, -1))]


def center_to_faces(f: np.ndarray, axis: int) -> np.ndarray:
    """Arithmetic mean of the two cells adjacent to each interior face."""
    d = f.ndim
    return 0.5 * (f[_sl(d, axis, slice(None, -1))] + f[_sl(d, axis, slice(1, None))])


def faces_to_center(F: np.ndarray, axis: int) -> np.ndarray:
    d = F.ndim
    return 0.5 * (F[_sl(d, axis, slice(None, -1))] + F[_sl(d, axis, slice(1, None))])


def face_gradient(grid: GridSpec, f: np.ndarray) -> tuple[np.ndarray, ...]:
    """Two-point gradient on every interior face; boundary faces are zero."""
    out = []
    for a in range(grid.dim):
        g = np.diff(f, axis=a) / grid.spacing[a]
        out.append(pad_faces(g, a))
    return tuple(out)


def divergence(grid: GridSpec, F) -> np.ndarray:
    div = np.zeros(grid.shape)
    for a in range(grid.dim):
        div += np.diff(F[a], axis=a) / grid.spacing[a]
    return div


def neumann_laplacian(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    return divergence(grid, face_gradient(grid, f))


def lp_norm(grid: GridSpec, f: np.ndarray, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(np.asarray(f, dtype=float))
    top = float(a.max()) if a.size else 0.0
    if math.isinf(p) or top == 0.0:
        return top
    # scale by the max so tiny or huge fields do not under/overflow in a**p
    return top * float((np.sum((a / top) ** p) * grid.cell_volume) ** (1.0 / p))


def vector_l2_norm(grid: GridSpec, F) -> float:
    # midpoint rule per component; boundary faces carry zero for no-slip fields
    return math.sqrt(sum(float(np.sum(c * c)) for c in F) * grid.cell_volume)


def gradient_magnitude(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    G = face_gradient(grid, f)
    return np.sqrt(sum(faces_to_center(G[a], a) ** 2 for a in range(grid.dim)))


def w1q_norm(grid: GridSpec, c: np.ndarray, q: float) -> float:
    if q <= 1:
        raise ValueError(f"q must exceed 1, got {q}")
    vol = grid.cell_volume
    total = np.sum(np.abs(c) ** q) * vol + np.sum(gradient_magnitude(grid, c) ** q) * vol
    return float(total ** (1.0 / q))


def neumann_eigenvalue_1d(h: float, m: int, k: int = 1) -> float:
    """Eigenvalue of the 3-point Neumann stencil on m cells for mode cos(pi k x/L)."""
    return 4.0 / h**2 * math.sin(math.pi * k / (2 * m)) ** 2


def neumann_lambda1(grid: GridSpec) -> SpectralInfo:
    continuum = (math.pi / max(grid.extents)) ** 2
    discrete = min(
        2.0 / h**2 * (1.0 - math.cos(math.pi * h / L))
        for h, L in zip(grid.spacing, grid.extents)
    )
    return SpectralInfo(continuum, discrete)
