"""Gaussian random field inputs with a squared-exponential kernel.

Draws are keyed by (seed, sample index), so any partition of the index
range yields exactly the same functions: sampling 100 then another 100
matches sampling 200 at once.
"""

import numpy as np

from .errors import NumericError
from .grids import Mesh1D, Mesh2D


def kernel_matrix(points, lengthscale=1.0):
    """Unit-variance RBF kernel k(x, x') = exp(-|x - x'|^2 / (2 l^2))."""
    if not (np.isfinite(lengthscale) and lengthscale > 0.0):
        raise ValueError("lengthscale must be finite and positive")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("points must be a (count,) or (count, dim) array")
    sq = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    return np.exp(-sq / (2.0 * lengthscale**2))


class GrfSampler:
    """Zero-mean GRF over a mesh's nodes, factorized once at construction."""

    def __init__(self, mesh, lengthscale=1.0, jitter=1e-10, max_attempts=4):
        if isinstance(mesh, Mesh2D):
            points = mesh.node_coords()
        elif isinstance(mesh, Mesh1D):
            points = mesh.nodes
        else:
            points = np.asarray(mesh, dtype=np.float64)
        self.mesh = mesh
        self.lengthscale = float(lengthscale)
        self.kernel = kernel_matrix(points, lengthscale)
        n = self.kernel.shape[0]
        level = float(jitter)
        for attempt in range(max_attempts + 1):
            try:
                self.factor = np.linalg.cholesky(self.kernel + level * np.eye(n))
                self.jitter = level
                break
            except np.linalg.LinAlgError:
                level *= 10.0
        else:
            raise NumericError(
                f"kernel not positive definite after jitter escalation to {level:g}"
            )

    @property
    def size(self):
        return self.kernel.shape[0]

    def sample(self, seed, index):
        """One draw, keyed by (seed, index); independent of call order."""
        if index < 0:
            raise ValueError("sample index must be nonnegative")
        rng = np.random.default_rng([int(seed), int(index)])
        return self.factor @ rng.standard_normal(self.size)

    def sample_batch(self, seed, count, start=0):
        """Draws for indices start..start+count-1, shape (count, nodes)."""
        if count < 0:
            raise ValueError("count must be nonnegative")
        out = np.empty((count, self.size))
        for i in range(count):
            out[i] = self.sample(seed, start + i)
        return out
