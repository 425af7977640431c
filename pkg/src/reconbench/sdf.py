"""Signed distances to triangle meshes and SDF training-set generation.

The magnitude of the signed distance is the exact minimum distance to
any triangle.  The sign comes from ray-crossing parity, which only
assumes a closed surface, not consistent winding: a point is inside
when a ray from it crosses the surface an odd number of times.  Rays
that graze an edge or vertex are retried along a different direction.

An "SDF field" in this package is any callable mapping an (N, 3) array
of points to an (N,) array of signed distances.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .geometry import TriangleMesh, as_points
from .raycast import crossing_parity

SdfField = Callable[[np.ndarray], np.ndarray]

GRID_RADIUS = 1.1
GRADIENT_STEP = 1e-4
GRADIENT_MIN_NORM = 1e-8

_PAIR_BUDGET = 4_000_000

# fixed retry directions for the parity test, longest axis first
_PARITY_DIRECTIONS = np.random.default_rng(74210423).normal(size=(16, 3))
_PARITY_DIRECTIONS /= np.linalg.norm(_PARITY_DIRECTIONS, axis=1, keepdims=True)


def _point_triangle_sqdist(p: np.ndarray, a, b, c) -> np.ndarray:
    """Squared distance from each point to each triangle, shape (n, m).

    Region-based closest-point computation (vertex, edge, or interior),
    fully vectorized.
    """
    ab = b - a
    ac = c - a
    ap = p[:, None, :] - a[None, :, :]
    d1 = np.einsum("mk,nmk->nm", ab, ap)
    d2 = np.einsum("mk,nmk->nm", ac, ap)
    bp = p[:, None, :] - b[None, :, :]
    d3 = np.einsum("mk,nmk->nm", ab, bp)
    d4 = np.einsum("mk,nmk->nm", ac, bp)
    cp = p[:, None, :] - c[None, :, :]
    d5 = np.einsum("mk,nmk->nm", ab, cp)
    d6 = np.einsum("mk,nmk->nm", ac, cp)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        v_face = vb / denom
        w_face = vc / denom

    in_a = (d1 <= 0) & (d2 <= 0)
    in_b = (d3 >= 0) & (d4 <= d3)
    in_c = (d6 >= 0) & (d5 <= d6)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)

    v = np.where(in_a, 0.0, np.nan)
    w = np.where(in_a, 0.0, np.nan)
    v = np.where(~in_a & in_b, 1.0, v)
    w = np.where(~in_a & in_b, 0.0, w)
    picked = in_a | in_b
    v = np.where(~picked & in_c, 0.0, v)
    w = np.where(~picked & in_c, 1.0, w)
    picked |= in_c
    v = np.where(~picked & on_ab, t_ab, v)
    w = np.where(~picked & on_ab, 0.0, w)
    picked |= on_ab
    v = np.where(~picked & on_ac, 0.0, v)
    w = np.where(~picked & on_ac, t_ac, w)
    picked |= on_ac
    v = np.where(~picked & on_bc, 1.0 - t_bc, v)
    w = np.where(~picked & on_bc, t_bc, w)
    picked |= on_bc
    v = np.where(picked, v, v_face)
    w = np.where(picked, w, w_face)

    closest = a[None, :, :] + v[..., None] * ab[None, :, :] + w[..., None] * ac[None, :, :]
    diff = p[:, None, :] - closest
    return np.einsum("nmk,nmk->nm", diff, diff)


def unsigned_distances(points, mesh: TriangleMesh) -> np.ndarray:
    """Minimum distance from each point to the mesh surface."""
    pts = as_points(points)
    if len(mesh) == 0:
        raise InvalidInputError("mesh has no triangles")
    a, b, c = mesh.corners()
    n = pts.shape[0]
    out = np.empty(n)
    block = max(1, _PAIR_BUDGET // len(mesh))
    for s in range(0, n, block):
        e = min(n, s + block)
        sq = _point_triangle_sqdist(pts[s:e], a, b, c)
        out[s:e] = np.sqrt(sq.min(axis=1))
    return out


def inside_mask(points, mesh: TriangleMesh) -> np.ndarray:
    """Parity-based inside test, retrying grazing rays.

    Directions come from a fixed table so results are reproducible; a
    point still unresolved after every retry keeps its last parity.
    """
    pts = as_points(points)
    n = pts.shape[0]
    parity = np.zeros(n, dtype=np.int64)
    pending = np.arange(n)
    for direction in _PARITY_DIRECTIONS:
        if pending.size == 0:
            break
        dirs = np.broadcast_to(direction, (pending.size, 3))
        par, suspect = crossing_parity(pts[pending], dirs, mesh)
        parity[pending] = par
        pending = pending[suspect]
    return parity == 1


def signed_distances(points, mesh: TriangleMesh) -> np.ndarray:
    """Signed distance for a batch of points; negative inside.

    A closed (watertight) mesh is assumed for the sign to be
    meaningful; winding order does not matter.
    """
    dist = unsigned_distances(points, mesh)
    sign = np.where(inside_mask(points, mesh), -1.0, 1.0)
    return sign * dist


def signed_distance(point, mesh: TriangleMesh) -> float:
    return float(signed_distances(np.asarray(point, dtype=np.float64)[None, :], mesh)[0])


class MeshSdf:
    """Adapter making a mesh usable wherever an SDF field is expected."""

    def __init__(self, mesh: TriangleMesh):
        if len(mesh) == 0:
            raise InvalidInputError("mesh has no triangles")
        self.mesh = mesh

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return signed_distances(points, self.mesh)


# ---------------------------------------------------------------------------
# training-set generation


@dataclass(frozen=True)
class SamplingConfig:
    """Controls for drawing SDF training samples around one object.

    ``negative_floor_tau`` is meant for surfaces whose inside is not
    trustworthy (for example pseudo-watertight scans): when set, samples
    with sdf < -tau are discarded.  Leave it None for closed meshes.
    """

    total_count: int = 50_000
    near_surface_fraction: float = 0.9
    surface_noise_sigma: float = 0.02
    ball_radius: float = GRID_RADIUS
    negative_floor_tau: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.total_count < 0:
            raise InvalidInputError("total_count must be non-negative")
        if not 0.0 <= self.near_surface_fraction <= 1.0:
            raise InvalidInputError("near_surface_fraction must lie in [0, 1]")
        if self.surface_noise_sigma < 0:
            raise InvalidInputError("surface_noise_sigma must be non-negative")
        if self.negative_floor_tau is not None and self.negative_floor_tau < 0:
            raise InvalidInputError("negative_floor_tau must be non-negative")


@dataclass(frozen=True)
class SdfSamples:
    """Batch of (point, signed distance) training records."""

    points: np.ndarray
    sdf: np.ndarray

    def __post_init__(self):
        pts = as_points(self.points)
        vals = np.asarray(self.sdf, dtype=np.float64)
        if vals.shape != (pts.shape[0],):
            raise InvalidInputError("sdf values must match points one to one")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "sdf", vals)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def empty(cls) -> "SdfSamples":
        return cls(np.zeros((0, 3)), np.zeros(0))


def concat_samples(parts) -> SdfSamples:
    parts = [p for p in parts if len(p)]
    if not parts:
        return SdfSamples.empty()
    return SdfSamples(
        np.concatenate([p.points for p in parts]),
        np.concatenate([p.sdf for p in parts]),
    )


def sample_training_set(mesh: TriangleMesh, cfg: SamplingConfig) -> SdfSamples:
    """Draw SDF supervision samples around a mesh in its canonical frame.

    A near-surface share of the budget is surface points perturbed by
    isotropic Gaussian noise; the rest is uniform in a ball of
    ``ball_radius``.  Every sample stores the exact signed distance.
    The output is deterministic given the config (the seed lives there)
    and may be smaller than ``total_count`` when the negative floor
    discards samples.
    """
    if cfg.total_count == 0:
        return SdfSamples.empty()
    rng = np.random.default_rng(cfg.seed)
    n_near = int(round(cfg.total_count * cfg.near_surface_fraction))
    n_far = cfg.total_count - n_near
    parts = []
    if n_near:
        surface = mesh.sample_surface(n_near, rng)
        noise = rng.normal(0.0, cfg.surface_noise_sigma, size=(n_near, 3))
        parts.append(surface + noise)
    if n_far:
        dirs = rng.normal(size=(n_far, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = cfg.ball_radius * np.cbrt(rng.random(n_far))
        parts.append(dirs * radii[:, None])
    pts = np.concatenate(parts) if parts else np.zeros((0, 3))
    sdf = signed_distances(pts, mesh)
    if cfg.negative_floor_tau is not None:
        keep = sdf >= -cfg.negative_floor_tau
        pts, sdf = pts[keep], sdf[keep]
    return SdfSamples(pts, sdf)


# ---------------------------------------------------------------------------
# iso-surface extraction


def grid_axis(resolution: int, radius: float = GRID_RADIUS) -> np.ndarray:
    if resolution < 2:
        raise InvalidInputError("resolution must be at least 2")
    return np.linspace(-radius, radius, resolution)


def default_iso_epsilon(resolution: int, radius: float = GRID_RADIUS) -> float:
    """Twice the nominal cell size; a band wide enough to catch the
    surface between grid planes."""
    return 2.0 * (2.0 * radius / resolution)


def evaluate_on_grid(
    sdf_fn: SdfField, resolution: int, radius: float = GRID_RADIUS,
    chunk: int = 65536,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate a field on the regular grid; returns (points, values).

    Points are ordered lexicographically by (ix, iy, iz), which fixes
    the output order of everything built on top.
    """
    axis = grid_axis(resolution, radius)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    vals = np.empty(pts.shape[0])
    for s in range(0, pts.shape[0], chunk):
        e = min(pts.shape[0], s + chunk)
        vals[s:e] = np.asarray(sdf_fn(pts[s:e]), dtype=np.float64)
    return pts, vals


def numeric_gradient(sdf_fn: SdfField, points: np.ndarray,
                     step: float = GRADIENT_STEP) -> np.ndarray:
    """Central-difference gradient of the field at each point."""
    pts = as_points(points)
    grad = np.empty_like(pts)
    for axis in range(3):
        offset = np.zeros(3)
        offset[axis] = step
        hi = np.asarray(sdf_fn(pts + offset), dtype=np.float64)
        lo = np.asarray(sdf_fn(pts - offset), dtype=np.float64)
        grad[:, axis] = (hi - lo) / (2.0 * step)
    return grad


def extract_surface_points(
    sdf_fn: SdfField,
    resolution: int,
    iso_epsilon: float | None = None,
    radius: float = GRID_RADIUS,
) -> np.ndarray:
    """Grid points near the zero level set, refined one Newton step.

    Grid points with |sdf| <= iso_epsilon are candidates; each moves by
    p <- p - sdf(p) * g / |g|^2 using a finite-difference gradient g.
    The step is skipped where the gradient is numerically zero (flat
    fields stay put rather than shooting off), and its length is capped
    at iso_epsilon: a unit-gradient field never needs more, so longer
    steps only ever come from unreliable gradients.
    """
    if iso_epsilon is None:
        iso_epsilon = default_iso_epsilon(resolution, radius)
    if iso_epsilon < 0:
        raise InvalidInputError("iso_epsilon must be non-negative")
    pts, vals = evaluate_on_grid(sdf_fn, resolution, radius)
    keep = np.abs(vals) <= iso_epsilon
    cand = pts[keep]
    if cand.shape[0] == 0:
        return np.zeros((0, 3))
    values = vals[keep]
    grad = numeric_gradient(sdf_fn, cand)
    norm_sq = np.einsum("nk,nk->n", grad, grad)
    movable = np.sqrt(norm_sq) >= GRADIENT_MIN_NORM
    scale = np.where(movable, values / np.where(movable, norm_sq, 1.0), 0.0)
    step = -scale[:, None] * grad
    length = np.sqrt(np.einsum("nk,nk->n", step, step))
    over = length > iso_epsilon
    if np.any(over):
        step[over] *= (iso_epsilon / length[over])[:, None]
    return cand + step
