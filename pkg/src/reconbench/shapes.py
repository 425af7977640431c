"""Procedural watertight test meshes and the six benchmark categories.

Every generator returns a closed triangle mesh (edge-manifold, possibly
several disjoint closed components).  Category shapes are deliberately
simple stand-ins: a capsule for a bottle, a closed cylinder for a can, a
hemispherical shell for a helmet, an ellipsoid for a jar, a hinged box
pair for a laptop, and a cylinder with a bent-tube handle for a mug.
Adjacent parts keep a small clearance instead of intersecting so that
parity-based inside tests stay exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import TriangleMesh

CATEGORIES = ("bottle", "can", "helmet", "jar", "laptop", "mug")

_PART_CLEARANCE = 0.03


@dataclass(frozen=True)
class ShapeSpec:
    """Category name plus the sampled parameters that define one instance."""

    category: str
    params: dict

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise InvalidInputError(f"unknown category {self.category!r}")


def merge_meshes(meshes) -> TriangleMesh:
    verts = []
    tris = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += m.vertices.shape[0]
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


# ---------------------------------------------------------------------------
# primitive builders


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """Subdivided icosahedron.

    The base solid is kept in its symmetric coordinates, so the vertex
    set is exactly invariant (to sign flips) under point reflection and
    under 180-degree rotations about the coordinate axes.
    """
    if subdivisions < 0:
        raise InvalidInputError("subdivisions must be non-negative")
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.asarray(v, dtype=np.float64) for v in verts]
    for _ in range(subdivisions):
        cache: dict[frozenset, int] = {}
        new_faces = []

        def midpoint(i: int, j: int) -> int:
            key = frozenset((i, j))
            if key not in cache:
                cache[key] = len(verts)
                verts.append(0.5 * (verts[i] + verts[j]))
            return cache[key]

        for i, j, k in faces:
            ij = midpoint(i, j)
            jk = midpoint(j, k)
            ki = midpoint(k, i)
            new_faces += [(i, ij, ki), (j, jk, ij), (k, ki, jk), (ij, jk, ki)]
        faces = new_faces
    v = np.asarray(verts)
    v = v / np.linalg.norm(v, axis=1, keepdims=True) * radius
    return TriangleMesh(v, np.asarray(faces, dtype=np.int64))


def box_mesh(half_extents, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    hx, hy, hz = (float(x) for x in np.asarray(half_extents, dtype=np.float64))
    if min(hx, hy, hz) <= 0:
        raise InvalidInputError("half extents must be positive")
    c = np.asarray(center, dtype=np.float64)
    corners = np.array(
        [
            [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
            [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
        ]
    ) + c
    quads = [
        (0, 3, 2, 1),  # bottom
        (4, 5, 6, 7),  # top
        (0, 1, 5, 4),
        (1, 2, 6, 5),
        (2, 3, 7, 6),
        (3, 0, 4, 7),
    ]
    tris = []
    for a, b, cc, d in quads:
        tris += [(a, b, cc), (a, cc, d)]
    return TriangleMesh(corners, np.asarray(tris, dtype=np.int64))


def revolve(profile_z, profile_r, segments: int = 24) -> TriangleMesh:
    """Surface of revolution about the z axis.

    The profile runs pole to pole: its first and last entries must have
    radius 0 and become single vertices.  Interior stations become rings
    of ``segments`` vertices joined by triangle strips, which yields a
    closed mesh for any simple profile.
    """
    z = np.asarray(profile_z, dtype=np.float64)
    r = np.asarray(profile_r, dtype=np.float64)
    if z.shape != r.shape or z.ndim != 1 or z.size < 3:
        raise InvalidInputError("profile must be two equal 1D arrays, length >= 3")
    if r[0] != 0.0 or r[-1] != 0.0 or np.any(r[1:-1] <= 0.0):
        raise InvalidInputError("profile must start and end on the axis (r = 0)")
    if segments < 3:
        raise InvalidInputError("need at least 3 segments")
    theta = 2.0 * np.pi * np.arange(segments) / segments
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    verts = [np.array([0.0, 0.0, z[0]])]
    ring_start = []
    for zi, ri in zip(z[1:-1], r[1:-1]):
        ring_start.append(len(verts))
        for ct, st in zip(cos_t, sin_t):
            verts.append(np.array([ri * ct, ri * st, zi]))
    south = 0
    north = len(verts)
    verts.append(np.array([0.0, 0.0, z[-1]]))
    tris = []
    first = ring_start[0]
    for s in range(segments):
        tris.append((south, first + (s + 1) % segments, first + s))
    for a, b in zip(ring_start[:-1], ring_start[1:]):
        for s in range(segments):
            s2 = (s + 1) % segments
            tris.append((a + s, a + s2, b + s2))
            tris.append((a + s, b + s2, b + s))
    last = ring_start[-1]
    for s in range(segments):
        tris.append((north, last + s, last + (s + 1) % segments))
    return TriangleMesh(np.asarray(verts), np.asarray(tris, dtype=np.int64))


def capsule(radius: float, body_height: float, segments: int = 24,
            arc_steps: int = 8) -> TriangleMesh:
    """Cylinder with hemispherical end caps, axis along z."""
    if radius <= 0 or body_height <= 0:
        raise InvalidInputError("capsule dimensions must be positive")
    half = body_height / 2.0
    ang = np.linspace(-np.pi / 2.0, 0.0, arc_steps + 1)
    z_lo = -half + radius * np.sin(ang)
    r_lo = radius * np.cos(ang)
    z_hi = half + radius * np.sin(-ang[::-1])
    r_hi = radius * np.cos(ang[::-1])
    z = np.concatenate([z_lo, z_hi])
    r = np.concatenate([r_lo, r_hi])
    r[0] = 0.0
    r[-1] = 0.0
    return revolve(z, r, segments)


def closed_cylinder(radius: float, height: float, segments: int = 24) -> TriangleMesh:
    if radius <= 0 or height <= 0:
        raise InvalidInputError("cylinder dimensions must be positive")
    half = height / 2.0
    z = np.array([-half, -half, half, half])
    r = np.array([0.0, radius, radius, 0.0])
    return revolve(z, r, segments)


def hemisphere_shell(outer_radius: float, thickness: float, segments: int = 24,
                     arc_steps: int = 10) -> TriangleMesh:
    """Closed dome shell: outer dome, flat rim, inner dome."""
    if outer_radius <= 0 or not 0 < thickness < outer_radius:
        raise InvalidInputError("need 0 < thickness < outer_radius")
    inner = outer_radius - thickness
    ang = np.linspace(np.pi / 2.0, 0.0, arc_steps + 1)
    z_out = outer_radius * np.sin(ang)
    r_out = outer_radius * np.cos(ang)
    ang_in = np.linspace(0.0, np.pi / 2.0, arc_steps + 1)
    z_in = inner * np.sin(ang_in)
    r_in = inner * np.cos(ang_in)
    z = np.concatenate([z_out, z_in])
    r = np.concatenate([r_out, r_in])
    r[0] = 0.0
    r[-1] = 0.0
    return revolve(z, r, segments)


def ellipsoid(rx: float, ry: float, rz: float, subdivisions: int = 3) -> TriangleMesh:
    if min(rx, ry, rz) <= 0:
        raise InvalidInputError("ellipsoid radii must be positive")
    sphere = icosphere(subdivisions)
    return TriangleMesh(sphere.vertices * np.array([rx, ry, rz]), sphere.triangles)


def tube_along_arc(arc_center, arc_radius: float, tube_radius: float,
                   arc_span_deg: float = 240.0, arc_steps: int = 12,
                   tube_segments: int = 8) -> TriangleMesh:
    """Capped tube bent along a circular arc in the x-z plane.

    The arc is centered at ``arc_center`` and opens toward -x.  Both
    tube ends are closed with fans, so the result is watertight.
    """
    if arc_radius <= 0 or tube_radius <= 0 or not 0 < arc_span_deg < 360:
        raise InvalidInputError("bad tube-arc parameters")
    c = np.asarray(arc_center, dtype=np.float64)
    half_span = np.deg2rad(arc_span_deg) / 2.0
    # angle 0 points along +x (away from the opening)
    phis = np.linspace(-half_span, half_span, arc_steps + 1)
    taus = 2.0 * np.pi * np.arange(tube_segments) / tube_segments
    verts = []
    for phi in phis:
        ring_center = c + arc_radius * np.array([np.cos(phi), 0.0, np.sin(phi)])
        radial = np.array([np.cos(phi), 0.0, np.sin(phi)])
        binormal = np.array([0.0, 1.0, 0.0])
        for tau in taus:
            verts.append(
                ring_center
                + tube_radius * (np.cos(tau) * radial + np.sin(tau) * binormal)
            )
    tris = []
    for i in range(arc_steps):
        a = i * tube_segments
        b = (i + 1) * tube_segments
        for s in range(tube_segments):
            s2 = (s + 1) % tube_segments
            tris.append((a + s, a + s2, b + s2))
            tris.append((a + s, b + s2, b + s))
    start_cap = len(verts)
    verts.append(c + arc_radius * np.array([np.cos(phis[0]), 0.0, np.sin(phis[0])]))
    end_cap = len(verts)
    verts.append(c + arc_radius * np.array([np.cos(phis[-1]), 0.0, np.sin(phis[-1])]))
    for s in range(tube_segments):
        s2 = (s + 1) % tube_segments
        tris.append((start_cap, s2, s))
        last = arc_steps * tube_segments
        tris.append((end_cap, last + s, last + s2))
    return TriangleMesh(np.asarray(verts), np.asarray(tris, dtype=np.int64))


# ---------------------------------------------------------------------------
# benchmark categories

_PARAM_RANGES = {
    "bottle": {"radius": (0.25, 0.45), "body_height": (0.9, 1.6)},
    "can": {"radius": (0.3, 0.5), "height": (0.7, 1.4)},
    "helmet": {"outer_radius": (0.5, 0.9), "thickness_frac": (0.08, 0.16)},
    "jar": {"rx": (0.4, 0.7), "ry_frac": (0.8, 1.2), "rz": (0.5, 0.9)},
    "laptop": {
        "width": (0.9, 1.4),
        "depth": (0.6, 1.0),
        "base_thickness": (0.06, 0.12),
        "open_angle_deg": (95.0, 125.0),
    },
    "mug": {
        "radius": (0.35, 0.5),
        "height": (0.7, 1.1),
        "handle_arc_radius": (0.18, 0.28),
        "handle_tube_radius": (0.05, 0.09),
    },
}


def parameter_ranges(category: str) -> dict:
    if category not in CATEGORIES:
        raise InvalidInputError(f"unknown category {category!r}")
    return dict(_PARAM_RANGES[category])


def sample_spec(category: str, rng: np.random.Generator) -> ShapeSpec:
    """Draw one instance's parameters uniformly from the documented ranges."""
    ranges = parameter_ranges(category)
    params = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in ranges.items()}
    return ShapeSpec(category, params)


def build_mesh(spec: ShapeSpec) -> TriangleMesh:
    """Deterministically construct the mesh for a shape specification."""
    p = spec.params
    if spec.category == "bottle":
        return capsule(p["radius"], p["body_height"])
    if spec.category == "can":
        return closed_cylinder(p["radius"], p["height"])
    if spec.category == "helmet":
        r = p["outer_radius"]
        return hemisphere_shell(r, p["thickness_frac"] * r)
    if spec.category == "jar":
        return ellipsoid(p["rx"], p["ry_frac"] * p["rx"], p["rz"])
    if spec.category == "laptop":
        w, d, bt = p["width"], p["depth"], p["base_thickness"]
        base = box_mesh((w / 2, d / 2, bt / 2))
        # tilt back from vertical; 90 deg open angle means upright
        beta = np.deg2rad(p["open_angle_deg"] - 90.0)
        st = bt * 0.6
        sh = d  # screen as tall as the base is deep
        screen = box_mesh((w / 2, sh / 2, st / 2))
        alpha = beta + np.pi / 2.0
        rot = np.array(
            [
                [1.0, 0.0, 0.0],
                [0.0, np.cos(alpha), -np.sin(alpha)],
                [0.0, np.sin(alpha), np.cos(alpha)],
            ]
        )
        # screen long axis leans back away from the base; the hinge offset
        # of clearance + st keeps the two boxes strictly apart
        along = rot @ np.array([0.0, 1.0, 0.0])
        sv = screen.vertices @ rot.T
        hinge = np.array([0.0, -d / 2 - _PART_CLEARANCE - st, -bt / 2])
        sv = sv + hinge + along * (sh / 2)
        return merge_meshes([base, TriangleMesh(sv, screen.triangles)])
    if spec.category == "mug":
        r, h = p["radius"], p["height"]
        body = closed_cylinder(r, h)
        arc_r = p["handle_arc_radius"] * h
        tube_r = p["handle_tube_radius"] * h
        center = np.array([r + _PART_CLEARANCE + arc_r + tube_r, 0.0, 0.0])
        handle = tube_along_arc(center, arc_r, tube_r)
        return merge_meshes([body, handle])
    raise InvalidInputError(f"unknown category {spec.category!r}")
