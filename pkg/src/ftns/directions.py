"""Direction sampling on the unit sphere.

The definitions quantify over every unit direction; we sample and say so.
Rejection verdicts (complex spectrum, defective symbol) found on a sample
are sound; acceptance verdicts are a dense-sampling heuristic backed by
eigenvalue continuity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["DirectionSample", "icosphere", "fibonacci_sphere", "default_sample"]


@dataclass(frozen=True)
class DirectionSample:
    directions: np.ndarray          # (M, D), rows unit
    scheme: str

    def __post_init__(self):
        arr = np.asarray(self.directions, dtype=float)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("direction sample must be a nonempty (M, D) array")
        norms = np.linalg.norm(arr, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            arr = arr / norms[:, None]
        object.__setattr__(self, "directions", arr)
        self.directions.flags.writeable = False

    def __len__(self):
        return self.directions.shape[0]

    def __iter__(self):
        return iter(self.directions)

    @classmethod
    def explicit(cls, vectors):
        return cls(np.atleast_2d(np.asarray(vectors, dtype=float)), "explicit")

    @classmethod
    def merged(cls, *samples):
        return cls(np.vstack([s.directions for s in samples]),
                   "+".join(s.scheme for s in samples))


def icosphere(level=4):
    """Vertices of a subdivided icosahedron; level 4 gives 2562 points."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = []
    for a in (-1.0, 1.0):
        for b in (-phi, phi):
            verts += [(a, b, 0.0), (0.0, a, b), (b, 0.0, a)]
    verts = [np.array(v) / np.linalg.norm(v) for v in verts]
    faces = _icosahedron_faces(verts)
    for _ in range(level):
        verts, faces = _subdivide(verts, faces)
    return DirectionSample(np.array(verts), f"icosphere-{level}")


def _icosahedron_faces(verts):
    # faces = triangles of nearest neighbours (edge length is the minimum)
    n = len(verts)
    d2 = np.array([[np.sum((verts[i] - verts[j]) ** 2) for j in range(n)] for i in range(n)])
    edge2 = np.min(d2[d2 > 1e-12])
    faces = []
    for i in range(n):
        for j in range(i + 1, n):
            if d2[i, j] > edge2 + 1e-9:
                continue
            for k in range(j + 1, n):
                if d2[i, k] <= edge2 + 1e-9 and d2[j, k] <= edge2 + 1e-9:
                    faces.append((i, j, k))
    assert len(faces) == 20
    return faces


def _subdivide(verts, faces):
    verts = list(verts)
    cache = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            m = verts[i] + verts[j]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    new_faces = []
    for (i, j, k) in faces:
        a, b, c = midpoint(i, j), midpoint(j, k), midpoint(k, i)
        new_faces += [(i, a, c), (a, j, b), (c, b, k), (a, b, c)]
    return verts, new_faces


def fibonacci_sphere(count):
    """Fibonacci lattice on S^2."""
    i = np.arange(count, dtype=float) + 0.5
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    theta = np.pi * (1.0 + np.sqrt(5.0)) * i
    pts = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
    return DirectionSample(pts, f"fibonacci-{count}")


def random_sphere(count, D=3, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((count, D))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    return DirectionSample(pts, f"random-{count}-seed{seed}")


def circle(count):
    theta = 2.0 * np.pi * np.arange(count) / count
    return DirectionSample(np.stack([np.cos(theta), np.sin(theta)], axis=1), f"circle-{count}")


def default_sample(D=3, dense=True, seed=0):
    """Default analysis sample: icosphere level 4 plus 100 random points.

    ``dense=False`` swaps in a light sample for quick checks.
    """
    if D == 1:
        return DirectionSample(np.array([[1.0], [-1.0]]), "pm-line")
    if D == 2:
        return circle(256 if dense else 32)
    if D == 3:
        base = icosphere(4 if dense else 1)
        return DirectionSample.merged(base, random_sphere(100, 3, seed))
    return random_sphere(512 if dense else 64, D, seed)
