"""Star-shaped network geometry.

A network of ``I`` rays of common length ``R`` glued at a single vertex.
Points are pairs ``(x, ray)`` with rays numbered from 1; every point with
``x == 0`` is the vertex regardless of its ray label.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConsistencyError, DomainError

VERTEX_RULES = ("continuous", "lower-envelope", "upper-envelope")


@dataclass(frozen=True)
class StarNetwork:
    ray_count: int
    ray_length: float

    def __post_init__(self):
        if int(self.ray_count) != self.ray_count or self.ray_count < 2:
            raise DomainError(f"a star network needs at least 2 rays, got {self.ray_count}")
        if not np.isfinite(self.ray_length) or self.ray_length <= 0:
            raise DomainError(f"ray length must be positive, got {self.ray_length}")

    @property
    def rays(self) -> range:
        return range(1, self.ray_count + 1)

    def point(self, coord: float, ray: int) -> "NetworkPoint":
        return NetworkPoint(ray, coord, self)

    @property
    def vertex(self) -> "NetworkPoint":
        return NetworkPoint(1, 0.0, self)


@dataclass(frozen=True, eq=False)
class NetworkPoint:
    ray: int
    coord: float
    network: StarNetwork | None = None

    def __post_init__(self):
        if not np.isfinite(self.coord) or self.coord < 0:
            raise DomainError(f"coordinate {self.coord} is negative or not finite")
        if self.network is not None:
            if self.coord > self.network.ray_length:
                raise DomainError(
                    f"coordinate {self.coord} exceeds ray length {self.network.ray_length}"
                )
            if self.ray not in self.network.rays:
                raise DomainError(f"ray {self.ray} not in 1..{self.network.ray_count}")
        elif self.ray < 1:
            raise DomainError(f"ray index must be >= 1, got {self.ray}")

    @property
    def is_vertex(self) -> bool:
        return self.coord == 0.0

    def __eq__(self, other):
        if not isinstance(other, NetworkPoint):
            return NotImplemented
        if self.is_vertex and other.is_vertex:
            return True
        return self.ray == other.ray and self.coord == other.coord

    def __hash__(self):
        if self.is_vertex:
            return hash((0, 0.0))
        return hash((self.ray, self.coord))


def geodesic_distance(p: NetworkPoint, q: NetworkPoint) -> float:
    """Length of the shortest path between two points of the network.

    Points on the same ray are joined along it; points on different rays
    must pass through the vertex.
    """
    if p.network is not None and q.network is not None and p.network != q.network:
        raise DomainError("points belong to different networks")
    net = p.network or q.network
    if net is not None:
        for pt in (p, q):
            if pt.coord > net.ray_length or pt.ray not in net.rays:
                raise DomainError(f"point ({pt.coord}, {pt.ray}) is not on the network")
    if p.ray == q.ray:
        return abs(p.coord - q.coord)
    return p.coord + q.coord


@dataclass(frozen=True)
class RayFunction:
    """A function on the network given ray by ray.

    ``per_ray[i]`` is evaluated on ray ``i + 1``. The vertex value is fixed by
    ``vertex_rule``: ``continuous`` demands all rays agree at 0, while the
    envelope rules pick the min (lower semicontinuous class) or max (upper
    semicontinuous class) of the ray values at 0.
    """

    per_ray: Sequence[Callable[[float], float]]
    vertex_rule: str = "continuous"
    rtol: float = 1e-9

    def __post_init__(self):
        if self.vertex_rule not in VERTEX_RULES:
            raise DomainError(f"unknown vertex rule {self.vertex_rule!r}")
        object.__setattr__(self, "per_ray", tuple(self.per_ray))

    @classmethod
    def from_grid(cls, nodes, values, vertex_rule="continuous"):
        """Piecewise-linear interpolant of nodal values, one array per ray."""
        nodes = np.asarray(nodes, dtype=float)
        fns = [_linear_interpolant(nodes, np.asarray(v, dtype=float)) for v in values]
        return cls(fns, vertex_rule)

    @property
    def ray_count(self) -> int:
        return len(self.per_ray)

    def __call__(self, point: NetworkPoint) -> float:
        if point.is_vertex:
            return vertex_value(self)
        return float(self.per_ray[point.ray - 1](point.coord))


def _linear_interpolant(nodes, values):
    def f(x):
        return np.interp(x, nodes, values)

    return f


def vertex_value(f: RayFunction) -> float:
    at_zero = [float(fi(0.0)) for fi in f.per_ray]
    if f.vertex_rule == "lower-envelope":
        return min(at_zero)
    if f.vertex_rule == "upper-envelope":
        return max(at_zero)
    ref = at_zero[0]
    tol = f.rtol * max(1.0, abs(ref))
    for j, val in enumerate(at_zero[1:], start=2):
        if abs(val - ref) > tol:
            raise ConsistencyError(
                f"rays 1 and {j} disagree at the vertex: {ref!r} vs {val!r}"
            )
    return ref
