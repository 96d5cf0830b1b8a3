"""Lazy transitive graphs: Z^d, regular trees, cycles, and the rooted tree
with root degree n-1.

Vertices are plain hashable encodings rather than node objects, so graphs of
unbounded size cost nothing until a vertex is touched:

* ``LatticeZd(d)``      -- d-tuples of ints, origin ``(0,)*d``
* ``RegularTree(delta)``-- label paths from the root, origin ``()``
* ``Cycle(n)``          -- ints mod n, origin ``0``
* ``RootedTreeStar(n)`` -- label paths from the root, origin ``()``

Tree paths are canonical: the root's children carry labels ``0..k-1`` where k
is the root's child count, every other vertex's children carry labels up to
its own child count, and the parent is the path with the last label removed.
Comparing encodings (tuple/int ordering) gives the canonical vertex order
used for deterministic tie-breaking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

Vertex = Union[int, tuple]

# Z^d coordinates are bounded-width by contract; stepping past the bound is
# an error, not wraparound.  Desk-scale runs stay many orders below this.
COORD_LIMIT = 2**62


class InvalidVertexError(ValueError):
    """The vertex encoding does not belong to the given graph."""


def _check_tree_path(v, root_children: int, child_count: int) -> None:
    if not isinstance(v, tuple):
        raise InvalidVertexError(f"tree vertex must be a label path, got {v!r}")
    for depth, label in enumerate(v):
        limit = root_children if depth == 0 else child_count
        if not isinstance(label, int) or not 0 <= label < limit:
            raise InvalidVertexError(f"label {label!r} at depth {depth} out of range in {v!r}")


def _tree_neighbors(v: tuple, root_children: int, child_count: int) -> list:
    # parent first (if any), then children by label
    out = [] if not v else [v[:-1]]
    n = root_children if not v else child_count
    out.extend(v + (i,) for i in range(n))
    return out


@dataclass(frozen=True)
class LatticeZd:
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("lattice dimension must be >= 1")

    @property
    def origin(self) -> Vertex:
        return (0,) * self.d

    @property
    def degree(self) -> int:
        return 2 * self.d

    def validate(self, v: Vertex) -> None:
        if not (isinstance(v, tuple) and len(v) == self.d and all(isinstance(c, int) for c in v)):
            raise InvalidVertexError(f"not a Z^{self.d} vertex: {v!r}")

    def neighbors(self, v: Vertex) -> list:
        self.validate(v)
        if any(abs(c) >= COORD_LIMIT for c in v):
            raise OverflowError(f"coordinate bound exceeded at {v!r}")
        out = []
        for axis in range(self.d):
            for sign in (1, -1):
                out.append(v[:axis] + (v[axis] + sign,) + v[axis + 1 :])
        return out

    def degree_of(self, v: Vertex) -> int:
        self.validate(v)
        return 2 * self.d

    def format_vertex(self, v: Vertex) -> str:
        self.validate(v)
        return "z:" + ",".join(str(c) for c in v)

    def parse_vertex(self, s: str) -> Vertex:
        if not s.startswith("z:"):
            raise InvalidVertexError(f"expected 'z:' prefix: {s!r}")
        try:
            v = tuple(int(c) for c in s[2:].split(","))
        except ValueError as e:
            raise InvalidVertexError(str(e)) from None
        self.validate(v)
        return v

    def spec_string(self) -> str:
        return f"zd:{self.d}"


@dataclass(frozen=True)
class RegularTree:
    """Infinite tree with common degree delta >= 2."""

    delta: int

    def __post_init__(self):
        if self.delta < 2:
            raise ValueError("regular tree degree must be >= 2")

    @property
    def origin(self) -> Vertex:
        return ()

    @property
    def degree(self) -> int:
        return self.delta

    def _root_children(self) -> int:
        return self.delta

    def _child_count(self) -> int:
        return self.delta - 1

    def validate(self, v: Vertex) -> None:
        _check_tree_path(v, self.delta, self.delta - 1)

    def neighbors(self, v: Vertex) -> list:
        self.validate(v)
        return _tree_neighbors(v, self.delta, self.delta - 1)

    def degree_of(self, v: Vertex) -> int:
        self.validate(v)
        return self.delta

    def format_vertex(self, v: Vertex) -> str:
        self.validate(v)
        return "t:" + ".".join(str(c) for c in v)

    def parse_vertex(self, s: str) -> Vertex:
        v = _parse_tree_path(s)
        self.validate(v)
        return v

    def spec_string(self) -> str:
        return f"tree:{self.delta}"


@dataclass(frozen=True)
class Cycle:
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("cycle length must be >= 3")

    @property
    def origin(self) -> Vertex:
        return 0

    @property
    def degree(self) -> int:
        return 2

    def validate(self, v: Vertex) -> None:
        if not (isinstance(v, int) and 0 <= v < self.n):
            raise InvalidVertexError(f"not a C_{self.n} vertex: {v!r}")

    def neighbors(self, v: Vertex) -> list:
        self.validate(v)
        return [(v + 1) % self.n, (v - 1) % self.n]

    def degree_of(self, v: Vertex) -> int:
        self.validate(v)
        return 2

    def format_vertex(self, v: Vertex) -> str:
        self.validate(v)
        return f"c:{v}"

    def parse_vertex(self, s: str) -> Vertex:
        if not s.startswith("c:"):
            raise InvalidVertexError(f"expected 'c:' prefix: {s!r}")
        try:
            v = int(s[2:])
        except ValueError as e:
            raise InvalidVertexError(str(e)) from None
        self.validate(v)
        return v

    def spec_string(self) -> str:
        return f"cycle:{self.n}"


@dataclass(frozen=True)
class RootedTreeStar:
    """Rooted tree where the root has degree n-1 and every other vertex n."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("rooted tree parameter must be >= 2")

    @property
    def origin(self) -> Vertex:
        return ()

    def _root_children(self) -> int:
        return self.n - 1

    def _child_count(self) -> int:
        return self.n - 1

    def validate(self, v: Vertex) -> None:
        _check_tree_path(v, self.n - 1, self.n - 1)

    def neighbors(self, v: Vertex) -> list:
        self.validate(v)
        return _tree_neighbors(v, self.n - 1, self.n - 1)

    def degree_of(self, v: Vertex) -> int:
        self.validate(v)
        return self.n - 1 if not v else self.n

    def format_vertex(self, v: Vertex) -> str:
        self.validate(v)
        return "t:" + ".".join(str(c) for c in v)

    def parse_vertex(self, s: str) -> Vertex:
        v = _parse_tree_path(s)
        self.validate(v)
        return v

    def spec_string(self) -> str:
        return f"treestar:{self.n}"


GraphKind = Union[LatticeZd, RegularTree, Cycle, RootedTreeStar]


def _parse_tree_path(s: str) -> tuple:
    if not s.startswith("t:"):
        raise InvalidVertexError(f"expected 't:' prefix: {s!r}")
    body = s[2:]
    if not body:
        return ()
    try:
        return tuple(int(c) for c in body.split("."))
    except ValueError as e:
        raise InvalidVertexError(str(e)) from None


def ball(g: GraphKind, center: Vertex, radius: int) -> set:
    """All vertices within graph distance `radius` of `center`."""
    seen = {center}
    frontier: Iterable[Vertex] = [center]
    for _ in range(radius):
        nxt = []
        for v in frontier:
            for w in g.neighbors(v):
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return seen
