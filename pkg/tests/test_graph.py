import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avalanche_lab.graph import (
    COORD_LIMIT,
    Cycle,
    InvalidVertexError,
    LatticeZd,
    RegularTree,
    RootedTreeStar,
    ball,
)

ALL_KINDS = [LatticeZd(1), LatticeZd(2), LatticeZd(3), RegularTree(3), RegularTree(5),
             Cycle(9), Cycle(100), RootedTreeStar(4), RootedTreeStar(5)]


def test_lattice_neighbor_order():
    g = LatticeZd(2)
    assert g.neighbors((0, 0)) == [(1, 0), (-1, 0), (0, 1), (0, -1)]
    assert len(g.neighbors(g.origin)) == 4


def test_tree_root_children():
    g = RegularTree(3)
    assert g.neighbors(()) == [(0,), (1,), (2,)]
    # parent first, then children by label
    assert g.neighbors((1,)) == [(), (1, 0), (1, 1)]


def test_treestar_root_degree():
    g = RootedTreeStar(4)
    assert len(g.neighbors(())) == 3
    assert g.degree_of(()) == 3
    assert g.degree_of((0,)) == 4


def test_degree_examples():
    assert Cycle(100).degree_of(0) == 2
    assert LatticeZd(3).degree_of((4, -1, 7)) == 6
    assert RootedTreeStar(5).degree_of((1, 2)) == 5


@pytest.mark.parametrize("g", ALL_KINDS, ids=lambda g: g.spec_string())
def test_neighbor_symmetry_and_no_duplicates(g):
    if isinstance(g, Cycle):
        vertices = range(g.n)
    else:
        vertices = ball(g, g.origin, 4)
    for v in vertices:
        nbrs = g.neighbors(v)
        assert len(nbrs) == len(set(nbrs))
        assert v not in nbrs
        for w in nbrs:
            assert v in g.neighbors(w)


@pytest.mark.parametrize("g", [LatticeZd(2), RegularTree(4), Cycle(17)],
                         ids=lambda g: g.spec_string())
def test_degree_constant_on_transitive_kinds(g):
    degrees = {g.degree_of(v) for v in ball(g, g.origin, 4)}
    assert degrees == {g.degree}
    assert all(len(g.neighbors(v)) == g.degree for v in ball(g, g.origin, 3))


@given(st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=4))
def test_lattice_roundtrip(coords):
    g = LatticeZd(len(coords))
    v = tuple(coords)
    assert g.parse_vertex(g.format_vertex(v)) == v


@given(st.integers(2, 6), st.lists(st.integers(0, 10), max_size=8))
def test_tree_roundtrip(delta, raw):
    g = RegularTree(delta)
    path = []
    for label in raw:
        limit = delta if not path else delta - 1
        path.append(label % limit)
    v = tuple(path)
    assert g.parse_vertex(g.format_vertex(v)) == v


def test_tree_root_serialization():
    g = RegularTree(4)
    assert g.format_vertex(()) == "t:"
    assert g.parse_vertex("t:") == ()
    assert g.format_vertex((0, 2, 1)) == "t:0.2.1"
    assert g.parse_vertex("t:0.2.1") == (0, 2, 1)


def test_cycle_serialization():
    g = Cycle(20)
    assert g.format_vertex(17) == "c:17"
    assert g.parse_vertex("c:17") == 17
    with pytest.raises(InvalidVertexError):
        g.parse_vertex("c:20")


def test_lattice_serialization():
    g = LatticeZd(2)
    assert g.format_vertex((1, -2)) == "z:1,-2"
    assert g.parse_vertex("z:1,-2") == (1, -2)


def test_invalid_vertices_rejected():
    with pytest.raises(InvalidVertexError):
        LatticeZd(2).neighbors((1,))
    with pytest.raises(InvalidVertexError):
        RegularTree(3).neighbors((3,))  # root labels stop at 2
    with pytest.raises(InvalidVertexError):
        RegularTree(3).neighbors((0, 2))  # non-root labels stop at 1
    with pytest.raises(InvalidVertexError):
        Cycle(5).neighbors(5)
    with pytest.raises(InvalidVertexError):
        LatticeZd(1).parse_vertex("t:0")


def test_bad_parameters_rejected():
    with pytest.raises(ValueError):
        RegularTree(1)
    with pytest.raises(ValueError):
        Cycle(2)
    with pytest.raises(ValueError):
        LatticeZd(0)
    with pytest.raises(ValueError):
        RootedTreeStar(1)


def test_coordinate_overflow_is_an_error():
    g = LatticeZd(1)
    with pytest.raises(OverflowError):
        g.neighbors((COORD_LIMIT,))


def test_cycle_wraps():
    g = Cycle(5)
    assert set(g.neighbors(0)) == {1, 4}
    assert set(g.neighbors(4)) == {0, 3}
