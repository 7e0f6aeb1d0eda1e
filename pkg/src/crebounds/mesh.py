"""Linear triangle meshes: storage, text I/O, uniform refinement and point location.

A mesh carries element and boundary-edge tags plus, when it was produced by
``refine_uniform``, its lineage: every element knows its parent element and the
barycentric coordinates of its vertices inside that parent, and every boundary
edge knows the parent boundary edge and its parameter interval on it.  Lineage
lets load data and finite element fields be transferred exactly to refined
meshes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

AREA_TOL = 1e-14
LOCATE_TOL = 1e-12


class MeshFormatError(ValueError):
    """Malformed mesh file; the message carries the offending line number."""


class MeshTopologyError(ValueError):
    """Inverted or degenerate element, or inconsistent boundary description."""


@dataclass(eq=False)
class TriMesh:
    """Conforming P1 triangle mesh.

    Attributes:
        nodes: Coordinates, shape (Nn, 2).
        elements: Counter-clockwise vertex indices, shape (Ne, 3).
        boundary: Boundary edges as node pairs, shape (Nb, 2).
        boundary_tags: Tag of every boundary edge, shape (Nb,).
        element_tags: Region tag of every element, shape (Ne,).
        parent: Mesh this one was refined from, if any.
        parent_elem: Parent element of each element.
        parent_bary: Barycentrics of each element's vertices in its parent,
            shape (Ne, 3, 3).
        parent_edge: Parent boundary edge of each boundary edge.
        parent_edge_t: Parameter interval on the parent edge, shape (Nb, 2).
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    boundary_tags: np.ndarray
    element_tags: np.ndarray | None = None
    parent: TriMesh | None = field(default=None, repr=False)
    parent_elem: np.ndarray | None = field(default=None, repr=False)
    parent_bary: np.ndarray | None = field(default=None, repr=False)
    parent_edge: np.ndarray | None = field(default=None, repr=False)
    parent_edge_t: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float).reshape(-1, 2)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64).reshape(-1, 3)
        self.boundary = np.ascontiguousarray(self.boundary, dtype=np.int64).reshape(-1, 2)
        self.boundary_tags = np.asarray(self.boundary_tags, dtype=object).reshape(-1)
        if self.element_tags is None:
            self.element_tags = np.full(len(self.elements), "domain", dtype=object)
        self.element_tags = np.asarray(self.element_tags, dtype=object).reshape(-1)
        self._validate()

    # basic geometry

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def vertices(self) -> np.ndarray:
        """Element vertex coordinates, shape (Ne, 3, 2)."""
        return self.nodes[self.elements]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        v = self.vertices
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices.mean(axis=1)

    @cached_property
    def diameter(self) -> float:
        """Bounding-box diagonal of the mesh."""
        return float(np.linalg.norm(self.nodes.max(axis=0) - self.nodes.min(axis=0)))

    @cached_property
    def element_size(self) -> np.ndarray:
        """Longest edge of every element."""
        v = self.vertices
        return np.linalg.norm(v - np.roll(v, -1, axis=1), axis=2).max(axis=1)

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine maps from the reference triangle, columns x1-x0 and x2-x0."""
        v = self.vertices
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three hat functions on each element, shape (Ne, 3, 2)."""
        Jinv = np.linalg.inv(self.jacobians)
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        return np.einsum("ia,eab->eib", ref, Jinv)

    # topology

    @cached_property
    def _edge_data(self):
        el = self.elements
        loc = np.stack([el, np.roll(el, -1, axis=1)], axis=2).reshape(-1, 2)
        key = np.sort(loc, axis=1)
        edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            bad = edges[np.argmax(counts > 2)]
            raise MeshTopologyError(f"edge {tuple(bad)} is shared by more than two elements")
        elem_edges = inverse.reshape(-1, 3)
        edge_elems = np.full((len(edges), 2), -1, dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        owner = order // 3
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        edge_elems[inverse[order][first], 0] = owner[first]
        edge_elems[inverse[order][~first], 1] = owner[~first]
        sign = np.where(edge_elems[elem_edges, 0] == np.arange(len(el))[:, None], 1.0, -1.0)
        return edges, elem_edges, edge_elems, sign

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted node pairs."""
        return self._edge_data[0]

    @property
    def elem_edges(self) -> np.ndarray:
        """Edge index of local edge k = (v_k, v_k+1) of every element."""
        return self._edge_data[1]

    @property
    def edge_elems(self) -> np.ndarray:
        """The one or two elements of every edge, -1 when absent."""
        return self._edge_data[2]

    @property
    def elem_edge_sign(self) -> np.ndarray:
        """+1 where the element owns the edge normal, -1 otherwise."""
        return self._edge_data[3]

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Unit normal of each edge, outward from its first element."""
        e0 = self.edge_elems[:, 0]
        k = np.argmax(self.elem_edges[e0] == np.arange(len(self.edges))[:, None], axis=1)
        a = self.elements[e0, k]
        b = self.elements[e0, (k + 1) % 3]
        d = self.nodes[b] - self.nodes[a]
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    @cached_property
    def boundary_edge_ids(self) -> np.ndarray:
        """Index into ``edges`` of every boundary edge."""
        lookup = {tuple(e): i for i, e in enumerate(self.edges.tolist())}
        return np.array([lookup[tuple(sorted(b))] for b in self.boundary.tolist()], dtype=np.int64)

    @cached_property
    def boundary_normals(self) -> np.ndarray:
        """Outward unit normal of every boundary edge."""
        return self.edge_normals[self.boundary_edge_ids]

    @cached_property
    def boundary_lengths(self) -> np.ndarray:
        return self.edge_lengths[self.boundary_edge_ids]

    @cached_property
    def edge_tags(self) -> np.ndarray:
        """Boundary tag of every edge, None for interior edges."""
        tags = np.full(len(self.edges), None, dtype=object)
        tags[self.boundary_edge_ids] = self.boundary_tags
        return tags

    @cached_property
    def node_patches(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR arrays (offsets, element*3 + local index) of the elements around each node."""
        flat = self.elements.reshape(-1)
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_nodes)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return offsets, order

    def nodes_with_tag(self, tag: str) -> np.ndarray:
        """Sorted nodes lying on boundary edges carrying ``tag``."""
        return np.unique(self.boundary[self.boundary_tags == tag])

    @property
    def tags(self) -> list[str]:
        return sorted(set(self.boundary_tags.tolist()))

    def _validate(self):
        if self.n_elements == 0:
            raise MeshTopologyError("mesh has no elements")
        if self.elements.min() < 0 or self.elements.max() >= self.n_nodes:
            raise MeshTopologyError("element references a missing node")
        if len(self.boundary) and (self.boundary.min() < 0 or self.boundary.max() >= self.n_nodes):
            raise MeshTopologyError("boundary edge references a missing node")
        tol = AREA_TOL * self.diameter**2
        bad = np.flatnonzero(self.signed_areas <= tol)
        if len(bad):
            e = int(bad[0])
            kind = "degenerate" if abs(self.signed_areas[e]) <= tol else "clockwise"
            raise MeshTopologyError(f"element {e} is {kind}")
        if len(self.element_tags) != self.n_elements:
            raise MeshTopologyError("element tag count does not match element count")
        if len(self.boundary_tags) != len(self.boundary):
            raise MeshTopologyError("boundary tag count does not match edge count")
        edges = self.edges
        lookup = {tuple(e): i for i, e in enumerate(edges.tolist())}
        topo = set(np.flatnonzero(self.edge_elems[:, 1] < 0).tolist())
        listed = set()
        for b in self.boundary.tolist():
            i = lookup.get(tuple(sorted(b)))
            if i is None or i not in topo:
                raise MeshTopologyError(f"boundary edge {tuple(b)} is not an edge of the mesh boundary")
            if i in listed:
                raise MeshTopologyError(f"boundary edge {tuple(b)} is listed twice")
            listed.add(i)
        missing = topo - listed
        if missing:
            raise MeshTopologyError(f"boundary edge {tuple(edges[min(missing)])} has no tag")

    # lineage

    def lineage_to(self, ancestor: TriMesh) -> tuple[np.ndarray, np.ndarray]:
        """Element lineage relative to ``ancestor``.

        Returns:
            Ancestor element of every element and barycentrics of its vertices
            in that ancestor element, shape (Ne, 3, 3).

        Raises:
            ValueError: If ``ancestor`` is not in this mesh's refinement chain.
        """
        elem = np.arange(self.n_elements)
        bary = np.broadcast_to(np.eye(3), (self.n_elements, 3, 3)).copy()
        m = self
        while m is not ancestor:
            if m.parent is None:
                raise ValueError("mesh does not descend from the given ancestor")
            bary = np.einsum("eij,ejk->eik", bary, m.parent_bary[elem])
            elem = m.parent_elem[elem]
            m = m.parent
        return elem, bary

    def boundary_lineage_to(self, ancestor: TriMesh) -> tuple[np.ndarray, np.ndarray]:
        """Ancestor boundary edge and parameter interval of every boundary edge."""
        edge = np.arange(len(self.boundary))
        t = np.tile([0.0, 1.0], (len(edge), 1))
        m = self
        while m is not ancestor:
            if m.parent is None:
                raise ValueError("mesh does not descend from the given ancestor")
            pt = m.parent_edge_t[edge]
            t = pt[:, :1] + (pt[:, 1:] - pt[:, :1]) * t
            edge = m.parent_edge[edge]
            m = m.parent
        return edge, t

    def descends_from(self, ancestor: TriMesh) -> bool:
        m = self
        while m is not None:
            if m is ancestor:
                return True
            m = m.parent
        return False

    # point location

    @cached_property
    def _tree(self):
        v = self.vertices
        reach = np.linalg.norm(v - self.centroids[:, None, :], axis=2).max()
        return cKDTree(self.centroids), reach

    def barycentric(self, elem: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of ``pts`` (N, 2) in elements ``elem`` (N,)."""
        J = self.jacobians[elem]
        rhs = pts - self.vertices[elem, 0]
        xi = np.linalg.solve(J, rhs[..., None])[..., 0]
        return np.column_stack([1.0 - xi.sum(axis=1), xi])

    def _inside(self, elem, pts):
        bary = self.barycentric(elem, pts)
        L = np.linalg.norm(self.vertices[elem] - np.roll(self.vertices[elem], 1, axis=1), axis=2)
        # opposite-edge length over twice the area turns a distance into a barycentric
        slack = LOCATE_TOL * self.diameter * np.roll(L, -1, axis=1) / (2.0 * self.areas[elem, None])
        return np.all(bary >= -slack, axis=1), bary

    def locate_point(self, p) -> tuple[int, np.ndarray] | None:
        """Element containing ``p`` and its barycentric coordinates.

        Points on shared edges or vertices go to the lowest element index.
        Returns None when ``p`` lies outside the mesh.
        """
        p = np.asarray(p, dtype=float).reshape(2)
        tree, reach = self._tree
        cand = np.array(sorted(tree.query_ball_point(p, reach * (1 + 1e-9) + LOCATE_TOL * self.diameter)), dtype=np.int64)
        if len(cand) == 0:
            return None
        ok, bary = self._inside(cand, np.broadcast_to(p, (len(cand), 2)))
        if not ok.any():
            return None
        i = int(np.argmax(ok))
        return int(cand[i]), bary[i]

    def locate_points(self, pts: np.ndarray, k: int = 12) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised point location.

        Returns:
            Element index per point (-1 when outside) and barycentrics (N, 3).
        """
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        n = len(pts)
        tree, _ = self._tree
        k = min(k, self.n_elements)
        _, cand = tree.query(pts, k=k)
        cand = cand.reshape(n, k)
        elem = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        # candidates sorted by element index so the first hit is the lowest index
        cand = np.sort(cand, axis=1)
        for j in range(k):
            todo = np.flatnonzero(elem < 0)
            if len(todo) == 0:
                break
            ok, b = self._inside(cand[todo, j], pts[todo])
            hit = todo[ok]
            elem[hit] = cand[hit, j]
            bary[hit] = b[ok]
        for i in np.flatnonzero(elem < 0):
            r = self.locate_point(pts[i])
            if r is not None:
                elem[i], bary[i] = r
        return elem, bary


def refine_uniform(mesh: TriMesh, levels: int = 1) -> TriMesh:
    """Split every triangle into four at its edge midpoints, ``levels`` times."""
    if levels < 0:
        raise ValueError("levels must be non-negative")
    for _ in range(levels):
        mesh = _refine_once(mesh)
    return mesh


_CHILDREN = np.array([[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]])
_CHILD_BARY = np.array(
    [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]]
)


def _refine_once(mesh: TriMesh) -> TriMesh:
    nn = mesh.n_nodes
    mids = 0.5 * (mesh.nodes[mesh.edges[:, 0]] + mesh.nodes[mesh.edges[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])
    local = np.hstack([mesh.elements, nn + mesh.elem_edges])  # a, b, c, m_ab, m_bc, m_ca
    elements = local[:, _CHILDREN].reshape(-1, 3)
    ne = mesh.n_elements
    parent_elem = np.repeat(np.arange(ne), 4)
    parent_bary = np.tile(_CHILD_BARY[_CHILDREN], (ne, 1, 1))
    m = nn + mesh.boundary_edge_ids
    b = mesh.boundary
    boundary = np.stack([np.column_stack([b[:, 0], m]), np.column_stack([m, b[:, 1]])], axis=1).reshape(-1, 2)
    nb = len(b)
    return TriMesh(
        nodes=nodes,
        elements=elements,
        boundary=boundary,
        boundary_tags=np.repeat(mesh.boundary_tags, 2),
        element_tags=np.repeat(mesh.element_tags, 4),
        parent=mesh,
        parent_elem=parent_elem,
        parent_bary=parent_bary,
        parent_edge=np.repeat(np.arange(nb), 2),
        parent_edge_t=np.tile([[0.0, 0.5], [0.5, 1.0]], (nb, 1)),
    )


def load_mesh(path: str | Path) -> TriMesh:
    """Read a mesh in the ``trimesh 2d`` text format.

    The format is line oriented, ``#`` starts a comment and indices are
    zero based::

        trimesh 2d
        nodes N
        x y                 (N lines)
        elements M
        i j k [region]      (M lines)
        boundary B
        i j tag             (B lines)
    """
    lines = []
    with open(path) as fh:
        for no, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                lines.append((no, text.split()))
    return _parse(lines)


def parse_mesh(text: str) -> TriMesh:
    """Parse mesh text (same format as ``load_mesh``)."""
    lines = []
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.split("#", 1)[0].strip()
        if s:
            lines.append((no, s.split()))
    return _parse(lines)


def _parse(lines) -> TriMesh:
    it = iter(lines)

    def take(what):
        try:
            return next(it)
        except StopIteration:
            last = lines[-1][0] if lines else 0
            raise MeshFormatError(f"line {last}: unexpected end of file, expected {what}") from None

    no, tok = take("header")
    if tok != ["trimesh", "2d"]:
        raise MeshFormatError(f"line {no}: expected header 'trimesh 2d'")

    def section(name):
        no, tok = take(f"'{name}' section")
        if len(tok) != 2 or tok[0] != name:
            raise MeshFormatError(f"line {no}: expected '{name} <count>'")
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshFormatError(f"line {no}: bad count {tok[1]!r}") from None
        if count < 0:
            raise MeshFormatError(f"line {no}: negative count")
        return count

    def row(what, n_num, conv, tag):
        no, tok = take(what)
        want = n_num + (1 if tag == "required" else 0)
        if len(tok) < want or len(tok) > n_num + (1 if tag else 0):
            raise MeshFormatError(f"line {no}: malformed {what}")
        try:
            vals = [conv(t) for t in tok[:n_num]]
        except ValueError:
            raise MeshFormatError(f"line {no}: malformed {what}") from None
        return no, vals, (tok[n_num] if len(tok) > n_num else None)

    nn = section("nodes")
    nodes = np.array([row("node", 2, float, None)[1] for _ in range(nn)]).reshape(-1, 2)
    ne = section("elements")
    els, etags = [], []
    for _ in range(ne):
        no, vals, tag = row("element", 3, int, "optional")
        if min(vals) < 0 or max(vals) >= nn:
            raise MeshFormatError(f"line {no}: node index out of range")
        els.append(vals)
        etags.append(tag or "domain")
    nb = section("boundary")
    bnd, btags = [], []
    for _ in range(nb):
        no, vals, tag = row("boundary edge", 2, int, "required")
        if min(vals) < 0 or max(vals) >= nn:
            raise MeshFormatError(f"line {no}: node index out of range")
        bnd.append(vals)
        btags.append(tag)
    extra = next(it, None)
    if extra is not None:
        raise MeshFormatError(f"line {extra[0]}: trailing content")
    return TriMesh(nodes, np.array(els).reshape(-1, 3), np.array(bnd).reshape(-1, 2), btags, etags)


def save_mesh(mesh: TriMesh, path: str | Path) -> None:
    """Write ``mesh`` in the format read by ``load_mesh``."""
    out = ["trimesh 2d", f"nodes {mesh.n_nodes}"]
    out += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    out.append(f"elements {mesh.n_elements}")
    out += [f"{a} {b} {c} {t}" for (a, b, c), t in zip(mesh.elements.tolist(), mesh.element_tags)]
    out.append(f"boundary {len(mesh.boundary)}")
    out += [f"{a} {b} {t}" for (a, b), t in zip(mesh.boundary.tolist(), mesh.boundary_tags)]
    Path(path).write_text("\n".join(out) + "\n")
