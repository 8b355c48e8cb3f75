"""Cross-section and rod lattice geometry.

The rod is a cubic lattice of atoms indexed in hatted (unit-spacing) integer
coordinates ``(t, i, j)``: ``t`` counts atomic layers along the axis, ``(i, j)``
are in-plane corner coordinates.  Physical positions are obtained by scaling
with ``1/k`` where ``k`` is the refinement (atoms per unit length).

A unit cell is addressed by its lower corner ``(t, i, j)``; its midpoint sits
at ``(t + 1/2, i + 1/2, j + 1/2)``.  The eight corners of a cell follow a fixed
direction-vector order (``CELL_DIRECTIONS`` below): four corners on the lower
axial layer, four on the upper, with matching in-plane offsets.  Surface and
end cells extend beyond the physical cross-section / rod ends; their corner
slots that fall outside the atom set are ghosts and carry no energy.

Atom ordering is lexicographic in ``(t, i, j)`` and is the canonical order for
file serialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import (
    DegenerateRod,
    DisconnectedCrossSection,
    EmptyCrossSection,
    MissingMidpoint,
    UnknownCell,
)

# Corner direction vectors of a unit cell, columns ordered so that the first
# four share axial offset -1/2 and the last four (+1/2) repeat the same
# in-plane offsets.  The reference discrete gradient of the identity map is
# exactly this matrix.
CELL_DIRECTIONS = 0.5 * np.array(
    [
        [-1, -1, -1, -1, +1, +1, +1, +1],
        [-1, -1, +1, +1, -1, -1, +1, +1],
        [-1, +1, +1, -1, -1, +1, +1, -1],
    ],
    dtype=float,
)

# Integer corner offsets (0/1 per coordinate) in the same column order.
CORNER_OFFSETS = (CELL_DIRECTIONS.T + 0.5).astype(np.int64)

REFERENCE_GRADIENT = CELL_DIRECTIONS  # identity discrete gradient, 3x8


def _corner_pairs():
    nn, nnn = [], []
    for m in range(8):
        for n in range(m + 1, 8):
            d2 = np.sum((CELL_DIRECTIONS[:, m] - CELL_DIRECTIONS[:, n]) ** 2)
            if abs(d2 - 1.0) < 1e-12:
                nn.append((m, n))
            elif abs(d2 - 2.0) < 1e-12:
                nnn.append((m, n))
    return tuple(nn), tuple(nnn)


# 12 cube edges and 12 face diagonals, as unordered corner-slot pairs.
NN_CORNER_PAIRS, NNN_CORNER_PAIRS = _corner_pairs()

# Each unordered bond appears twice in the ordered pair sums of a cell energy
# (weight 1/8 per ordered nearest-neighbour pair, 1/4 per ordered diagonal
# pair), so one unordered occurrence carries 1/4 resp. 1/2.  Summed over the
# (up to) four cells owning an edge, resp. two cells owning a diagonal, every
# physical bond receives total weight exactly 1.
NN_BOND_WEIGHT = 0.25
NNN_BOND_WEIGHT = 0.5

INTERIOR, SURFACE, END = 0, 1, 2

_EXT_SHIFTS = tuple(product((-1, 0, 1), repeat=2))


@dataclass(frozen=True)
class CrossSection:
    """In-plane lattice geometry of the rod.

    ``cells`` are integer coordinates of the unit squares making up the
    cross-section; the square ``(i, j)`` has midpoint ``(i+1/2, j+1/2)``.
    ``corners`` is the derived set of square corners, ``cells_ext`` /
    ``corners_ext`` the one-layer dilations used by surface cells.
    """

    cells: tuple
    corners: tuple
    cells_ext: tuple
    corners_ext: tuple

    @property
    def n_corners(self) -> int:
        return len(self.corners)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def midpoint_coords(self, cell) -> np.ndarray:
        return np.asarray(cell, dtype=float) + 0.5

    def corner_array(self) -> np.ndarray:
        return np.array(self.corners, dtype=np.int64)

    def inplane_edges(self, ordered: bool = False):
        """Corner pairs of ``corners`` at distance 1 (in-plane bonds)."""
        cset = set(self.corners)
        edges = []
        for (i, j) in self.corners:
            for di, dj in ((1, 0), (0, 1)):
                if (i + di, j + dj) in cset:
                    edges.append(((i, j), (i + di, j + dj)))
        if ordered:
            return edges + [(b, a) for a, b in edges]
        return edges


def _normalize_midpoint(point):
    a, b = point
    if isinstance(a, (int, np.integer)) and isinstance(b, (int, np.integer)):
        return int(a), int(b)
    ia, ib = a - 0.5, b - 0.5
    if abs(ia - round(ia)) > 1e-9 or abs(ib - round(ib)) > 1e-9:
        raise EmptyCrossSection(
            f"midpoint {point!r} is neither an integer cell index nor half-integer"
        )
    return int(round(ia)), int(round(ib))


def build_cross_section(midpoints) -> CrossSection:
    """Build a :class:`CrossSection` from unit-square midpoints.

    Accepts integer pairs ``(i, j)`` standing for the midpoint
    ``(i+1/2, j+1/2)``, or the half-integer midpoints themselves.  The union
    of the squares must be connected (4-neighbour adjacency), and every unit
    square whose four corners are all present must itself be listed.
    """
    cells = sorted({_normalize_midpoint(p) for p in midpoints})
    if not cells:
        raise EmptyCrossSection("cross-section needs at least one unit square")

    cell_set = set(cells)
    # 4-neighbour flood fill
    seen = {cells[0]}
    stack = [cells[0]]
    while stack:
        i, j = stack.pop()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = (i + di, j + dj)
            if nb in cell_set and nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if len(seen) != len(cells):
        raise DisconnectedCrossSection(
            f"{len(cells) - len(seen)} square(s) unreachable from {cells[0]}"
        )

    corners = sorted({(i + a, j + b) for (i, j) in cells for a in (0, 1) for b in (0, 1)})
    corner_set = set(corners)
    for (i, j) in {(i, j) for (i, j) in ((c[0] + d, c[1] + e) for c in corners for d in (-1, 0) for e in (-1, 0))}:
        if (i, j) not in cell_set and all(
            (i + a, j + b) in corner_set for a in (0, 1) for b in (0, 1)
        ):
            raise MissingMidpoint(
                f"square ({i},{j}) has all four corners present but is not a midpoint"
            )

    cells_ext = sorted({(i + di, j + dj) for (i, j) in cells for di, dj in _EXT_SHIFTS})
    corners_ext = sorted({(i + di, j + dj) for (i, j) in corners for di, dj in _EXT_SHIFTS})
    return CrossSection(tuple(cells), tuple(corners), tuple(cells_ext), tuple(corners_ext))


def unit_square_cross_section() -> CrossSection:
    return build_cross_section([(0, 0)])


@dataclass(frozen=True)
class CellCorners:
    """The eight corner slots of one cell in direction-vector order."""

    atom_ids: np.ndarray        # (8,) int, -1 for ghosts
    ghost: np.ndarray           # (8,) bool
    corner_coords: np.ndarray   # (8, 3) int hatted coordinates


@dataclass(frozen=True)
class RodLattice:
    """Atom and cell index structure of a rod at refinement ``k``.

    Atoms live on layers ``axial_origin .. axial_origin + n_layers - 1``
    crossed with the cross-section corners.  Cells cover the extended in-plane
    midpoints; axially they sit between consecutive layers, plus one end layer
    on each side when ``include_end_cells`` is set.
    """

    cross_section: CrossSection
    length: float
    k: int
    n_layers: int
    axial_origin: int = 0
    include_end_cells: bool = True

    # Derived index arrays (filled by the builder).
    atom_coords: np.ndarray = field(default=None, repr=False, compare=False)
    cell_axial: np.ndarray = field(default=None, repr=False, compare=False)
    cell_inplane: np.ndarray = field(default=None, repr=False, compare=False)
    cell_class: np.ndarray = field(default=None, repr=False, compare=False)
    cell_corner_atoms: np.ndarray = field(default=None, repr=False, compare=False)
    bond_cell: np.ndarray = field(default=None, repr=False, compare=False)
    bond_a: np.ndarray = field(default=None, repr=False, compare=False)
    bond_b: np.ndarray = field(default=None, repr=False, compare=False)
    bond_is_nnn: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def n_atoms(self) -> int:
        return self.atom_coords.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cell_axial.shape[0]

    @property
    def last_layer(self) -> int:
        return self.axial_origin + self.n_layers - 1

    @property
    def n_slices(self) -> int:
        return self.n_layers + 1 if self.include_end_cells else self.n_layers - 1

    @property
    def slice_of_cell(self) -> np.ndarray:
        first = self.axial_origin - 1 if self.include_end_cells else self.axial_origin
        return self.cell_axial - first

    @property
    def rod_length_snapped(self) -> float:
        """Axial extent actually covered by atoms, ``floor(k L)/k``."""
        return (self.n_layers - 1) / self.k

    def atom_index(self):
        return {tuple(c): idx for idx, c in enumerate(self.atom_coords)}

    def identity_positions(self) -> np.ndarray:
        return self.atom_coords.astype(float) / self.k

    def bond_weights(self) -> np.ndarray:
        return np.where(self.bond_is_nnn, NNN_BOND_WEIGHT, NN_BOND_WEIGHT)

    def interior_cell_ids(self) -> np.ndarray:
        return np.flatnonzero(self.cell_class == INTERIOR)


def _build_lattice(cs, length, k, n_layers, axial_origin, include_end_cells) -> RodLattice:
    layers = range(axial_origin, axial_origin + n_layers)
    atom_coords = np.array(
        [(t, i, j) for t in layers for (i, j) in cs.corners], dtype=np.int64
    )
    atom_id = {}
    for idx, (t, i, j) in enumerate(atom_coords):
        atom_id[(int(t), int(i), int(j))] = idx

    cell_ts = list(range(axial_origin, axial_origin + n_layers - 1))
    if include_end_cells:
        cell_ts = [axial_origin - 1] + cell_ts + [axial_origin + n_layers - 1]

    cell_set = set(cs.cells)
    axial, inplane, classes, corner_atoms = [], [], [], []
    for t in cell_ts:
        is_end = include_end_cells and (t == cell_ts[0] or t == cell_ts[-1])
        for (i, j) in cs.cells_ext:
            axial.append(t)
            inplane.append((i, j))
            if is_end:
                classes.append(END)
            elif (i, j) in cell_set:
                classes.append(INTERIOR)
            else:
                classes.append(SURFACE)
            ids = [
                atom_id.get((t + dt, i + di, j + dj), -1)
                for dt, di, dj in CORNER_OFFSETS
            ]
            corner_atoms.append(ids)

    lat = RodLattice(
        cross_section=cs,
        length=length,
        k=k,
        n_layers=n_layers,
        axial_origin=axial_origin,
        include_end_cells=include_end_cells,
        atom_coords=atom_coords,
        cell_axial=np.array(axial, dtype=np.int64),
        cell_inplane=np.array(inplane, dtype=np.int64),
        cell_class=np.array(classes, dtype=np.int8),
        cell_corner_atoms=np.array(corner_atoms, dtype=np.int64),
        bond_cell=None,
        bond_a=None,
        bond_b=None,
        bond_is_nnn=None,
    )
    _attach_bond_table(lat)
    return lat


def _attach_bond_table(lat: RodLattice) -> None:
    ids = lat.cell_corner_atoms
    cells = np.arange(ids.shape[0])
    rows_cell, rows_a, rows_b, rows_nnn = [], [], [], []
    for pairs, is_nnn in ((NN_CORNER_PAIRS, False), (NNN_CORNER_PAIRS, True)):
        for m, n in pairs:
            mask = (ids[:, m] >= 0) & (ids[:, n] >= 0)
            rows_cell.append(cells[mask])
            rows_a.append(ids[mask, m])
            rows_b.append(ids[mask, n])
            rows_nnn.append(np.full(mask.sum(), is_nnn, dtype=bool))
    bond_cell = np.concatenate(rows_cell)
    bond_a = np.concatenate(rows_a)
    bond_b = np.concatenate(rows_b)
    bond_is_nnn = np.concatenate(rows_nnn)
    # Stable evaluation order: cell-major, then pair kind.
    order = np.lexsort((bond_is_nnn.astype(np.int8), bond_cell))
    object.__setattr__(lat, "bond_cell", bond_cell[order])
    object.__setattr__(lat, "bond_a", bond_a[order])
    object.__setattr__(lat, "bond_b", bond_b[order])
    object.__setattr__(lat, "bond_is_nnn", bond_is_nnn[order])


def build_rod_lattice(cs: CrossSection, length: float, k: int) -> RodLattice:
    """Rod of physical length ``L`` at refinement ``k`` (with end cells)."""
    if length <= 0:
        raise DegenerateRod(f"rod length must be positive, got {length}")
    if k < 1:
        raise DegenerateRod(f"refinement must be >= 1, got {k}")
    n_ax = int(np.floor(k * length + 1e-12))
    if n_ax < 1:
        raise DegenerateRod(f"floor(k*L) = {n_ax}; rod shorter than one layer spacing")
    return _build_lattice(cs, float(length), int(k), n_ax + 1, 0, True)


def build_slab_lattice(cs: CrossSection, half_layers: int, k: int) -> RodLattice:
    """Axial slab with layers ``-m .. m`` and no end cells.

    This is the blown-up lattice used by crack cell problems: ``2m`` axial
    cell layers between ``2m + 1`` atom layers, interior and surface cells
    only.
    """
    m = int(half_layers)
    if m < 1:
        raise DegenerateRod("slab needs at least one layer on each side")
    return _build_lattice(cs, 2.0 * m / k, int(k), 2 * m + 1, -m, False)


def cell_corners(lat: RodLattice, cell) -> CellCorners:
    """Corner atoms of one cell, ghosts flagged.

    ``cell`` is either a cell index into the lattice tables or a tuple
    ``(t, i, j)`` addressing the cell with midpoint ``(t+1/2, i+1/2, j+1/2)``.
    """
    if isinstance(cell, (int, np.integer)):
        idx = int(cell)
        if not 0 <= idx < lat.n_cells:
            raise UnknownCell(f"cell index {idx} out of range")
    else:
        t, i, j = (int(v) for v in cell)
        match = np.flatnonzero(
            (lat.cell_axial == t)
            & (lat.cell_inplane[:, 0] == i)
            & (lat.cell_inplane[:, 1] == j)
        )
        if match.size == 0:
            raise UnknownCell(f"no cell with lower corner ({t},{i},{j})")
        idx = int(match[0])
    ids = lat.cell_corner_atoms[idx]
    t = lat.cell_axial[idx]
    i, j = lat.cell_inplane[idx]
    coords = np.array([(t + dt, i + di, j + dj) for dt, di, dj in CORNER_OFFSETS], dtype=np.int64)
    return CellCorners(atom_ids=ids.copy(), ghost=ids < 0, corner_coords=coords)
