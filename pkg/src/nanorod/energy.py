"""Total strain energy of lattice deformations and related measurements.

The energy of a deformation is the sum of cell energies over interior,
surface, and end cells.  Because every physical bond carries total weight 1
across its owning cells, the cell decomposition equals the plain sum over
bonds; :func:`pair_sum_energy` evaluates that sum independently (bonds
enumerated from atom coordinates, not from cell tables) and serves as an
oracle for :func:`total_energy`.

Positions are physical: neighbouring atoms sit ~1/k apart.  Bond lengths are
rescaled by k before the pair potentials see them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameters, ModelNotPairwise, NonFinitePosition, OutOfDomain
from .geometry import discrete_gradient, reflection_distance, rigid_distance
from .lattice import (
    CELL_DIRECTIONS,
    CORNER_OFFSETS,
    INTERIOR,
    RodLattice,
    _build_lattice,
)
from .potentials import CellEnergyModel, elastic_threshold

SQRT2 = np.sqrt(2.0)

# Positive neighbour offsets enumerating each unordered bond exactly once.
_NN_OFFSETS = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
_NNN_OFFSETS = ((1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1), (0, 1, 1), (0, 1, -1))


@dataclass
class Deformation:
    """Atom-indexed positions on a lattice (physical units)."""

    lattice: RodLattice
    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.shape != (self.lattice.n_atoms, 3):
            raise NonFinitePosition(
                f"positions shape {self.positions.shape} does not match "
                f"{self.lattice.n_atoms} atoms"
            )

    def copy(self) -> "Deformation":
        return Deformation(self.lattice, self.positions.copy())


def _require_matching_k(model: CellEnergyModel, lat: RodLattice):
    if model.k != lat.k:
        raise InvalidParameters(f"model refinement k={model.k} != lattice k={lat.k}")


def _interior_gradients(lat: RodLattice, positions: np.ndarray) -> np.ndarray:
    """Hatted discrete gradients of all interior cells, shape (n_int, 3, 8)."""
    ids = lat.cell_corner_atoms[lat.interior_cell_ids()]
    ybar = lat.k * positions[ids]          # (n_int, 8, 3)
    return discrete_gradient(ybar.transpose(0, 2, 1))


def per_cell_energies(model: CellEnergyModel, deform: Deformation) -> np.ndarray:
    """Energy of every cell of the lattice, in cell-table order."""
    lat = deform.lattice
    _require_matching_k(model, lat)
    pos = deform.positions
    if not np.all(np.isfinite(pos)):
        raise NonFinitePosition("deformation contains non-finite positions")

    d = pos[lat.bond_a] - pos[lat.bond_b]
    r_hat = lat.k * np.linalg.norm(d, axis=1)
    vals = np.empty_like(r_hat)
    nn = ~lat.bond_is_nnn
    vals[nn] = model.bond_nn_energy(r_hat[nn])
    vals[~nn] = model.bond_nnn_energy(r_hat[~nn])
    percell = np.bincount(lat.bond_cell, weights=lat.bond_weights() * vals, minlength=lat.n_cells)

    interior = lat.interior_cell_ids()
    if interior.size:
        G = _interior_gradients(lat, pos)
        percell[interior] += model.orientation_values(reflection_distance(G))
    return model.finish_cells(percell)


def total_energy(model: CellEnergyModel, deform: Deformation):
    """Strain energy and its per-cell breakdown.

    The total is reduced slice by slice in axial order, so per-slice masses
    and the total come from the same summation tree.
    """
    percell = per_cell_energies(model, deform)
    lat = deform.lattice
    slice_sums = np.bincount(lat.slice_of_cell, weights=percell, minlength=lat.n_slices)
    return float(np.sum(slice_sums)), percell


def pair_sum_energy(model: CellEnergyModel, deform: Deformation) -> float:
    """Direct bond-sum evaluation; the oracle for the cell decomposition."""
    if not model.is_pairwise:
        raise ModelNotPairwise("pair-sum energy needs bond-resolved potentials")
    lat = deform.lattice
    _require_matching_k(model, lat)
    pos = deform.positions
    if not np.all(np.isfinite(pos)):
        raise NonFinitePosition("deformation contains non-finite positions")

    nn_pairs, nnn_pairs = _global_bonds(lat)
    total = 0.0
    if nn_pairs.size:
        r = lat.k * np.linalg.norm(pos[nn_pairs[:, 0]] - pos[nn_pairs[:, 1]], axis=1)
        total += float(np.sum(model.bond_nn_energy(r)))
    if nnn_pairs.size:
        r = lat.k * np.linalg.norm(pos[nnn_pairs[:, 0]] - pos[nnn_pairs[:, 1]], axis=1)
        total += float(np.sum(model.bond_nnn_energy(r)))

    interior = lat.interior_cell_ids()
    if interior.size:
        G = _interior_gradients(lat, pos)
        total += float(np.sum(model.orientation_values(reflection_distance(G))))
    return total


def _global_bonds(lat: RodLattice):
    cached = getattr(lat, "_global_bond_cache", None)
    if cached is not None:
        return cached
    index = lat.atom_index()
    nn, nnn = [], []
    for (t, i, j) in map(tuple, lat.atom_coords):
        a = index[(t, i, j)]
        for off, out in ((_NN_OFFSETS, nn), (_NNN_OFFSETS, nnn)):
            for dt, di, dj in off:
                b = index.get((t + dt, i + di, j + dj))
                if b is not None:
                    out.append((a, b))
    cache = (
        np.array(nn, dtype=np.int64).reshape(-1, 2),
        np.array(nnn, dtype=np.int64).reshape(-1, 2),
    )
    object.__setattr__(lat, "_global_bond_cache", cache)
    return cache


def energy_gradient(model: CellEnergyModel, deform: Deformation) -> np.ndarray:
    """Analytic gradient of :func:`total_energy` with respect to positions.

    At truncation kinks the active branch's one-sided derivative is used;
    plateau bonds and the orientation barrier contribute zero.
    """
    if not model.is_pairwise:
        raise ModelNotPairwise("gradient needs bond-resolved potentials")
    lat = deform.lattice
    _require_matching_k(model, lat)
    pos = deform.positions
    d = pos[lat.bond_a] - pos[lat.bond_b]
    r = np.linalg.norm(d, axis=1)
    r_hat = lat.k * r
    dW = np.empty_like(r_hat)
    nn = ~lat.bond_is_nnn
    dW[nn] = model.bond_nn_derivative(r_hat[nn])
    dW[~nn] = model.bond_nnn_derivative(r_hat[~nn])
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r[:, None] > 0.0, d / r[:, None], 0.0)
    f = (lat.bond_weights() * dW * lat.k)[:, None] * unit
    grad = np.zeros_like(pos)
    np.add.at(grad, lat.bond_a, f)
    np.add.at(grad, lat.bond_b, -f)
    return grad


@dataclass
class SliceProfile:
    """Per-axial-slice energy masses (k * cell energies) and broken flags."""

    masses: np.ndarray
    broken: np.ndarray
    threshold: float

    @property
    def n_broken(self) -> int:
        return int(np.count_nonzero(self.broken))


def slice_profile(model: CellEnergyModel, deform: Deformation, extension_constant: float = 1.0) -> SliceProfile:
    """Axial energy distribution and broken-slice detection.

    A slice is broken when some interior cell's gradient distance to the
    rigid states exceeds ``c_frac / (sqrt(3 #midpoints) * Ce)``.  ``Ce`` is
    the extension-scheme constant, a knob with default 1.
    """
    lat = deform.lattice
    percell = per_cell_energies(model, deform)
    masses = lat.k * np.bincount(lat.slice_of_cell, weights=percell, minlength=lat.n_slices)

    th = elastic_threshold(model)
    threshold = th.fracture_distance / (
        np.sqrt(3.0 * lat.cross_section.n_cells) * extension_constant
    )
    broken = np.zeros(lat.n_slices, dtype=bool)
    interior = lat.interior_cell_ids()
    if interior.size:
        G = _interior_gradients(lat, deform.positions)
        over = rigid_distance(G) > threshold
        np.logical_or.at(broken, lat.slice_of_cell[interior], over)
    return SliceProfile(masses=masses, broken=broken, threshold=float(threshold))


# ---------------------------------------------------------------------------
# Piecewise affine interpolation (24 simplices per cell)
# ---------------------------------------------------------------------------


def interpolate_value(deform: Deformation, point) -> np.ndarray:
    """Piecewise affine interpolant of the deformation at a domain point.

    ``point`` is ``(x1, x2, x3)`` with physical axial coordinate ``x1`` and
    in-plane coordinates in the fixed reference cross-section.  Each cell
    block is cut into 24 simplices: one per (face, face-edge) pair, with
    vertices at the two edge corners, the face centre (4-corner average) and
    the block centre (8-corner average).
    """
    lat = deform.lattice
    x1, x2, x3 = (float(v) for v in point)
    k = lat.k
    tol = 1e-12

    lo = lat.axial_origin / k
    hi = lat.last_layer / k
    if x1 < lo - tol or x1 > hi + tol:
        raise OutOfDomain(f"axial coordinate {x1} outside [{lo}, {hi}]")
    t = int(np.floor(k * x1 + tol))
    t = min(max(t, lat.axial_origin), lat.last_layer - 1)

    cell_set = set(lat.cross_section.cells)
    block = None
    for i in (int(np.floor(x2 + tol)), int(np.floor(x2 + tol)) - 1):
        for j in (int(np.floor(x3 + tol)), int(np.floor(x3 + tol)) - 1):
            if (i, j) in cell_set and i - tol <= x2 <= i + 1 + tol and j - tol <= x3 <= j + 1 + tol:
                block = (i, j)
                break
        if block:
            break
    if block is None:
        raise OutOfDomain(f"in-plane point ({x2}, {x3}) outside the cross-section")
    i, j = block

    index = lat.atom_index()
    corner_vals = np.array(
        [deform.positions[index[(t + dt, i + di, j + dj)]] for dt, di, dj in CORNER_OFFSETS]
    )
    xi = np.array([k * x1 - (t + 0.5), x2 - (i + 0.5), x3 - (j + 0.5)])
    xi = np.clip(xi, -0.5, 0.5)

    axis = int(np.argmax(np.abs(xi)))
    sign = 1.0 if xi[axis] >= 0 else -1.0
    on_face = [m for m in range(8) if CELL_DIRECTIONS[axis, m] * sign > 0]
    others = [b for b in range(3) if b != axis]
    u, v = xi[others[0]], xi[others[1]]
    if abs(u) >= abs(v):
        eaxis, esign = others[0], (1.0 if u >= 0 else -1.0)
    else:
        eaxis, esign = others[1], (1.0 if v >= 0 else -1.0)
    edge = [m for m in on_face if CELL_DIRECTIONS[eaxis, m] * esign > 0]

    centre_val = corner_vals.mean(axis=0)
    face_val = corner_vals[on_face].mean(axis=0)
    verts_xi = np.zeros((4, 3))
    verts_xi[1, axis] = 0.5 * sign
    verts_xi[2] = CELL_DIRECTIONS[:, edge[0]]
    verts_xi[3] = CELL_DIRECTIONS[:, edge[1]]
    vals = np.stack([centre_val, face_val, corner_vals[edge[0]], corner_vals[edge[1]]])

    A = np.vstack([np.ones(4), verts_xi.T])
    lam = np.linalg.solve(A, np.array([1.0, *xi]))
    return lam @ vals


# ---------------------------------------------------------------------------
# Deformation files
# ---------------------------------------------------------------------------

_MAGIC = "nanorod-deformation 1"


def write_deformation(path, deform: Deformation) -> None:
    """Serialize a deformation: header, then one atom per line in lattice order.

    Floats are written with shortest round-trip precision, so read/write
    round-trips are exact.
    """
    lat = deform.lattice
    lines = [
        _MAGIC,
        f"length {lat.length!r}",
        f"k {lat.k}",
        f"axial_origin {lat.axial_origin}",
        f"n_layers {lat.n_layers}",
        f"end_cells {int(lat.include_end_cells)}",
        "cross_section " + " ".join(f"{i},{j}" for i, j in lat.cross_section.cells),
        f"atoms {lat.n_atoms}",
    ]
    for (t, i, j), y in zip(lat.atom_coords, deform.positions):
        lines.append(f"{t} {i} {j} {y[0]!r} {y[1]!r} {y[2]!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_deformation(path) -> Deformation:
    from .lattice import build_cross_section

    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _MAGIC:
        raise InvalidParameters(f"{path}: not a deformation file")
    header = {}
    row = 1
    for key in ("length", "k", "axial_origin", "n_layers", "end_cells", "cross_section", "atoms"):
        name, _, value = lines[row].partition(" ")
        if name != key:
            raise InvalidParameters(f"{path}: expected header '{key}', found '{name}'")
        header[key] = value
        row += 1
    cs = build_cross_section(
        [tuple(int(v) for v in item.split(",")) for item in header["cross_section"].split()]
    )
    lat = _build_lattice(
        cs,
        float(header["length"]),
        int(header["k"]),
        int(header["n_layers"]),
        int(header["axial_origin"]),
        bool(int(header["end_cells"])),
    )
    n = int(header["atoms"])
    if n != lat.n_atoms:
        raise InvalidParameters(f"{path}: atom count {n} does not match lattice ({lat.n_atoms})")
    positions = np.empty((n, 3))
    for idx in range(n):
        parts = lines[row + idx].split()
        coords = tuple(int(v) for v in parts[:3])
        if coords != tuple(lat.atom_coords[idx]):
            raise InvalidParameters(f"{path}: atom {idx} out of lattice order")
        positions[idx] = [float(parts[3]), float(parts[4]), float(parts[5])]
    return Deformation(lat, positions)
