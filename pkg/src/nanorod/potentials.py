"""Refinement-indexed pair potentials and cell energy models.

All pair potentials take the hatted bond length (rest length 1) and the
refinement ``k``.  They share a common structure: a k-independent elastic core
with its minimum 0 at rest length, truncated to plateaus of height ~1/k away
from the elastic window.  The plateau heights set the per-bond breaking
energies; ``k * plateau`` has a finite positive limit.

A cell energy is the bond-weighted sum of pair energies over the (real) corner
pairs of one cell plus an orientation penalty; see :func:`cell_energy`.  The
``SimplifiedMin`` variant caps the untruncated elastic cell energy at a
configured threshold instead of truncating individual bonds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameters, ModelNotPairwise, NonFinitePosition, NonpositiveSeparation
from .geometry import discrete_gradient, random_rotations, reflection_distance, rigid_distance
from .lattice import INTERIOR, NN_BOND_WEIGHT, NN_CORNER_PAIRS, NNN_BOND_WEIGHT, NNN_CORNER_PAIRS, CELL_DIRECTIONS

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class LennardJonesTS:
    """Truncated and shifted Lennard-Jones pair interaction.

    The core is ``d (r^-12 - 2 r^-6) + d`` with well depth ``d``, minimum 0 at
    r = 1 and limit ``d`` at infinity.  For r >= 1 the energy is capped at
    1/k; compression is never truncated (and is unbounded near r = 0).
    """

    depth: float = 1.0

    def core(self, r):
        r = np.asarray(r, dtype=float)
        inv6 = r**-6
        return self.depth * (inv6 * inv6 - 2.0 * inv6) + self.depth

    def core_derivative(self, r):
        r = np.asarray(r, dtype=float)
        return 12.0 * self.depth * (r**-7 - r**-13)

    @property
    def core_curvature(self) -> float:
        return 72.0 * self.depth

    def energy(self, r, k: int):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0.0):
            raise NonpositiveSeparation("Lennard-Jones requires r > 0")
        w = self.core(r)
        return np.where(r < 1.0, w, np.minimum(w, 1.0 / k))

    def derivative(self, r, k: int):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0.0):
            raise NonpositiveSeparation("Lennard-Jones requires r > 0")
        w = self.core(r)
        active = (r < 1.0) | (w < 1.0 / k)
        return np.where(active, self.core_derivative(r), 0.0)

    def elastic_window(self, k: int) -> float:
        # Tension-side radius where the core reaches the 1/k cap; compression
        # is never capped.
        if self.depth * k <= 1.0:
            raise InvalidParameters("cap 1/k above the well depth; no truncation radius")
        return (1.0 - np.sqrt(1.0 / (self.depth * k))) ** (-1.0 / 6.0) - 1.0

    def kink_radii(self, k: int):
        return [1.0 + self.elastic_window(k)]

    def plateau_limit(self) -> float:
        return 1.0

    def plateau_min(self, k: int) -> float:
        return 1.0 / k

    compression_bounded = False

    def fracture_threshold(self, k: int) -> float:
        d = self.depth
        if d - 1.0 / k <= 0.0:
            raise InvalidParameters(f"well depth {d} <= 1/k at k={k}")
        root = (d - 1.0 / k) ** (1.0 / 6.0)
        return ((d + np.sqrt(d / k)) ** (1.0 / 6.0) - root) / (2.0 * root)


@dataclass(frozen=True)
class TruncatedHarmonic:
    """Harmonic spring ``K (r-1)^2`` capped at ``c+/k`` in tension and ``c-/k`` in compression."""

    stiffness: float = 1.0
    plateau_plus: float = 0.3
    plateau_minus: float = 0.3

    def core(self, r):
        r = np.asarray(r, dtype=float)
        return self.stiffness * (r - 1.0) ** 2

    def core_derivative(self, r):
        r = np.asarray(r, dtype=float)
        return 2.0 * self.stiffness * (r - 1.0)

    @property
    def core_curvature(self) -> float:
        return 2.0 * self.stiffness

    def _cap(self, r, k):
        return np.where(np.asarray(r, dtype=float) >= 1.0, self.plateau_plus / k, self.plateau_minus / k)

    def energy(self, r, k: int):
        return np.minimum(self.core(r), self._cap(r, k))

    def derivative(self, r, k: int):
        w = self.core(r)
        return np.where(w < self._cap(r, k), self.core_derivative(r), 0.0)

    def elastic_window(self, k: int) -> float:
        return np.sqrt(min(self.plateau_plus, self.plateau_minus) / (self.stiffness * k))

    def kink_radii(self, k: int):
        return [
            1.0 + np.sqrt(self.plateau_plus / (self.stiffness * k)),
            1.0 - np.sqrt(self.plateau_minus / (self.stiffness * k)),
        ]

    def plateau_limit(self) -> float:
        return self.plateau_plus

    def plateau_min(self, k: int) -> float:
        return min(self.plateau_plus, self.plateau_minus) / k

    compression_bounded = True

    def fracture_threshold(self, k: int) -> float:
        return 0.5 * self.elastic_window(k)


@dataclass(frozen=True)
class SplinedPair:
    """Pair interaction with a user-supplied C^2 elastic core and 1/k plateaus.

    The default core is harmonic.  ``core_fn`` must have its minimum 0 at
    r = 1; ``curvature`` is its second derivative there.  ``core_deriv`` is
    optional (central differences otherwise).
    """

    omega_plus: float = 0.3
    omega_minus: float = 0.3
    curvature: float = 2.0
    core_fn: Optional[Callable] = None
    core_deriv: Optional[Callable] = None

    def core(self, r):
        r = np.asarray(r, dtype=float)
        if self.core_fn is None:
            return 0.5 * self.curvature * (r - 1.0) ** 2
        return self.core_fn(r)

    def core_derivative(self, r):
        r = np.asarray(r, dtype=float)
        if self.core_fn is None:
            return self.curvature * (r - 1.0)
        if self.core_deriv is not None:
            return self.core_deriv(r)
        h = 1e-7
        return (self.core(r + h) - self.core(r - h)) / (2.0 * h)

    @property
    def core_curvature(self) -> float:
        return self.curvature

    def _cap(self, r, k):
        return np.where(np.asarray(r, dtype=float) >= 1.0, self.omega_plus / k, self.omega_minus / k)

    def energy(self, r, k: int):
        return np.minimum(self.core(r), self._cap(r, k))

    def derivative(self, r, k: int):
        w = self.core(r)
        return np.where(w < self._cap(r, k), self.core_derivative(r), 0.0)

    def _side_window(self, k: int, sign: float, cap: float) -> float:
        lo, hi = 0.0, 1.0
        while self.core(1.0 + sign * hi) < cap and hi < 1e3:
            hi *= 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.core(1.0 + sign * mid) < cap:
                lo = mid
            else:
                hi = mid
        return lo

    def elastic_window(self, k: int) -> float:
        wp = self._side_window(k, +1.0, self.omega_plus / k)
        wm = self._side_window(k, -1.0, self.omega_minus / k)
        return min(wp, wm)

    def kink_radii(self, k: int):
        return [
            1.0 + self._side_window(k, +1.0, self.omega_plus / k),
            1.0 - self._side_window(k, -1.0, self.omega_minus / k),
        ]

    def plateau_limit(self) -> float:
        return self.omega_plus

    def plateau_min(self, k: int) -> float:
        return min(self.omega_plus, self.omega_minus) / k

    compression_bounded = True

    def fracture_threshold(self, k: int) -> float:
        return 0.5 * self.elastic_window(k)


@dataclass(frozen=True)
class OrientationPenalty:
    """Flat barrier ``strength/k`` for cells within ``radius`` of a reflected rigid state.

    The barrier keeps near-reflection cells energetically separated from the
    orientation-preserving well; it is zero on the elastic regime since the
    rotation and reflection branches are far apart.
    """

    strength: float = 1.0
    radius: float = 0.1

    def values(self, reflect_dist, k: int):
        return np.where(np.asarray(reflect_dist) < self.radius, self.strength / k, 0.0)


@dataclass(frozen=True)
class CellEnergyModel:
    """A refinement-indexed family of cell/surface/end energies.

    ``nn`` / ``nnn`` are the pair interactions for cube edges and face
    diagonals.  Per cell class, bonds are weighted so that each physical bond
    carries total weight 1 across its owning cells (``bond_weights``); surface
    and end cells simply restrict the pair list to their real corners.

    If ``cell_min_limit`` is set, the model is the simplified highly-brittle
    variant: per-cell energy min(elastic core sum + penalty, cell_min_limit/k)
    with untruncated pair cores.  Such a model is not pairwise decomposable.
    """

    nn: object
    nnn: object
    penalty: OrientationPenalty = field(default_factory=OrientationPenalty)
    k: int = 8
    cell_min_limit: Optional[float] = None
    bond_weights: dict = field(
        default_factory=lambda: {
            "interior": (NN_BOND_WEIGHT, NNN_BOND_WEIGHT),
            "surface": (NN_BOND_WEIGHT, NNN_BOND_WEIGHT),
            "end": (NN_BOND_WEIGHT, NNN_BOND_WEIGHT),
        }
    )

    @property
    def is_pairwise(self) -> bool:
        return self.cell_min_limit is None

    def at_refinement(self, k: int) -> "CellEnergyModel":
        return replace(self, k=int(k))

    def bond_nn_energy(self, r_hat):
        if self.is_pairwise:
            return self.nn.energy(r_hat, self.k)
        return self.nn.core(r_hat)

    def bond_nnn_energy(self, r_hat):
        if self.is_pairwise:
            return self.nnn.energy(r_hat / SQRT2, self.k)
        return self.nnn.core(r_hat / SQRT2)

    def bond_nn_derivative(self, r_hat):
        if not self.is_pairwise:
            raise ModelNotPairwise("simplified-min models have no bond-resolved gradient")
        return self.nn.derivative(r_hat, self.k)

    def bond_nnn_derivative(self, r_hat):
        if not self.is_pairwise:
            raise ModelNotPairwise("simplified-min models have no bond-resolved gradient")
        return self.nnn.derivative(r_hat / SQRT2, self.k) / SQRT2

    def finish_cells(self, raw_cell_values):
        """Apply the cell-level cap of the simplified model (no-op otherwise)."""
        if self.cell_min_limit is None:
            return raw_cell_values
        return np.minimum(raw_cell_values, self.cell_min_limit / self.k)

    def orientation_values(self, reflect_dist):
        return self.penalty.values(reflect_dist, self.k)


def lennard_jones_model(depth: float = 1.0, k: int = 8, penalty: OrientationPenalty = None) -> CellEnergyModel:
    p = LennardJonesTS(depth)
    return CellEnergyModel(nn=p, nnn=p, penalty=penalty or OrientationPenalty(), k=k)


def truncated_harmonic_model(
    stiffness: float = 1.0,
    plateau_plus: float = 0.3,
    plateau_minus: float = None,
    k: int = 8,
    penalty: OrientationPenalty = None,
) -> CellEnergyModel:
    if plateau_minus is None:
        plateau_minus = plateau_plus
    p = TruncatedHarmonic(stiffness, plateau_plus, plateau_minus)
    return CellEnergyModel(nn=p, nnn=p, penalty=penalty or OrientationPenalty(), k=k)


def simplified_min_model(
    stiffness: float = 1.0, cell_limit: float = 0.5, k: int = 8, penalty: OrientationPenalty = None
) -> CellEnergyModel:
    p = TruncatedHarmonic(stiffness, np.inf, np.inf)
    return CellEnergyModel(
        nn=p, nnn=p, penalty=penalty or OrientationPenalty(), k=k, cell_min_limit=cell_limit
    )


def pair_energy(p, r, k: int):
    """Energy of one pair interaction at hatted separation ``r``."""
    if np.isscalar(r) and r < 0:
        raise InvalidParameters("separation must be nonnegative")
    return p.energy(r, k)


@dataclass(frozen=True)
class ElasticThresholds:
    fracture_distance: float      # cell-gradient distance below which energies are elastic
    fracture_floor: float         # lower bound for cell energy off the elastic regime
    omega_nn: float               # limiting per-bond breaking energy, edges
    omega_nnn: float              # same, face diagonals


def pair_cell_hessian(nn_curvature: float, nnn_curvature: float, real_mask=None) -> np.ndarray:
    """24x24 Hessian of the weighted pair-core cell energy at the rigid state.

    Acts on a flattened 3x8 perturbation (row-major).  Each bond at rest
    contributes ``weight * curvature`` along its direction; diagonals carry an
    extra 1/2 from the sqrt(2) rescaling of their argument.
    """
    if real_mask is None:
        real_mask = np.ones(8, dtype=bool)
    H = np.zeros((24, 24))
    for pairs, weight, curv, chain in (
        (NN_CORNER_PAIRS, NN_BOND_WEIGHT, nn_curvature, 1.0),
        (NNN_CORNER_PAIRS, NNN_BOND_WEIGHT, nnn_curvature, 0.5),
    ):
        for m, n in pairs:
            if not (real_mask[m] and real_mask[n]):
                continue
            d = CELL_DIRECTIONS[:, m] - CELL_DIRECTIONS[:, n]
            e = d / np.linalg.norm(d)
            v = np.zeros((3, 8))
            v[:, m] = e
            v[:, n] = -e
            v = v.reshape(-1)
            H += (weight * curv * chain) * np.outer(v, v)
    return H


def _interior_growth_constant(model: CellEnergyModel) -> float:
    """Smallest positive eigenvalue of the interior cell Hessian.

    Used to convert gradient distances into energy lower bounds:
    near the well, cell energy >= (lambda_min/2) * dist^2.
    """
    H = pair_cell_hessian(model.nn.core_curvature, model.nnn.core_curvature)
    ev = np.linalg.eigvalsh(H)
    positive = ev[ev > 1e-9 * ev[-1]]
    return float(positive[0])


def elastic_threshold(model: CellEnergyModel) -> ElasticThresholds:
    """Fracture thresholds and limiting bond-breaking energies of a model."""
    k = model.k
    lam = _interior_growth_constant(model)
    if model.cell_min_limit is not None:
        cap = model.cell_min_limit / k
        # Largest gradient distance whose (quadratic-bound) core energy stays
        # below the cap, so the cap is provably inactive there.
        H = pair_cell_hessian(model.nn.core_curvature, model.nnn.core_curvature)
        lam_max = float(np.linalg.eigvalsh(H)[-1])
        c_frac = np.sqrt(2.0 * cap / lam_max)
        floor = min(cap, 0.5 * lam * c_frac**2)
        return ElasticThresholds(c_frac, floor, np.nan, np.nan)

    c_frac = model.nn.fracture_threshold(k)
    c_frac = min(c_frac, model.nnn.fracture_threshold(k))
    plateau_min = min(model.nn.plateau_min(k), model.nnn.plateau_min(k))
    floor = min(NN_BOND_WEIGHT / 2.0 * plateau_min, (lam / 2.0) * c_frac**2)
    return ElasticThresholds(
        fracture_distance=float(c_frac),
        fracture_floor=float(floor),
        omega_nn=float(model.nn.plateau_limit()),
        omega_nnn=float(model.nnn.plateau_limit()),
    )


def cell_energy(model: CellEnergyModel, cell_class: int, inplane_mid, ybar, real_mask=None) -> float:
    """Energy of a single cell from its 3x8 (hatted) corner positions.

    Ghost corner slots (``real_mask`` false) are skipped entirely; the
    orientation penalty applies only to cells with all eight corners real.
    This is the scalar reference path; bulk evaluation lives in
    :mod:`nanorod.energy`.
    """
    ybar = np.asarray(ybar, dtype=float)
    if ybar.shape != (3, 8):
        raise NonFinitePosition(f"expected 3x8 positions, got {ybar.shape}")
    if real_mask is None:
        real_mask = np.ones(8, dtype=bool)
    if not np.all(np.isfinite(ybar[:, real_mask])):
        raise NonFinitePosition("cell contains non-finite corner positions")

    total = 0.0
    wn, wd = model.bond_weights["interior" if cell_class == INTERIOR else ("end" if cell_class == 2 else "surface")]
    for pairs, weight, is_nnn in ((NN_CORNER_PAIRS, wn, False), (NNN_CORNER_PAIRS, wd, True)):
        for m, n in pairs:
            if not (real_mask[m] and real_mask[n]):
                continue
            r = float(np.linalg.norm(ybar[:, m] - ybar[:, n]))
            w = model.bond_nnn_energy(r) if is_nnn else model.bond_nn_energy(r)
            total += weight * float(w)
    if np.all(real_mask):
        G = discrete_gradient(ybar)
        total += float(model.orientation_values(reflection_distance(G)))
    return float(model.finish_cells(total))


# ---------------------------------------------------------------------------
# Monte-Carlo validation of the model assumptions
# ---------------------------------------------------------------------------


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    worst: float
    detail: str = ""


@dataclass
class AssumptionReport:
    outcomes: list
    notes: list

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.outcomes)

    def summary(self) -> str:
        lines = [
            f"{'PASS' if o.passed else 'FAIL'}  {o.name:<28} worst={o.worst:.3e}  {o.detail}"
            for o in self.outcomes
        ]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def _sample_cells(rng: np.random.Generator, n: int) -> np.ndarray:
    """Mixed-scale random 3x8 configurations around the rigid reference state."""
    scales = 10.0 ** rng.uniform(-3, 0.45, size=n)
    noise = rng.normal(size=(n, 3, 8)) * scales[:, None, None]
    base = np.broadcast_to(CELL_DIRECTIONS, (n, 3, 8)).copy()
    cloud = rng.random(n) < 0.2
    base[cloud] = rng.normal(size=(int(cloud.sum()), 3, 8))
    return base + noise


def _batch_cell_energy(model: CellEnergyModel, ybars: np.ndarray) -> np.ndarray:
    """Vectorized interior-cell energy over a batch of 3x8 configurations."""
    vals = np.zeros(ybars.shape[0])
    for pairs, weight, is_nnn in (
        (NN_CORNER_PAIRS, NN_BOND_WEIGHT, False),
        (NNN_CORNER_PAIRS, NNN_BOND_WEIGHT, True),
    ):
        for m, n in pairs:
            r = np.linalg.norm(ybars[:, :, m] - ybars[:, :, n], axis=1)
            w = model.bond_nnn_energy(r) if is_nnn else model.bond_nn_energy(r)
            vals += weight * w
    G = discrete_gradient(ybars)
    vals += model.orientation_values(reflection_distance(G))
    return model.finish_cells(vals)


def check_assumptions(
    model: CellEnergyModel,
    k_list,
    sample_count: int = 2000,
    seed: int = 0,
    far_constant: float = 1.0,
) -> AssumptionReport:
    """Monte-Carlo report on the cell-energy assumptions.

    Checks frame indifference, the rigid energy well, monotonicity of
    ``k * W`` in the refinement, the fracture-regime lower bound, tension
    (plateau) boundedness, and insensitivity to rigid motions of far-apart
    cell components.  Failures are reported, not raised.
    """
    rng = np.random.default_rng(seed)
    outcomes = []
    notes = [
        f"orientation penalty active: strength={model.penalty.strength}, radius={model.penalty.radius} (model defaults, not dictated by the energy family)"
    ]
    samples = _sample_cells(rng, sample_count)

    def energy_at(k):
        return _batch_cell_energy(model.at_refinement(k), samples)

    # Frame indifference under random rigid motions.
    k0 = int(k_list[0])
    base = _batch_cell_energy(model.at_refinement(k0), samples)
    R = random_rotations(rng, sample_count)
    c = rng.normal(size=(sample_count, 3, 1))
    moved = np.einsum("nab,nbc->nac", R, samples) + c
    moved_vals = _batch_cell_energy(model.at_refinement(k0), moved)
    finite = np.isfinite(base) & np.isfinite(moved_vals)
    worst = float(np.max(np.abs(moved_vals[finite] - base[finite]) / (1.0 + np.abs(base[finite]))))
    outcomes.append(CheckOutcome("frame_indifference", worst <= 1e-9, worst, f"k={k0}"))

    # Energy well at randomized rigid configurations.
    Rr = random_rotations(rng, sample_count)
    rigid = np.einsum("nab,bc->nac", Rr, CELL_DIRECTIONS) + rng.normal(size=(sample_count, 3, 1))
    worst = float(np.max(np.abs(_batch_cell_energy(model.at_refinement(k0), rigid))))
    outcomes.append(CheckOutcome("energy_well", worst <= 1e-12, worst))

    # k-monotonicity of k * W at each requested refinement.
    worst = -np.inf
    for k in k_list:
        a = (k + 1) * energy_at(int(k) + 1)
        b = int(k) * energy_at(int(k))
        ok = np.isfinite(a) & np.isfinite(b)
        worst = max(worst, float(np.max(b[ok] - a[ok])))
    outcomes.append(CheckOutcome("k_monotonicity", worst <= 1e-12, worst, f"max of kW(k) - (k+1)W(k+1)"))

    # Lower bound off the elastic regime.
    worst = np.inf
    for k in k_list:
        mk = model.at_refinement(int(k))
        th = elastic_threshold(mk)
        G = discrete_gradient(samples)
        dist = rigid_distance(G)
        off = dist > th.fracture_distance * 1.0000001
        if not np.any(off):
            continue
        vals = _batch_cell_energy(mk, samples[off])
        worst = min(worst, float(np.min(vals / th.fracture_floor)))
    outcomes.append(
        CheckOutcome("fracture_floor", worst >= 1.0 - 1e-9, worst, "min W / floor over fracture regime")
    )

    # Plateau boundedness in the tension regime (all bonds at or beyond rest).
    stretch = np.broadcast_to(CELL_DIRECTIONS, (sample_count, 3, 8)) * (
        1.0 + 10.0 ** rng.uniform(-2, 3, size=(sample_count, 1, 1))
    )
    sups = []
    for k in k_list:
        sups.append(float(np.max(int(k) * _batch_cell_energy(model.at_refinement(int(k)), stretch))))
    spread_ok = max(sups) <= 1.25 * min(sups) + 1e-9 and np.isfinite(max(sups))
    outcomes.append(
        CheckOutcome("tension_boundedness", bool(spread_ok), max(sups), f"sup kW per k: {[f'{s:.3g}' for s in sups]}")
    )

    # Far-component insensitivity: rigid motions of well-separated corner
    # groups change the energy by at most far_constant / (M_k k^2).
    worst = -np.inf
    m_rate = lambda k: k ** -0.5
    for k in k_list:
        k = int(k)
        mk = model.at_refinement(k)
        gap = m_rate(k) * k
        bound = far_constant / (m_rate(k) * k**2)
        n_far = min(sample_count, 500)
        ybars = CELL_DIRECTIONS + 0.05 * rng.normal(size=(n_far, 3, 8))
        split = rng.integers(1, 8, size=n_far)
        moved = ybars.copy()
        base_far = ybars.copy()
        for idx in range(n_far):
            group = np.arange(8) >= split[idx]
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            shift = (gap + 4.0) * direction
            base_far[idx][:, group] += shift[:, None]
            Rm = random_rotations(rng, 1)[0]
            part = base_far[idx][:, group]
            moved[idx][:, group] = (Rm @ (part - part.mean(axis=1, keepdims=True))) + part.mean(
                axis=1, keepdims=True
            ) + (gap + 4.0) * direction[:, None] * 0.5
        va = _batch_cell_energy(mk, base_far)
        vb = _batch_cell_energy(mk, moved)
        worst = max(worst, float(np.max(np.abs(vb - va) - bound)))
    outcomes.append(
        CheckOutcome("far_component_insensitivity", worst <= 1e-12, worst, "max |dW| - C/(M_k k^2)")
    )

    return AssumptionReport(outcomes, notes)
