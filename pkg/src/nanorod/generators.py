"""Deterministic deformation generators for tests and convergence studies.

Three families: global rigid motions, the frame-curve ansatz (centerline plus
scaled directors, optionally with corrector fields), and jump-carrying
configurations obtained by splicing crack profiles into the ansatz near each
jump.  Splices are matched by rigid motions on the overlap, so straight
segments around a jump introduce no seam energy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .crack import clean_break_positions, kink_positions, rigid_slab_targets
from .elastic import QuadraticFormTable, relaxed_minimizer
from .energy import Deformation
from .errors import InadmissibleFrame, JumpTooClose, ProfileBoundaryMismatch
from .frames import FrameCurve
from .geometry import require_rotation, skew_exp_integral
from .lattice import RodLattice, build_slab_lattice


def rigid_config(lat: RodLattice, R, c) -> Deformation:
    """Rigidly moved reference positions; zero energy by construction."""
    R = require_rotation(R)
    c = np.asarray(c, dtype=float)
    return Deformation(lat, lat.identity_positions() @ R.T + c)


@dataclass
class RecoveryAnsatz:
    """Frame curve plus optional corrector fields at refinement ``k``.

    With zero correctors the atoms sit at
    ``centerline(x1) + (x2/k) d2(x1) + (x3/k) d3(x1)`` exactly.  ``q`` adds an
    axial-shift corrector ``q(x1)/k``; ``beta(x1, (i, j))`` a per-corner
    field at order ``1/k^2``.
    """

    frame: FrameCurve
    k: int
    q: Optional[Callable] = None
    beta: Optional[Callable] = None


def smooth_frame_config(lat: RodLattice, frame: FrameCurve, q=None, beta=None) -> Deformation:
    """Evaluate the frame ansatz on a single-segment rod lattice."""
    if len(frame.segments) != 1:
        raise InadmissibleFrame("smooth configuration needs a single segment; use jump_frame_config")
    frame.check_admissible()
    return Deformation(lat, _ansatz_positions(lat, frame, q, beta))


def _ansatz_positions(lat: RodLattice, frame: FrameCurve, q=None, beta=None) -> np.ndarray:
    k = lat.k
    pos = np.empty((lat.n_atoms, 3))
    coords = lat.atom_coords
    for t in np.unique(coords[:, 0]):
        x1 = t / k
        x1_eval = min(max(x1, 0.0), frame.total_length)
        center = frame.position(x1_eval)
        _, d2, d3 = frame.directors(x1_eval)
        rows = np.flatnonzero(coords[:, 0] == t)
        inplane = coords[rows, 1:]
        vals = center[None, :] + np.outer(inplane[:, 0] / k, d2) + np.outer(inplane[:, 1] / k, d3)
        if q is not None:
            vals = vals + q(x1_eval)[None, :] / k
        if beta is not None:
            for local, (i, j) in enumerate(inplane):
                vals[local] += beta(x1_eval, (int(i), int(j))) / k**2
        pos[rows] = vals
    return pos


def relaxed_correctors(frame: FrameCurve, table: QuadraticFormTable):
    """Corrector fields built from the relaxed-form minimizers of each segment.

    For a segment with constant generator A, the minimizing axial shift g and
    corrector alpha give ``q' = R g`` (integrated in closed form) and
    ``beta(x1, corner) = R(x1) alpha(corner)``.  With these fields the
    ansatz energy converges to the relaxed elastic limit instead of the
    unrelaxed cell sum.
    """
    minimizers = {}

    def segment_data(s):
        start, R0, _, A = frame._segment_at(s)
        key = round(start, 12)
        if key not in minimizers:
            _, g, alpha = relaxed_minimizer(A, table)
            minimizers[key] = (start, R0, A, g, alpha)
        return minimizers[key]

    def q(x1):
        start, R0, A, g, _ = segment_data(x1)
        return R0 @ (skew_exp_integral(A, x1 - start) @ g)

    def beta(x1, corner):
        _, _, _, _, alpha = segment_data(x1)
        return frame.frame(x1) @ alpha[corner]

    return q, beta


def _fit_rigid(reference: np.ndarray, positions: np.ndarray):
    """Best rigid motion mapping reference -> positions and its max residual."""
    ref_c = reference.mean(axis=0)
    pos_c = positions.mean(axis=0)
    M = (positions - pos_c).T @ (reference - ref_c)
    U, _, Vt = np.linalg.svd(M)
    d = np.sign(np.linalg.det(U @ Vt))
    R = U @ np.diag([1.0, 1.0, d]) @ Vt
    c = pos_c - R @ ref_c
    residual = float(np.max(np.linalg.norm(positions - (reference @ R.T + c), axis=1)))
    return R, c, residual


def _validate_profile(profile: Deformation, rotation: np.ndarray, tol: float):
    """Check a crack profile is rigid on its boundary zones; return its rigid data."""
    lat = profile.lattice
    m = (lat.n_layers - 1) // 2
    cut = int(np.ceil(0.75 * m - 1e-9))
    t = lat.atom_coords[:, 0]
    ref = lat.atom_coords.astype(float) / lat.k
    left = t <= -cut
    right = t >= cut
    R_l, c_l, res_l = _fit_rigid(ref[left], profile.positions[left])
    R_r, c_r, res_r = _fit_rigid(ref[right], profile.positions[right])
    if max(res_l, res_r) > tol:
        raise ProfileBoundaryMismatch(
            f"profile boundary zones not rigid (residuals {res_l:.2e}, {res_r:.2e})"
        )
    rel = R_l.T @ R_r
    if np.max(np.abs(rel - rotation)) > 1e-6:
        raise ProfileBoundaryMismatch("profile relative rotation does not match the jump data")
    return (R_l, c_l), (R_r, c_r)


def jump_frame_config(
    lat: RodLattice,
    frame: FrameCurve,
    half_layers: int = None,
    profiles: dict = None,
    profile_tol: float = 1e-9,
) -> Deformation:
    """Frame ansatz with crack profiles spliced in around each jump.

    ``half_layers`` is the splice half-width in atomic layers (default
    ``round(sqrt(k))``, so the physical window shrinks while gaining layers).
    ``profiles`` optionally maps jump indices to slab deformations with
    matching rigid boundary data; by default a clean break (nonzero jump) or
    shifted-contact kink (zero jump) is used.
    """
    k = lat.k
    frame.check_admissible()
    jumps = frame.jump_records()
    m = int(half_layers) if half_layers is not None else max(4, int(round(np.sqrt(k))))

    raw = _ansatz_positions(lat, frame)
    if not jumps:
        return Deformation(lat, raw)

    layers = [int(np.floor(k * sigma + 1e-9)) for sigma, _, _ in jumps]
    n_ax = lat.n_layers - 1
    for idx, T in enumerate(layers):
        if T - m < 0 or T + m > n_ax:
            raise JumpTooClose(f"splice window around layer {T} leaves the rod")
        if idx > 0 and (jumps[idx][0] - jumps[idx - 1][0]) < 4.0 * m / k - 1e-12:
            raise JumpTooClose(
                f"jumps at {jumps[idx - 1][0]} and {jumps[idx][0]} closer than 4r = {4.0 * m / k}"
            )

    pos = np.empty_like(raw)
    coords = lat.atom_coords
    t_atom = coords[:, 0]
    O_acc, c_acc = np.eye(3), np.zeros(3)
    region_start = 0
    anchor_corner = min(lat.cross_section.corners)
    atom_index = lat.atom_index()

    for idx, ((sigma, u_glob, R_rel), T) in enumerate(zip(jumps, layers)):
        smooth_rows = np.flatnonzero((t_atom >= region_start) & (t_atom < T - m))
        pos[smooth_rows] = raw[smooth_rows] @ O_acc.T + c_acc

        s_left = (T - m) / k
        R_left_glob = O_acc @ frame.frame(min(s_left, sigma - 1e-12))
        u_loc = R_left_glob.T @ u_glob

        slab = build_slab_lattice(lat.cross_section, m, k)
        if idx in (profiles or {}):
            profile = profiles[idx]
            if profile.lattice.n_layers != slab.n_layers or profile.lattice.k != k:
                raise ProfileBoundaryMismatch("profile lattice does not match the splice window")
        else:
            if np.linalg.norm(u_loc) > 0:
                profile = Deformation(slab, clean_break_positions(u_loc, R_rel, slab))
            else:
                profile = Deformation(slab, kink_positions(u_loc, R_rel, slab))
        (R_pl, c_pl), (R_pr, c_pr) = _validate_profile(profile, R_rel, profile_tol)

        # Left match: transformed ansatz and transformed profile agree on the
        # left overlap, anchored at one atom and exact when both sides are rigid.
        O_minus = R_left_glob @ R_pl.T
        anchor_rod = atom_index[(T - m, *anchor_corner)]
        anchor_slab = profile.lattice.atom_index()[(-m, *anchor_corner)]
        c_minus = (raw[anchor_rod] @ O_acc.T + c_acc) - O_minus @ profile.positions[anchor_slab]

        window_rows = np.flatnonzero((t_atom >= T - m) & (t_atom <= T + m))
        slab_index = profile.lattice.atom_index()
        for row in window_rows:
            t, i, j = coords[row]
            pos[row] = O_minus @ profile.positions[slab_index[(t - T, i, j)]] + c_minus

        # Right continuation: rotate/shift the remaining ansatz so it extends
        # the profile's right rigid data.
        s_right = (T + m) / k
        O_acc = O_minus @ R_pr @ frame.frame(max(s_right, sigma + 1e-12)).T
        anchor_rod_r = atom_index[(T + m, *anchor_corner)]
        anchor_slab_r = slab_index[(m, *anchor_corner)]
        c_acc = (O_minus @ profile.positions[anchor_slab_r] + c_minus) - O_acc @ raw[anchor_rod_r]
        region_start = T + m + 1

    tail = np.flatnonzero(t_atom >= region_start)
    pos[tail] = raw[tail] @ O_acc.T + c_acc
    return Deformation(lat, pos)
