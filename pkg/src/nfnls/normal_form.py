"""Resonant/non-resonant operator family, partial sums, and the fixed-point solver.

States are box-indexed band collections in the interaction picture (v-picture).
The driving nonlinearity is the boxed cubic

    F(v)(n) = box_n( S(t)[ |S(-t)v|^2 * S(-t)v ] ),

split per output box into the resonant part (R2 - R1), the low-phase
non-resonant part N11 (|Phi| <= N) and the high-phase part N12 (|Phi| > N).
Differentiation by parts trades N12 for a boundary term (gap-kernel sums) plus
inserted lower-order terms; iterating produces the generation operators

* ``generation_n0(v, J, N)``  — boundary sums of the generation-J tree kernels,
* ``generation_nr(v, J, N)``  — same trees with a resonant insert at one leaf,
* ``generation_n1(v, J, N)``  — non-resonant insert restricted to the low set
                                |mu~_{J+1}| <= (2J+3)^3 max(|mu~_J|,|mu_1|)^{0.99},
* ``remainder_n2(v, J, N)``   — non-resonant insert with no phase restriction
                                (the dropped tail; only its norms are used).

These standalone operators follow the constant-free convention (scalar
prefactors dropped) but
do carry the structural signs (conjugation parity of inserted slots and of the
expansion chronicle), so the partial-sum assembly ``gamma_partial`` only has
to apply scalar level weights.  The assembly itself is constant-exact: with
nonlinearity sign sigma (equation i u_t - u_xx + sigma |u|^2 u = 0) each
substitution of the equation carries i*sigma and each differentiation by
parts carries i/2 relative to the plain gap kernels; the level-j weights are

    boundary:  i*sigma * (-i*sigma)^(j-2) * (i/2)^(j-1)
    inserts : -i*sigma * [same]

which the solver-versus-reference tests pin down.

Index sums are window-bounded (windows adapt to the state's active support in
the solver) and deterministic; enumerations are cached across Picard
iterations.  Heavy paths are batched in numpy; generation >= 2 operators fall
back to the kernel-exact tree path with hard emptiness prechecks (at
compliant thresholds the constraint chains are empty on desk-scale windows,
which is precisely the regime the parameter selection creates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    ConfigurationError,
    DivergenceError,
    DomainError,
    GridMismatchError,
    ResourceGuardError,
)
from .grids import Field, Grid, Spectrum, forward, free_propagate, inverse, make_grid
from .modulation import BandCoefficients
from .multilinear import BandTuple, q_tree
from .resonance import QUARTIC, enumerate_triples, phase_value
from .trees import compute_signs, enumerate_trees, enumerate_index_functions

__all__ = [
    "BoxedState",
    "Trajectory",
    "SolverParams",
    "DEFAULT_EMPIRICAL_C",
    "boxed_cubic",
    "resonant_r1",
    "resonant_r2",
    "nonres_n11",
    "nonres_n12",
    "apply_resonant",
    "apply_n11",
    "apply_n12",
    "apply_n1_full",
    "n21_state",
    "n22_state",
    "n4_state",
    "n3_state",
    "n31_state",
    "n32_state",
    "generation_n0",
    "generation_nr",
    "generation_n1",
    "remainder_n2",
    "gamma_partial",
    "threshold_from_bound",
    "choose_parameters",
    "solve",
]

# recorded empirical stand-in for the unnamed estimate constant; re-measured
# by the harness lemma suite (max over the certification sweeps) and stable at
# desk scale
DEFAULT_EMPIRICAL_C = 0.35

SUPPORT_FLOOR = 1e-14
ASSIGNMENT_GUARD = 400_000


# ---------------------------------------------------------------------------
# state containers


@dataclass(frozen=True)
class BoxedState:
    """Bands v_n for n in [-n_max, n_max) as one (2*n_max, B) array."""

    grid: Grid
    data: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=np.complex128)
        if d.shape != (2 * self.grid.n_max, self.grid.bins_per_box):
            raise GridMismatchError(f"state shape {d.shape} does not match grid")
        object.__setattr__(self, "data", d)

    @staticmethod
    def zero(grid: Grid, time: float = 0.0) -> "BoxedState":
        return BoxedState(grid, np.zeros((2 * grid.n_max, grid.bins_per_box), complex), time)

    @staticmethod
    def from_spectrum(F: Spectrum, time: float = 0.0) -> "BoxedState":
        g = F.grid
        return BoxedState(g, F.coeffs.reshape(2 * g.n_max, g.bins_per_box), time)

    def to_spectrum(self) -> Spectrum:
        return Spectrum(grid=self.grid, coeffs=self.data.reshape(-1))

    def band(self, n: int) -> BandCoefficients:
        g = self.grid
        return BandCoefficients(
            box_index=n,
            grid=g,
            coeffs=self.data[n + g.n_max],
            start_bin=n * g.bins_per_box,
        )

    def box_norms(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.data) ** 2, axis=1) / self.grid.bins_per_box)

    def lq_norm(self, q: float, s: float = 0.0) -> float:
        g = self.grid
        norms = self.box_norms()
        boxes = np.arange(-g.n_max, g.n_max, dtype=float)
        vals = (1.0 + boxes**2) ** (s / 2.0) * norms
        if q == math.inf:
            return float(np.max(vals))
        return float(np.sum(vals**q) ** (1.0 / q))

    def active_window(self, floor: float = SUPPORT_FLOOR) -> int:
        norms = self.box_norms()
        total = float(np.sqrt(np.sum(norms**2)))
        if total == 0.0:
            return 0
        g = self.grid
        boxes = np.arange(-g.n_max, g.n_max)
        hot = boxes[norms > floor * total]
        if len(hot) == 0:
            return 0
        return int(max(abs(hot.min()), abs(hot.max())) + 1)

    def plus(self, other: "BoxedState", w: complex = 1.0) -> "BoxedState":
        return BoxedState(self.grid, self.data + w * other.data, self.time)

    def scaled(self, w: complex) -> "BoxedState":
        return BoxedState(self.grid, w * self.data, self.time)

    def at_time(self, t: float) -> "BoxedState":
        return BoxedState(self.grid, self.data, t)


@dataclass(frozen=True)
class Trajectory:
    """States on strictly increasing quadrature nodes, times[0] = 0."""

    times: np.ndarray
    states: tuple[BoxedState, ...]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if len(t) != len(self.states) or len(t) == 0:
            raise ConfigurationError("times and states must align")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("times must start at 0 and strictly increase")
        object.__setattr__(self, "times", t)


# ---------------------------------------------------------------------------
# bin geometry and batched trilinear kernels


@lru_cache(maxsize=8)
def _xi_matrix_key(B: int, n_max: int):
    bins = np.arange(-n_max * B, n_max * B).reshape(2 * n_max, B)
    return bins / B


def _xi_matrix(grid: Grid) -> np.ndarray:
    return _xi_matrix_key(grid.bins_per_box, grid.n_max)


def _rows(grid: Grid, boxes: np.ndarray) -> np.ndarray:
    return boxes + grid.n_max


def _q1_rows(grid, t, v1, v2, v3, n, n1, n2, n3, xi_cache=None):
    """Batched q1: per-row v-picture bands -> per-row output band at box n."""
    B = grid.bins_per_box
    xi1 = (n1[:, None] * B + np.arange(B)) / B
    xi2 = (n2[:, None] * B + np.arange(B)) / B
    xi3 = (n3[:, None] * B + np.arange(B)) / B
    u1 = v1 * np.exp(1j * t * xi1 * xi1)
    u3 = v3 * np.exp(1j * t * xi3 * xi3)
    g2 = np.conj((v2 * np.exp(1j * t * xi2 * xi2))[:, ::-1])
    L = 4 * B
    conv = np.fft.ifft(
        np.fft.fft(u1, L, axis=1) * np.fft.fft(g2, L, axis=1) * np.fft.fft(u3, L, axis=1),
        axis=1,
    )
    d = n - (n1 - n2 + n3)
    idx = (d[:, None] + 1) * B - 1 + np.arange(B)
    out = np.take_along_axis(conv, idx, axis=1)
    xi = (n[:, None] * B + np.arange(B)) / B
    return out * np.exp(-1j * t * xi * xi) / (2.0 * np.pi * B * B)


def _q1_tilde_rows(grid, t, v1, v2, v3, n, n1, n2, n3, chunk=512):
    """Batched gap-kernel operator; rows as in _q1_rows, gaps must be >= 2."""
    B = grid.bins_per_box
    T = len(n)
    out = np.zeros((T, B), dtype=np.complex128)
    a_min_b = (np.arange(B)[:, None] - np.arange(B)[None, :]) / B  # (a, b)
    # shared gather index: padded middle blocks make the offset row-free
    gidx = (
        2 * B - 1
        + np.arange(B)[:, None, None]
        - np.arange(B)[None, :, None]
        - np.arange(B)[None, None, :]
    )  # (a, b, c) into a 3B buffer
    for lo in range(0, T, chunk):
        hi = min(lo + chunk, T)
        sl = slice(lo, hi)
        xi1 = (n1[sl, None] * B + np.arange(B)) / B
        xi2 = (n2[sl, None] * B + np.arange(B)) / B
        xi3 = (n3[sl, None] * B + np.arange(B)) / B
        u1 = v1[sl] * np.exp(1j * t * xi1 * xi1)
        u3 = v3[sl] * np.exp(1j * t * xi3 * xi3)
        g2 = np.conj((v2[sl] * np.exp(1j * t * xi2 * xi2))[:, ::-1])
        d1 = (n[sl] - n1[sl])[:, None, None] + a_min_b[None]  # (t, a, b)
        d3 = (n[sl] - n3[sl])[:, None, None] + a_min_b[None]
        dd = n[sl] - (n1[sl] - n2[sl] + n3[sl])
        padded = np.zeros((hi - lo, 3 * B), dtype=np.complex128)
        cols = (1 - dd)[:, None] * B + np.arange(B)
        np.put_along_axis(padded, cols, g2, axis=1)
        g2v = padded[:, gidx]
        out[sl] = np.einsum(
            "tb,tc,tabc,tab,tac->ta", u1, u3, g2v, 1.0 / d1, 1.0 / d3, optimize=True
        )
    xi = (n[:, None] * B + np.arange(B)) / B
    return out * np.exp(-1j * t * xi * xi) / (2.0 * np.pi * B * B)


# ---------------------------------------------------------------------------
# triple tables (cached across calls)


@lru_cache(maxsize=256)
def _triple_table(n_max: int, window: int, N_key, mode: str, convention: str):
    """Stacked triple arrays (n, n1, n2, n3, weight) over all output boxes."""
    N = None if N_key is None else float(N_key)
    out_lim = min(3 * window + 1, n_max - 1)
    rows = []
    for n in range(-out_lim, out_lim + 1):
        trips = enumerate_triples(n, window, N, mode, convention)
        if mode == "resonant_R2":
            for tr in trips:
                w = 2.0 if (abs(tr.n1 - n) <= 1 and abs(tr.n3 - n) <= 1) else 1.0
                rows.append((n, tr.n1, tr.n2, tr.n3, w))
        else:
            rows.extend((n, tr.n1, tr.n2, tr.n3, 1.0) for tr in trips)
    if not rows:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty, empty, np.zeros(0)
    arr = np.array(rows)
    return (
        arr[:, 0].astype(np.int64),
        arr[:, 1].astype(np.int64),
        arr[:, 2].astype(np.int64),
        arr[:, 3].astype(np.int64),
        arr[:, 4].astype(float),
    )


def _max_abs_phase(window: int) -> float:
    """Crude upper bound for |Phi| on integer tuples inside the window."""
    return 2.0 * (2 * window) ** 2 + 2.0 * (2 * window + 1) + 1.0


def _window_of(state: BoxedState, window: int | None) -> int:
    if window is not None:
        return min(window, state.grid.n_max - 1)
    w = state.active_window()
    return min(max(w, 1), state.grid.n_max - 1)


def _scatter_rows(state_grid: Grid, n_rows, bands, weights=None) -> np.ndarray:
    out = np.zeros((2 * state_grid.n_max, state_grid.bins_per_box), dtype=np.complex128)
    if len(n_rows) == 0:
        return out
    vals = bands if weights is None else bands * weights[:, None]
    np.add.at(out, _rows(state_grid, n_rows), vals)
    return out


def _alive_mask(state: BoxedState, *box_arrays):
    alive = np.any(state.data != 0, axis=1)
    keep = np.ones(len(box_arrays[0]), dtype=bool)
    for boxes in box_arrays:
        keep &= alive[_rows(state.grid, boxes)]
    return keep


def _sum_q1_over(state: BoxedState, t: float, table) -> np.ndarray:
    n, n1, n2, n3, w = table
    if len(n) == 0:
        return np.zeros_like(state.data)
    keep = _alive_mask(state, n1, n2, n3)
    n, n1, n2, n3, w = n[keep], n1[keep], n2[keep], n3[keep], w[keep]
    if len(n) == 0:
        return np.zeros_like(state.data)
    g = state.grid
    v1 = state.data[_rows(g, n1)]
    v2 = state.data[_rows(g, n2)]
    v3 = state.data[_rows(g, n3)]
    bands = _q1_rows(g, t, v1, v2, v3, n, n1, n2, n3)
    return _scatter_rows(g, n, bands, w)


# ---------------------------------------------------------------------------
# generation-one operators


def boxed_cubic(state: BoxedState, t: float | None = None) -> BoxedState:
    """Full nonlinearity box_n(S(t)[|S(-t)v|^2 S(-t)v]) via a 4x padded grid."""
    g = state.grid
    t = state.time if t is None else t
    pad = make_grid(g.bins_per_box, 4 * g.n_max)
    shift = (pad.M - g.M) // 2
    c = np.zeros(pad.M, dtype=complex)
    c[shift : shift + g.M] = state.data.reshape(-1)
    u = inverse(free_propagate(Spectrum(grid=pad, coeffs=c), t, direction=-1))
    h = u.samples * np.conj(u.samples) * u.samples
    F = free_propagate(forward(Field(grid=pad, samples=h)), t, direction=+1)
    sliced = F.coeffs[shift : shift + g.M]
    return BoxedState(g, sliced.reshape(2 * g.n_max, g.bins_per_box), t)


def _resonant_state(state, t, window, mode):
    table = _triple_table(state.grid.n_max, window, None, mode, QUARTIC)
    return BoxedState(state.grid, _sum_q1_over(state, t, table), t)


def apply_resonant(state: BoxedState, t: float | None = None, window: int | None = None) -> BoxedState:
    """R2 - R1 over all boxes (the resonant part of the cubic)."""
    t = state.time if t is None else t
    w = _window_of(state, window)
    r2 = _resonant_state(state, t, w, "resonant_R2")
    r1 = _resonant_state(state, t, w, "resonant_R1")
    return r2.plus(r1, -1.0)


def resonant_r1(state: BoxedState, n: int, t: float | None = None, window: int | None = None) -> BandCoefficients:
    t = state.time if t is None else t
    return _resonant_state(state, t, _window_of(state, window), "resonant_R1").band(n)


def resonant_r2(state: BoxedState, n: int, t: float | None = None, window: int | None = None) -> BandCoefficients:
    t = state.time if t is None else t
    return _resonant_state(state, t, _window_of(state, window), "resonant_R2").band(n)


def apply_n11(state: BoxedState, N: float, t: float | None = None, window: int | None = None) -> BoxedState:
    t = state.time if t is None else t
    w = _window_of(state, window)
    table = _triple_table(state.grid.n_max, w, N, "A_N", QUARTIC)
    return BoxedState(state.grid, _sum_q1_over(state, t, table), t)


def apply_n12(state: BoxedState, N: float, t: float | None = None, window: int | None = None) -> BoxedState:
    t = state.time if t is None else t
    w = _window_of(state, window)
    if _max_abs_phase(w) <= N:
        return BoxedState.zero(state.grid, t)
    table = _triple_table(state.grid.n_max, w, N, "A_N_complement", QUARTIC)
    return BoxedState(state.grid, _sum_q1_over(state, t, table), t)


def apply_n1_full(state: BoxedState, t: float | None = None, window: int | None = None) -> BoxedState:
    """The whole non-resonant part (no threshold)."""
    t = state.time if t is None else t
    w = _window_of(state, window)
    table = _triple_table(state.grid.n_max, w, math.inf, "A_N", QUARTIC)
    return BoxedState(state.grid, _sum_q1_over(state, t, table), t)


def nonres_n11(state: BoxedState, n: int, t: float, N: float, window: int | None = None) -> BandCoefficients:
    return apply_n11(state.at_time(t), N, t, window).band(n)


def nonres_n12(state: BoxedState, n: int, t: float, N: float, window: int | None = None) -> BandCoefficients:
    return apply_n12(state.at_time(t), N, t, window).band(n)


def n21_state(state: BoxedState, N: float, t: float | None = None, window: int | None = None) -> BoxedState:
    """Boundary sum over the high-phase set: sum of gap kernels (generation one)."""
    t = state.time if t is None else t
    w = _window_of(state, window)
    if _max_abs_phase(w) <= N:
        return BoxedState.zero(state.grid, t)
    g = state.grid
    n, n1, n2, n3, wt = _triple_table(g.n_max, w, N, "A_N_complement", QUARTIC)
    keep = _alive_mask(state, n1, n2, n3)
    n, n1, n2, n3, wt = n[keep], n1[keep], n2[keep], n3[keep], wt[keep]
    if len(n) == 0:
        return BoxedState.zero(g, t)
    bands = _q1_tilde_rows(
        g, t,
        state.data[_rows(g, n1)], state.data[_rows(g, n2)], state.data[_rows(g, n3)],
        n, n1, n2, n3,
    )
    return BoxedState(g, _scatter_rows(g, n, bands, wt), t)


# ---------------------------------------------------------------------------
# inserted sums at generation one (slot signs from the conjugation parity)

_SLOT_SIGNS = (+1, -1, +1)


def _tilde_insert_sum(state, t, w_rows_fn, N, window):
    """sum over the high-phase set and the three slots of
    fsgn(slot) * q1_tilde(... insert at slot ...).

    ``w_rows_fn(slot, n, n1, n2, n3, mu1)`` returns the (T, B) v-picture
    insert rows for that slot (or None to use the state's own bands).
    """
    g = state.grid
    w = _window_of(state, window)
    if _max_abs_phase(w) <= N:
        return BoxedState.zero(state.grid, t)
    n, n1, n2, n3, wt = _triple_table(g.n_max, w, N, "A_N_complement", QUARTIC)
    if len(n) == 0:
        return BoxedState.zero(state.grid, t)
    alive = np.any(state.data != 0, axis=1)
    mu1_all = phase_value(n, n1, n2, n3, QUARTIC)
    total = np.zeros_like(state.data)
    slot_boxes = (n1, n2, n3)
    for slot in range(3):
        others = [slot_boxes[i] for i in range(3) if i != slot]
        keep = alive[_rows(g, others[0])] & alive[_rows(g, others[1])]
        if not np.any(keep):
            continue
        nk, n1k, n2k, n3k, wk = (a[keep] for a in (n, n1, n2, n3, wt))
        rows = w_rows_fn(slot, nk, n1k, n2k, n3k, mu1_all[keep])
        if rows is None:
            continue
        nz = np.any(rows != 0, axis=1)
        if not np.any(nz):
            continue
        nk, n1k, n2k, n3k, wk = (a[nz] for a in (nk, n1k, n2k, n3k, wk))
        stacks = [state.data[_rows(g, nn)] for nn in (n1k, n2k, n3k)]
        stacks[slot] = rows[nz]
        bands = _q1_tilde_rows(g, t, stacks[0], stacks[1], stacks[2], nk, n1k, n2k, n3k)
        total += _SLOT_SIGNS[slot] * _scatter_rows(g, nk, bands, wk)
    return BoxedState(g, total, t)


def n4_state(state: BoxedState, N: float, t: float | None = None, window: int | None = None) -> BoxedState:
    """Resonant insert sum: (R2 - R1)(v) substituted at each slot."""
    t = state.time if t is None else t
    r = apply_resonant(state, t, window)

    def rows(slot, n, n1, n2, n3, mu1):
        boxes = (n1, n2, n3)[slot]
        return r.data[_rows(state.grid, boxes)]

    return _tilde_insert_sum(state, t, rows, N, window)


class _InnerBuckets:
    """Per-box non-resonant q1 bands bucketed by their integer phase.

    Prefix sums over the sorted phase keys make any |mu~ + s*mu| <= K
    interval query an O(B) band subtraction.
    """

    def __init__(self, state: BoxedState, t: float, window: int, convention=QUARTIC):
        g = state.grid
        self.grid = g
        n, n1, n2, n3, _ = _triple_table(g.n_max, window, math.inf, "A_N", convention)
        self.tables: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        keep = _alive_mask(state, n1, n2, n3)
        n, n1, n2, n3 = n[keep], n1[keep], n2[keep], n3[keep]
        if len(n) == 0:
            return
        bands = _q1_rows(
            g, t,
            state.data[_rows(g, n1)], state.data[_rows(g, n2)], state.data[_rows(g, n3)],
            n, n1, n2, n3,
        )
        keys = phase_value(n, n1, n2, n3, convention)
        order = np.lexsort((keys, n))
        n_s, k_s, b_s = n[order], keys[order], bands[order]
        B = g.bins_per_box
        for box in np.unique(n_s):
            sel = n_s == box
            kk = k_s[sel]
            prefix = np.concatenate(
                [np.zeros((1, B), complex), np.cumsum(b_s[sel], axis=0)]
            )
            self.tables[int(box)] = (kk, prefix)

    def interval(self, box: int, lo: float, hi: float) -> np.ndarray:
        """Sum of bands at ``box`` with phase key in [lo, hi]."""
        tab = self.tables.get(int(box))
        B = self.grid.bins_per_box
        if tab is None:
            return np.zeros(B, dtype=complex)
        kk, prefix = tab
        i = np.searchsorted(kk, lo, side="left")
        j = np.searchsorted(kk, hi, side="right")
        return prefix[j] - prefix[i]

    def total(self, box: int) -> np.ndarray:
        tab = self.tables.get(int(box))
        if tab is None:
            return np.zeros(self.grid.bins_per_box, dtype=complex)
        return tab[1][-1]


def _coupled_insert_rows(buckets, grid, sign, boxes, mu_prev, mu_first, J, which):
    """(T, B) insert rows, restricted by the level-J phase set.

    ``sign`` is the conjugation sign the insert enters with: the kept set for
    which = "low" is |mu_prev + sign*mu| <= (2J+3)^3 max(|mu_prev|,|mu_first|)^0.99;
    "high" keeps the complement, "all" applies no restriction.
    """
    T = len(boxes)
    B = grid.bins_per_box
    out = np.zeros((T, B), dtype=complex)
    if which == "all":
        for box in np.unique(boxes):
            out[boxes == box] = buckets.total(box)
        return out
    K = (2 * J + 3) ** 3 * np.maximum(np.abs(mu_prev), np.abs(mu_first)) ** 0.99
    center = -sign * np.asarray(mu_prev, dtype=float)
    lo_all, hi_all = center - K, center + K
    for box in np.unique(boxes):
        tab = buckets.tables.get(int(box))
        sel = np.flatnonzero(boxes == box)
        if tab is None:
            continue
        kk, prefix = tab
        i = np.searchsorted(kk, lo_all[sel], side="left")
        j = np.searchsorted(kk, hi_all[sel], side="right")
        inside = prefix[j] - prefix[i]
        if which == "low":
            out[sel] = inside
        else:
            out[sel] = prefix[-1] - inside
    return out


def _n3_family(state, N, t, window, which):
    t = state.time if t is None else t
    w = _window_of(state, window)
    if _max_abs_phase(w) <= N:
        return BoxedState.zero(state.grid, t)
    buckets = _InnerBuckets(state, t, w)

    def rows(slot, n, n1, n2, n3, mu1):
        boxes = (n1, n2, n3)[slot]
        return _coupled_insert_rows(
            buckets, state.grid, _SLOT_SIGNS[slot], boxes, mu1, mu1, 1, which
        )

    return _tilde_insert_sum(state, t, rows, N, w)


def n3_state(state, N, t=None, window=None):
    """Full non-resonant insert sum at generation one (no phase restriction)."""
    return _n3_family(state, N, t, window, "all")


def n31_state(state, N, t=None, window=None):
    """Non-resonant insert restricted to the low joint-phase set."""
    return _n3_family(state, N, t, window, "low")


def n32_state(state, N, t=None, window=None):
    """Non-resonant insert on the high joint-phase complement (next remainder)."""
    return _n3_family(state, N, t, window, "high")


def n22_state(state, N, t=None, window=None):
    """The substituted time-derivative term: resonant plus non-resonant inserts."""
    t = state.time if t is None else t
    return n4_state(state, N, t, window).plus(n3_state(state, N, t, window))


# ---------------------------------------------------------------------------
# generation >= 2 operators via the kernel-exact tree path


def _chain_possible(J: int, N: float, window: int) -> bool:
    """Can the complement chain hold for all j = 2..J inside the window?

    Recursive lower bounds: the level-j prefix must exceed
    (2j+1)^3 * max(L_{j-1}, L_1)^{0.99} where L_{j-1} bounds the previous
    prefix from below, while |mu~_j| <= j * max|Phi|(window).
    """
    cap = _max_abs_phase(window)
    L = math.floor(N) + 1.0  # integer phases above the threshold
    L1 = L
    for j in range(2, J + 1):
        L = (2 * j + 1) ** 3 * max(L, L1) ** 0.99
        if j * cap <= L:
            return False
    return True


def _tree_sign(tree, signs) -> int:
    s = 1
    for a in tree.chronicle[1:]:
        s *= signs.fsgn[a]
    return s


def _tree_level_sum(state, J, N, t, window, mode, allowed_all=None):
    """Sum over T(J) trees and chain-filtered assignments; mode selects leaves.

    mode: "n0" plain, "nr" resonant insert, "n1" low-set insert,
    "rem" unrestricted insert.  ``allowed_all``, when given, becomes the
    operative box window for every node of every tree (sparse-support runs).
    """
    g = state.grid
    w = _window_of(state, window)
    out = BoxedState.zero(g, t)
    if _max_abs_phase(w) <= N or not _chain_possible(J, N, w):
        return out
    boxes_axis = np.arange(-g.n_max, g.n_max)
    active = {int(b) for b in boxes_axis[state.box_norms() > 0]}
    if not active:
        return out
    insert_state = None
    buckets = None
    allowed = set(active)
    if mode == "nr":
        insert_state = apply_resonant(state, t, w)
        allowed |= {int(b) for b in boxes_axis[insert_state.box_norms() > 0]}
    elif mode in ("n1", "rem"):
        buckets = _InnerBuckets(state, t, w)
        allowed |= set(buckets.tables.keys())
    if mode == "nr":
        insert_boxes = {int(b) for b in boxes_axis[insert_state.box_norms() > 0]}
    elif mode in ("n1", "rem"):
        insert_boxes = set(buckets.tables.keys())
    internal_allowed = set(allowed_all) if allowed_all is not None else None
    if allowed_all is not None:
        active &= set(allowed_all)
        if mode != "n0":
            insert_boxes &= set(allowed_all)
    data = np.zeros_like(state.data)
    out_lim = min(3 * w + 1, g.n_max - 1)
    universe = set(active)
    if mode != "n0":
        universe |= insert_boxes
    if internal_allowed is not None:
        universe |= internal_allowed
    uni = np.array(sorted(universe))
    sums = np.unique(uni[:, None, None] - uni[None, :, None] + uni[None, None, :])
    sums = np.unique(np.concatenate([sums - 1, sums, sums + 1]))
    root_candidates = [int(r) for r in sums if -out_lim <= r <= out_lim]
    count = 0
    for tree in enumerate_trees(J):
        signs = compute_signs(tree)
        tsign = _tree_sign(tree, signs)
        leaf_ids = tree.terminal_ids()
        flags = tuple(signs.fsgn[b] == -1 for b in leaf_ids)
        base_plan = {a: internal_allowed for a in tree.chronicle[1:]}
        base_plan.update({b: active for b in leaf_ids})
        if mode == "n0":
            plans = [(None, base_plan)]
        else:
            plans = []
            for li, leaf in enumerate(leaf_ids):
                p = dict(base_plan)
                p[leaf] = insert_boxes
                plans.append((li, p))
        for n_root in root_candidates:
            for li, plan in plans:
                assigns = enumerate_index_functions(
                    tree, n_root, w, N,
                    cJ_filter="C_complement_chain",
                    allowed_boxes=plan,
                    max_count=ASSIGNMENT_GUARD,
                )
                count += len(assigns)
                if count > ASSIGNMENT_GUARD:
                    raise ResourceGuardError(
                        "tree-level operator sum exceeded the assignment guard"
                    )
                for assign in assigns:
                    base = [state.band(assign.freq[b]) for b in leaf_ids]
                    if li is None:
                        tup = BandTuple(tuple(base), flags)
                        band = q_tree(tree, assign, tup, t)
                        data[n_root + g.n_max] += tsign * band.coeffs
                        continue
                    leaf = leaf_ids[li]
                    box = assign.freq[leaf]
                    if mode == "nr":
                        ins = insert_state.band(box).coeffs
                    else:
                        which = "all" if mode == "rem" else "low"
                        ins = _coupled_insert_rows(
                            buckets, g, signs.fsgn[leaf], np.array([box]),
                            np.array([float(assign.phases.mu_tilde[-1])]),
                            np.array([float(assign.phases.mu[0])]),
                            J, which,
                        )[0]
                    if not np.any(ins):
                        continue
                    bands = list(base)
                    bands[li] = BandCoefficients(
                        box_index=box, grid=g, coeffs=ins, start_bin=box * g.bins_per_box
                    )
                    tup = BandTuple(tuple(bands), flags)
                    band = q_tree(tree, assign, tup, t)
                    data[n_root + g.n_max] += tsign * signs.fsgn[leaf] * band.coeffs
    return BoxedState(g, data, t)


def generation_n0(state: BoxedState, J: int, N: float, t: float | None = None, window: int | None = None) -> BoxedState:
    """Boundary operator at level J+1 (trees with J generations)."""
    t = state.time if t is None else t
    if J == 1:
        return n21_state(state, N, t, window)
    return _tree_level_sum(state, J, N, t, window, "n0")


def generation_nr(state: BoxedState, J: int, N: float, t: float | None = None, window: int | None = None) -> BoxedState:
    """Resonant-insert operator at level J+1."""
    t = state.time if t is None else t
    if J == 1:
        return n4_state(state, N, t, window)
    return _tree_level_sum(state, J, N, t, window, "nr")


def generation_n1(state: BoxedState, J: int, N: float, t: float | None = None, window: int | None = None) -> BoxedState:
    """Low-phase non-resonant insert at level J+1."""
    t = state.time if t is None else t
    if J == 1:
        return n31_state(state, N, t, window)
    return _tree_level_sum(state, J, N, t, window, "n1")


def remainder_n2(
    state: BoxedState,
    J: int,
    N: float,
    t: float | None = None,
    window: int | None = None,
    allowed_all=None,
) -> BoxedState:
    """Unrestricted non-resonant insert at level J+1 (the dropped tail).

    ``allowed_all`` restricts every tree node to a box set (the sparse-support
    window used by the remainder-decay study); J = 1 then also goes through
    the tree path so all levels share the same operative window.
    """
    t = state.time if t is None else t
    if J == 1 and allowed_all is None:
        return n3_state(state, N, t, window)
    return _tree_level_sum(state, J, N, t, window, "rem", allowed_all=allowed_all)


# ---------------------------------------------------------------------------
# parameter selection


@dataclass(frozen=True)
class SolverParams:
    J: int
    N: float
    T: float
    q: float
    s: float = 0.0
    R: float = 1.0
    R_tilde: float = 4.0
    K: int = 16
    picard_tol: float = 1e-12
    picard_max_iter: int = 25
    sign: int = +1
    window: int | None = None
    eps: float = 0.2
    empirical_c: float = DEFAULT_EMPIRICAL_C
    support_trim: float = 0.0  # relative band floor zeroed between iterates

    def q_prime(self) -> float:
        return math.inf if self.q == 1.0 else self.q / (self.q - 1.0)

    def validate(self):
        if not (1.0 <= self.q <= 2.0):
            raise ConfigurationError(f"q must lie in [1, 2], got {self.q}")
        if self.J < 1 or self.K < 2 or self.T <= 0:
            raise ConfigurationError("need J >= 1, K >= 2, T > 0")
        if self.sign not in (+1, -1):
            raise ConfigurationError("sign must be +1 or -1")
        if self.N < threshold_from_bound(self.R_tilde, self.q) - 1e-9:
            raise ConfigurationError(
                f"threshold N={self.N} below the geometric-series bound"
            )
        if self.empirical_c * self.T * _t_bracket(self.N, self.q, self.R_tilde) >= 0.1:
            raise ConfigurationError("time horizon violates the smallness condition")


def threshold_from_bound(R_tilde: float, q: float) -> float:
    """Smallest admissible threshold (2*R~^2)^(100 q' / (99 (q'-1))).

    q = 1 takes the limit exponent 100/99.
    """
    if not (1.0 <= q <= 2.0):
        raise DomainError(f"q must lie in [1, 2], got {q}")
    if q == 1.0:
        expo = 100.0 / 99.0
    else:
        qp = q / (q - 1.0)
        expo = 100.0 * qp / (99.0 * (qp - 1.0))
    return float(np.ceil((2.0 * R_tilde**2) ** expo))


def _t_bracket(N: float, q: float, R_tilde: float) -> float:
    """The bracket multiplying C*T in the smallness condition (limit exponents)."""
    qp = math.inf if q == 1.0 else q / (q - 1.0)
    inv_qp = 0.0 if qp == math.inf else 1.0 / qp
    term1 = (1.0 + N**inv_qp) * R_tilde**2
    term2 = 2.0 * N ** (inv_qp - 1.0) * R_tilde**4
    expo3 = -1.0 if qp == math.inf else (199.0 - 100.0 * qp) / (100.0 * qp)
    term3 = 2.0 * N**expo3 * R_tilde**4
    return term1 + term2 + term3


def choose_parameters(
    R: float,
    q: float,
    J: int = 2,
    s: float = 0.0,
    K: int = 16,
    sign: int = +1,
    empirical_c: float = DEFAULT_EMPIRICAL_C,
) -> SolverParams:
    """Threshold and horizon from the a-priori bound R (R~ = 4R).

    N is the geometric-series bound ceiling; T makes C*T*[bracket] = 0.099,
    with the recorded empirical constant standing in for the unnamed one.
    The separate largeness condition C*N^((1-q')/(100 q')) < 1/10 is reported
    by the harness rather than enforced (see the lemma suite).
    """
    if R < 1.0:
        raise DomainError(f"a-priori bound must satisfy R >= 1, got {R}")
    R_tilde = 4.0 * R
    N = threshold_from_bound(R_tilde, q)
    T = 0.099 / (empirical_c * _t_bracket(N, q, R_tilde))
    p = SolverParams(
        J=J, N=N, T=T, q=q, s=s, R=R, R_tilde=R_tilde, K=K, sign=sign,
        empirical_c=empirical_c,
    )
    p.validate()
    return p


# ---------------------------------------------------------------------------
# the partial-sum map and the solver


def _level_weights(j: int, sigma: int) -> tuple[complex, complex]:
    """(boundary, insert) scalar weights of level j in the exact assembly."""
    s_j = (1j * sigma) * (-1j * sigma) ** (j - 2)
    half = (0.5j) ** (j - 1)
    return s_j * half, -1j * sigma * s_j * half


def _integrand(state, params, window):
    """i*sigma*[(R2-R1) + N11] plus the insert sums of levels 2..J."""
    sigma = params.sign
    t = state.time
    # (R2-R1) + N11 == full cubic minus N12 (the decomposition identity)
    low = boxed_cubic(state, t).plus(apply_n12(state, params.N, t, window), -1.0)
    total = low.scaled(1j * sigma)
    for j in range(2, params.J + 1):
        _, w_ins = _level_weights(j, sigma)
        nr = generation_nr(state, j - 1, params.N, t, window)
        n1 = generation_n1(state, j - 1, params.N, t, window)
        total = total.plus(nr.plus(n1), w_ins)
    return total


def gamma_partial(v0: BoxedState, v: Trajectory, params: SolverParams) -> Trajectory:
    """One application of the level-J partial-sum map along the trajectory.

    Boundary terms are evaluated at the running time for v and at time zero
    for v0, exactly as the telescoped series prescribes; the time integral is
    a composite trapezoid on the trajectory nodes.
    """
    params.validate()
    times = v.times
    if abs(times[-1] - params.T) > 1e-12 * max(1.0, params.T):
        raise ConfigurationError("trajectory must live on [0, T]")
    sigma = params.sign
    window = params.window
    g = v0.grid

    bnd_at_zero = BoxedState.zero(g)
    for j in range(2, params.J + 1):
        w_bnd, _ = _level_weights(j, sigma)
        bnd_at_zero = bnd_at_zero.plus(
            generation_n0(v0.at_time(0.0), j - 1, params.N, 0.0, window), w_bnd
        )

    integrands = [_integrand(st.at_time(tt), params, window) for st, tt in zip(v.states, times)]

    out_states = []
    integral = BoxedState.zero(g)
    for k, tt in enumerate(times):
        if k > 0:
            dt = times[k] - times[k - 1]
            integral = integral.plus(integrands[k - 1], 0.5 * dt).plus(integrands[k], 0.5 * dt)
        acc = v0.data + integral.data - bnd_at_zero.data
        for j in range(2, params.J + 1):
            w_bnd, _ = _level_weights(j, sigma)
            acc = acc + w_bnd * generation_n0(
                v.states[k].at_time(tt), j - 1, params.N, tt, window
            ).data
        out_states.append(BoxedState(g, acc, tt))
    return Trajectory(times=times, states=tuple(out_states))


def _traj_distance(a: Trajectory, b: Trajectory, q: float, s: float) -> float:
    return max(
        sa.plus(sb, -1.0).lq_norm(q, s) for sa, sb in zip(a.states, b.states)
    )


def _trim_state(st: BoxedState, rel: float) -> BoxedState:
    """Zero bands below rel * (largest band norm); documented solver truncation."""
    if rel <= 0.0:
        return st
    norms = st.box_norms()
    cut = rel * float(norms.max(initial=0.0))
    if cut == 0.0:
        return st
    data = np.where(norms[:, None] >= cut, st.data, 0.0)
    return BoxedState(st.grid, data, st.time)


def solve(u0, params: SolverParams):
    """Fixed-point iteration of the partial-sum map from constant-in-time data.

    ``u0`` may be a Field, Spectrum or BoxedState (at time zero the pictures
    agree).  Returns the trajectory mapped back to the original picture via
    the free flow, plus a diagnostics dict with the contraction history.
    """
    params.validate()
    if isinstance(u0, Field):
        v0 = BoxedState.from_spectrum(forward(u0), 0.0)
    elif isinstance(u0, Spectrum):
        v0 = BoxedState.from_spectrum(u0, 0.0)
    else:
        v0 = u0.at_time(0.0)
    v0 = _trim_state(v0, params.support_trim)
    norm0 = v0.lq_norm(params.q, params.s)
    if norm0 > params.R + 1e-9:
        raise ConfigurationError(
            f"initial norm {norm0:.3g} exceeds the declared bound R={params.R}"
        )
    times = np.linspace(0.0, params.T, params.K + 1)
    current = Trajectory(times=times, states=tuple(v0.at_time(t) for t in times))
    diffs: list[float] = []
    ratios: list[float] = []
    for it in range(params.picard_max_iter):
        nxt = gamma_partial(v0, current, params)
        if params.support_trim > 0.0:
            nxt = Trajectory(
                times=nxt.times,
                states=tuple(_trim_state(st, params.support_trim) for st in nxt.states),
            )
        d = _traj_distance(nxt, current, params.q, params.s)
        if diffs:
            ratios.append(d / diffs[-1] if diffs[-1] > 0 else 0.0)
        diffs.append(d)
        current = nxt
        if d < params.picard_tol * max(1.0, params.R_tilde):
            break
        if len(ratios) >= 3 and all(r >= 1.0 for r in ratios[-3:]):
            raise DivergenceError(
                "fixed-point iteration stopped contracting", ratios=ratios
            )
    else:
        if diffs[-1] >= params.picard_tol * max(1.0, params.R_tilde):
            raise DivergenceError(
                f"no convergence in {params.picard_max_iter} iterations", ratios=ratios
            )
    u_states = tuple(
        BoxedState.from_spectrum(
            free_propagate(st.to_spectrum(), tt, direction=-1), tt
        )
        for st, tt in zip(current.states, times)
    )
    report = {
        "iterations": len(diffs),
        "diffs": diffs,
        "ratios": ratios,
        "initial_norm": norm0,
    }
    return Trajectory(times=times, states=u_states), report
