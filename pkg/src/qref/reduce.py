"""
Reduced states over one retained coordinate, and what can be read off them.

Partial traces of Gaussian superpositions are exact.  Each pair of branches
(i, j) contributes one Gaussian kernel

    K_ij(x, x') = coeff * exp(-1/2 z^T Q z + b^T z + c),  z = (x, x') - origin,

obtained by integrating the traced coordinates analytically.  For product
states the kernel factorises into a ket-bra of packets; for correlated states
it carries an x x' cross term.  Trace, purity, shifted traces and matrix
elements are closed-form.  Grids only appear when rendering fringes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .canon import (
    CorrelatedState,
    LinearPhaseSpaceForm,
    correlated_inner,
    correlated_weyl,
    form_in_frame,
)
from .errors import ContractError, DomainError, ResolutionError, UnsupportedCaseError
from .packets import (
    ComplexGaussian,
    GaussianPacket,
    SuperposedState,
    WeylShift,
    apply_weyl,
    inner,
    packet_overlap,
)

HERMITIAN_TOL = 1e-9
# window for visibility: envelope mean +/- this many envelope standard deviations
VISIBILITY_WINDOW_SIGMAS = 1.0
MIN_POINTS_PER_FRINGE = 8
# terms weaker than this (relative to the peak density or the trace) carry no visible fringes
FRINGE_WEIGHT_FLOOR = 1e-9
DEFAULT_GRID_POINTS = 2048
DEFAULT_GRID_SIGMAS = 8.0

_DIAGONAL = np.array([[1.0], [1.0]])
_SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class KernelTerm:
    """
    Contribution of one branch pair (ket_branch, bra_branch) to a reduced operator.

    ``ket_centre`` and ``bra_centre`` are the retained-coordinate centres of
    the two branches and label the term for detector bookkeeping.
    """

    coeff: complex
    kernel: ComplexGaussian
    ket_branch: int
    bra_branch: int
    ket_centre: float
    bra_centre: float

    def __post_init__(self):
        if self.kernel.dim != 2:
            raise ContractError("kernel terms act on (x, x')")
        object.__setattr__(self, "coeff", complex(self.coeff))

    @classmethod
    def from_packets(cls, coeff, ket: GaussianPacket, bra: GaussianPacket, ket_branch=0, bra_branch=0) -> KernelTerm:
        """coeff |ket><bra|."""
        kernel = ComplexGaussian.product([ComplexGaussian.from_packet(ket), ComplexGaussian.from_packet(bra).conj()])
        return cls(coeff, kernel, ket_branch, bra_branch, ket.centre, bra.centre)

    @property
    def is_population(self) -> bool:
        return self.ket_branch == self.bra_branch

    def __call__(self, x, xp):
        x, xp = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xp, dtype=float))
        return self.coeff * self.kernel(np.stack([x, xp], axis=-1))

    def diagonal(self, shift: float = 0.0) -> ComplexGaussian:
        """x -> K(x, x + shift) without the coefficient."""
        return self.kernel.substitute(_DIAGONAL, [0.0, shift])

    def shifted_trace(self, shift: float = 0.0) -> complex:
        """integral K(x, x + shift) dx, the trace of the term times T_shift."""
        if self.coeff == 0:
            return 0j
        return self.coeff * self.diagonal(shift).integral()

    def hs_norm(self) -> float:
        """Hilbert-Schmidt norm of the term."""
        if self.coeff == 0:
            return 0.0
        return abs(self.coeff) * math.sqrt(max((self.kernel * self.kernel.conj()).integral().real, 0.0))

    def population_moments(self) -> tuple[float, float]:
        """Mean and standard deviation of the term's diagonal profile."""
        d = self.diagonal()
        q = d.Q[0, 0].real
        return float(d.origin[0] + d.b[0].real / q), 1.0 / math.sqrt(q)


@dataclass(frozen=True)
class GaussianMixtureOperator:
    """
    rho(x, x') = sum_t K_t(x, x') on a single coordinate.

    Hermiticity is checked on construction: the term for (i, j) must be the
    adjoint of the term for (j, i).
    """

    terms: tuple[KernelTerm, ...]
    trace_value: complex = None
    label: str = ""

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ContractError("operator has no terms")
        object.__setattr__(self, "terms", terms)
        _check_hermitian(terms)
        if self.trace_value is None:
            object.__setattr__(self, "trace_value", complex(sum(t.shifted_trace() for t in terms)))

    def __call__(self, x, xp):
        """Matrix element <x|rho|x'> (broadcasting)."""
        return sum(t(x, xp) for t in self.terms)

    def density(self, x) -> np.ndarray:
        return np.real(self(x, x))

    def matrix(self, x) -> np.ndarray:
        """Discretised operator on a uniform grid (includes the dx weight)."""
        x = np.asarray(x, dtype=float)
        return self(x[:, None], x[None, :]) * (x[1] - x[0])

    def populations(self) -> list[KernelTerm]:
        return [t for t in self.terms if t.is_population]

    def coherences(self) -> list[KernelTerm]:
        return [t for t in self.terms if not t.is_population]


def _check_hermitian(terms: Sequence[KernelTerm]):
    by_pair = {(t.ket_branch, t.bra_branch): t for t in terms}
    if len(by_pair) != len(terms):
        raise ContractError("each branch pair may appear once")
    for t in terms:
        u = by_pair.get((t.bra_branch, t.ket_branch))
        if u is None:
            raise ContractError("operator terms are not Hermitian-paired")
        # K_u(x, x') must equal conj(K_t(x', x)); probe around u's centre
        o = t.kernel.origin
        s = 1.0 / math.sqrt(max(abs(t.kernel.Q[0, 0]), 1e-300))
        xs = np.array([o[1], o[1] + s, o[1] - s])
        xps = np.array([o[0], o[0] - 0.5 * s, o[0] + s])
        mine = np.conj(t(xps, xs))
        theirs = u(xs, xps)
        scale = max(float(np.max(np.abs(mine))), float(np.max(np.abs(theirs))), 1e-300)
        if np.max(np.abs(mine - theirs)) > HERMITIAN_TOL * scale:
            raise ContractError("operator terms are not Hermitian-paired")


def _keep_index(state, keep) -> int:
    keep = {keep} if isinstance(keep, (int, np.integer)) else set(keep)
    n = state.n_coords
    if not keep or len(keep) >= n:
        raise ContractError("keep must be a non-empty proper subset of the coordinates")
    if any(not 0 <= k < n for k in keep):
        raise ContractError(f"coordinate index out of range for {n} coordinates")
    if len(keep) > 1:
        raise UnsupportedCaseError("only a single retained coordinate is supported")
    return int(next(iter(keep)))


def partial_trace(state: SuperposedState | CorrelatedState, keep) -> GaussianMixtureOperator:
    """
    Trace out every coordinate except ``keep``.

    Product states: rho = sum_ij a_i conj(a_j) prod_{traced c} <g_jc|g_ic> |g_ik><g_jk|.
    Correlated states: the traced coordinates are integrated jointly.
    """
    k = _keep_index(state, keep)
    label = state.labels[k] if state.labels else f"coord{k}"
    if isinstance(state, CorrelatedState):
        return GaussianMixtureOperator(_correlated_terms(state, k), label=label)
    traced = [c for c in range(state.n_coords) if c != k]
    terms = []
    for i, bi in enumerate(state.branches):
        for j, bj in enumerate(state.branches):
            w = bi.amplitude * bj.amplitude.conjugate()
            for c in traced:
                w *= packet_overlap(bj.packets[c], bi.packets[c])
            if i == j:
                w = complex(w.real, 0.0)
            terms.append(KernelTerm.from_packets(w, bi.packets[k], bj.packets[k], i, j))
    return GaussianMixtureOperator(tuple(terms), label=label)


def _correlated_terms(state: CorrelatedState, k: int) -> tuple[KernelTerm, ...]:
    n = state.n_coords
    rest = [c for c in range(n) if c != k]
    # joint variables u = (traced..., x, x'); ket sees (traced, x), bra sees (traced, x')
    S_ket = np.zeros((n, n + 1))
    S_bra = np.zeros((n, n + 1))
    for col, c in enumerate(rest):
        S_ket[c, col] = S_bra[c, col] = 1.0
    S_ket[k, n - 1] = 1.0
    S_bra[k, n] = 1.0
    kets = [b.gaussian.substitute(S_ket) for b in state.branches]
    bras = [b.gaussian.conj().substitute(S_bra) for b in state.branches]
    terms = []
    for i, bi in enumerate(state.branches):
        for j, bj in enumerate(state.branches):
            kernel = (kets[i] * bras[j]).marginal([n - 1, n]).recentred([bi.centre[k], bj.centre[k]])
            coeff = bi.amplitude * bj.amplitude.conjugate()
            if i == j:
                kernel = _self_adjoint(kernel)
                coeff = complex(coeff.real, 0.0)
            terms.append(KernelTerm(coeff, kernel, i, j, bi.centre[k], bj.centre[k]))
    return tuple(terms)


def _self_adjoint(kernel: ComplexGaussian) -> ComplexGaussian:
    """Average a diagonal-block kernel with its adjoint to remove rounding asymmetry."""
    adj = kernel.conj().substitute(_SWAP).recentred(kernel.origin)
    return ComplexGaussian(kernel.origin, 0.5 * (kernel.Q + adj.Q), 0.5 * (kernel.b + adj.b), 0.5 * (kernel.c + adj.c))


def purity(rho: GaussianMixtureOperator) -> float:
    """Tr(rho^2) = sum_tu integral K_t(x, y) K_u(y, x) dx dy."""
    terms = [t for t in rho.terms if t.coeff != 0]
    swapped = [u.kernel.substitute(_SWAP) for u in terms]
    total = 0.0j
    for t in terms:
        for u, su in zip(terms, swapped):
            total += t.coeff * u.coeff * (t.kernel * su).integral()
    return float(total.real)


def shift_expectation(rho: GaussianMixtureOperator, displacement: float) -> complex:
    """Tr(rho T_d) with T_d translating the retained coordinate by ``displacement``."""
    return complex(sum(t.shifted_trace(displacement) for t in rho.terms))


def expectation_weyl(state, form: LinearPhaseSpaceForm, displacement: float) -> complex:
    """
    <state| exp(-i * displacement * form) |state>.

    ``form`` is written in lab operators.  When the state lives in another
    frame the form is first rewritten in that frame's canonical operators, so
    a single lab momentum form can become a shift of several new
    coordinates.  The exponential then factorises into one Weyl shift per
    coordinate.
    """
    if not (form.is_momentum_only or form.is_position_only):
        raise UnsupportedCaseError("mixed position/momentum forms are not supported")
    x_c, p_c = form_in_frame(form, state.frame)
    if form.is_momentum_only:
        shift = WeylShift(tuple(displacement * p_c), (0.0,) * state.n_coords)
    else:
        shift = WeylShift((0.0,) * state.n_coords, tuple(-displacement * x_c))
    if isinstance(state, CorrelatedState):
        return correlated_inner(state, correlated_weyl(state, shift))
    return inner(state, apply_weyl(state, shift))


def factorized_shifts(state, form: LinearPhaseSpaceForm, displacement: float) -> np.ndarray:
    """Per-coordinate displacements that exp(-i d form) induces in the state's frame."""
    _, p_c = form_in_frame(form, state.frame)
    return displacement * p_c


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    points: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        if not (self.hi > self.lo) or self.points < 2:
            raise ContractError("grid needs hi > lo and at least two points")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.points)

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / (self.points - 1)

    @property
    def extent(self) -> float:
        return self.hi - self.lo

    @classmethod
    def around(cls, rho: GaussianMixtureOperator, sigmas=DEFAULT_GRID_SIGMAS, points=DEFAULT_GRID_POINTS):
        """Cover every significantly populated branch by ``sigmas`` standard deviations."""
        moments = [t.population_moments() for t in _significant_populations(rho)]
        lo = min(m - sigmas * s for m, s in moments)
        hi = max(m + sigmas * s for m, s in moments)
        return cls(lo, hi, int(points))


def _significant_populations(rho):
    pops = rho.populations()
    weights = [t.shifted_trace().real for t in pops]
    floor = FRINGE_WEIGHT_FLOOR * max(max(weights), 1e-300)
    keep = [t for t, w in zip(pops, weights) if w > floor]
    return keep or pops


@dataclass(frozen=True)
class FringeProfile:
    """
    Sampled intensity rho(x, x) on a uniform grid.

    ``envelope`` holds the population-only part (the pattern with every
    coherence removed) when the profile comes from an operator.
    """

    positions: np.ndarray
    intensity: np.ndarray
    envelope: np.ndarray | None = None
    grid: GridSpec | None = None

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.positions.tolist(), self.intensity.tolist()))

    def integral(self) -> float:
        return float(np.trapezoid(self.intensity, self.positions))


def _max_fringe_wavenumber(diag: ComplexGaussian, x: np.ndarray) -> float:
    # derivative of the phase of exp(-Q y^2 / 2 + b y)
    if x.size == 0:
        return 0.0
    slope = -diag.Q[0, 0].imag * (x - diag.origin[0]) + diag.b[0].imag
    return float(np.max(np.abs(slope)))


def fringe_profile(rho: GaussianMixtureOperator, grid: GridSpec | None = None) -> FringeProfile:
    grid = GridSpec.around(rho) if grid is None else grid
    x = grid.x
    for t in _significant_populations(rho):
        mean, std = t.population_moments()
        if mean - 6 * std < grid.lo or mean + 6 * std > grid.hi:
            raise ResolutionError("grid does not cover six standard deviations of every branch")
    envelope = np.zeros_like(x)
    for t in rho.populations():
        envelope += np.real(t(x, x))
    floor = FRINGE_WEIGHT_FLOOR * max(float(envelope.max()), 1e-300)
    intensity = envelope.copy()
    kmax = 0.0
    for t in rho.coherences():
        if t.coeff == 0:
            continue
        diag = t.diagonal()
        values = t.coeff * diag(x[:, None])
        intensity += values.real
        kmax = max(kmax, _max_fringe_wavenumber(diag, x[np.abs(values) > floor]))
    if kmax > 0 and 2 * math.pi / kmax < MIN_POINTS_PER_FRINGE * grid.dx:
        raise ResolutionError(
            f"fringe wavelength {2 * math.pi / kmax:.4g} needs grid spacing <= "
            f"{2 * math.pi / kmax / MIN_POINTS_PER_FRINGE:.4g}, got {grid.dx:.4g}"
        )
    if intensity.min() < -1e-9 * max(float(intensity.max()), 1e-300):
        raise ContractError("operator is not positive on the grid")
    intensity = np.clip(intensity, 0.0, None)
    return FringeProfile(x, intensity, envelope, grid)


def visibility(profile: FringeProfile) -> float:
    """
    (I_max - I_min) / (I_max + I_min) over the central part of the envelope.

    When the profile carries its population envelope the intensity is
    divided by it first, so a smooth Gaussian envelope alone reads as
    visibility 0.  The window is the envelope mean +/- one envelope standard
    deviation.
    """
    x = np.asarray(profile.positions, dtype=float)
    intensity = np.asarray(profile.intensity, dtype=float)
    if x.size < 3 or intensity.shape != x.shape or not np.all(np.isfinite(intensity)):
        raise ContractError("profile is empty or malformed")
    weight = intensity if profile.envelope is None else np.asarray(profile.envelope, dtype=float)
    weight = np.clip(weight, 0.0, None)
    total = np.trapezoid(weight, x)
    if not total > 0:
        raise ContractError("profile has no weight")
    mean = np.trapezoid(weight * x, x) / total
    std = math.sqrt(max(np.trapezoid(weight * (x - mean) ** 2, x) / total, 0.0))
    window = np.abs(x - mean) <= VISIBILITY_WINDOW_SIGMAS * std
    if profile.envelope is not None:
        window &= weight > 1e-12 * weight.max()
    if np.count_nonzero(window) < 3:
        raise ContractError("visibility window holds fewer than three samples")
    signal = intensity[window]
    if profile.envelope is not None:
        signal = signal / weight[window]
    hi, lo = float(signal.max()), float(max(signal.min(), 0.0))
    if hi + lo <= 0:
        raise ContractError("profile is identically zero in the window")
    return (hi - lo) / (hi + lo)


def _nearest_branch(centre, targets, tol):
    d = [abs(centre - c) for c in targets]
    k = int(np.argmin(d))
    return k if d[k] <= tol else None


def detector_probabilities(
    rho: GaussianMixtureOperator,
    branch_centres=(-1.0, 1.0),
    phase_convention: float = 0.0,
    at_mirrors: bool = False,
) -> tuple[float, float]:
    """
    Click probabilities for the two output ports.

    The beam splitter is not modelled dynamically.  With C the coherence
    pairing the ket at the left centre with the bra at the right centre,
    taken as the trace of that term times the translation by the branch
    separation, p_left = 1/2 + Re(exp(i phase_convention) C).  With
    ``at_mirrors`` only the branch populations count.
    """
    left, right = (float(c) for c in branch_centres)
    sep = right - left
    if not sep > 0:
        raise ContractError("branch centres must be ordered (left, right)")
    tol = 0.25 * sep
    floor = FRINGE_WEIGHT_FLOOR * max(abs(rho.trace_value), 1e-300)
    pops = [0.0, 0.0]
    coherence = 0.0j
    for t in rho.terms:
        kk = _nearest_branch(t.ket_centre, (left, right), tol)
        kb = _nearest_branch(t.bra_centre, (left, right), tol)
        if kk is None or kb is None:
            if t.hs_norm() > floor:
                raise ContractError("rho has weight away from the two branch centres")
            continue
        if t.is_population:
            if t.population_moments()[1] > tol:
                raise ContractError("branches are not resolvable: packets too wide for their separation")
        if kk == kb:
            pops[kk] += t.shifted_trace().real
        elif kk == 0 and kb == 1:
            coherence += t.shifted_trace(sep)
    total = pops[0] + pops[1]
    if not total > 0:
        raise DomainError("no population at the branch centres")
    if at_mirrors:
        return pops[0] / total, pops[1] / total
    p_left = 0.5 + (np.exp(1j * phase_convention) * coherence).real / total
    return float(p_left), float(1.0 - p_left)


def coherence_magnitude(rho: GaussianMixtureOperator) -> float:
    """Largest Hilbert-Schmidt norm among the off-diagonal (branch i != j) terms."""
    return max((t.hs_norm() for t in rho.coherences()), default=0.0)
