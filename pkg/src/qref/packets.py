"""
Exact algebra of one-dimensional Gaussian wavepackets.

A packet is

    psi(x) = N exp(-(x - centre)**2 / (2 * width) + i * momentum * x + i * phase)

with a complex width parameter ``width`` (Re > 0) and a real, positive
normalisation N = (Re(1/width) / pi) ** (1/4).  Units are hbar = 1, so
``momentum`` is a wavenumber.  Free evolution keeps the Gaussian form
(width -> width + i t / m), which is why the width is complex.

Superpositions are finite sums of products of packets, one packet per
coordinate.  Branches are never assumed orthogonal: norms and inner products
always go through the Gram matrix.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ContractError, DegenerateStateError, DomainError

LAB = "lab"


@dataclass(frozen=True)
class MassConfig:
    """Particle masses, one per particle, all strictly positive."""

    masses: tuple[float, ...]

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        if not masses:
            raise ContractError("at least one mass is required")
        if any(not (m > 0.0) or not math.isfinite(m) for m in masses):
            raise DomainError(f"masses must be finite and positive, got {masses}")
        object.__setattr__(self, "masses", masses)

    def __len__(self):
        return len(self.masses)

    def __getitem__(self, i):
        return self.masses[i]

    @property
    def total(self) -> float:
        return math.fsum(self.masses)

    def reduced_mass(self, i: int, j: int) -> float:
        mi, mj = self.masses[i], self.masses[j]
        return mi * mj / (mi + mj)

    @property
    def mu12(self) -> float:
        return self.reduced_mass(0, 1)

    @property
    def mu13(self) -> float:
        return self.reduced_mass(0, 2)


@dataclass(frozen=True)
class GaussianPacket:
    centre: float
    width: complex
    momentum: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        width = complex(self.width)
        if not (width.real > 0.0) or not cmath.isfinite(width):
            raise DomainError(f"packet width must have positive real part, got {width}")
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "centre", float(self.centre))
        object.__setattr__(self, "momentum", float(self.momentum))
        object.__setattr__(self, "phase", float(self.phase))

    @classmethod
    def minimum_uncertainty(cls, centre, delta_x, momentum=0.0, phase=0.0):
        """Packet with position spread ``delta_x`` and delta_x * delta_p = 1/2."""
        if not delta_x > 0:
            raise DomainError("delta_x must be positive")
        return cls(centre, 2.0 * delta_x**2, momentum, phase)

    @property
    def norm_const(self) -> float:
        return ((1.0 / self.width).real / math.pi) ** 0.25

    @property
    def position_variance(self) -> float:
        """Variance of |psi|^2."""
        return abs(self.width) ** 2 / (2.0 * self.width.real)

    @property
    def position_std(self) -> float:
        return math.sqrt(self.position_variance)

    @property
    def momentum_std(self) -> float:
        return math.sqrt(1.0 / (2.0 * self.width.real))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        y = x - self.centre
        return self.norm_const * np.exp(
            -(y * y) / (2.0 * self.width) + 1j * (self.momentum * x + self.phase)
        )

    def shifted(self, shift: float = 0.0, boost: float = 0.0) -> GaussianPacket:
        """exp(i(boost*x - shift*p)) applied to the packet."""
        phase = self.phase - self.momentum * shift - 0.5 * boost * shift
        return GaussianPacket(self.centre + shift, self.width, self.momentum + boost, phase)

    def evolved(self, t: float, mass: float) -> GaussianPacket:
        """Exact free evolution under p^2 / 2m for time ``t``."""
        if t == 0:
            return self
        new_width = self.width + 1j * t / mass
        # ratio of complex prefactors sqrt(w / w'); both widths lie in the right half-plane
        phase = (
            self.phase
            - self.momentum**2 * t / (2.0 * mass)
            + 0.5 * (cmath.phase(self.width) - cmath.phase(new_width))
        )
        return GaussianPacket(self.centre + self.momentum * t / mass, new_width, self.momentum, phase)


def packet_overlap(g1: GaussianPacket, g2: GaussianPacket) -> complex:
    """Closed-form inner product <g1|g2>."""
    a1 = 1.0 / (2.0 * g1.width.conjugate())
    a2 = 1.0 / (2.0 * g2.width)
    A = a1 + a2
    delta = g2.centre - g1.centre
    dk = g2.momentum - g1.momentum
    # integration variable centred on g1 keeps large centres from cancelling
    expo = (-a1 * a2 * delta * delta + 1j * a2 * delta * dk - 0.25 * dk * dk) / A
    expo += 1j * (dk * g1.centre + g2.phase - g1.phase)
    return g1.norm_const * g2.norm_const * cmath.sqrt(math.pi / A) * cmath.exp(expo)


@dataclass(frozen=True)
class Branch:
    amplitude: complex
    packets: tuple[GaussianPacket, ...]

    def __post_init__(self):
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        object.__setattr__(self, "packets", tuple(self.packets))


@dataclass(frozen=True)
class SuperposedState:
    """
    Finite superposition of products of Gaussian packets.

    Parameters
    ----------
    masses : MassConfig
        Masses of the physical particles (one per coordinate).
    branches : tuple of Branch
        Amplitude and one packet per coordinate for each term.
    coordinate_tag : str
        Which coordinates the packets live in: ``"lab"``, ``"cm-relative-x"``
        or ``"cm-relative-q"``.
    frame : LinearCoordinateMap or None
        Map from lab coordinates to the state's coordinates; None for lab.
    labels : tuple of str, optional
        Coordinate names, for reporting.
    """

    masses: MassConfig
    branches: tuple[Branch, ...]
    coordinate_tag: str = LAB
    frame: Any = None
    labels: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        if not isinstance(self.masses, MassConfig):
            object.__setattr__(self, "masses", MassConfig(tuple(self.masses)))
        branches = tuple(
            b if isinstance(b, Branch) else Branch(b[0], tuple(b[1])) for b in self.branches
        )
        if not branches:
            raise ContractError("a state needs at least one branch")
        n = len(self.masses)
        for b in branches:
            if len(b.packets) != n:
                raise ContractError(
                    f"branch has {len(b.packets)} packets but there are {n} particles"
                )
        object.__setattr__(self, "branches", branches)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != n:
                raise ContractError("one label per coordinate is required")
            object.__setattr__(self, "labels", labels)
        if (self.frame is None) != (self.coordinate_tag == LAB):
            raise ContractError("lab states carry no frame; non-lab states must carry one")

    @classmethod
    def from_terms(cls, masses, terms: Iterable, **kwargs) -> SuperposedState:
        """Build from ``(amplitude, [packet, ...])`` pairs."""
        masses = masses if isinstance(masses, MassConfig) else MassConfig(tuple(masses))
        return cls(masses, tuple(Branch(a, tuple(p)) for a, p in terms), **kwargs)

    @property
    def n_coords(self) -> int:
        return len(self.masses)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([b.amplitude for b in self.branches], dtype=complex)

    def with_amplitudes(self, amplitudes: Sequence[complex]) -> SuperposedState:
        branches = tuple(Branch(a, b.packets) for a, b in zip(amplitudes, self.branches))
        return replace(self, branches=branches)

    def with_packets(self, packets: Sequence[Sequence[GaussianPacket]]) -> SuperposedState:
        branches = tuple(Branch(b.amplitude, tuple(p)) for b, p in zip(self.branches, packets))
        return replace(self, branches=branches)

    def wavefunction(self, points) -> np.ndarray:
        """Evaluate psi at points of shape (..., n_coords)."""
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.n_coords:
            raise ContractError("last axis must index coordinates")
        out = np.zeros(points.shape[:-1], dtype=complex)
        for b in self.branches:
            term = np.full(points.shape[:-1], b.amplitude, dtype=complex)
            for k, g in enumerate(b.packets):
                term = term * g(points[..., k])
            out += term
        return out


def branch_overlap(b1: Branch, b2: Branch) -> complex:
    """<b1|b2> without amplitudes."""
    out = 1.0 + 0.0j
    for g1, g2 in zip(b1.packets, b2.packets):
        out *= packet_overlap(g1, g2)
    return out


def gram_matrix(state: SuperposedState, other: SuperposedState | None = None) -> np.ndarray:
    """G[i, j] = <branch_i of state | branch_j of other>."""
    other = state if other is None else other
    if other.n_coords != state.n_coords:
        raise ContractError("states have different coordinate counts")
    G = np.empty((len(state.branches), len(other.branches)), dtype=complex)
    for i, bi in enumerate(state.branches):
        for j, bj in enumerate(other.branches):
            if other is state and j < i:
                G[i, j] = G[j, i].conjugate()
            else:
                G[i, j] = branch_overlap(bi, bj)
    return G


def inner(state: SuperposedState, other: SuperposedState) -> complex:
    G = gram_matrix(state, other)
    return complex(state.amplitudes.conj() @ G @ other.amplitudes)


def norm_squared(state: SuperposedState) -> float:
    return inner(state, state).real


def gram_and_normalize(state: SuperposedState) -> tuple[SuperposedState, np.ndarray]:
    """Return the normalised state and its branch Gram matrix."""
    G = gram_matrix(state)
    a = state.amplitudes
    n2 = float((a.conj() @ G @ a).real)
    scale = max(float(np.sum(np.abs(a) ** 2)), 1e-300)
    if not n2 > 1e-14 * scale:
        raise DegenerateStateError("state has zero norm")
    return state.with_amplitudes(a / math.sqrt(n2)), G


def normalize(state: SuperposedState) -> SuperposedState:
    return gram_and_normalize(state)[0]


def evolve_free(state: SuperposedState, t: float) -> SuperposedState:
    """Exact evolution of a lab-frame state under sum_i p_i^2 / 2 m_i."""
    if state.coordinate_tag != LAB:
        raise ContractError("free evolution is defined on lab-coordinate states")
    if t < 0:
        raise DomainError("t must be non-negative")
    masses = state.masses.masses
    return state.with_packets(
        [tuple(g.evolved(t, m) for g, m in zip(b.packets, masses)) for b in state.branches]
    )


@dataclass(frozen=True)
class WeylShift:
    """
    exp(i sum_k (boost_k x_k - shift_k p_k) + i global_phase).

    Symmetric ordering: on one coordinate the operator equals
    exp(i q x) exp(-i d p) exp(-i q d / 2).
    """

    position_shifts: tuple[float, ...]
    momentum_boosts: tuple[float, ...]
    global_phase: float = 0.0

    def __post_init__(self):
        d = tuple(float(v) for v in self.position_shifts)
        q = tuple(float(v) for v in self.momentum_boosts)
        if len(d) != len(q):
            raise ContractError("shift and boost vectors must have equal length")
        object.__setattr__(self, "position_shifts", d)
        object.__setattr__(self, "momentum_boosts", q)

    @classmethod
    def translation(cls, shifts) -> WeylShift:
        shifts = tuple(shifts)
        return cls(shifts, (0.0,) * len(shifts))

    @classmethod
    def boost(cls, boosts) -> WeylShift:
        boosts = tuple(boosts)
        return cls((0.0,) * len(boosts), boosts)

    def inverse(self) -> WeylShift:
        return WeylShift(
            tuple(-d for d in self.position_shifts),
            tuple(-q for q in self.momentum_boosts),
            -self.global_phase,
        )

    def __len__(self):
        return len(self.position_shifts)


def apply_weyl(state: SuperposedState, shift: WeylShift) -> SuperposedState:
    if len(shift) != state.n_coords:
        raise ContractError(
            f"shift acts on {len(shift)} coordinates, state has {state.n_coords}"
        )
    factor = cmath.exp(1j * shift.global_phase)
    branches = tuple(
        Branch(
            b.amplitude * factor,
            tuple(
                g.shifted(d, q)
                for g, d, q in zip(b.packets, shift.position_shifts, shift.momentum_boosts)
            ),
        )
        for b in state.branches
    )
    return replace(state, branches=branches)


def _sqrt_det(Q: np.ndarray) -> complex:
    """det(Q)^(1/2) on the branch continuous from real positive-definite Q.

    Every eigenvalue of a complex symmetric Q with positive-definite real part
    has positive real part, so the product of principal roots is that branch.
    """
    return complex(np.prod(np.sqrt(np.linalg.eigvals(Q).astype(complex))))


@dataclass(frozen=True)
class ComplexGaussian:
    """
    f(v) = exp(-1/2 y^T Q y + b^T y + c) with y = v - origin.

    Q is complex symmetric with positive-definite real part (checked where
    it matters: integration).  Keeping an origin near the function's centre
    avoids cancellation between large linear and constant terms.
    """

    origin: np.ndarray
    Q: np.ndarray
    b: np.ndarray
    c: complex = 0.0

    def __post_init__(self):
        o = np.atleast_1d(np.asarray(self.origin, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=complex))
        b = np.atleast_1d(np.asarray(self.b, dtype=complex))
        n = o.size
        if Q.shape != (n, n) or b.shape != (n,):
            raise ContractError("origin, Q and b dimensions disagree")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", complex(self.c))

    @classmethod
    def from_packet(cls, g: GaussianPacket) -> ComplexGaussian:
        return cls(
            [g.centre], [[1.0 / g.width]], [1j * g.momentum],
            math.log(g.norm_const) + 1j * (g.momentum * g.centre + g.phase),
        )

    @classmethod
    def product(cls, factors: Sequence[ComplexGaussian]) -> ComplexGaussian:
        """Tensor product of functions of disjoint variables."""
        n = sum(f.dim for f in factors)
        Q = np.zeros((n, n), dtype=complex)
        k = 0
        for f in factors:
            Q[k:k + f.dim, k:k + f.dim] = f.Q
            k += f.dim
        return cls(
            np.concatenate([f.origin for f in factors]), Q,
            np.concatenate([f.b for f in factors]), sum(f.c for f in factors),
        )

    @property
    def dim(self) -> int:
        return self.origin.size

    def __call__(self, v) -> np.ndarray:
        """Evaluate at points of shape (..., dim)."""
        y = np.asarray(v, dtype=float) - self.origin
        quad = np.einsum("...i,ij,...j->...", y, self.Q, y)
        return np.exp(-0.5 * quad + y @ self.b + self.c)

    def conj(self) -> ComplexGaussian:
        return ComplexGaussian(self.origin, self.Q.conj(), self.b.conj(), self.c.conjugate())

    def recentred(self, origin) -> ComplexGaussian:
        e = np.asarray(origin, dtype=float) - self.origin
        return ComplexGaussian(
            origin, self.Q, self.b - self.Q @ e, self.c - 0.5 * e @ self.Q @ e + self.b @ e
        )

    def __mul__(self, other: ComplexGaussian) -> ComplexGaussian:
        mid = 0.5 * (self.origin + other.origin)
        f, g = self.recentred(mid), other.recentred(mid)
        return ComplexGaussian(mid, f.Q + g.Q, f.b + g.b, f.c + g.c)

    def substitute(self, M, t=None) -> ComplexGaussian:
        """u -> f(M u + t)."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        t = np.zeros(self.dim) if t is None else np.asarray(t, dtype=float)
        # new origin maps as close as possible to the old one
        u0 = np.linalg.lstsq(M, self.origin - t, rcond=None)[0]
        r = M @ u0 + t - self.origin
        return ComplexGaussian(
            u0, M.T @ self.Q @ M, M.T @ (self.b - self.Q @ r),
            self.c - 0.5 * r @ self.Q @ r + self.b @ r,
        )

    def translated(self, d) -> ComplexGaussian:
        """v -> f(v - d)."""
        return ComplexGaussian(self.origin + np.asarray(d, dtype=float), self.Q, self.b, self.c)

    def times_plane_wave(self, q, phase: float = 0.0) -> ComplexGaussian:
        """Multiply by exp(i q.v + i phase)."""
        q = np.asarray(q, dtype=float)
        return ComplexGaussian(self.origin, self.Q, self.b + 1j * q, self.c + 1j * (q @ self.origin + phase))

    def log_integral(self) -> complex:
        """log of the integral over all variables."""
        Q = self.Q
        if np.any(np.linalg.eigvalsh(0.5 * (Q + Q.conj().T).real) <= 0):
            raise DomainError("Gaussian is not integrable: Re Q is not positive definite")
        sol = np.linalg.solve(Q, self.b)
        return 0.5 * self.dim * math.log(2 * math.pi) - cmath.log(_sqrt_det(Q)) + 0.5 * self.b @ sol + self.c

    def integral(self) -> complex:
        return cmath.exp(self.log_integral())

    def marginal(self, keep: Sequence[int]) -> ComplexGaussian:
        """Integrate out every variable not in ``keep`` (kept order preserved)."""
        keep = list(keep)
        rest = [i for i in range(self.dim) if i not in keep]
        if not rest:
            return self
        Q_rr = self.Q[np.ix_(rest, rest)]
        Q_rk = self.Q[np.ix_(rest, keep)]
        part = ComplexGaussian(self.origin[rest], Q_rr, self.b[rest], 0.0)
        X = np.linalg.solve(Q_rr, np.column_stack([Q_rk, self.b[rest]]))
        X_k, x_b = X[:, :-1], X[:, -1]
        return ComplexGaussian(
            self.origin[keep],
            self.Q[np.ix_(keep, keep)] - Q_rk.T @ X_k,
            self.b[keep] - Q_rk.T @ x_b,
            self.c + part.log_integral(),
        )
