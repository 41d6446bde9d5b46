"""
Linear canonical coordinate changes for N particles on a line.

Every coordinate system here is linear in the lab positions, X = A x.  The
momenta canonically conjugate to X are P = (A^-1)^T p, so a map is stored as
the pair (A, B) where B holds the momentum forms that accompany the new
positions.  B is either the canonical conjugate (``canonical=True``) or some
other physically motivated set, e.g. the relative momenta
mu_1k (p_k / m_k - p_1 / m_1), which are not conjugate to x_k - x_1 once
there are three or more particles.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import ContractError, DomainError, UnsupportedCaseError
from .packets import LAB, Branch, ComplexGaussian, GaussianPacket, MassConfig, SuperposedState, WeylShift

CANONICAL_TOL = 1e-12
_COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class LinearPhaseSpaceForm:
    """sum_i x_coeffs[i] * x_i + p_coeffs[i] * p_i in lab operators."""

    x_coeffs: np.ndarray
    p_coeffs: np.ndarray
    label: str = ""

    def __post_init__(self):
        x = np.asarray(self.x_coeffs, dtype=float).reshape(-1)
        p = np.asarray(self.p_coeffs, dtype=float).reshape(-1)
        if x.shape != p.shape:
            raise ContractError("x and p coefficient vectors must have equal length")
        object.__setattr__(self, "x_coeffs", x)
        object.__setattr__(self, "p_coeffs", p)

    @classmethod
    def position(cls, coeffs, label="") -> LinearPhaseSpaceForm:
        coeffs = np.asarray(coeffs, dtype=float)
        return cls(coeffs, np.zeros_like(coeffs), label)

    @classmethod
    def momentum(cls, coeffs, label="") -> LinearPhaseSpaceForm:
        coeffs = np.asarray(coeffs, dtype=float)
        return cls(np.zeros_like(coeffs), coeffs, label)

    @classmethod
    def x(cls, i: int, n: int) -> LinearPhaseSpaceForm:
        return cls.position(np.eye(n)[i], f"x{i + 1}")

    @classmethod
    def p(cls, i: int, n: int) -> LinearPhaseSpaceForm:
        return cls.momentum(np.eye(n)[i], f"p{i + 1}")

    def __len__(self):
        return self.x_coeffs.size

    @property
    def is_position_only(self) -> bool:
        return not np.any(self.p_coeffs)

    @property
    def is_momentum_only(self) -> bool:
        return not np.any(self.x_coeffs)

    def __repr__(self):
        return f"LinearPhaseSpaceForm({self.label!r}, x={self.x_coeffs.tolist()}, p={self.p_coeffs.tolist()})"


def commutator(f: LinearPhaseSpaceForm, g: LinearPhaseSpaceForm) -> complex:
    """[f, g] for linear forms; a c-number since [x_i, p_j] = i delta_ij."""
    if len(f) != len(g):
        raise ContractError("forms act on different numbers of particles")
    return 1j * float(f.x_coeffs @ g.p_coeffs - g.x_coeffs @ f.p_coeffs)


@dataclass(frozen=True, eq=False)
class LinearCoordinateMap:
    """
    Invertible linear change of coordinates with companion momentum forms.

    Parameters
    ----------
    position_matrix : (N, N) array
        Rows express the new positions in terms of lab positions.
    momentum_matrix : (N, N) array or None
        Rows express the companion momenta in terms of lab momenta.
    canonical : bool
        Whether ``position_matrix @ momentum_matrix.T`` is the identity.
        Checked on construction.
    labels, momentum_labels : tuple of str
        Names of the new coordinates and of the companion momenta.
    tag : str
        Coordinate-system tag given to states transformed with this map.
    """

    position_matrix: np.ndarray
    momentum_matrix: np.ndarray | None = None
    canonical: bool = False
    labels: tuple[str, ...] = ()
    momentum_labels: tuple[str, ...] = ()
    tag: str = "custom"
    _inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.array(self.position_matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ContractError("position matrix must be square")
        n = A.shape[0]
        A_inv = _checked_inverse(A, "position matrix")
        object.__setattr__(self, "position_matrix", A)
        object.__setattr__(self, "_inverse", A_inv)
        B = self.momentum_matrix
        if B is not None:
            B = np.array(B, dtype=float)
            if B.shape != A.shape:
                raise ContractError("momentum matrix must match the position matrix")
            object.__setattr__(self, "momentum_matrix", B)
        if self.canonical:
            if B is None or not np.allclose(A @ B.T, np.eye(n), rtol=0, atol=CANONICAL_TOL * max(1.0, _scale(A, B))):
                raise ContractError("map flagged canonical but A B^T != I")
        labels = tuple(self.labels) or tuple(f"X{k + 1}" for k in range(n))
        mlabels = tuple(self.momentum_labels) or tuple(f"P{k + 1}" for k in range(n))
        if len(labels) != n or len(mlabels) != n:
            raise ContractError("one label per coordinate is required")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "momentum_labels", mlabels)

    @property
    def n(self) -> int:
        return self.position_matrix.shape[0]

    @property
    def inverse_position(self) -> np.ndarray:
        return self._inverse

    @property
    def conjugate_matrix(self) -> np.ndarray:
        """(A^-1)^T: the momenta canonically conjugate to the new positions."""
        return self._inverse.T

    def position_forms(self) -> list[LinearPhaseSpaceForm]:
        return [LinearPhaseSpaceForm.position(row, lab) for row, lab in zip(self.position_matrix, self.labels)]

    def momentum_forms(self) -> list[LinearPhaseSpaceForm]:
        if self.momentum_matrix is None:
            raise ContractError("map has no momentum forms attached")
        return [LinearPhaseSpaceForm.momentum(row, lab) for row, lab in zip(self.momentum_matrix, self.momentum_labels)]

    def is_symplectic(self, tol: float = CANONICAL_TOL) -> bool:
        if self.momentum_matrix is None:
            return False
        return bool(np.allclose(self.position_matrix @ self.momentum_matrix.T, np.eye(self.n), rtol=0, atol=tol))


def _scale(A, B):
    return float(np.max(np.abs(A)) * np.max(np.abs(B)))


def _checked_inverse(M: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(M)):
        raise DomainError(f"{what} has non-finite entries")
    if np.linalg.cond(M) > _COND_LIMIT:
        raise DomainError(f"{what} is singular")
    return np.linalg.inv(M)


def _relative_labels(n):
    return ("cm",) + tuple(f"r{k + 1}" for k in range(1, n))


def cm_relative_map(masses: MassConfig) -> LinearCoordinateMap:
    """Centre of mass plus positions relative to particle 1."""
    n = len(masses)
    if n < 2:
        raise ContractError("centre-of-mass/relative coordinates need at least two particles")
    m = np.asarray(masses.masses)
    A = np.zeros((n, n))
    A[0] = m / masses.total
    for k in range(1, n):
        A[k, 0] = -1.0
        A[k, k] = 1.0
    return LinearCoordinateMap(A, labels=_relative_labels(n), tag="cm-relative-x")


def relative_momentum_forms(masses: MassConfig) -> list[LinearPhaseSpaceForm]:
    """Total momentum and mu_1k (p_k / m_k - p_1 / m_1) for k = 2 (, 3)."""
    n = len(masses)
    if n not in (2, 3):
        raise ContractError("relative momentum forms are defined for two or three particles")
    m = masses.masses
    forms = [LinearPhaseSpaceForm.momentum(np.ones(n), "p_cm")]
    for k in range(1, n):
        mu = masses.reduced_mass(0, k)
        coeffs = np.zeros(n)
        coeffs[0] = -mu / m[0]
        coeffs[k] = mu / m[k]
        forms.append(LinearPhaseSpaceForm.momentum(coeffs, f"p_r{k + 1}"))
    return forms


def physical_momentum_matrix(masses: MassConfig) -> np.ndarray:
    return np.array([f.p_coeffs for f in relative_momentum_forms(masses)])


def physical_relative_map(masses: MassConfig) -> LinearCoordinateMap:
    """cm/relative positions paired with the physical relative momenta.

    Canonical for two particles only.
    """
    base = cm_relative_map(masses)
    B = physical_momentum_matrix(masses)
    canonical = bool(np.allclose(base.position_matrix @ B.T, np.eye(base.n), rtol=0, atol=CANONICAL_TOL))
    return LinearCoordinateMap(
        base.position_matrix, B, canonical, base.labels,
        ("p_cm",) + tuple(f"p_r{k + 1}" for k in range(1, base.n)), base.tag,
    )


def conjugate_momenta(cmap: LinearCoordinateMap) -> LinearCoordinateMap:
    """Attach B = (A^-1)^T, the momenta conjugate to the map's positions."""
    mlabels = tuple(f"pi_{lab}" for lab in cmap.labels)
    return LinearCoordinateMap(cmap.position_matrix, cmap.conjugate_matrix, True, cmap.labels, mlabels, cmap.tag)


def conjugate_positions(momentum_matrix, momentum_labels: Sequence[str] = ()) -> LinearCoordinateMap:
    """Positions conjugate to the given momentum forms: A = (B^-1)^T."""
    B = np.array(momentum_matrix, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ContractError("momentum matrix must be square")
    A = _checked_inverse(B, "momentum matrix").T
    n = B.shape[0]
    mlabels = tuple(momentum_labels) or ("p_cm",) + tuple(f"p_r{k + 1}" for k in range(1, n))
    labels = tuple("q_" + lab.removeprefix("p_") for lab in mlabels)
    return LinearCoordinateMap(A, B, True, labels, mlabels, "cm-relative-q")


def relative_x_frame(masses: MassConfig) -> LinearCoordinateMap:
    """cm/relative positions with their canonical momenta (the pi set)."""
    return conjugate_momenta(cm_relative_map(masses))


def relative_q_frame(masses: MassConfig) -> LinearCoordinateMap:
    """Positions conjugate to the physical relative momenta (the q set)."""
    return conjugate_positions(physical_momentum_matrix(masses))


def gamma_mass(masses: MassConfig) -> float:
    """m1 m2 m3 / (M mu12 mu13), the mass factor in the q coordinates."""
    if len(masses) != 3:
        raise ContractError("gamma_mass is defined for three particles")
    m1, m2, m3 = masses.masses
    return m1 * m2 * m3 / (masses.total * masses.mu12 * masses.mu13)


def form_in_frame(form: LinearPhaseSpaceForm, cmap: LinearCoordinateMap | None):
    """
    Coefficients of a lab-operator form in a frame's own canonical operators.

    With X = A x and P = (A^-1)^T p one has a.x = ((A^-1)^T a).X and
    b.p = (A b).P.  Returns ``(x_coeffs, p_coeffs)`` in the frame.
    """
    if cmap is None:
        return form.x_coeffs.copy(), form.p_coeffs.copy()
    if len(form) != cmap.n:
        raise ContractError("form and frame act on different numbers of particles")
    return cmap.inverse_position.T @ form.x_coeffs, cmap.position_matrix @ form.p_coeffs


def transformed_precision(widths: Sequence[complex], cmap: LinearCoordinateMap) -> np.ndarray:
    """
    Quadratic form of a product Gaussian in new coordinates.

    prod_i exp(-(x_i - c_i)^2 / (2 w_i)) = exp(-(X - C)^T P (X - C) / 2)
    with P = A^-T diag(1/w) A^-1.
    """
    Ai = cmap.inverse_position
    w = np.asarray(widths, dtype=complex)
    return Ai.T @ np.diag(1.0 / w) @ Ai


def correlated_overlap(P: np.ndarray, c1, c2) -> complex:
    """Overlap of two normalised real Gaussians sharing the precision matrix P.

    g(X) ∝ exp(-(X - c)^T P (X - c) / 2); the overlap is exp(-d^T P d / 4).
    """
    P = np.asarray(P)
    if np.iscomplexobj(P) and np.any(np.abs(P.imag) > 0):
        raise UnsupportedCaseError("correlated overlap implemented for real precision matrices")
    d = np.asarray(c2, dtype=float) - np.asarray(c1, dtype=float)
    return float(np.exp(-0.25 * d @ np.real(P) @ d))


@dataclass(frozen=True)
class ExactTransformReport:
    """
    Two-particle product Gaussian written exactly in cm/relative coordinates:

        exp(-(u^2 / delta_c_sq + v^2 / delta_r_sq) / 2 + gamma_corr * u * v)

    with u = x_cm - alpha and v = x_r - beta.
    """

    delta_c_sq: float
    delta_r_sq: float
    alpha: float
    beta: float
    gamma_corr: float

    def __post_init__(self):
        if not (self.delta_c_sq > 0 and self.delta_r_sq > 0):
            raise DomainError("transformed widths must be positive")

    @property
    def is_product(self) -> bool:
        return self.gamma_corr == 0.0

    @property
    def precision(self) -> np.ndarray:
        return np.array([[1.0 / self.delta_c_sq, -self.gamma_corr], [-self.gamma_corr, 1.0 / self.delta_r_sq]])

    def amplitude(self, x_cm, x_r):
        """Normalised real amplitude (no plane-wave factor)."""
        u = np.asarray(x_cm, dtype=float) - self.alpha
        v = np.asarray(x_r, dtype=float) - self.beta
        norm = (np.linalg.det(self.precision) / math.pi**2) ** 0.25
        return norm * np.exp(-0.5 * (u * u / self.delta_c_sq + v * v / self.delta_r_sq) + self.gamma_corr * u * v)


def exact_transform_report(g1: GaussianPacket, g2: GaussianPacket, masses: MassConfig) -> ExactTransformReport:
    if len(masses) != 2:
        raise UnsupportedCaseError("exact transform is implemented for two particles")
    if g1.width.imag != 0.0 or g2.width.imag != 0.0:
        raise UnsupportedCaseError("exact transform needs real packet widths")
    m1, m2 = masses.masses
    M = masses.total
    d1, d2 = g1.width.real, g2.width.real
    imbalance = m2 * d2 - m1 * d1
    # m1 d1 = m2 d2 up to rounding counts as balanced
    if abs(imbalance) <= 8 * sys.float_info.epsilon * max(m1 * d1, m2 * d2):
        imbalance = 0.0
    return ExactTransformReport(
        delta_c_sq=d1 * d2 / (d1 + d2),
        delta_r_sq=M * M * d1 * d2 / (m1 * m1 * d1 + m2 * m2 * d2),
        alpha=(m1 * g1.centre + m2 * g2.centre) / M,
        beta=g2.centre - g1.centre,
        gamma_corr=imbalance / (M * d1 * d2),
    )


@dataclass(frozen=True)
class CorrelatedBranch:
    """amplitude * gaussian(Y); ``centre`` is the branch's mean position in Y."""

    amplitude: complex
    gaussian: ComplexGaussian
    centre: np.ndarray


@dataclass(frozen=True)
class CorrelatedState:
    """
    Exact image of a packet superposition in a linear frame.

    Each branch is one multivariate Gaussian in the frame's coordinates, with
    every cross-correlation between the new coordinates kept.
    """

    masses: MassConfig
    branches: tuple[CorrelatedBranch, ...]
    coordinate_tag: str
    frame: LinearCoordinateMap
    labels: tuple[str, ...] | None = None

    @property
    def n_coords(self) -> int:
        return len(self.masses)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([b.amplitude for b in self.branches], dtype=complex)

    def wavefunction(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.n_coords:
            raise ContractError("last axis must index coordinates")
        return sum(b.amplitude * b.gaussian(points) for b in self.branches)

    def is_correlated(self, tol: float = 1e-12) -> bool:
        for b in self.branches:
            Q = b.gaussian.Q
            off = Q - np.diag(np.diag(Q))
            if np.max(np.abs(off)) > tol * np.max(np.abs(Q)):
                return True
        return False


def correlated_transform(state: SuperposedState, cmap: LinearCoordinateMap) -> CorrelatedState:
    """psi_Y(Y) = |det A|^(-1/2) psi_x(A^-1 Y), branch by branch, with nothing dropped."""
    if state.coordinate_tag != LAB:
        raise ContractError("the exact transform expects a lab-coordinate state")
    if cmap.n != state.n_coords:
        raise ContractError("map and state have different coordinate counts")
    A, Ai = cmap.position_matrix, cmap.inverse_position
    log_jac = -0.5 * math.log(abs(np.linalg.det(A)))
    branches = []
    for b in state.branches:
        f = ComplexGaussian.product([ComplexGaussian.from_packet(g) for g in b.packets]).substitute(Ai)
        centre = A @ np.array([g.centre for g in b.packets])
        f = ComplexGaussian(f.origin, f.Q, f.b, f.c + log_jac).recentred(centre)
        branches.append(CorrelatedBranch(b.amplitude, f, centre))
    frame = cmap if cmap.canonical else conjugate_momenta(cmap)
    return CorrelatedState(state.masses, tuple(branches), cmap.tag, frame, cmap.labels)


def correlated_inner(s1: CorrelatedState, s2: CorrelatedState) -> complex:
    """<s1|s2> by exact Gaussian integration over all coordinates."""
    total = 0.0j
    for b1 in s1.branches:
        for b2 in s2.branches:
            if b1.amplitude == 0 or b2.amplitude == 0:
                continue
            total += b1.amplitude.conjugate() * b2.amplitude * (b1.gaussian.conj() * b2.gaussian).integral()
    return complex(total)


def correlated_weyl(state: CorrelatedState, shift: WeylShift) -> CorrelatedState:
    """Same convention as packets.apply_weyl, on correlated branches."""
    if len(shift) != state.n_coords:
        raise ContractError(f"shift acts on {len(shift)} coordinates, state has {state.n_coords}")
    d = np.array(shift.position_shifts)
    q = np.array(shift.momentum_boosts)
    factor = np.exp(1j * shift.global_phase)
    branches = tuple(
        CorrelatedBranch(
            b.amplitude * factor,
            b.gaussian.translated(d).times_plane_wave(q, -0.5 * q @ d),
            b.centre + d,
        )
        for b in state.branches
    )
    return CorrelatedState(state.masses, branches, state.coordinate_tag, state.frame, state.labels)


@dataclass(frozen=True)
class ExactTransformResult:
    """
    Exact transform output.

    ``state`` always holds the correlated image.  ``reports`` carries the
    closed-form two-body parameters per branch when the map is the two-body
    cm/relative map and all widths are real; it is empty otherwise.
    """

    reports: tuple[ExactTransformReport, ...]
    correlated: bool
    state: CorrelatedState


def _transform_branch(branch: Branch, A, B, Ai):
    c = np.array([g.centre for g in branch.packets])
    k = np.array([g.momentum for g in branch.packets])
    w = np.array([g.width for g in branch.packets], dtype=complex)
    centres = A @ c
    momenta = B @ k
    P = Ai.T @ np.diag(1.0 / w) @ Ai
    # widths from the diagonal of the precision matrix; off-diagonal correlations dropped
    widths = 1.0 / np.diag(P)
    phase = sum(g.phase for g in branch.packets)
    packets = tuple(GaussianPacket(ci, wi, ki) for ci, wi, ki in zip(centres, widths, momenta))
    return Branch(branch.amplitude * np.exp(1j * phase), packets)


def transform_state(
    state: SuperposedState,
    cmap: LinearCoordinateMap,
    mode: Literal["approximate", "exact"] = "approximate",
):
    """
    Re-express a lab-frame state in the coordinates of ``cmap``.

    ``mode="approximate"`` returns a SuperposedState whose branches are
    products of packets: centres map with A, mean momenta with the canonical
    conjugate (A^-1)^T, and each new width is 1 / P_aa of the exact
    transformed quadratic form (the conditional width; for two particles
    these are the closed-form delta_c^2, delta_r^2).  Only the correlations
    between the fluctuations of different new coordinates are dropped.

    ``mode="exact"`` returns an ExactTransformResult holding the correlated
    image of the state (any particle count, complex widths allowed) plus the
    closed-form two-body parameters when they apply.
    """
    if state.coordinate_tag != LAB:
        raise ContractError("transform_state expects a lab-coordinate state")
    if cmap.n != state.n_coords:
        raise ContractError("map and state have different coordinate counts")
    if mode == "exact":
        exact = correlated_transform(state, cmap)
        reports = ()
        two_body_cm = state.n_coords == 2 and np.allclose(
            cmap.position_matrix, cm_relative_map(state.masses).position_matrix
        )
        if two_body_cm and all(g.width.imag == 0 for b in state.branches for g in b.packets):
            reports = tuple(exact_transform_report(*b.packets, state.masses) for b in state.branches)
        return ExactTransformResult(reports, exact.is_correlated(), exact)
    if mode != "approximate":
        raise ContractError(f"unknown transform mode {mode!r}")
    A, Ai = cmap.position_matrix, cmap.inverse_position
    B = cmap.conjugate_matrix
    branches = tuple(_transform_branch(b, A, B, Ai) for b in state.branches)
    frame = cmap if cmap.canonical else conjugate_momenta(cmap)
    return SuperposedState(state.masses, branches, cmap.tag, frame, cmap.labels)
