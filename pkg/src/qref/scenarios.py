"""
Turn-key thought experiments built from the packet, coordinate and
reduced-state machinery.

Each ``run_*`` function takes a config dataclass and returns a
ScenarioReport: a flat map of scalar metrics, an optional sweep table, a
provenance block echoing the resolved config, and optionally a fringe
profile.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from .canon import (
    LinearPhaseSpaceForm,
    commutator,
    correlated_overlap,
    correlated_transform,
    cm_relative_map,
    exact_transform_report,
    gamma_mass,
    relative_momentum_forms,
    relative_q_frame,
    relative_x_frame,
    transform_state,
    transformed_precision,
)
from .errors import ContractError, DomainError
from .packets import GaussianPacket, MassConfig, SuperposedState, evolve_free, normalize
from .reduce import (
    GridSpec,
    coherence_magnitude,
    detector_probabilities,
    expectation_weyl,
    factorized_shifts,
    fringe_profile,
    partial_trace,
    purity,
    shift_expectation,
    visibility,
)

HEAVY_FACTOR = 1e6
DEFAULT_WIDTH_FRACTION = 1 / 50
# "much less than" is read as at least this factor
WINDOW_MARGIN = 10.0
FRAME_MODES = ("none", "entangled", "superposed_unentangled")


@dataclass
class ScenarioReport:
    name: str
    metrics: dict[str, Any] = field(default_factory=dict)
    sweep_parameter: str | None = None
    sweep: list[dict[str, Any]] = field(default_factory=list)
    provenance: dict[str, Any] = field(default_factory=dict)
    fringe: Any = None

    def to_dict(self) -> dict:
        out = {
            "scenario": self.name,
            "metrics": _jsonable(self.metrics),
            "provenance": _jsonable(self.provenance),
        }
        if self.sweep_parameter is not None:
            out["sweep"] = {"parameter": self.sweep_parameter, "rows": _jsonable(self.sweep)}
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _check_finite(metrics: dict):
    for k, v in metrics.items():
        if isinstance(v, (bool, str, dict, list, tuple)) or v is None:
            continue
        if not cmath.isfinite(complex(v)):
            raise DomainError(f"metric {k} is not finite")


def _packet(centre, delta, momentum=0.0):
    return GaussianPacket(centre, delta * delta, momentum)


def relative_state(lab: SuperposedState, frame, exact: bool = False):
    """Lab state in ``frame``: product-of-packets branches, or the exact correlated image."""
    return correlated_transform(lab, frame) if exact else transform_state(lab, frame)


# ---------------------------------------------------------------------------
# interferometer


@dataclass
class InterferometerConfig:
    """
    Particle and interferometer, optionally with a second physical frame F2.

    Widths are amplitude widths delta (packet ~ exp(-x^2 / (2 delta^2))).
    ``None`` entries are filled by ``resolved()``.
    """

    m_p: float = 1.0
    m_i: float | None = None
    L: float = 1.0
    setup: str = "a"
    include_frame_F2: str = "none"
    m_F2: float | None = None
    width_p: float | None = None
    width_i: float | None = None
    width_F2: float | None = None
    exact_transform: bool = False

    def resolved(self) -> InterferometerConfig:
        if not self.L > 0:
            raise DomainError("L must be positive")
        if self.setup not in ("a", "b"):
            raise ContractError(f"setup must be 'a' or 'b', got {self.setup!r}")
        if self.include_frame_F2 not in FRAME_MODES:
            raise ContractError(f"include_frame_F2 must be one of {FRAME_MODES}")
        m_i = HEAVY_FACTOR * self.m_p if self.m_i is None else self.m_i
        lightest = min(self.m_p, m_i)
        m_F2 = HEAVY_FACTOR * lightest if self.m_F2 is None else self.m_F2
        w = DEFAULT_WIDTH_FRACTION * self.L
        cfg = replace(
            self, m_i=m_i, m_F2=m_F2,
            width_p=w if self.width_p is None else self.width_p,
            width_i=w if self.width_i is None else self.width_i,
            width_F2=w if self.width_F2 is None else self.width_F2,
        )
        for name in ("m_p", "m_i", "m_F2", "width_p", "width_i", "width_F2"):
            if not getattr(cfg, name) > 0:
                raise DomainError(f"{name} must be positive")
        return cfg


def _pair_relative_momentum(masses: MassConfig, observer: int, target: int) -> LinearPhaseSpaceForm:
    """mu (p_t / m_t - p_o / m_o) as a lab-operator form."""
    n = len(masses)
    mu = masses.reduced_mass(observer, target)
    coeffs = np.zeros(n)
    coeffs[observer] = -mu / masses[observer]
    coeffs[target] = mu / masses[target]
    return LinearPhaseSpaceForm.momentum(coeffs, "p_r")


def interferometer_state(cfg: InterferometerConfig) -> SuperposedState:
    """Lab-frame state, bodies ordered (interferometer, particle[, F2])."""
    L = cfg.L
    wi, wp, wf = cfg.width_i, cfg.width_p, cfg.width_F2
    if cfg.setup == "a":
        base = [((0.0, -L), "p"), ((0.0, L), "p")]
    else:
        base = [((-L, 0.0), "i"), ((L, 0.0), "i")]
    terms = []
    for (xi, xp), who in base:
        packets = [_packet(xi, wi), _packet(xp, wp)]
        if cfg.include_frame_F2 == "none":
            terms.append((1.0, packets))
        elif cfg.include_frame_F2 == "entangled":
            # F2 sits wherever the superposed body is
            xf = xp if who == "p" else xi
            terms.append((1.0, packets + [_packet(xf, wf)]))
        else:
            for xf in (-L, L):
                terms.append((1.0, packets + [_packet(xf, wf)]))
    masses = [cfg.m_i, cfg.m_p] + ([] if cfg.include_frame_F2 == "none" else [cfg.m_F2])
    return normalize(SuperposedState.from_terms(masses, terms))


def _reorder(state: SuperposedState, order) -> SuperposedState:
    masses = MassConfig(tuple(state.masses[k] for k in order))
    terms = [(b.amplitude, [b.packets[k] for k in order]) for b in state.branches]
    return SuperposedState.from_terms(masses, terms)


def run_interferometer(cfg: InterferometerConfig) -> ScenarioReport:
    cfg = cfg.resolved()
    L = cfg.L
    lab = interferometer_state(cfg)
    frame = relative_x_frame(lab.masses)
    rel = relative_state(lab, frame, cfg.exact_transform)
    rho = partial_trace(rel, keep=1)
    p_left, p_right = detector_probabilities(rho, (-L, L), 0.0)
    m_left, m_right = detector_probabilities(rho, (-L, L), 0.0, at_mirrors=True)
    form = _pair_relative_momentum(lab.masses, 0, 1)
    c_lab = expectation_weyl(lab, form, 2 * L)
    c_rel = expectation_weyl(rel, form, 2 * L)
    c_exact = c_rel if cfg.exact_transform else expectation_weyl(correlated_transform(lab, frame), form, 2 * L)
    c_rho = shift_expectation(rho, 2 * L)
    metrics = {
        "purity": purity(rho),
        "trace": rho.trace_value.real,
        "coherence": c_rho,
        "p_left": p_left,
        "p_right": p_right,
        "p_left_at_mirrors": m_left,
        "p_right_at_mirrors": m_right,
        "p_left_lab": 0.5 + c_lab.real,
        "p_left_relative_frame": 0.5 + c_rel.real,
    }
    if cfg.include_frame_F2 != "none":
        # interferometer seen from F2: order (F2, interferometer, particle)
        lab_f = _reorder(lab, (2, 0, 1))
        rho_f = partial_trace(relative_state(lab_f, relative_x_frame(lab_f.masses), cfg.exact_transform), keep=1)
        metrics["frame_purity"] = purity(rho_f)
    provenance = {
        "config": asdict(cfg),
        "bodies": ["interferometer", "particle"] + (["F2"] if cfg.include_frame_F2 != "none" else []),
        "detector_phase_convention": 0.0,
        "oracle_deltas": {
            "lab_vs_relative_frame": abs(c_lab - c_rel),
            "lab_vs_exact_relative_frame": abs(c_lab - c_exact),
            "lab_vs_reduced_state": abs(0.5 + c_lab.real - p_left),
        },
    }
    if cfg.exact_transform and lab.n_coords == 2:
        ex = transform_state(lab, cm_relative_map(lab.masses), mode="exact")
        provenance["exact_transform"] = {
            "correlated": ex.correlated,
            "reports": [asdict(r) for r in ex.reports],
        }
    _check_finite(metrics)
    return ScenarioReport("interferometer", metrics, provenance=provenance)


def relabelled_prediction(cfg: InterferometerConfig, phase: float) -> tuple[float, float]:
    """Detector probabilities of the pure relabelled state with relative phase ``phase``."""
    cfg = replace(cfg, setup="a", include_frame_F2="none").resolved()
    L = cfg.L
    terms = [
        (1.0, [_packet(0.0, cfg.width_i), _packet(-L, cfg.width_p)]),
        (cmath.exp(1j * phase), [_packet(0.0, cfg.width_i), _packet(L, cfg.width_p)]),
    ]
    lab = normalize(SuperposedState.from_terms([cfg.m_i, cfg.m_p], terms))
    rho = partial_trace(relative_state(lab, relative_x_frame(lab.masses), cfg.exact_transform), keep=1)
    return detector_probabilities(rho, (-L, L), 0.0)


def run_frames(cfg: InterferometerConfig, phases=None) -> ScenarioReport:
    """Both setups with and without a second physical frame, plus the relabelling family."""
    metrics = {}
    deltas = {}
    for setup in ("a", "b"):
        for mode in FRAME_MODES:
            rep = run_interferometer(replace(cfg, setup=setup, include_frame_F2=mode))
            key = f"{setup}_{mode}"
            for name in ("purity", "p_left", "p_right", "frame_purity"):
                if name in rep.metrics:
                    metrics[f"{key}_{name}"] = rep.metrics[name]
            deltas[key] = rep.provenance["oracle_deltas"]
    phases = np.linspace(0.0, 2 * math.pi, 13) if phases is None else np.asarray(phases, dtype=float)
    rows = []
    for phi in phases:
        pl, pr = relabelled_prediction(cfg, float(phi))
        rows.append({"relabel_phase": float(phi), "p_left": pl, "p_right": pr})
    _check_finite(metrics)
    prov = {"config": asdict(cfg.resolved()), "oracle_deltas": deltas}
    return ScenarioReport("frames", metrics, "relabel_phase", rows, prov)


# ---------------------------------------------------------------------------
# rocket


@dataclass
class RocketConfig:
    """
    A particle in a superposition of two packets inside a free rocket.

    The packets start at -L and +L and move towards each other with momentum
    p; the rocket is a minimum-uncertainty packet of spread ``delta_xR``.
    """

    m_p: float = 1.0
    m_R: float = 1e4
    L: float = 10.0
    p: float = 10.0
    delta_xR: float = 0.05
    delta_p: float | None = None
    grid_points: int = 2048
    grid_sigmas: float = 8.0
    exact_transform: bool = False

    def resolved(self) -> RocketConfig:
        for name in ("m_p", "m_R", "L", "p", "delta_xR", "grid_sigmas"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.grid_points < 16:
            raise DomainError("grid_points must be at least 16")
        cfg = replace(self, delta_p=self.p / 20 if self.delta_p is None else self.delta_p)
        if not cfg.delta_p > 0:
            raise DomainError("delta_p must be positive")
        return cfg

    @property
    def T(self) -> float:
        return self.m_p * self.L / self.p

    @property
    def wavelength(self) -> float:
        return 2 * math.pi / self.p

    @property
    def window_lower(self) -> float:
        return self.m_p * self.L / self.m_R


def rocket_state(cfg: RocketConfig, delta_xR: float | None = None) -> SuperposedState:
    """Lab-frame state at t = 0, bodies ordered (rocket, particle)."""
    dx = cfg.delta_xR if delta_xR is None else delta_xR
    dxp = 1.0 / (2.0 * cfg.delta_p)
    rocket = GaussianPacket.minimum_uncertainty(0.0, dx)
    terms = [
        (1.0, [rocket, GaussianPacket.minimum_uncertainty(-cfg.L, dxp, cfg.p)]),
        (1.0, [rocket, GaussianPacket.minimum_uncertainty(cfg.L, dxp, -cfg.p)]),
    ]
    return normalize(SuperposedState.from_terms([cfg.m_R, cfg.m_p], terms))


def rocket_spread(cfg: RocketConfig, delta_xR: float) -> float:
    """Rocket position spread at time T (exact for a free Gaussian)."""
    return math.sqrt(delta_xR**2 + (cfg.T / (2 * cfg.m_R * delta_xR)) ** 2)


def rocket_point(cfg: RocketConfig, delta_xR: float):
    """Visibility, reduced state and fringe profile seen from the rocket at time T."""
    lab = evolve_free(rocket_state(cfg, delta_xR), cfg.T)
    rel = relative_state(lab, relative_x_frame(lab.masses), cfg.exact_transform)
    rho = partial_trace(rel, keep=1)
    grid = GridSpec.around(rho, cfg.grid_sigmas, cfg.grid_points)
    profile = fringe_profile(rho, grid)
    return visibility(profile), rho, profile


def window_ok(cfg: RocketConfig, delta_xR: float) -> bool:
    return WINDOW_MARGIN * cfg.window_lower <= delta_xR <= cfg.wavelength / WINDOW_MARGIN


def run_rocket(cfg: RocketConfig, sweep=None) -> ScenarioReport:
    cfg = cfg.resolved()
    if cfg.m_R < 100 * cfg.m_p:
        warnings.warn("rocket is not much heavier than the particle", stacklevel=2)
    V, rho, profile = rocket_point(cfg, cfg.delta_xR)
    sigma_T = rocket_spread(cfg, cfg.delta_xR)
    k_rel = cfg.p * cfg.m_R / (cfg.m_R + cfg.m_p)
    metrics = {
        "visibility": V,
        "purity": purity(rho),
        "T": cfg.T,
        "wavelength": cfg.wavelength,
        "window_lower": cfg.window_lower,
        "window_upper": cfg.wavelength,
        "window_ok": window_ok(cfg, cfg.delta_xR),
        "rocket_spread_T": sigma_T,
        # fringes of wavenumber 2k smeared by a Gaussian of spread sigma_T
        "smearing_estimate": math.exp(-2 * k_rel**2 * sigma_T**2),
    }
    rows = []
    if sweep is not None:
        values = list(sweep)
        if not values:
            raise ContractError("sweep must be non-empty")
        for dx in values:
            v, _, _ = rocket_point(cfg, float(dx))
            rows.append({"delta_xR": float(dx), "visibility": v, "window_ok": window_ok(cfg, float(dx))})
    _check_finite(metrics)
    prov = {
        "config": asdict(cfg),
        "window_margin": WINDOW_MARGIN,
        "grid": asdict(profile.grid),
    }
    return ScenarioReport("rocket", metrics, "delta_xR" if rows else None, rows, prov, profile)


# ---------------------------------------------------------------------------
# third particle


@dataclass
class ThirdParticleConfig:
    """
    Two particles entangled about a fixed centre of mass, plus a spectator.

    Branches: |-a>|b>|c> + e^{i theta}|a>|-b>|c>, with m1 a = m2 b and
    a + b = L.
    """

    m1: float = 1.0
    m2: float = 2.0
    m3: float = 3.0
    L: float = 1.0
    c: float = 5.0
    theta: float = 0.0
    widths: tuple[float, float, float] | None = None

    def resolved(self) -> ThirdParticleConfig:
        for name in ("m1", "m2", "m3", "L"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        w = DEFAULT_WIDTH_FRACTION * self.L
        widths = (w, w, w) if self.widths is None else tuple(float(v) for v in self.widths)
        if len(widths) != 3 or any(not v > 0 for v in widths):
            raise DomainError("widths must be three positive numbers")
        return replace(self, widths=widths)

    @property
    def masses(self) -> MassConfig:
        return MassConfig((self.m1, self.m2, self.m3))

    @property
    def a(self) -> float:
        return self.m2 * self.L / (self.m1 + self.m2)

    @property
    def b(self) -> float:
        return self.m1 * self.L / (self.m1 + self.m2)


def third_particle_state(cfg: ThirdParticleConfig, with_third: bool = True) -> SuperposedState:
    a, b = cfg.a, cfg.b
    w1, w2, w3 = cfg.widths
    b1 = [_packet(-a, w1), _packet(b, w2)]
    b2 = [_packet(a, w1), _packet(-b, w2)]
    masses = [cfg.m1, cfg.m2]
    if with_third:
        b1.append(_packet(cfg.c, w3))
        b2.append(_packet(cfg.c, w3))
        masses.append(cfg.m3)
    terms = [(1.0, b1), (cmath.exp(1j * cfg.theta), b2)]
    return normalize(SuperposedState.from_terms(masses, terms))


def phase_routes(cfg: ThirdParticleConfig) -> tuple[complex, complex]:
    """<exp(-i 2L p_r2)> on the three-body state: lab factorisation vs relative-frame factorisation."""
    lab = third_particle_state(cfg)
    form = relative_momentum_forms(lab.masses)[1]
    rel = correlated_transform(lab, relative_x_frame(lab.masses))
    return expectation_weyl(lab, form, 2 * cfg.L), expectation_weyl(rel, form, 2 * cfg.L)


def random_route_agreement(n: int, rng: np.random.Generator) -> float:
    worst = 0.0
    for _ in range(n):
        m = rng.uniform(0.2, 5.0, size=3)
        cfg = ThirdParticleConfig(
            *m, L=1.0, c=float(rng.uniform(-5, 5)), theta=float(rng.uniform(0, 2 * math.pi)),
            widths=(0.01, 0.01, 0.01),
        ).resolved()
        r1, r2 = phase_routes(cfg)
        worst = max(worst, abs(r1 - r2))
    return worst


def run_third_particle(cfg: ThirdParticleConfig, rng: np.random.Generator | None = None, n_random: int = 0, thetas=None) -> ScenarioReport:
    cfg = cfg.resolved()
    L = cfg.L
    masses = cfg.masses
    lab3 = third_particle_state(cfg)
    lab2 = third_particle_state(cfg, with_third=False)
    p_r2_two = relative_momentum_forms(lab2.masses)[1]
    p_r2 = relative_momentum_forms(masses)[1]

    # (i) two particles
    phase_two = expectation_weyl(lab2, p_r2_two, 2 * L)
    # (ii) three particles, both routes
    rel = correlated_transform(lab3, relative_x_frame(masses))
    phase_lab = expectation_weyl(lab3, p_r2, 2 * L)
    phase_rel = expectation_weyl(rel, p_r2, 2 * L)
    # (iii) tracing cm and r3 first
    rho_r2 = partial_trace(rel, keep=1)
    naive_coherence = coherence_magnitude(rho_r2)
    naive_phase = shift_expectation(rho_r2, 2 * L)
    # (iv) q coordinates
    qframe = relative_q_frame(masses)
    qstate = correlated_transform(lab3, qframe)
    g = gamma_mass(masses)
    alpha = g * masses.mu13 / cfg.m1
    q_centres = np.array([br.centre for br in qstate.branches])
    q_shape = [br.gaussian for br in qstate.branches]
    q_shift = factorized_shifts(qstate, p_r2, 2 * L)
    shifted_q_r2 = q_centres[:, 1] + q_shift[1]
    expected_q = np.array([
        [cfg.m3 * cfg.c / masses.total, L - alpha * cfg.c, g * cfg.c],
        [cfg.m3 * cfg.c / masses.total, -L - alpha * cfg.c, g * cfg.c],
    ])
    separable = bool(
        np.allclose(q_centres[0, [0, 2]], q_centres[1, [0, 2]], rtol=0, atol=1e-10 * max(1.0, abs(cfg.c)))
        # same quadratic form and linear term: the branches differ by a translation along q_r2 only
        and np.allclose(q_shape[0].Q, q_shape[1].Q, rtol=1e-12, atol=0)
        and np.allclose(q_shape[0].b, q_shape[1].b, rtol=0, atol=1e-12 * np.max(np.abs(q_shape[0].Q)))
    )
    x_r3 = LinearPhaseSpaceForm.position(cm_relative_map(masses).position_matrix[2], "x_r3")
    comm = commutator(x_r3, p_r2)

    metrics = {
        "phase_estimate": phase_lab,
        "phase_estimate_two_particle": phase_two,
        "phase_estimate_relative_frame": phase_rel,
        "route_difference": abs(phase_lab - phase_rel),
        "third_particle_effect": abs(phase_lab - phase_two),
        "naive_coherence": naive_coherence,
        "naive_phase_estimate": naive_phase,
        "q_separable": separable,
        "q_r3_centre_spread": float(abs(q_centres[0, 2] - q_centres[1, 2])),
        "q_centre_error": float(np.max(np.abs(q_centres - expected_q))),
        "commutator_xr3_pr2": comm,
        "commutator_expected": 1j * masses.mu12 / cfg.m1,
        "gamma_mass": g,
        "alpha_q": alpha,
    }
    prov = {
        "config": asdict(cfg),
        "a": cfg.a,
        "b": cfg.b,
        "lab_shifts": (2 * L * p_r2.p_coeffs).tolist(),
        "relative_frame_shifts": factorized_shifts(rel, p_r2, 2 * L).tolist(),
        "q_frame_shifts": q_shift.tolist(),
        "q_centres": q_centres.tolist(),
        "q_centres_after_shift": np.column_stack([q_centres[:, 0], shifted_q_r2, q_centres[:, 2]]).tolist(),
        "q_centres_expected": expected_q.tolist(),
    }
    if rng is not None and n_random > 0:
        prov["random_route_agreement"] = {"samples": n_random, "max_difference": random_route_agreement(n_random, rng)}
    rows = []
    if thetas is not None:
        for th in thetas:
            r_lab, r_rel = phase_routes(replace(cfg, theta=float(th)))
            rows.append({
                "theta": float(th), "phase_re": r_lab.real, "phase_im": r_lab.imag,
                "route_difference": abs(r_lab - r_rel),
            })
    _check_finite(metrics)
    return ScenarioReport("third-particle", metrics, "theta" if rows else None, rows, prov)


# ---------------------------------------------------------------------------
# finite-width effects


def _quadrature_check(report, g1, g2, masses, points=512) -> float:
    """Max pointwise gap between the lab product and the closed form, on a 512-point line grid per axis."""
    Ai = cm_relative_map(masses).inverse_position
    sc, sr = math.sqrt(report.delta_c_sq), math.sqrt(report.delta_r_sq)
    u = report.alpha + np.linspace(-6 * sc, 6 * sc, points)
    v = report.beta + np.linspace(-6 * sr, 6 * sr, points)
    U, Vv = np.meshgrid(u, v[:: max(points // 32, 1)], indexing="ij")
    x1 = Ai[0, 0] * U + Ai[0, 1] * Vv
    x2 = Ai[1, 0] * U + Ai[1, 1] * Vv
    lab = g1(x1) * g2(x2)
    return float(np.max(np.abs(lab - report.amplitude(U, Vv))))


def appendix_analysis(m1, m2, m3=None, widths=None, L=1.0, c=5.0, theta=0.0) -> ScenarioReport:
    """
    Exact finite-width analysis.

    ``widths`` are amplitude widths (delta_i, packet ~ exp(-x^2/(2 delta_i^2))).
    Three-body defaults satisfy m_i delta_i^2 = const with delta_1 = L/50.
    """
    n = 2 if m3 is None else 3
    masses = MassConfig((m1, m2) if n == 2 else (m1, m2, m3))
    if widths is None:
        d1 = DEFAULT_WIDTH_FRACTION * L
        K = m1 * d1 * d1
        widths = tuple(math.sqrt(K / m) for m in masses.masses)
    widths = tuple(float(w) for w in widths)
    if len(widths) != n or any(not w > 0 for w in widths):
        raise DomainError(f"need {n} positive widths")

    a = m2 * L / (m1 + m2)
    b = m1 * L / (m1 + m2)
    g1 = _packet(-a, widths[0])
    g2 = _packet(b, widths[1])
    rep = exact_transform_report(g1, g2, MassConfig((m1, m2)))
    metrics = {
        "delta_c_sq": rep.delta_c_sq,
        "delta_r_sq": rep.delta_r_sq,
        "alpha": rep.alpha,
        "beta": rep.beta,
        "gamma_corr": rep.gamma_corr,
        "product_state": rep.is_product,
    }
    prov = {
        "masses": list(masses.masses),
        "widths": list(widths),
        "L": L,
        "oracle_deltas": {"closed_form_vs_lab_pointwise": _quadrature_check(rep, g1, g2, MassConfig((m1, m2)))},
    }
    if n == 3:
        frame = relative_x_frame(masses)
        P = transformed_precision([w * w for w in widths], frame).real
        scale = float(np.max(np.abs(np.diag(P))))
        cfg = ThirdParticleConfig(m1, m2, m3, L, c, theta, widths).resolved()
        lab = third_particle_state(cfg)
        C1 = frame.position_matrix @ [p.centre for p in lab.branches[0].packets]
        C2 = frame.position_matrix @ [p.centre for p in lab.branches[1].packets]
        amp = lab.branches[0].amplitude.conjugate() * lab.branches[1].amplitude
        naive = amp * correlated_overlap(P, C1, C2 + np.array([0.0, 2 * L, 0.0]))
        full = amp * correlated_overlap(P, C1, C2 + np.array([0.0, 2 * L, 2 * cfg.a]))
        metrics.update({
            "balanced_widths": bool(np.ptp([m * w * w for m, w in zip(masses.masses, widths)]) <= 1e-12 * m1 * widths[0] ** 2),
            "cm_coupling": float(np.max(np.abs(P[0, 1:])) / scale),
            "residual_r2_r3_correlation": float(-P[1, 2] / math.sqrt(P[1, 1] * P[2, 2])),
            "traced_phase_signal": naive,
            "full_shift_signal": full,
        })
        prov["precision_matrix"] = P.tolist()
    _check_finite(metrics)
    return ScenarioReport("appendix", metrics, provenance=prov)
