"""Photonic control-chain model.

This module maps a control schedule and the input laser amplitudes to the
complex field seen by every atom at every time step. The chain is

    a_in -> PIC (DRMZM modulation + waveguide crosstalk) -> weak scatter 1
         -> SLM -> weak scatter 2 -> Gaussian projection onto the atom plane

All lengths are in micrometres and coupling coefficients in rad/um, so the
product kappa * L is dimensionless.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import (
    ConstraintViolation,
    DimensionMismatch,
    InvalidPairError,
    SegmentationError,
)

logger = logging.getLogger(__name__)

V_MIN = -15.0
V_MAX = 15.0
CROSSTALK_PHASE = -math.pi / 2


# Domain types


@dataclass
class PicGeometry:
    """Waveguide layout of the programmable PIC.

    Attributes:
        n_channels: Number of modulated channels
        d0: Nominal channel pitch (um)
        L0: Nominal coupling length between neighbouring waveguides (um)
        s: Growth factor of the coupling length per extra channel of separation
        delta_d_range: Half-width of the uniform pitch perturbation (um)
        delta_L_range: Half-width of the uniform length perturbation (um)
        n_eff: Per-channel effective index; empty means all channels equal
        lambda0: Wavelength (um)
        seed: Fabrication seed used by :func:`realize_geometry`
    """

    n_channels: int = 3
    d0: float = 1.0
    L0: float = 600.0
    s: float = 1.1
    delta_d_range: float = 0.01
    delta_L_range: float = 1.0
    n_eff: List[float] = field(default_factory=list)
    lambda0: float = 0.78
    seed: int = 2024

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValueError("n_channels must be at least 1")
        if self.d0 <= 0:
            raise ValueError("d0 must be positive")
        if self.L0 < 0:
            raise ValueError("L0 must be non-negative")
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")
        if self.delta_d_range < 0 or self.delta_L_range < 0:
            raise ValueError("perturbation half-widths must be non-negative")
        if self.n_eff and len(self.n_eff) != self.n_channels:
            raise DimensionMismatch(
                f"n_eff has {len(self.n_eff)} entries for {self.n_channels} channels"
            )

    def propagation_constants(self) -> np.ndarray:
        """Return beta_i = 2*pi*n_eff_i/lambda0 for every channel."""
        if not self.n_eff:
            return np.zeros(self.n_channels)
        return 2.0 * math.pi * np.asarray(self.n_eff, dtype=float) / self.lambda0


@dataclass
class CouplingFit:
    """Exponential fit of the evanescent coupling versus gap."""

    kappa0: float = 10.145
    alpha: float = 6.934

    def __post_init__(self):
        if self.kappa0 < 0 or self.alpha < 0:
            raise ValueError("kappa0 and alpha must be non-negative")


@dataclass
class DrmzmConfig:
    """Two-arm modulator model: linear voltage-to-phase arms."""

    v_pi: float = 15.0
    insertion: float = 1.0

    def __post_init__(self):
        if self.v_pi <= 0:
            raise ValueError("v_pi must be positive")
        if not 0.0 <= self.insertion <= 1.0:
            raise ValueError("insertion must lie in [0, 1]")


@dataclass
class SlmConfig:
    """Static per-channel SLM amplitude and phase.

    Empty lists mean unit amplitude and zero phase on every channel.
    """

    amplitudes: List[float] = field(default_factory=list)
    phases: List[float] = field(default_factory=list)

    def __post_init__(self):
        if any(a < 0.0 or a > 1.0 for a in self.amplitudes):
            raise ValueError("SLM amplitudes must lie in [0, 1]")

    def factors(self, n_channels: int) -> np.ndarray:
        """Complex per-channel SLM factors amplitude * exp(i*phase)."""
        amps = np.asarray(self.amplitudes) if self.amplitudes else np.ones(n_channels)
        phases = np.zeros(n_channels) if not self.phases else np.asarray(self.phases)
        if amps.shape != (n_channels,) or phases.shape != (n_channels,):
            raise DimensionMismatch(f"SLM settings do not cover {n_channels} channels")
        return amps * np.exp(1j * phases)


@dataclass
class BeamLattice:
    """Atom sites and beam centres on the atom plane.

    Empty ``atom_positions`` are generated on an equilateral triangular lattice
    with the configured spacing; empty ``beam_centers`` put beam k on atom k.
    """

    atom_positions: List[List[float]] = field(default_factory=list)
    beam_centers: List[List[float]] = field(default_factory=list)
    w0: float = 2.0
    spacing: float = 3.0

    def __post_init__(self):
        if self.w0 <= 0:
            raise ValueError("w0 must be positive")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")

    def sites(self, n_atoms: int) -> np.ndarray:
        """Atom coordinates as an (n_atoms, 2) array."""
        if self.atom_positions:
            sites = np.asarray(self.atom_positions, dtype=float)
            if sites.shape != (n_atoms, 2):
                raise DimensionMismatch(
                    f"lattice lists {len(self.atom_positions)} atoms, "
                    f"task has {n_atoms}"
                )
            return sites
        return triangular_sites(n_atoms, self.spacing)

    def centers(self, n_atoms: int) -> np.ndarray:
        """Beam centre coordinates as an (n_atoms, 2) array."""
        if self.beam_centers:
            centers = np.asarray(self.beam_centers, dtype=float)
            if centers.shape != (n_atoms, 2):
                raise DimensionMismatch("one beam centre per channel is required")
            return centers
        return self.sites(n_atoms)


@dataclass
class ImperfectionConfig:
    """Weak scattering and time-varying hardware drifts."""

    weak_scatter_eps: float = 0.0
    dynamic: bool = False
    delta_kappa: float = 0.5
    delta_alpha: float = 0.2
    delta_w: float = 0.1
    seed: int = 7

    def __post_init__(self):
        magnitudes = (
            self.weak_scatter_eps,
            self.delta_kappa,
            self.delta_alpha,
            self.delta_w,
        )
        if min(magnitudes) < 0:
            raise ValueError("imperfection magnitudes must be non-negative")


@dataclass
class HardwareModel:
    """Everything the control chain needs besides the schedule.

    Attributes:
        a_in: Real input amplitude per channel; empty means all ones
    """

    pic: PicGeometry = field(default_factory=PicGeometry)
    coupling: CouplingFit = field(default_factory=CouplingFit)
    drmzm: DrmzmConfig = field(default_factory=DrmzmConfig)
    slm: SlmConfig = field(default_factory=SlmConfig)
    lattice: BeamLattice = field(default_factory=BeamLattice)
    imperfections: ImperfectionConfig = field(default_factory=ImperfectionConfig)
    a_in: List[float] = field(default_factory=list)

    def input_amplitudes(self) -> np.ndarray:
        n = self.pic.n_channels
        if not self.a_in:
            return np.ones(n, dtype=complex)
        if len(self.a_in) != n:
            raise DimensionMismatch(
                f"a_in has {len(self.a_in)} entries for {n} channels"
            )
        return np.asarray(self.a_in, dtype=complex)


@dataclass
class ControlSchedule:
    """Piecewise-constant ring voltages, shape (n_channels, 2, n_segments)."""

    voltages: np.ndarray

    def __post_init__(self):
        self.voltages = np.asarray(self.voltages, dtype=float)
        if self.voltages.ndim != 3 or self.voltages.shape[1] != 2:
            raise DimensionMismatch(
                "voltages must have shape (n_channels, 2, n_segments), "
                f"got {self.voltages.shape}"
            )
        check_voltages(self.voltages)

    @property
    def n_channels(self) -> int:
        return self.voltages.shape[0]

    @property
    def n_segments(self) -> int:
        return self.voltages.shape[2]

    @classmethod
    def zeros(cls, n_channels: int, n_segments: int) -> "ControlSchedule":
        return cls(np.zeros((n_channels, 2, n_segments)))

    @classmethod
    def from_flat(
        cls, x: np.ndarray, n_channels: int, n_segments: int
    ) -> "ControlSchedule":
        """Rebuild a schedule from the optimizer vector, clamping to the bounds."""
        x = np.clip(np.asarray(x, dtype=float), V_MIN, V_MAX)
        return cls(x.reshape(n_channels, 2, n_segments))

    def flat(self) -> np.ndarray:
        return self.voltages.reshape(-1).copy()


@dataclass
class DynamicsSeries:
    """Per-step hardware drifts; all zeros when dynamics are off."""

    delta_kappa: np.ndarray  # (t_steps, n, n), symmetric
    delta_alpha: np.ndarray  # (t_steps, n, n), symmetric
    delta_w: np.ndarray  # (t_steps,)


@dataclass
class ChainTrace:
    """Intermediate quantities of one pass through the chain.

    The atom field is affine in the DRMZM transmissions, so
    ``fields[:, k] == sensitivity[k] @ transmissions[k] + offsets[k]``.
    """

    fields: np.ndarray  # (n_atoms, t_steps)
    transmissions: np.ndarray  # (t_steps, n_channels)
    sensitivity: np.ndarray  # (t_steps, n_atoms, n_channels)
    offsets: np.ndarray  # (t_steps, n_atoms)
    segment_of_step: np.ndarray  # (t_steps,)


# Geometry and crosstalk


def triangular_sites(n_atoms: int, spacing: float) -> np.ndarray:
    """Sites of an equilateral triangular lattice, filled row by row."""
    per_row = max(1, math.ceil(math.sqrt(n_atoms)))
    index = np.arange(n_atoms)
    row, col = index // per_row, index % per_row
    x = (col + 0.5 * (row % 2)) * spacing
    y = row * spacing * math.sqrt(3) / 2.0
    return np.stack([x, y], axis=-1).astype(float)


def realize_geometry(geom: PicGeometry, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Draw the fabricated pairwise gaps and coupling lengths.

    Perturbations are sampled once per unordered pair, so both matrices are
    symmetric. Diagonal entries are unused and set to zero.

    Args:
        geom: Nominal PIC geometry
        seed: Fabrication seed

    Returns:
        Tuple ``(d, L)`` of (n, n) arrays in micrometres
    """
    n = geom.n_channels
    rng = np.random.default_rng(seed)
    rows, cols = np.triu_indices(n, k=1)
    sep = (cols - rows).astype(float)
    delta_d = rng.uniform(-geom.delta_d_range, geom.delta_d_range, size=sep.size)
    delta_L = rng.uniform(-geom.delta_L_range, geom.delta_L_range, size=sep.size)

    d = np.zeros((n, n))
    L = np.zeros((n, n))
    d[rows, cols] = sep * geom.d0 + delta_d
    L[rows, cols] = geom.L0 * geom.s**sep + delta_L
    return d + d.T, L + L.T


def coupling_coefficient(
    m: int,
    n: int,
    d: np.ndarray,
    L: np.ndarray,
    fit: CouplingFit,
    geom: PicGeometry,
    delta_kappa: float = 0.0,
    delta_alpha: float = 0.0,
) -> complex:
    """Crosstalk coefficient C_{m,n} from symmetric coupled-mode theory.

    Raises:
        InvalidPairError: If ``m == n``
    """
    if m == n:
        raise InvalidPairError(f"coupling of channel {m} with itself is undefined")
    beta = geom.propagation_constants()
    kappa = (fit.kappa0 + delta_kappa) * math.exp(-(fit.alpha + delta_alpha) * d[m][n])
    delta_beta = (beta[m] - beta[n]) / 2.0
    kappa_eff = math.sqrt(kappa**2 + delta_beta**2)
    amplitude = abs(math.sin(kappa_eff * L[m][n]))
    return amplitude * complex(math.cos(CROSSTALK_PHASE), math.sin(CROSSTALK_PHASE))


def coupling_matrix(
    d: np.ndarray,
    L: np.ndarray,
    fit: CouplingFit,
    geom: PicGeometry,
    delta_kappa: Optional[np.ndarray] = None,
    delta_alpha: Optional[np.ndarray] = None,
) -> np.ndarray:
    """All off-diagonal C_{m,n} at once; the diagonal is zero."""
    n = geom.n_channels
    dk = np.zeros((n, n)) if delta_kappa is None else delta_kappa
    da = np.zeros((n, n)) if delta_alpha is None else delta_alpha
    beta = geom.propagation_constants()
    kappa = (fit.kappa0 + dk) * np.exp(-(fit.alpha + da) * d)
    delta_beta = (beta[:, None] - beta[None, :]) / 2.0
    kappa_eff = np.sqrt(kappa**2 + delta_beta**2)
    C = np.abs(np.sin(kappa_eff * L)) * np.exp(1j * CROSSTALK_PHASE)
    np.fill_diagonal(C, 0.0)
    return C


def crosstalk_matrix(hw: HardwareModel) -> np.ndarray:
    """Static crosstalk matrix of the fabricated chip described by ``hw``."""
    d, L = realize_geometry(hw.pic, hw.pic.seed)
    return coupling_matrix(d, L, hw.coupling, hw.pic)


# Modulation and free-space stages


def check_voltages(voltages: np.ndarray) -> None:
    """Raise :class:`ConstraintViolation` if any voltage leaves [V_MIN, V_MAX]."""
    v = np.asarray(voltages)
    finite = bool(np.all(np.isfinite(v)))
    if v.size and (not finite or np.min(v) < V_MIN or np.max(v) > V_MAX):
        raise ConstraintViolation(
            f"voltages must lie in [{V_MIN}, {V_MAX}] V, got range "
            f"[{np.min(v):.4f}, {np.max(v):.4f}]"
        )


def drmzm_transfer(v0, v1, cfg: DrmzmConfig):
    """Field transmission of a DRMZM with ring voltages ``v0`` and ``v1``.

    Works elementwise on arrays.

    Raises:
        ConstraintViolation: If a voltage lies outside [-15, 15] V
    """
    check_voltages(np.asarray(v0))
    check_voltages(np.asarray(v1))
    phase0 = np.pi * np.asarray(v0) / cfg.v_pi
    phase1 = np.pi * np.asarray(v1) / cfg.v_pi
    return cfg.insertion * 0.5 * (np.exp(1j * phase0) + np.exp(1j * phase1))


def drmzm_derivatives(v0, v1, cfg: DrmzmConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Partial derivatives dT/dv0 and dT/dv1 (complex, per volt)."""
    scale = cfg.insertion * 0.5 * 1j * np.pi / cfg.v_pi
    return (
        scale * np.exp(1j * np.pi * np.asarray(v0) / cfg.v_pi),
        scale * np.exp(1j * np.pi * np.asarray(v1) / cfg.v_pi),
    )


def transmission_to_voltages(
    transmission, cfg: DrmzmConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Push-pull operating point giving a real transmission in [0, insertion].

    With v1 = -v0 the transfer function reduces to insertion * cos(pi*v0/v_pi).
    """
    t = np.asarray(transmission, dtype=float) / cfg.insertion
    if np.any(t < 0) or np.any(t > 1 + 1e-12):
        raise ValueError("transmission must lie in [0, insertion]")
    v0 = cfg.v_pi / np.pi * np.arccos(np.clip(t, 0.0, 1.0))
    if np.any(v0 > V_MAX):
        raise ConstraintViolation("requested transmission needs more than 15 V")
    return v0, -v0


def pi_pulse_schedule(
    n_channels: int,
    n_segments: int,
    channel: int,
    cfg: DrmzmConfig,
    shape: str = "square",
    others_volts: float = 0.0,
    area_fraction: float = 0.5,
) -> ControlSchedule:
    """Naive single-channel pulse used to show why open-loop control fails.

    With the default drive calibration a full-transmission pulse over the
    whole gate reaches |g| T_g = pi, so a mean transmission of 0.5 gives
    exactly an X gate. Transmissions are real and set by push-pull voltages.
    Every other channel sits at ``others_volts`` on both rings.

    Args:
        n_channels: Number of channels
        n_segments: Number of schedule segments
        channel: Driven channel (0-based)
        cfg: Modulator model
        shape: ``"square"`` or ``"gaussian"`` transmission envelope
        others_volts: Voltage applied to both rings of the idle channels
        area_fraction: Mean transmission over the gate

    Raises:
        ValueError: For an unknown shape, a bad channel or an unreachable area
    """
    if not 0 <= channel < n_channels:
        raise ValueError(f"channel {channel} out of range for {n_channels} channels")
    if shape == "square":
        envelope = np.ones(n_segments)
    elif shape == "gaussian":
        centers = (np.arange(n_segments) + 0.5) / n_segments - 0.5
        envelope = np.exp(-(centers**2) / (2 * 0.3**2))
    else:
        raise ValueError(f"Unknown pulse shape: {shape}")
    transmission = area_fraction * envelope / envelope.mean()
    if transmission.max() > cfg.insertion:
        raise ValueError("pulse area is not reachable with this insertion loss")

    voltages = np.full((n_channels, 2, n_segments), float(others_volts))
    v0, v1 = transmission_to_voltages(transmission, cfg)
    voltages[channel, 0] = v0
    voltages[channel, 1] = v1
    return ControlSchedule(voltages)


def build_pic_matrix(
    step_voltages: np.ndarray, C: np.ndarray, cfg: DrmzmConfig
) -> np.ndarray:
    """PIC transfer matrix for one time step.

    Args:
        step_voltages: (n_channels, 2) ring voltages
        C: (n_channels, n_channels) crosstalk matrix; its diagonal is ignored
        cfg: Modulator model

    Returns:
        Diagonal DRMZM transmissions with crosstalk off the diagonal
    """
    v = np.asarray(step_voltages, dtype=float)
    n = C.shape[0]
    if C.shape != (n, n) or v.shape != (n, 2):
        raise DimensionMismatch(
            f"expected ({n}, 2) voltages for a {C.shape} crosstalk matrix, "
            f"got {v.shape}"
        )
    matrix = np.array(C, dtype=complex)
    np.fill_diagonal(matrix, drmzm_transfer(v[:, 0], v[:, 1], cfg))
    return matrix


def apply_slm(modes: np.ndarray, slm: SlmConfig) -> np.ndarray:
    """Multiply each mode (row, for a matrix of modes) by its static SLM factor."""
    modes = np.asarray(modes)
    factors = slm.factors(modes.shape[0])
    return factors.reshape((-1,) + (1,) * (modes.ndim - 1)) * modes


def scatter_operator(n: int, eps: float, seed: int, stage: int) -> np.ndarray:
    """The perturbed identity I + eps*R used by :func:`weak_scatter`."""
    if stage not in (1, 2):
        raise ValueError("stage must be 1 or 2")
    rng = np.random.default_rng([seed, stage])
    R = rng.uniform(-1, 1, size=(n, n)) + 1j * rng.uniform(-1, 1, size=(n, n))
    return np.eye(n, dtype=complex) + eps * R


def weak_scatter(modes: np.ndarray, eps: float, seed: int, stage: int) -> np.ndarray:
    """Apply weak scattering; ``eps = 0`` returns the input unchanged."""
    modes = np.asarray(modes)
    if eps == 0:
        return modes.copy()
    return scatter_operator(modes.shape[0], eps, seed, stage) @ modes


def leakage_matrix(sites: np.ndarray, centers: np.ndarray, w0: float) -> np.ndarray:
    """G[j, k] = exp(-|r_j - c_k|^2 / w0^2), the LG00 envelope of beam k at atom j."""
    diff = sites[:, None, :] - centers[None, :, :]
    return np.exp(-np.sum(diff**2, axis=-1) / w0**2)


def field_at_atoms(b: np.ndarray, lattice: BeamLattice, w0_t: float) -> np.ndarray:
    """Complex field at each atom from the channel outputs ``b``."""
    b = np.asarray(b)
    n = b.shape[0]
    return leakage_matrix(lattice.sites(n), lattice.centers(n), w0_t) @ b


def field_map(
    b: np.ndarray,
    lattice: BeamLattice,
    xs: Sequence[float],
    ys: Sequence[float],
    w0: Optional[float] = None,
) -> np.ndarray:
    """Complex field on a grid of the atom plane, shape (len(ys), len(xs))."""
    b = np.asarray(b)
    centers = lattice.centers(b.shape[0])
    gx, gy = np.meshgrid(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
    points = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    G = leakage_matrix(points, centers, lattice.w0 if w0 is None else w0)
    return (G @ b).reshape(gx.shape)


# Dynamics and the full chain


def sample_dynamics(
    imp: ImperfectionConfig, t_steps: int, n_channels: int = 3
) -> DynamicsSeries:
    """Per-step uniform drifts of kappa, alpha (per pair) and the beam waist."""
    n = n_channels
    if not imp.dynamic:
        return DynamicsSeries(
            delta_kappa=np.zeros((t_steps, n, n)),
            delta_alpha=np.zeros((t_steps, n, n)),
            delta_w=np.zeros(t_steps),
        )
    rng = np.random.default_rng(imp.seed)
    rows, cols = np.triu_indices(n, k=1)
    dk_pairs = rng.uniform(-imp.delta_kappa, imp.delta_kappa, size=(t_steps, rows.size))
    da_pairs = rng.uniform(-imp.delta_alpha, imp.delta_alpha, size=(t_steps, rows.size))
    delta_w = rng.uniform(-imp.delta_w, imp.delta_w, size=t_steps)

    dk = np.zeros((t_steps, n, n))
    da = np.zeros((t_steps, n, n))
    dk[:, rows, cols] = dk_pairs
    da[:, rows, cols] = da_pairs
    dk += np.transpose(dk, (0, 2, 1))
    da += np.transpose(da, (0, 2, 1))
    return DynamicsSeries(delta_kappa=dk, delta_alpha=da, delta_w=delta_w)


def segment_of_steps(t_steps: int, n_segments: int) -> np.ndarray:
    """Map each simulation step to the schedule segment that drives it.

    Raises:
        SegmentationError: If ``n_segments`` does not divide ``t_steps``
    """
    if n_segments < 1 or t_steps < 1 or t_steps % n_segments:
        raise SegmentationError(
            f"{n_segments} segments cannot be aligned with {t_steps} time steps"
        )
    return np.arange(t_steps) // (t_steps // n_segments)


def channel_stages(modes: np.ndarray, hw: HardwareModel) -> np.ndarray:
    """Weak scatter 1, the SLM and weak scatter 2 applied to the PIC output."""
    imp = hw.imperfections
    out = weak_scatter(modes, imp.weak_scatter_eps, imp.seed, 1)
    out = apply_slm(out, hw.slm)
    return weak_scatter(out, imp.weak_scatter_eps, imp.seed, 2)


def trace_chain(
    schedule: ControlSchedule,
    hw: HardwareModel,
    t_steps: int,
    a_in: Optional[np.ndarray] = None,
) -> ChainTrace:
    """Run the chain for every step and keep what gradients need."""
    voltages = schedule.voltages
    n_ch = hw.pic.n_channels
    if voltages.shape[:2] != (n_ch, 2):
        raise DimensionMismatch(
            f"schedule shape {voltages.shape} does not fit {n_ch} channels"
        )
    hw.lattice.centers(n_ch)
    segments = segment_of_steps(t_steps, voltages.shape[2])

    a = hw.input_amplitudes() if a_in is None else np.asarray(a_in, dtype=complex)
    if a.shape != (n_ch,):
        raise DimensionMismatch(f"a_in must have {n_ch} entries")

    # Linear part of the chain after the PIC; static in time
    P = channel_stages(np.eye(n_ch, dtype=complex), hw)

    d, L = realize_geometry(hw.pic, hw.pic.seed)
    dyn = sample_dynamics(hw.imperfections, t_steps, n_ch)
    C = coupling_matrix(d, L, hw.coupling, hw.pic)
    w0 = hw.lattice.w0

    fields = np.empty((n_ch, t_steps), dtype=complex)
    transmissions = np.empty((t_steps, n_ch), dtype=complex)
    sensitivity = np.empty((t_steps, n_ch, n_ch), dtype=complex)
    offsets = np.empty((t_steps, n_ch), dtype=complex)
    for k in range(t_steps):
        if hw.imperfections.dynamic:
            C = coupling_matrix(
                d, L, hw.coupling, hw.pic, dyn.delta_kappa[k], dyn.delta_alpha[k]
            )
            w0 = hw.lattice.w0 + dyn.delta_w[k]
        M = build_pic_matrix(voltages[:, :, segments[k]], C, hw.drmzm)
        fields[:, k] = field_at_atoms(P @ (M @ a), hw.lattice, w0)
        transmissions[k] = np.diag(M)
        sensitivity[k] = field_at_atoms(P * a[None, :], hw.lattice, w0)
        offsets[k] = field_at_atoms(P @ ((M - np.diag(np.diag(M))) @ a), hw.lattice, w0)

    return ChainTrace(
        fields=fields,
        transmissions=transmissions,
        sensitivity=sensitivity,
        offsets=offsets,
        segment_of_step=segments,
    )


def forward_chain(
    schedule: ControlSchedule,
    hw: HardwareModel,
    a_in: Optional[np.ndarray] = None,
    t_steps: int = 100,
) -> np.ndarray:
    """Field at atom j and step k, shape (n_atoms, t_steps)."""
    return trace_chain(schedule, hw, t_steps, a_in).fields
