"""Jones-calculus building blocks for the photonic cell model.

All components are 2x2 complex transfer matrices acting on a two-mode
polarization state (TE/TM field amplitudes).  The trench coupler is
modeled as a per-mode multi-pass cavity whose infinite bounce series is
summed in closed form; waveguides are birefringent retarders; edge
couplers are per-mode attenuators.  Rotation angles express polarization
cross-talk between the component's principal axes and the chip frame.

Sign convention: R(a) = [[cos a, -sin a], [sin a, cos a]], and a
component with principal-axis angle a is R(a) @ diag(...) @ R(-a).
Formula helpers (`fabry_perot_transmission` etc.) accept scalars or
numpy arrays so the batch evaluator in puf.py shares the same math.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PolarizationState:
    ex: complex
    ey: complex

    def power(self) -> float:
        return abs(self.ex) ** 2 + abs(self.ey) ** 2


@dataclass(frozen=True)
class TransferMatrix:
    m00: complex
    m01: complex
    m10: complex
    m11: complex


IDENTITY = TransferMatrix(1.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class TrenchCouplerParams:
    """Multi-pass coupler: per-mode internal reflectance and single-pass
    phase, plus a cross-talk rotation between its axes and the chip."""

    rho_te: float
    rho_tm: float
    delta_te: float
    delta_tm: float
    kappa: float

    def __post_init__(self):
        if not (0.0 <= self.rho_te < 1.0 and 0.0 <= self.rho_tm < 1.0):
            raise ValueError("reflectance must lie in [0, 1) for the bounce series to converge")


@dataclass(frozen=True)
class WaveguideParams:
    """Birefringent segment: axis angle and per-mode retardance."""

    theta: float
    phi_te: float
    phi_tm: float


@dataclass(frozen=True)
class EdgeCouplerParams:
    """Chip facet coupling: per-mode amplitude transmittance."""

    a_te: float
    a_tm: float

    def __post_init__(self):
        if not (0.0 < self.a_te <= 1.0 and 0.0 < self.a_tm <= 1.0):
            raise ValueError("amplitude transmittance must lie in (0, 1]")


def apply_transfer(m: TransferMatrix, s: PolarizationState) -> PolarizationState:
    return PolarizationState(
        m.m00 * s.ex + m.m01 * s.ey,
        m.m10 * s.ex + m.m11 * s.ey,
    )


def compose(ms) -> TransferMatrix:
    """Cascade matrices given in propagation order (input to output).

    apply(compose([A, B]), s) == apply(B, apply(A, s)).
    """
    ms = list(ms)
    if not ms:
        raise ValueError("cannot compose an empty component list")
    total = ms[0]
    for m in ms[1:]:
        total = TransferMatrix(
            m.m00 * total.m00 + m.m01 * total.m10,
            m.m00 * total.m01 + m.m01 * total.m11,
            m.m10 * total.m00 + m.m11 * total.m10,
            m.m10 * total.m01 + m.m11 * total.m11,
        )
    return total


def fabry_perot_transmission(rho, delta):
    """Closed form of the multi-pass bounce series for one mode.

    t = (1 - rho^2) e^{i delta} / (1 - rho^2 e^{2 i delta}); equals the
    sum over k of (1 - rho^2) e^{i delta} (rho^2 e^{2 i delta})^k.
    |t| <= 1 with equality on resonance.
    """
    phase = np.exp(1j * np.asarray(delta)) if isinstance(delta, np.ndarray) else cmath.exp(1j * delta)
    r2 = np.square(rho) if isinstance(rho, np.ndarray) else rho * rho
    return (1.0 - r2) * phase / (1.0 - r2 * phase * phase)


def _rotated_diag(angle: float, d0: complex, d1: complex) -> TransferMatrix:
    c, s = math.cos(angle), math.sin(angle)
    # R(angle) @ diag(d0, d1) @ R(-angle)
    return TransferMatrix(
        c * c * d0 + s * s * d1,
        c * s * (d0 - d1),
        c * s * (d0 - d1),
        s * s * d0 + c * c * d1,
    )


def trench_coupler_transfer(p: TrenchCouplerParams) -> TransferMatrix:
    t_te = fabry_perot_transmission(p.rho_te, p.delta_te)
    t_tm = fabry_perot_transmission(p.rho_tm, p.delta_tm)
    return _rotated_diag(p.kappa, t_te, t_tm)


def waveguide_transfer(p: WaveguideParams) -> TransferMatrix:
    return _rotated_diag(p.theta, cmath.exp(1j * p.phi_te), cmath.exp(1j * p.phi_tm))


def edge_coupler_transfer(p: EdgeCouplerParams) -> TransferMatrix:
    return TransferMatrix(p.a_te, 0.0, 0.0, p.a_tm)


def rotation(angle: float) -> TransferMatrix:
    c, s = math.cos(angle), math.sin(angle)
    return TransferMatrix(c, -s, s, c)


def polarized_power_fraction(s: PolarizationState) -> float:
    """Fraction of output power in the x mode; 0 for a dark output
    (degenerate but defined, so thresholding never sees a NaN)."""
    px = abs(s.ex) ** 2
    total = px + abs(s.ey) ** 2
    if total == 0.0:
        return 0.0
    return px / total
