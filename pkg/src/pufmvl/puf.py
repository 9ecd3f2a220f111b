"""Seeded 24-cell photonic PUF instances and CRP dataset generation.

Each cell is a chain of nine components (edge coupler in, four
birefringent waveguide segments interleaved with three multi-pass trench
couplers, edge coupler out).  A 24-bit challenge selects the input
polarization state: the upper 12 bits set the polar angle and the lower
12 bits the relative phase of the two field components.  The cell's
analog observable is the polarized power fraction at the used output
port; the response bit is that observable thresholded at the cell's
calibrated median, and the 24 cell bits assemble most-significant-first
into the 24-bit response.

Challenge-dependent phases: interferometric components respond to the
source operating point, which shifts with the challenge word driving the
transmitter.  Every waveguide retardance and coupler pass phase carries
two challenge-dependent terms on top of its manufactured base value:

* dispersion -- a smooth term `2*pi*(a*u + b*v)/4096` whose per-mode
  coefficients (a, b) are manufacturing draws; it models the component's
  first-order phase sensitivity to the drive point and gives each cell
  its own low-frequency response landscape;
* detuning -- a term `2*pi*detuning*(U - 0.5)` where U in [0,1) is a
  keyed hash of the full challenge word, independent per (cell,
  component, mode); it models the sub-resolution interferometric
  sensitivity that makes nominally identical drive words land on
  different operating points.

Without these terms the composed cell matrix would be a
challenge-independent 2x2 map, collapsing the response space to a few
hundred distinct values; with them the challenge-response relationship
mixes like a well-conditioned PUF while a learnable smooth component
remains.  The `detuning` and `dispersion` scales trade those properties
off and are exposed as config knobs.

Realizations are screened: a candidate cell whose response bit freezes
(or nearly freezes) when the input polarization is pinned at the TE pole
is redrawn from the next seeded candidate, mirroring post-fabrication
device binning.
"""

from __future__ import annotations

import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, replace

import numpy as np

from .optics import (
    EdgeCouplerParams,
    PolarizationState,
    TrenchCouplerParams,
    WaveguideParams,
    apply_transfer,
    compose,
    edge_coupler_transfer,
    fabry_perot_transmission,
    polarized_power_fraction,
    trench_coupler_transfer,
    waveguide_transfer,
)
from .rng import Stream, derive_key, keyed_unit_floats

CHALLENGE_SPACE = 1 << 24
N_CELLS = 24
DEFAULT_SIGMA = 0.1
DEFAULT_DETUNING = 0.5
DEFAULT_DISPERSION = 1.5
DEFAULT_N_CAL = 4096

# Screening: a candidate cell is rejected when, over an ordered scan of
# the low challenge range (input polarization pinned near the TE pole),
# its bit is unbalanced beyond _POLE_BALANCE_CUTOFF or serially
# correlated beyond _POLE_AUTOCORR_CUTOFF at any lag up to 50.
_POLE_BALANCE_CUTOFF = 0.2
_POLE_AUTOCORR_CUTOFF = 0.02
_POLE_SCAN = 65536
_MAX_CELL_ATTEMPTS = 64

# (slot, mode) pairs that carry a challenge-dependent phase: slots 0-3
# are waveguide segments, slots 4-6 trench couplers; mode 0 TE, 1 TM.
_N_PHASE_SLOTS = 7

# Convenience for hand-built fixtures with no challenge-dependent phases.
ZERO_DISPERSION = tuple(((0.0, 0.0), (0.0, 0.0)) for _ in range(_N_PHASE_SLOTS))


class UncalibratedError(RuntimeError):
    """Raised when a PUF is evaluated before threshold calibration."""


@dataclass(frozen=True)
class CellParams:
    """One optical cell: component chain plus its calibrated threshold.

    `dispersion[slot][mode]` is the (a, b) phase-sensitivity pair of one
    component mode; `detune_key` seeds the cell's challenge-hash streams.
    """

    input_coupler: EdgeCouplerParams
    waveguides: tuple  # 4x WaveguideParams
    couplers: tuple  # 3x TrenchCouplerParams
    output_coupler: EdgeCouplerParams
    detune_key: int
    detuning: float
    dispersion: tuple  # 7 slots x 2 modes x (a, b)
    threshold: float = None

    def __post_init__(self):
        if len(self.waveguides) != 4 or len(self.couplers) != 3:
            raise ValueError("a cell has exactly 4 waveguide segments and 3 couplers")
        if len(self.dispersion) != _N_PHASE_SLOTS:
            raise ValueError("dispersion table must cover all 7 phase-bearing components")

    def component_chain(self):
        """Components in propagation order."""
        return (
            self.input_coupler,
            self.waveguides[0],
            self.couplers[0],
            self.waveguides[1],
            self.couplers[1],
            self.waveguides[2],
            self.couplers[2],
            self.waveguides[3],
            self.output_coupler,
        )


@dataclass(frozen=True)
class PufRealization:
    seed: int
    sigma: float
    cells: tuple  # 24x CellParams
    detuning: float = DEFAULT_DETUNING
    dispersion: float = DEFAULT_DISPERSION
    cal_seed: int = None
    n_cal: int = None

    def __post_init__(self):
        if len(self.cells) != N_CELLS:
            raise ValueError(f"a PUF has exactly {N_CELLS} cells")

    @property
    def calibrated(self) -> bool:
        return self.cal_seed is not None and all(
            c.threshold is not None for c in self.cells
        )


@dataclass(frozen=True)
class Crp:
    challenge: int
    response: int

    def __post_init__(self):
        if not 0 <= self.challenge < CHALLENGE_SPACE:
            raise ValueError(f"challenge {self.challenge} out of range")
        if not 0 <= self.response < CHALLENGE_SPACE:
            raise ValueError(f"response {self.response} out of range")


@dataclass(frozen=True)
class CrpDataset:
    puf_seed: int
    sigma: float
    cal_seed: int
    gen_seed: int
    crps: tuple
    detuning: float = DEFAULT_DETUNING
    dispersion: float = DEFAULT_DISPERSION
    n_cal: int = DEFAULT_N_CAL

    def challenges(self) -> np.ndarray:
        return np.array([c.challenge for c in self.crps], dtype=np.int64)

    def responses(self) -> np.ndarray:
        return np.array([c.response for c in self.crps], dtype=np.int64)


def _draw_cell(rng: Stream, sigma: float, detuning: float, dispersion: float,
               detune_key: int) -> CellParams:
    two_pi = 2.0 * math.pi

    def edge():
        return EdgeCouplerParams(
            rng.clipped_normal(0.9, 0.02, 1e-9, 1.0),
            rng.clipped_normal(0.9, 0.02, 1e-9, 1.0),
        )

    input_coupler = edge()
    waveguides = tuple(
        WaveguideParams(
            rng.normal(0.0, sigma),
            rng.uniform(0.0, two_pi),
            rng.uniform(0.0, two_pi),
        )
        for _ in range(4)
    )
    couplers = tuple(
        TrenchCouplerParams(
            rng.clipped_normal(0.3, sigma, 0.0, 0.95),
            rng.clipped_normal(0.3, sigma, 0.0, 0.95),
            rng.uniform(0.0, two_pi),
            rng.uniform(0.0, two_pi),
            rng.normal(0.0, sigma),
        )
        for _ in range(3)
    )
    output_coupler = edge()
    disp = tuple(
        tuple(
            (rng.normal(0.0, dispersion), rng.normal(0.0, dispersion))
            for _ in range(2)
        )
        for _ in range(_N_PHASE_SLOTS)
    )
    return CellParams(
        input_coupler=input_coupler,
        waveguides=waveguides,
        couplers=couplers,
        output_coupler=output_coupler,
        detune_key=detune_key,
        detuning=detuning,
        dispersion=disp,
    )


def _cell_analogs(cell: CellParams, challenges: np.ndarray) -> np.ndarray:
    u = (challenges >> np.uint64(12)).astype(np.float64)
    v = (challenges & np.uint64(0xFFF)).astype(np.float64)
    theta = (math.pi / 4096.0) * u
    phi = (2.0 * math.pi / 4096.0) * v
    return _cell_analog_block(
        cell, challenges, np.cos(theta).astype(np.complex128),
        np.sin(theta) * np.exp(1j * phi),
    )


def _pole_scan_defect(cell: CellParams, rng: Stream, n_probe: int = 2048,
                      max_lag: int = 50) -> float:
    """Screening statistic: how far the cell bit is from an i.i.d. coin
    over an ordered scan of challenges 0.._POLE_SCAN-1.

    Both the bit imbalance and the worst |autocorrelation| over lags
    1..max_lag are normalized by their cutoffs (a defect <= 1 passes);
    the threshold is a provisional median from a random probe.  Frozen
    bits score infinity.
    """
    probe = np.array([rng.randint(CHALLENGE_SPACE) for _ in range(n_probe)],
                     dtype=np.uint64)
    threshold = float(np.median(_cell_analogs(cell, probe)))
    scan = _cell_analogs(cell, np.arange(_POLE_SCAN, dtype=np.uint64))
    bits = (scan >= threshold).astype(np.float64)
    p = float(bits.mean())
    if p == 0.0 or p == 1.0:
        return math.inf
    y = bits - p
    denom = float(y @ y)
    worst_ac = max(
        abs(float(y[:-lag] @ y[lag:]) / denom) for lag in range(1, max_lag + 1)
    )
    return max(abs(p - 0.5) / _POLE_BALANCE_CUTOFF, worst_ac / _POLE_AUTOCORR_CUTOFF)


def realize_puf(seed: int, sigma: float = DEFAULT_SIGMA,
                detuning: float = DEFAULT_DETUNING,
                dispersion: float = DEFAULT_DISPERSION) -> PufRealization:
    """Draw a PUF realization from the seeded manufacturing distribution.

    Reflectances are clipped normals around 0.3, pass phases and
    retardances uniform over [0, 2*pi), cross-talk and axis angles
    normals around 0, facet transmittances clipped normals around 0.9,
    dispersion coefficients normals with the dispersion scale.  Every
    draw comes from a per-cell stream keyed by (seed, "cell", i,
    attempt), so realizations regenerate bit-identically.

    Candidate cells are screened for pole balance (see module docstring);
    rejected candidates are redrawn from the next seeded attempt.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if detuning < 0 or dispersion < 0:
        raise ValueError("detuning and dispersion must be non-negative")
    cells = []
    for i in range(N_CELLS):
        best = None
        best_defect = math.inf
        for attempt in range(_MAX_CELL_ATTEMPTS):
            rng = Stream(seed, "cell", i, attempt)
            cell = _draw_cell(rng, sigma, detuning, dispersion,
                              derive_key(seed, "detune", i, attempt))
            defect = _pole_scan_defect(cell, rng)
            if defect < best_defect:
                best, best_defect = cell, defect
            if defect <= 1.0:
                break
        cells.append(best)
    return PufRealization(seed=seed, sigma=sigma, cells=tuple(cells),
                          detuning=detuning, dispersion=dispersion)


def challenge_to_state(challenge: int) -> PolarizationState:
    """Input polarization for a challenge: upper 12 bits set the polar
    angle theta = pi*u/4096, lower 12 bits the phase phi = 2*pi*v/4096;
    the state is (cos theta, sin theta * e^{i phi}), unit power."""
    if not 0 <= challenge < CHALLENGE_SPACE:
        raise ValueError(f"challenge {challenge} out of range")
    u = challenge >> 12
    v = challenge & 0xFFF
    theta = math.pi * u / 4096.0
    phi = 2.0 * math.pi * v / 4096.0
    return PolarizationState(
        math.cos(theta), math.sin(theta) * complex(math.cos(phi), math.sin(phi))
    )


def _phase_offsets(cell: CellParams, challenges: np.ndarray) -> np.ndarray:
    """Challenge-dependent phase offsets, shape (7, 2, n).

    Sum of the smooth dispersion term (coefficients times the normalized
    drive coordinates) and the keyed-hash detuning term.
    """
    n = challenges.shape[0]
    tu = (challenges >> np.uint64(12)).astype(np.float64) * (1.0 / 4096.0)
    tv = (challenges & np.uint64(0xFFF)).astype(np.float64) * (1.0 / 4096.0)
    out = np.empty((_N_PHASE_SLOTS, 2, n), dtype=np.float64)
    two_pi = 2.0 * math.pi
    scale = two_pi * cell.detuning
    for slot in range(_N_PHASE_SLOTS):
        for mode in range(2):
            a, b = cell.dispersion[slot][mode]
            key = derive_key(cell.detune_key, slot, mode)
            out[slot, mode] = (
                two_pi * (a * tu + b * tv)
                + scale * (keyed_unit_floats(key, challenges) - 0.5)
            )
    return out


def cell_component_matrices(cell: CellParams, challenge: int):
    """The nine transfer matrices of a cell at one challenge, with the
    challenge-detuned effective phases filled in.  Scalar reference path;
    the batch evaluator reproduces it exactly."""
    off = _phase_offsets(cell, np.array([challenge], dtype=np.uint64))[:, :, 0]
    mats = [edge_coupler_transfer(cell.input_coupler)]
    for k in range(4):
        wg = cell.waveguides[k]
        mats.append(
            waveguide_transfer(
                WaveguideParams(wg.theta, wg.phi_te + off[k, 0], wg.phi_tm + off[k, 1])
            )
        )
        if k < 3:
            cp = cell.couplers[k]
            mats.append(
                trench_coupler_transfer(
                    TrenchCouplerParams(
                        cp.rho_te,
                        cp.rho_tm,
                        cp.delta_te + off[4 + k, 0],
                        cp.delta_tm + off[4 + k, 1],
                        cp.kappa,
                    )
                )
            )
    mats.append(edge_coupler_transfer(cell.output_coupler))
    return mats


def cell_analog(cell: CellParams, challenge: int) -> float:
    """Polarized power fraction of the cell output for one challenge."""
    state = challenge_to_state(challenge)
    m = compose(cell_component_matrices(cell, challenge))
    return polarized_power_fraction(apply_transfer(m, state))


def analog_batch(puf: PufRealization, challenges) -> np.ndarray:
    """Analog observables for many challenges at once, shape (n, 24).

    Vectorized over challenges; equal to looping cell_analog but ~100x
    faster.  Processes in blocks to bound working memory.
    """
    challenges = np.asarray(challenges, dtype=np.uint64)
    n = challenges.shape[0]
    out = np.empty((n, N_CELLS), dtype=np.float64)
    block = 1 << 16
    for start in range(0, n, block):
        ch = challenges[start:start + block]
        u = (ch >> np.uint64(12)).astype(np.float64)
        v = (ch & np.uint64(0xFFF)).astype(np.float64)
        theta = (math.pi / 4096.0) * u
        phi = (2.0 * math.pi / 4096.0) * v
        ex0 = np.cos(theta).astype(np.complex128)
        ey0 = np.sin(theta) * np.exp(1j * phi)
        for i, cell in enumerate(puf.cells):
            out[start:start + ch.shape[0], i] = _cell_analog_block(cell, ch, ex0, ey0)
    return out


def _cell_analog_block(cell: CellParams, ch: np.ndarray,
                       ex: np.ndarray, ey: np.ndarray) -> np.ndarray:
    off = _phase_offsets(cell, ch)
    s0 = ex * cell.input_coupler.a_te
    s1 = ey * cell.input_coupler.a_tm
    for k in range(4):
        wg = cell.waveguides[k]
        d0 = np.exp(1j * (wg.phi_te + off[k, 0]))
        d1 = np.exp(1j * (wg.phi_tm + off[k, 1]))
        s0, s1 = _apply_rotated_diag(wg.theta, d0, d1, s0, s1)
        if k < 3:
            cp = cell.couplers[k]
            t0 = fabry_perot_transmission(cp.rho_te, cp.delta_te + off[4 + k, 0])
            t1 = fabry_perot_transmission(cp.rho_tm, cp.delta_tm + off[4 + k, 1])
            s0, s1 = _apply_rotated_diag(cp.kappa, t0, t1, s0, s1)
    s0 = s0 * cell.output_coupler.a_te
    s1 = s1 * cell.output_coupler.a_tm
    p0 = np.abs(s0) ** 2
    total = p0 + np.abs(s1) ** 2
    return np.divide(p0, total, out=np.zeros_like(p0), where=total > 0)


def _apply_rotated_diag(angle, d0, d1, s0, s1):
    # R(angle) @ diag(d0, d1) @ R(-angle) applied to (s0, s1)
    c, s = math.cos(angle), math.sin(angle)
    m00 = c * c * d0 + s * s * d1
    m01 = c * s * (d0 - d1)
    m11 = s * s * d0 + c * c * d1
    return m00 * s0 + m01 * s1, m01 * s0 + m11 * s1


def calibrate_thresholds(puf: PufRealization, n_cal: int = DEFAULT_N_CAL,
                         cal_seed: int = 0) -> PufRealization:
    """Set each cell's threshold to the empirical median of its analog
    over n_cal seeded uniform challenges (balanced bits by construction)."""
    if n_cal < 256:
        raise ValueError("n_cal must be at least 256 for a stable median")
    rng = Stream(cal_seed, "calibration")
    challenges = np.array([rng.randint(CHALLENGE_SPACE) for _ in range(n_cal)],
                          dtype=np.uint64)
    analogs = analog_batch(puf, challenges)
    medians = np.median(analogs, axis=0)
    cells = tuple(
        replace(cell, threshold=float(m)) for cell, m in zip(puf.cells, medians)
    )
    return replace(puf, cells=cells, cal_seed=cal_seed, n_cal=n_cal)


def evaluate_batch(puf: PufRealization, challenges) -> np.ndarray:
    """Responses for an array of challenges (calibration required)."""
    if not puf.calibrated:
        raise UncalibratedError("PUF thresholds not calibrated")
    analogs = analog_batch(puf, challenges)
    thresholds = np.array([c.threshold for c in puf.cells])
    bits = analogs >= thresholds  # (n, 24), cell 0 is the MSB
    weights = (1 << np.arange(23, -1, -1)).astype(np.int64)
    return bits.astype(np.int64) @ weights


def evaluate(puf: PufRealization, challenge: int) -> int:
    """24-bit response for one challenge; bit i (MSB first) is cell i's
    thresholded analog."""
    return int(evaluate_batch(puf, np.array([challenge], dtype=np.uint64))[0])


def generate_dataset(puf: PufRealization, count: int, gen_seed: int,
                     exclude=frozenset()) -> CrpDataset:
    """Uniform without-replacement CRP sample avoiding `exclude`."""
    if not puf.calibrated:
        raise UncalibratedError("PUF thresholds not calibrated")
    if count + len(exclude) > CHALLENGE_SPACE:
        raise ValueError("challenge space exhausted")
    rng = Stream(gen_seed, "dataset")
    challenges = rng.sample_distinct(CHALLENGE_SPACE, count, exclude)
    responses = evaluate_batch(puf, np.array(challenges, dtype=np.uint64)) if count else []
    crps = tuple(Crp(int(c), int(r)) for c, r in zip(challenges, responses))
    return CrpDataset(
        puf_seed=puf.seed,
        sigma=puf.sigma,
        cal_seed=puf.cal_seed,
        gen_seed=gen_seed,
        crps=crps,
        detuning=puf.detuning,
        dispersion=puf.dispersion,
        n_cal=puf.n_cal,
    )


_DATA_LINE = re.compile(r"^([0-9A-F]{6}),([0-9A-F]{6})$")
_HEADER = re.compile(
    r"^# puf_seed=(\d+) sigma=([0-9.eE+-]+) cal_seed=(\d+) gen_seed=(\d+) count=(\d+)$"
)
_EXTRA_HEADER = re.compile(
    r"^# detuning=([0-9.eE+-]+) dispersion=([0-9.eE+-]+) n_cal=(\d+)$"
)


def write_dataset(ds: CrpDataset, path) -> None:
    """Write the line-oriented CRP text format (atomic replace)."""
    lines = [
        f"# puf_seed={ds.puf_seed} sigma={ds.sigma!r} cal_seed={ds.cal_seed} "
        f"gen_seed={ds.gen_seed} count={len(ds.crps)}\n",
        f"# detuning={ds.detuning!r} dispersion={ds.dispersion!r} n_cal={ds.n_cal}\n",
    ]
    lines.extend(f"{c.challenge:06X},{c.response:06X}\n" for c in ds.crps)
    _atomic_write_text(path, "".join(lines))


def read_dataset(path) -> CrpDataset:
    """Parse a CRP file; malformed lines report their line number."""
    header = None
    extra = None
    crps = []
    seen = set()
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line.startswith("#"):
                m = _HEADER.match(line)
                if m:
                    header = m
                    continue
                m = _EXTRA_HEADER.match(line)
                if m:
                    extra = m
                continue
            if not line:
                continue
            m = _DATA_LINE.match(line)
            if m is None:
                raise ValueError(f"{path}: line {lineno}: malformed CRP line {line!r}")
            challenge = int(m.group(1), 16)
            if challenge in seen:
                raise ValueError(f"{path}: line {lineno}: duplicate challenge {line[:6]}")
            seen.add(challenge)
            crps.append(Crp(challenge, int(m.group(2), 16)))
    if header is None:
        raise ValueError(f"{path}: missing header line")
    if int(header.group(5)) != len(crps):
        raise ValueError(
            f"{path}: header count {header.group(5)} != {len(crps)} data lines"
        )
    kwargs = {}
    if extra is not None:
        kwargs = {
            "detuning": float(extra.group(1)),
            "dispersion": float(extra.group(2)),
            "n_cal": int(extra.group(3)),
        }
    return CrpDataset(
        puf_seed=int(header.group(1)),
        sigma=float(header.group(2)),
        cal_seed=int(header.group(3)),
        gen_seed=int(header.group(4)),
        crps=tuple(crps),
        **kwargs,
    )


def write_puf(puf: PufRealization, path) -> None:
    """JSON snapshot of a realization (regenerable from its seeds)."""
    doc = {
        "seed": puf.seed,
        "sigma": puf.sigma,
        "detuning": puf.detuning,
        "dispersion": puf.dispersion,
        "cal_seed": puf.cal_seed,
        "n_cal": puf.n_cal,
        "cells": [
            {
                "input": [c.input_coupler.a_te, c.input_coupler.a_tm],
                "waveguides": [[w.theta, w.phi_te, w.phi_tm] for w in c.waveguides],
                "couplers": [
                    [p.rho_te, p.rho_tm, p.delta_te, p.delta_tm, p.kappa]
                    for p in c.couplers
                ],
                "output": [c.output_coupler.a_te, c.output_coupler.a_tm],
                "detune_key": c.detune_key,
                "detuning": c.detuning,
                "dispersion": [[list(pair) for pair in slot] for slot in c.dispersion],
                "threshold": c.threshold,
            }
            for c in puf.cells
        ],
    }
    _atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def read_puf(path) -> PufRealization:
    with open(path, "r", encoding="ascii") as fh:
        doc = json.load(fh)
    cells = tuple(
        CellParams(
            input_coupler=EdgeCouplerParams(*c["input"]),
            waveguides=tuple(WaveguideParams(*w) for w in c["waveguides"]),
            couplers=tuple(TrenchCouplerParams(*p) for p in c["couplers"]),
            output_coupler=EdgeCouplerParams(*c["output"]),
            detune_key=c["detune_key"],
            detuning=c["detuning"],
            dispersion=tuple(
                tuple(tuple(pair) for pair in slot) for slot in c["dispersion"]
            ),
            threshold=c["threshold"],
        )
        for c in doc["cells"]
    )
    return PufRealization(
        seed=doc["seed"],
        sigma=doc["sigma"],
        cells=cells,
        detuning=doc["detuning"],
        dispersion=doc["dispersion"],
        cal_seed=doc["cal_seed"],
        n_cal=doc["n_cal"],
    )


def _atomic_write_text(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="ascii") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
