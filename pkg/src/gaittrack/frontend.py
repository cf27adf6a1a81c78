"""Synthetic FMCW MIMO front-end.

Simulates the IF samples an FMCW radar would produce for a set of ideal point
reflectors, and implements the processing chain that turns them back into
detected points: 2D DFT range-Doppler maps, slow-time MTI clutter removal,
2D cell-averaging CFAR detection and DFT-based angle estimation.

Conventions
-----------
* The data cube is complex, indexed ``(virtual antenna, slow time l, fast
  time m)`` with shape ``(n_tx * n_rx, n_slow, n_fast)``.
* The virtual array is modeled as a uniform rectangular array with ``n_rx``
  elements along azimuth and ``n_tx`` along elevation, spaced ``spacing`` in
  both axes; virtual antenna ``a`` sits at azimuth index ``a % n_rx`` and
  elevation index ``a // n_rx``.
* TDM MIMO is abstracted away: the cube is already virtual-array ordered and
  each virtual channel sees one chirp every ``n_tx * chirp_rep_time`` seconds,
  which is the slow-time sampling period used for the Doppler axis.
* Azimuth ``theta`` is measured from boresight (+y axis) toward +x,
  elevation ``phi`` from the horizontal plane toward +z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gaittrack.clustering import RadarPoint

C = 299_792_458.0  # speed of light, m/s


@dataclass(frozen=True)
class RadarConfig:
    """Chirp and array parameters of the simulated radar."""

    f0: float = 77e9             # chirp start frequency (Hz)
    bandwidth: float = 3.072e9   # swept bandwidth (Hz)
    chirp_time: float = 60e-6    # single chirp duration (s)
    chirp_rep_time: float = 68e-6  # chirp-to-chirp period (s)
    fast_time_step: float = 1.0 / 5e6  # ADC sampling period (s)
    n_fast: int = 256            # samples per chirp
    n_slow: int = 64             # chirps per frame and per virtual channel
    frame_period: float = 1.0 / 14.92  # frame repetition period (s)
    n_tx: int = 3
    n_rx: int = 4
    spacing: float = 1.948e-3    # antenna element spacing (m)

    def __post_init__(self):
        if min(self.f0, self.bandwidth, self.chirp_time, self.chirp_rep_time,
               self.fast_time_step, self.frame_period, self.spacing) <= 0:
            raise ValueError("all radar config scalars must be positive")
        if min(self.n_fast, self.n_slow, self.n_tx, self.n_rx) < 1:
            raise ValueError("all radar config counts must be >= 1")
        if self.n_fast * self.fast_time_step > self.chirp_time + 1e-12:
            raise ValueError("fast-time sampling exceeds the chirp duration")
        if self.n_slow * self.chirp_rep_time * self.n_tx > self.frame_period:
            raise ValueError("chirp sequence does not fit in the frame period")

    @property
    def slope(self) -> float:
        """Chirp frequency slope (Hz/s)."""
        return self.bandwidth / self.chirp_time

    @property
    def wavelength(self) -> float:
        return C / self.f0

    @property
    def n_virtual(self) -> int:
        return self.n_tx * self.n_rx

    @property
    def slow_time_step(self) -> float:
        """Per-channel slow-time sampling period under TDM (s)."""
        return self.n_tx * self.chirp_rep_time

    @property
    def range_resolution(self) -> float:
        """Nominal range resolution c / 2B (m)."""
        return C / (2.0 * self.bandwidth)

    @property
    def range_bin_spacing(self) -> float:
        """Range extent of one fast-time DFT bin (m).

        Equals ``range_resolution`` only when the whole chirp is sampled
        (``n_fast * fast_time_step == chirp_time``); with a shorter ADC
        window the sampled bandwidth, and hence the bin spacing, is coarser.
        """
        return C / (2.0 * self.slope * self.n_fast * self.fast_time_step)

    @property
    def velocity_resolution(self) -> float:
        """Velocity extent of one Doppler bin (m/s)."""
        return C / (2.0 * self.f0 * self.n_slow * self.chirp_rep_time * self.n_tx)

    @property
    def max_range(self) -> float:
        """Unambiguous range (m)."""
        return self.n_fast * self.range_bin_spacing

    @property
    def max_speed(self) -> float:
        """Unambiguous radial speed, one-sided (m/s)."""
        return 0.5 * self.n_slow * self.velocity_resolution


def default_radar_config() -> RadarConfig:
    """77 GHz indoor monitoring profile (4.88 cm / 14.9 cm/s resolution)."""
    return RadarConfig()


@dataclass(frozen=True)
class Reflector:
    """Ideal point reflector in radar-centric coordinates."""

    rng: float                 # range (m)
    velocity: float = 0.0      # radial velocity, positive receding (m/s)
    azimuth: float = 0.0       # rad, from boresight toward +x
    elevation: float = 0.0     # rad, from horizontal toward +z
    amplitude: float = 1.0

    def __post_init__(self):
        if self.rng <= 0:
            raise ValueError("reflector range must be positive")
        if abs(self.azimuth) >= math.pi / 2 or abs(self.elevation) >= math.pi / 2:
            raise ValueError("reflector angles must lie in (-pi/2, pi/2)")


@dataclass
class RangeDopplerMap:
    """Power map plus the per-antenna complex maps needed for angles.

    ``power`` is indexed ``(Doppler bin, range bin)`` and is the squared
    magnitude summed over the virtual antennas.  ``complex_maps`` keeps the
    full ``(antenna, Doppler bin, range bin)`` DFT output.
    """

    power: np.ndarray
    complex_maps: np.ndarray


def _phase_steering(cfg: RadarConfig, azimuth: float, elevation: float) -> np.ndarray:
    """Per-virtual-antenna phasor for a source at the given angles."""
    psi_az = 2.0 * math.pi / cfg.wavelength * cfg.spacing \
        * math.cos(elevation) * math.sin(azimuth)
    psi_el = 2.0 * math.pi / cfg.wavelength * cfg.spacing * math.sin(elevation)
    az_idx = np.arange(cfg.n_virtual) % cfg.n_rx
    el_idx = np.arange(cfg.n_virtual) // cfg.n_rx
    return np.exp(1j * (az_idx * psi_az + el_idx * psi_el))


def synthesize_cube(reflectors: list[Reflector], cfg: RadarConfig,
                    noise_std: float = 0.0,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Simulate one frame of IF samples for ideal point reflectors.

    Each sample is the sum over reflectors of
    ``amp * exp(j*phi(m, l)) * exp(j*(antenna phase))`` where

        phi(m, l) = 2*pi * (2*f0*R/c + f_d*l*T_slow + (f_d + f_b)*m*T_f)

    with Doppler frequency ``f_d = 2*f0*v/c`` and beat frequency
    ``f_b = 2*slope*R/c``.  Complex white Gaussian noise of total standard
    deviation ``noise_std`` is added when requested.

    Raises ValueError for reflectors outside the unambiguous range/velocity
    region, naming the offending reflector.
    """
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    cube = np.zeros((cfg.n_virtual, cfg.n_slow, cfg.n_fast), dtype=np.complex128)
    m = np.arange(cfg.n_fast)
    l = np.arange(cfg.n_slow)
    for i, refl in enumerate(reflectors):
        if refl.rng >= cfg.max_range:
            raise ValueError(
                f"reflector {i} at range {refl.rng:.3f} m exceeds the "
                f"unambiguous range {cfg.max_range:.3f} m")
        if abs(refl.velocity) >= cfg.max_speed:
            raise ValueError(
                f"reflector {i} at velocity {refl.velocity:.3f} m/s exceeds "
                f"the unambiguous speed {cfg.max_speed:.3f} m/s")
        f_d = 2.0 * cfg.f0 * refl.velocity / C
        f_b = 2.0 * cfg.slope * refl.rng / C
        phase = 2.0 * math.pi * (
            2.0 * cfg.f0 * refl.rng / C
            + f_d * l[:, None] * cfg.slow_time_step
            + (f_d + f_b) * m[None, :] * cfg.fast_time_step)
        tone = refl.amplitude * np.exp(1j * phase)
        cube += _phase_steering(cfg, refl.azimuth, refl.elevation)[:, None, None] \
            * tone[None, :, :]
    if noise_std > 0:
        if rng is None:
            rng = np.random.default_rng()
        scale = noise_std / math.sqrt(2.0)
        cube += scale * (rng.standard_normal(cube.shape)
                         + 1j * rng.standard_normal(cube.shape))
    return cube


def range_doppler(cube: np.ndarray) -> RangeDopplerMap:
    """2D DFT along fast and slow time, squared magnitude summed over antennas.

    Doppler bins are kept in DFT order: bin ``b > n_slow/2`` corresponds to
    the negative frequency ``b - n_slow``.
    """
    if cube.ndim != 3:
        raise ValueError("cube must be (antenna, slow time, fast time)")
    spectra = np.fft.fft(np.fft.fft(cube, axis=2), axis=1)
    power = np.sum(np.abs(spectra) ** 2, axis=0)
    return RangeDopplerMap(power=power, complex_maps=spectra)


def mti_filter(cube: np.ndarray) -> np.ndarray:
    """Remove the slow-time mean per (antenna, fast-time sample).

    Suppresses zero-Doppler returns from static objects.  Idempotent.
    """
    if cube.shape[1] < 2:
        raise ValueError("MTI needs at least two chirps")
    return cube - cube.mean(axis=1, keepdims=True)


def cfar_detect(power: np.ndarray, guard: int = 2, train: int = 4,
                scale: float = 10.0) -> list[tuple[int, int]]:
    """2D cell-averaging CFAR on a power map.

    A cell ``(d, r)`` is detected when its power exceeds ``scale`` times the
    mean power of the training ring: the cells at Chebyshev distance in
    ``(guard, guard + train]`` around it.  Cells near the border use the part
    of the ring that is inside the map.

    Returns detections as ``(range bin, Doppler bin)`` pairs.
    """
    if guard < 0 or train < 1 or scale <= 0:
        raise ValueError("need guard >= 0, train >= 1, scale > 0")
    win = 2 * (guard + train) + 1
    n_d, n_r = power.shape
    if n_d < win or n_r < win:
        raise ValueError(
            f"map {power.shape} smaller than the {win}x{win} CFAR window")

    def box_sums(radius):
        # sum and cell count of the (2*radius+1)^2 box, clipped at borders
        padded = np.zeros((n_d + 1, n_r + 1))
        padded[1:, 1:] = np.cumsum(np.cumsum(power, axis=0), axis=1)
        d = np.arange(n_d)
        r = np.arange(n_r)
        lo_d = np.clip(d - radius, 0, n_d)
        hi_d = np.clip(d + radius + 1, 0, n_d)
        lo_r = np.clip(r - radius, 0, n_r)
        hi_r = np.clip(r + radius + 1, 0, n_r)
        s = (padded[hi_d[:, None], hi_r[None, :]]
             - padded[lo_d[:, None], hi_r[None, :]]
             - padded[hi_d[:, None], lo_r[None, :]]
             + padded[lo_d[:, None], lo_r[None, :]])
        cnt = (hi_d - lo_d)[:, None] * (hi_r - lo_r)[None, :]
        return s, cnt

    outer_sum, outer_cnt = box_sums(guard + train)
    inner_sum, inner_cnt = box_sums(guard)
    ring_sum = outer_sum - inner_sum
    ring_cnt = outer_cnt - inner_cnt
    noise = ring_sum / np.maximum(ring_cnt, 1)
    hits = power > scale * noise
    d_idx, r_idx = np.nonzero(hits)
    return [(int(r), int(d)) for d, r in zip(d_idx, r_idx)]


def _dft_peak_phase(samples: np.ndarray, n_pad: int = 256) -> float:
    """Phase-shift-per-element of the dominant tone in a short array.

    Zero-padded DFT peak search; the returned value lies in (-pi, pi].
    """
    if samples.size == 1:
        return 0.0
    spec = np.fft.fft(samples, n=n_pad)
    k = int(np.argmax(np.abs(spec)))
    freq = k / n_pad
    if freq > 0.5:
        freq -= 1.0
    return 2.0 * math.pi * freq


def estimate_point(maps: RangeDopplerMap, bin: tuple[int, int],
                   cfg: RadarConfig) -> RadarPoint:
    """Turn one CFAR detection into a Cartesian radar point.

    Range and velocity come from the bin indices times the bin spacings;
    azimuth/elevation phase shifts come from DFT peaks across the virtual
    array, and positions follow

        x = R * lambda * psi_az / (2*pi*d)
        z = R * lambda * psi_el / (2*pi*d)
        y = sqrt(R^2 - x^2 - z^2)

    Raises ValueError when the detection is geometrically inconsistent
    (``x^2 + z^2 > R^2``) or the bin lies outside the map.
    """
    r_bin, d_bin = bin
    n_ant, n_d, n_r = maps.complex_maps.shape
    if not (0 <= r_bin < n_r and 0 <= d_bin < n_d):
        raise ValueError(f"detection bin {bin} outside the {n_d}x{n_r} map")
    rng_est = r_bin * cfg.range_bin_spacing
    d_signed = d_bin if d_bin <= n_d // 2 else d_bin - n_d
    vel_est = d_signed * cfg.velocity_resolution

    ant = maps.complex_maps[:, d_bin, r_bin].reshape(cfg.n_tx, cfg.n_rx)
    psi_az = _dft_peak_phase(ant.sum(axis=0))
    psi_el = _dft_peak_phase(ant.sum(axis=1))
    x = rng_est * cfg.wavelength * psi_az / (2.0 * math.pi * cfg.spacing)
    z = rng_est * cfg.wavelength * psi_el / (2.0 * math.pi * cfg.spacing)
    y_sq = rng_est ** 2 - x ** 2 - z ** 2
    if y_sq < 0:
        raise ValueError(
            f"detection at bin {bin}: lateral offsets ({x:.3f}, {z:.3f}) m "
            f"exceed the {rng_est:.3f} m range (geometric inconsistency)")
    return RadarPoint(x=x, y=math.sqrt(y_sq), z=z, v=vel_est,
                      power=float(maps.power[d_bin, r_bin]))


def extract_points(cube: np.ndarray, cfg: RadarConfig, guard: int = 2,
                   train: int = 4, scale: float = 10.0,
                   apply_mti: bool = True) -> list[RadarPoint]:
    """Full detection chain: MTI -> range-Doppler -> CFAR -> point estimates.

    Geometrically inconsistent detections are silently dropped.
    """
    if apply_mti:
        cube = mti_filter(cube)
    maps = range_doppler(cube)
    points = []
    for det in cfar_detect(maps.power, guard=guard, train=train, scale=scale):
        try:
            points.append(estimate_point(maps, det, cfg))
        except ValueError:
            continue
    return points
