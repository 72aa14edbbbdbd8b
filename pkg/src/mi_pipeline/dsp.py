"""Filter-bank enumeration and Butterworth bandpass filtering.

The analysis bank enumerates every integer-boundary band [a, b] with
4 <= a < b <= 40 (666 bands), plus a nine-band variant used by the
filter-bank baseline and a single broadband band.

Filters are designed from the analog Butterworth prototype: prewarp the band
edges, apply the lowpass-to-bandpass transform, bilinear-map the poles, and
factor the result into second-order sections. The cascade keeps even very
narrow 1 Hz bands numerically stable at order 6. Application is causal
forward filtering with zero initial state; transients are not trimmed.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import sosfilt

from .data import Trial
from .errors import ConfigError, DataError, NumericalError

BAND_LOW_HZ = 4
BAND_HIGH_HZ = 40


@dataclass(frozen=True, order=True)
class BandSpec:
    """One bandpass band with integer edges inside [4, 40] Hz."""

    low_hz: int
    high_hz: int

    def __post_init__(self) -> None:
        if not (
            isinstance(self.low_hz, int)
            and isinstance(self.high_hz, int)
            and BAND_LOW_HZ <= self.low_hz < self.high_hz <= BAND_HIGH_HZ
        ):
            raise ConfigError(
                f"band [{self.low_hz}, {self.high_hz}] must satisfy "
                f"{BAND_LOW_HZ} <= low < high <= {BAND_HIGH_HZ} with integer edges"
            )

    @property
    def width(self) -> int:
        return self.high_hz - self.low_hz


@dataclass(frozen=True, eq=False)
class FilterBankSpec:
    """Ordered, duplicate-free collection of bands."""

    bands: tuple[BandSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "bands", tuple(self.bands))
        if not self.bands:
            raise ConfigError("filter bank must contain at least one band")
        if len(set(self.bands)) != len(self.bands):
            raise ConfigError("filter bank contains duplicate bands")

    @property
    def size(self) -> int:
        return len(self.bands)

    def __iter__(self):
        return iter(self.bands)

    def __len__(self) -> int:
        return len(self.bands)


def build_full_bank() -> FilterBankSpec:
    """Every integer band [a, b] with 4 <= a < b <= 40, 666 in total.

    Ordered by bandwidth, then by low edge: [4,5], [5,6], ..., [39,40],
    [4,6], ..., ending with the single widest band [4,40].
    """
    bands = [
        BandSpec(a, b)
        for a in range(BAND_LOW_HZ, BAND_HIGH_HZ)
        for b in range(a + 1, BAND_HIGH_HZ + 1)
    ]
    bands.sort(key=lambda band: (band.width, band.low_hz))
    return FilterBankSpec(bands=tuple(bands))


def build_fbcsp_bank() -> FilterBankSpec:
    """Nine contiguous 4 Hz bands partitioning [4, 40] Hz."""
    return FilterBankSpec(
        bands=tuple(BandSpec(low, low + 4) for low in range(BAND_LOW_HZ, BAND_HIGH_HZ, 4))
    )


def build_broadband_bank() -> FilterBankSpec:
    """Single band covering the whole [4, 40] Hz range."""
    return FilterBankSpec(bands=(BandSpec(BAND_LOW_HZ, BAND_HIGH_HZ),))


BANK_BUILDERS = {
    "full": build_full_bank,
    "fbcsp": build_fbcsp_bank,
    "broadband": build_broadband_bank,
}


def build_bank(name: str) -> FilterBankSpec:
    """Bank by CLI name: ``full``, ``fbcsp`` or ``broadband``."""
    try:
        return BANK_BUILDERS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown bank {name!r}; expected one of {sorted(BANK_BUILDERS)}"
        ) from None


@dataclass(frozen=True, eq=False)
class SosFilter:
    """Cascade of biquad sections, each row ``[b0, b1, b2, a1, a2]`` (a0 = 1)."""

    sections: np.ndarray
    fs: float

    def __post_init__(self) -> None:
        arr = np.asarray(self.sections, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 5:
            raise ConfigError(f"sections must have shape (n, 5), got {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "sections", arr)
        object.__setattr__(self, "fs", float(self.fs))
        mags = np.abs(self.poles())
        if not (mags < 1.0).all():
            raise NumericalError(
                f"unstable filter: pole magnitude {mags.max():.12f} >= 1"
            )

    def poles(self) -> np.ndarray:
        """All denominator roots of the cascade."""
        out = []
        for _, _, _, a1, a2 in self.sections:
            out.extend(np.roots([1.0, a1, a2]))
        return np.asarray(out)

    def as_scipy_sos(self) -> np.ndarray:
        """Coefficients in scipy's (n, 6) ``sos`` layout."""
        b = self.sections[:, :3]
        a = np.column_stack(
            [np.ones(len(self.sections)), self.sections[:, 3], self.sections[:, 4]]
        )
        return np.hstack([b, a])


def _prototype_poles(n: int) -> np.ndarray:
    """Left-half-plane poles of the order-n analog Butterworth lowpass."""
    k = np.arange(1, n + 1)
    return np.exp(1j * np.pi * (2 * k + n - 1) / (2 * n))


def butterworth_bandpass_sos(
    low_hz: float, high_hz: float, fs: float, order: int = 6
) -> SosFilter:
    """Digital Butterworth bandpass with ``order`` poles as biquad sections.

    Band edges are prewarped so the -3 dB points land exactly on ``low_hz``
    and ``high_hz``; the response is 1 at the geometric center frequency.
    """
    if order < 2 or order % 2 != 0:
        raise ConfigError(f"bandpass order must be even and >= 2, got {order}")
    if not (0.0 < low_hz < high_hz):
        raise ConfigError(f"need 0 < low < high, got [{low_hz}, {high_hz}]")
    if high_hz >= fs / 2:
        raise ConfigError(
            f"band edge {high_hz} Hz at/above Nyquist ({fs / 2} Hz at fs={fs})"
        )

    # Prewarped analog edge frequencies for a bilinear transform with T = 1/fs.
    w1 = 2.0 * fs * math.tan(math.pi * low_hz / fs)
    w2 = 2.0 * fs * math.tan(math.pi * high_hz / fs)
    w0sq = w1 * w2
    bw = w2 - w1

    # Lowpass-to-bandpass: each prototype pole p yields the two roots of
    # s^2 - (bw*p) s + w0^2 = 0; bilinear-map every analog pole to z.
    z_poles = []
    for p in _prototype_poles(order // 2):
        bp = bw * p
        disc = cmath.sqrt(bp * bp - 4.0 * w0sq)
        for s in ((bp + disc) / 2.0, (bp - disc) / 2.0):
            z_poles.append((2.0 * fs + s) / (2.0 * fs - s))
    z_poles = np.asarray(z_poles)

    # Group into conjugate pairs (plus pairs of real poles) for real biquads.
    tol = 1e-10
    complex_upper = sorted(
        (z for z in z_poles if z.imag > tol), key=lambda z: (z.real, z.imag)
    )
    real_poles = sorted(z.real for z in z_poles if abs(z.imag) <= tol)
    if 2 * len(complex_upper) + len(real_poles) != order or len(real_poles) % 2 != 0:
        raise NumericalError("bandpass pole pairing failed")
    pairs = [(z, z.conjugate()) for z in complex_upper]
    pairs += [
        (complex(real_poles[i]), complex(real_poles[i + 1]))
        for i in range(0, len(real_poles), 2)
    ]
    pairs.sort(key=lambda pq: (abs(pq[0]), pq[0].real))

    # Zeros: order/2 at z=1 and order/2 at z=-1, one of each per section, so
    # every numerator is g*(z^2 - 1). Normalize each section to unit gain at
    # the digital center frequency; the Butterworth magnitude shape then puts
    # the band edges at exactly -3.0103 dB.
    wc = 2.0 * math.atan(math.sqrt(w0sq) / (2.0 * fs))
    zc = cmath.exp(1j * wc)
    sections = []
    for z1, z2 in pairs:
        a1 = -(z1 + z2).real
        a2 = (z1 * z2).real
        h = (zc * zc - 1.0) / (zc * zc + a1 * zc + a2)
        g = 1.0 / abs(h)
        sections.append([g, 0.0, -g, a1, a2])
    return SosFilter(sections=np.asarray(sections), fs=fs)


def design_butterworth_bandpass(band: BandSpec, fs: float, order: int = 6) -> SosFilter:
    """Design the bandpass for one analysis band."""
    return butterworth_bandpass_sos(band.low_hz, band.high_hz, fs, order=order)


def frequency_response(filt: SosFilter, freqs_hz: Sequence[float]) -> np.ndarray:
    """Complex response H(e^{j 2 pi f / fs}) of the cascade at given frequencies."""
    w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / filt.fs
    zinv = np.exp(-1j * w)
    h = np.ones_like(zinv)
    for b0, b1, b2, a1, a2 in filt.sections:
        h *= (b0 + b1 * zinv + b2 * zinv**2) / (1.0 + a1 * zinv + a2 * zinv**2)
    return h


def filter_array(filt: SosFilter, x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Causal forward filtering of an array along ``axis``, zero initial state."""
    return sosfilt(filt.as_scipy_sos(), x, axis=axis)


def apply_filter(filt: SosFilter, trial: Trial) -> Trial:
    """Filter every channel of a trial through the cascade."""
    if trial.fs != filt.fs:
        raise DataError(
            f"sampling rate mismatch: trial at {trial.fs} Hz, filter at {filt.fs} Hz"
        )
    return trial.with_samples(filter_array(filt, trial.samples, axis=-1))
