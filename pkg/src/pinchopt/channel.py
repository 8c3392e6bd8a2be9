"""Line-of-sight channel model for pinching-antenna and fixed-array uplinks.

Gain functions return the purely geometric factor (units m^-2) for the
pinching-antenna system; the path-loss constant ``eta`` and the ``1/N``
per-antenna noise split enter only in :func:`pa_rate`.  The conventional
array is the exception: :func:`conventional_gain` returns ``||h_m^C||^2``
including ``eta`` because :func:`conventional_rate` has no other place for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from pinchopt import _kernels

SPEED_OF_LIGHT = 299_792_458.0


class DegenerateGeometryError(ValueError):
    """A device coincides with an antenna, so a path length is zero."""


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class PhysicalParams:
    """Carrier-dependent constants of the link.

    Build through :meth:`from_carrier` so that the wavelength, guided
    wavelength, ``eta`` and antenna spacing stay mutually consistent.
    """

    carrier_frequency: float
    wavelength: float
    guided_wavelength: float
    refractive_index: float
    eta: float
    noise_power: float
    spacing: float

    @classmethod
    def from_carrier(
        cls,
        carrier_frequency: float = 28e9,
        refractive_index: float = 1.4,
        noise_dbm: float = -90.0,
        spacing_in_wavelengths: float = 0.5,
    ) -> "PhysicalParams":
        if carrier_frequency <= 0 or refractive_index <= 0 or spacing_in_wavelengths <= 0:
            raise ValueError("carrier frequency, refractive index and spacing must be positive")
        lam = SPEED_OF_LIGHT / carrier_frequency
        return cls(
            carrier_frequency=float(carrier_frequency),
            wavelength=lam,
            guided_wavelength=lam / refractive_index,
            refractive_index=float(refractive_index),
            eta=SPEED_OF_LIGHT**2 / (16.0 * math.pi**2 * carrier_frequency**2),
            noise_power=float(dbm_to_watts(noise_dbm)),
            spacing=spacing_in_wavelengths * lam,
        )

    @property
    def k0(self) -> float:
        """Free-space wavenumber 2*pi/lambda."""
        return 2.0 * math.pi / self.wavelength

    @property
    def kg(self) -> float:
        """In-guide wavenumber 2*pi/lambda_g."""
        return 2.0 * math.pi / self.guided_wavelength


@dataclass(frozen=True)
class AntennaLayout:
    x_coords: np.ndarray
    height: float
    feed_x: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x_coords", np.atleast_1d(np.asarray(self.x_coords, dtype=float)))

    @property
    def n(self) -> int:
        return self.x_coords.shape[0]

    def check(self, spacing: float, length: float, tol: float = 1e-6) -> None:
        """Raise ``ValueError`` unless the layout is ordered, spaced and inside ``[0, length]``."""
        x = self.x_coords
        if np.any(np.diff(x) < spacing - tol):
            raise ValueError(f"antenna gaps below spacing {spacing:g} m: {np.diff(x)}")
        if x.min() < -tol or x.max() > length + tol:
            raise ValueError(f"antenna outside [0, {length:g}] m")


@dataclass
class Scenario:
    """One problem instance: device positions, geometry and link constants.

    ``devices`` is an ``(M, 2)`` array of ``(x, y)`` positions on the ground
    plane; ``energies`` holds the normalized transmit energy ``E_m`` in watts
    (so that ``E_m / noise_power`` is the transmit SNR).
    """

    devices: np.ndarray
    n_antennas: int
    length: float
    width: float
    height: float
    params: PhysicalParams = field(default_factory=PhysicalParams.from_carrier)
    energies: np.ndarray | None = None

    def __post_init__(self):
        self.devices = np.atleast_2d(np.asarray(self.devices, dtype=float))
        if self.devices.shape[1] != 2 or self.devices.shape[0] < 1:
            raise ValueError("devices must be an (M, 2) array with M >= 1")
        if self.n_antennas < 1:
            raise ValueError("need at least one antenna")
        if self.height <= 0 or self.length <= 0 or self.width <= 0:
            raise ValueError("area sides and waveguide height must be positive")
        if self.energies is None:
            self.energies = np.ones(self.m)
        self.energies = np.broadcast_to(np.asarray(self.energies, dtype=float), (self.m,)).copy()
        if np.any(self.energies <= 0):
            raise ValueError("energies must be positive")

    @property
    def m(self) -> int:
        return self.devices.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.devices[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.devices[:, 1]

    def with_power(self, power_dbm: float) -> "Scenario":
        """Copy with every device transmitting at ``power_dbm``."""
        return Scenario(
            self.devices, self.n_antennas, self.length, self.width, self.height,
            self.params, np.full(self.m, float(dbm_to_watts(power_dbm))),
        )


def distances(dev_x, dev_y, ant_x, height) -> np.ndarray:
    """Matrix ``r[m, n]`` of device-to-antenna distances."""
    dev_x = np.atleast_1d(np.asarray(dev_x, dtype=float))
    dev_y = np.atleast_1d(np.asarray(dev_y, dtype=float))
    ant_x = np.atleast_1d(np.asarray(ant_x, dtype=float))
    r = np.sqrt((dev_x[:, None] - ant_x[None, :]) ** 2 + (dev_y**2)[:, None] + height**2)
    if np.any(r == 0.0):
        raise DegenerateGeometryError("device located exactly at an antenna position")
    return r


def _as_device(device):
    x, y = np.asarray(device, dtype=float)[:2]
    return np.array([x]), np.array([y])


def _guard(dev_x, dev_y, layout):
    if layout.height <= 0:
        distances(dev_x, dev_y, layout.x_coords, layout.height)


# -- pinching-antenna channel -------------------------------------------------


def complex_gain_sum(device, layout: AntennaLayout, params: PhysicalParams) -> complex:
    """Coherent sum of ``exp(j(k0 r_n - kg |x_n - feed|)) / r_n`` over the antennas."""
    dx, dy = _as_device(device)
    _guard(dx, dy, layout)
    return complex(
        _kernels.coherent_sums(dx, dy, layout.x_coords, float(layout.height),
                               float(layout.feed_x), params.k0, params.kg)[0]
    )


def complex_gain_sums(dev_x, dev_y, layout: AntennaLayout, params: PhysicalParams) -> np.ndarray:
    """Vectorized :func:`complex_gain_sum` over many devices."""
    dev_x = np.ascontiguousarray(dev_x, dtype=float)
    dev_y = np.ascontiguousarray(dev_y, dtype=float)
    _guard(dev_x, dev_y, layout)
    return _kernels.coherent_sums(dev_x, dev_y, layout.x_coords, float(layout.height),
                                  float(layout.feed_x), params.k0, params.kg)


def effective_gain(device, layout: AntennaLayout, params: PhysicalParams) -> float:
    return abs(complex_gain_sum(device, layout, params)) ** 2


def effective_gains(scenario: Scenario, layout: AntennaLayout) -> np.ndarray:
    """Effective gain of every device in ``scenario``."""
    return np.abs(complex_gain_sums(scenario.x, scenario.y, layout, scenario.params)) ** 2


def ideal_gain(device, layout: AntennaLayout) -> float:
    """Phase-aligned bound ``(sum_n 1/r_n)^2``."""
    dx, dy = _as_device(device)
    _guard(dx, dy, layout)
    return float(_kernels.inverse_distance_sums(dx, dy, layout.x_coords, float(layout.height), 1.0)[0] ** 2)


def ideal_gains(scenario: Scenario, layout: AntennaLayout) -> np.ndarray:
    _guard(scenario.x, scenario.y, layout)
    s = _kernels.inverse_distance_sums(np.ascontiguousarray(scenario.x), np.ascontiguousarray(scenario.y),
                                       layout.x_coords, float(layout.height), 1.0)
    return s**2


def pa_rate(q, energy, gain, n_antennas, noise_power, eta):
    """Rate ``q log2(1 + eta E g / (N q sigma^2))`` in bits/s/Hz.

    ``gain`` is the geometric factor from :func:`effective_gain`.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValueError("resource fraction must be positive")
    snr = eta * np.asarray(energy) * np.asarray(gain) / (n_antennas * noise_power)
    out = q * np.log2(1.0 + snr / q)
    return float(out) if out.ndim == 0 else out


def rate_threshold_distance(rate, q, energy, n_antennas, noise_power, eta):
    """Inverse-distance sum needed for a device to reach ``rate`` when phases align.

    This is the increasing map ``D_m(R)`` that the placement objective
    replaces by the auxiliary variable ``t``; it inverts the ideal-gain rate.
    """
    return np.sqrt((2.0 ** (np.asarray(rate) / q) - 1.0) * n_antennas * q * noise_power / (eta * energy))


# -- conventional fixed array --------------------------------------------------


def fixed_layout(n_antennas: int, height: float, spacing: float) -> AntennaLayout:
    """Edge-mounted array at ``x = 0, spacing, 2*spacing, ...``."""
    return AntennaLayout(np.arange(n_antennas) * spacing, height)


def conventional_gain(device, layout: AntennaLayout, params: PhysicalParams) -> float:
    """``||h_m^C||^2 = eta * sum_n 1/r_n^2`` (no waveguide phase, incoherent)."""
    dx, dy = _as_device(device)
    _guard(dx, dy, layout)
    return params.eta * float(_kernels.inverse_distance_sums(dx, dy, layout.x_coords, float(layout.height), 2.0)[0])


def conventional_gains(scenario: Scenario, layout: AntennaLayout) -> np.ndarray:
    _guard(scenario.x, scenario.y, layout)
    s = _kernels.inverse_distance_sums(np.ascontiguousarray(scenario.x), np.ascontiguousarray(scenario.y),
                                       layout.x_coords, float(layout.height), 2.0)
    return scenario.params.eta * s


def conventional_rate(q, energy, conv_gain, noise_power):
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValueError("resource fraction must be positive")
    out = q * np.log2(1.0 + np.asarray(energy) * np.asarray(conv_gain) / (q * noise_power))
    return float(out) if out.ndim == 0 else out
