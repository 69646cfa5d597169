"""Block-fading NOMA uplink: path loss, channels, SINR and decoded-gradient noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

SPEED_OF_LIGHT = 2.998e8
SINR_CAP = 1e12
POWER_FLOOR = 1e-6


def dbi_to_linear(dbi: float) -> float:
    return 10.0 ** (dbi / 10.0)


@dataclass(frozen=True)
class Geometry:
    bs_position: np.ndarray
    device_positions: np.ndarray
    gain_bs_dbi: float = 5.0
    gain_device_dbi: float = 0.0
    carrier_hz: float = 915e6
    path_exponent: float = 3.76

    def __post_init__(self):
        if self.carrier_hz <= 0:
            raise ConfigError("carrier frequency must be positive")
        if not (np.all(np.isfinite(self.bs_position)) and np.all(np.isfinite(self.device_positions))):
            raise ConfigError("positions must be finite")

    @property
    def num_devices(self) -> int:
        return int(self.device_positions.shape[0])

    def distance(self, k: int) -> float:
        return float(np.linalg.norm(self.device_positions[k] - self.bs_position))


def two_region_layout(num_devices: int = 15, in_region_one: int = 7, seed: int = 0) -> np.ndarray:
    """Device positions split between the two rectangular regions of the reference layout.

    Region I is x in [-10, 0], region II is x in [10, 20]; both span y in
    [-5, 5] at ground level. Which devices land in region I is random.
    """
    rng = np.random.default_rng(seed)
    in_one = np.zeros(num_devices, dtype=bool)
    in_one[rng.permutation(num_devices)[: min(in_region_one, num_devices)]] = True
    x = np.where(in_one, rng.uniform(-10.0, 0.0, num_devices), rng.uniform(10.0, 20.0, num_devices))
    y = rng.uniform(-5.0, 5.0, num_devices)
    return np.column_stack([x, y, np.zeros(num_devices)])


def path_loss(geometry: Geometry, k: int) -> float:
    """Linear large-scale gain ``G_BS * G_D * (c / (4 pi f_c d))**P`` of device ``k``."""
    d = geometry.distance(k)
    if d <= 0:
        raise DomainError(f"device {k} is co-located with the base station")
    gains = dbi_to_linear(geometry.gain_bs_dbi) * dbi_to_linear(geometry.gain_device_dbi)
    return gains * (SPEED_OF_LIGHT / (4.0 * np.pi * geometry.carrier_hz * d)) ** geometry.path_exponent


@dataclass(frozen=True)
class ChannelRealization:
    """Channel vectors ``h`` (columns, one per device) held fixed for a whole run."""

    h: np.ndarray
    sigma_n0: float

    def __post_init__(self):
        if self.sigma_n0 < 0:
            raise ConfigError("sigma_n0 must be non-negative")
        if np.any(self.norms == 0):
            raise DomainError("every channel vector must be non-zero")

    @property
    def num_antennas(self) -> int:
        return int(self.h.shape[0])

    @property
    def num_devices(self) -> int:
        return int(self.h.shape[1])

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.h, axis=0)


def sample_channel(geometry: Geometry, num_antennas: int, sigma_n0: float, seed) -> ChannelRealization:
    """Rayleigh small-scale fading scaled by the device path loss."""
    if num_antennas < 1:
        raise ConfigError("num_antennas must be >= 1")
    rng = np.random.default_rng(seed)
    k = geometry.num_devices
    u = (rng.standard_normal((num_antennas, k)) + 1j * rng.standard_normal((num_antennas, k))) / np.sqrt(2.0)
    scale = np.sqrt([path_loss(geometry, i) for i in range(k)])
    return ChannelRealization(u * scale[None, :], float(sigma_n0))


@dataclass(frozen=True)
class PowerAllocation:
    """Per-device transmit amplitudes ``p`` (W^0.5) and the total-power box."""

    p: np.ndarray
    p_min_total: float
    p_max_total: float

    @property
    def total(self) -> float:
        return float(np.sum(self.p**2))

    def is_feasible(self, rtol: float = 1e-9) -> bool:
        tot = self.total
        return bool(
            np.all(self.p > 0)
            and tot >= self.p_min_total * (1 - rtol)
            and tot <= self.p_max_total * (1 + rtol)
        )


def equal_power(num_devices: int, total: float, p_min_total: float, p_max_total: float) -> PowerAllocation:
    p = np.full(num_devices, np.sqrt(total / num_devices))
    return PowerAllocation(p, p_min_total, p_max_total)


def project_power(raw, p_min_total: float, p_max_total: float, floor: float = POWER_FLOOR) -> PowerAllocation:
    """Clamp entries to a positive floor, then rescale onto the total-power box."""
    p = np.maximum(np.asarray(raw, dtype=float), floor)
    tot = float(np.sum(p**2))
    if tot > p_max_total:
        p = p * np.sqrt(p_max_total / tot)
    elif tot < p_min_total:
        p = p * np.sqrt(p_min_total / tot)
    return PowerAllocation(p, p_min_total, p_max_total)


def decode_order(ch: ChannelRealization) -> np.ndarray:
    """SIC order: strongest channel decoded first (stable on ties)."""
    return np.argsort(-ch.norms, kind="stable")


def sinr(k: int, power: PowerAllocation, ch: ChannelRealization, order=None, cap: float = SINR_CAP) -> float:
    """Post-SIC SINR of device ``k`` with matched-filter receiver ``h_k^H``.

    Devices decoded after ``k`` still interfere; those decoded before have
    been cancelled.
    """
    if order is None:
        order = decode_order(ch)
    order = list(order)
    pos = order.index(k)
    hk = ch.h[:, k]
    hk2 = float(np.real(np.vdot(hk, hk)))
    signal = power.p[k] ** 2 * hk2**2
    interference = 0.0
    for i in order[pos + 1 :]:
        interference += power.p[i] ** 2 * abs(np.vdot(hk, ch.h[:, i])) ** 2
    denom = interference + hk2 * ch.sigma_n0**2
    if denom == 0:
        return cap
    return float(min(signal / denom, cap))


def sinr_all(power: PowerAllocation, ch: ChannelRealization, cap: float = SINR_CAP) -> np.ndarray:
    order = decode_order(ch)
    return np.array([sinr(k, power, ch, order, cap) for k in range(ch.num_devices)])


def effective_noise_std(k: int, power: PowerAllocation, ch: ChannelRealization) -> float:
    """Per-coordinate std of the channel perturbation on device ``k``'s decoded gradient."""
    if power.p[k] <= 0:
        raise DomainError("transmit amplitude must be positive")
    return float(ch.sigma_n0 / (power.p[k] * ch.norms[k]))


def effective_noise_stds(power: PowerAllocation, ch: ChannelRealization) -> np.ndarray:
    if np.any(power.p <= 0):
        raise DomainError("transmit amplitudes must be positive")
    return ch.sigma_n0 / (power.p * ch.norms)


def transmit(gradient, k: int, power: PowerAllocation, ch: ChannelRealization, rng: np.random.Generator) -> np.ndarray:
    g = np.asarray(gradient, dtype=float)
    std = effective_noise_std(k, power, ch)
    if std == 0.0:
        return g.copy()
    return g + rng.normal(0.0, std, size=g.shape)
