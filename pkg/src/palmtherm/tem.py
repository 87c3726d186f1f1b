"""Thermoelectric (Peltier) module physics and array heat budget.

Single-stage modules are modeled with the usual three-term surface flux
balance: Peltier pumping proportional to absolute cold-face temperature
and drive current, back-conduction through the module body, and Joule
heating split evenly between the two faces.

Sign conventions used throughout:

* a positive flux flows *into* the named face;
* positive current pumps heat from the cold face to the hot face
  (cooling mode), so ``peltier_heat`` is negative for positive current.

Temperatures at this layer are kelvin; degrees Celsius appear only at
interface boundaries (device layer and above).  All flux functions accept
scalars or numpy arrays elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Rating reference temperature: rated pumping capacity q_max is quoted at a
# 30 C (303.15 K) face, which ties q_max to alpha via q_max = alpha*T_ref*i_max.
T_REF = 303.15

# Rated values for the 6.5 mm modules the array is built from.
RATED_Q_MAX = 1.7        # W
RATED_I_MAX = 0.7        # A
RATED_R_ELECTRICAL = 4.17  # ohm
DEFAULT_ALPHA = RATED_Q_MAX / (T_REF * RATED_I_MAX)  # V/K


def _bad(x, predicate) -> bool:
    """True if predicate holds anywhere in scalar-or-array input."""
    return bool(np.any(predicate(np.asarray(x))))


def _check_flux_args(alpha, t_cold, t_hot, r_thermal, r_electrical) -> None:
    if _bad(alpha, lambda a: a < 0):
        raise ValueError("seebeck alpha must be non-negative")
    if _bad(t_cold, lambda t: t <= 0) or _bad(t_hot, lambda t: t <= 0):
        raise ValueError("temperatures must be positive kelvin")
    if r_thermal <= 0:
        raise ValueError(f"r_thermal must be positive, got {r_thermal}")
    if r_electrical < 0:
        raise ValueError(f"r_electrical must be non-negative, got {r_electrical}")


@dataclass
class TemParams:
    """Electro-thermal constants for one module, shared across the array."""

    seebeck_alpha: float = DEFAULT_ALPHA   # V/K
    r_thermal: float = 120.0               # K/W, module body conduction
    r_electrical: float = RATED_R_ELECTRICAL  # ohm
    i_max: float = RATED_I_MAX             # A
    q_max: float = RATED_Q_MAX             # W, rated pumping at T_REF
    n_modules: int = 9

    def __post_init__(self) -> None:
        if self.seebeck_alpha < 0:
            raise ValueError("seebeck_alpha must be non-negative")
        if self.r_thermal <= 0 or self.r_electrical <= 0:
            raise ValueError("thermal and electrical resistance must be positive")
        if not 0.0 <= self.i_max <= 2.0:
            raise ValueError(f"i_max out of sane module range: {self.i_max} A")
        if self.q_max <= 0:
            raise ValueError("q_max must be positive")
        if self.n_modules < 1:
            raise ValueError("n_modules must be at least 1")
        if self.i_max > 0:
            rated = self.seebeck_alpha * T_REF * self.i_max
            if not 0.8 * self.q_max <= rated <= 1.2 * self.q_max:
                raise ValueError(
                    "q_max inconsistent with seebeck_alpha at reference "
                    f"temperature: alpha*T_ref*i_max = {rated:.3f} W vs "
                    f"q_max = {self.q_max:.3f} W")


@dataclass
class CoolantParams:
    """Water loop carrying the array's rejected heat back to a reservoir."""

    density: float = 1000.0        # kg/m^3
    flow_rate: float = 2.25e-6     # m^3/s
    specific_heat: float = 4184.0  # J/(kg K)
    reservoir_temp: float = 30.0   # C, held by the external bath

    def __post_init__(self) -> None:
        if self.density <= 0 or self.flow_rate <= 0 or self.specific_heat <= 0:
            raise ValueError("density, flow_rate and specific_heat must be positive")
        if not 10.0 <= self.reservoir_temp <= 40.0:
            raise ValueError(
                f"reservoir_temp {self.reservoir_temp} C outside supported band")


def peltier_heat(alpha, t_cold, i):
    """Peltier flux into the cold face: -alpha * t_cold * i (watts).

    Negative for positive current, i.e. heat is being pumped out of the
    cold face toward the hot face.
    """
    if _bad(alpha, lambda a: a < 0):
        raise ValueError("seebeck alpha must be non-negative")
    if _bad(t_cold, lambda t: t <= 0):
        raise ValueError("t_cold must be positive kelvin")
    return -alpha * t_cold * i


def cold_side_flow(alpha, t_cold, t_hot, i, r_thermal, r_electrical):
    """Net flux into the cold face (W).

    Peltier pumping plus back-conduction from the hot face plus half the
    Joule dissipation.  The Joule term always adds heat, which is why the
    array warms faster than it cools at equal current.
    """
    _check_flux_args(alpha, t_cold, t_hot, r_thermal, r_electrical)
    return (-alpha * t_cold * i
            + (t_hot - t_cold) / r_thermal
            + 0.5 * r_electrical * i * i)


def hot_side_flow(alpha, t_cold, t_hot, i, r_thermal, r_electrical):
    """Net flux into the hot face (W); the heat sink must remove it.

    Together with ``cold_side_flow`` this satisfies the exact identity
    q_cold + q_hot = r_electrical * i**2 (the module only generates its
    own Joule heat; Peltier transport cancels across the faces).
    """
    _check_flux_args(alpha, t_cold, t_hot, r_thermal, r_electrical)
    return (alpha * t_cold * i
            + (t_cold - t_hot) / r_thermal
            + 0.5 * r_electrical * i * i)


def array_heat_budget(params: TemParams) -> float:
    """Worst-case heat the full array rejects into the water loop (W).

    Every module pumping its rated q_max at rated current while
    dissipating r_el * i_max^2 of Joule heat, half of which lands on each
    face; the hot side carries q_max + r_el*i_max^2/2 per module.
    """
    per_module = params.q_max + 0.5 * params.r_electrical * params.i_max ** 2
    return params.n_modules * per_module


def coolant_delta_t(q_total: float, coolant: CoolantParams) -> float:
    """Steady-flow coolant temperature rise for q_total watts absorbed."""
    if q_total < 0:
        raise ValueError("q_total must be non-negative")
    return q_total / (coolant.density * coolant.flow_rate * coolant.specific_heat)


def zero_flux_cold_temp(params: TemParams, t_hot: float, i: float) -> float:
    """Cold-face temperature at which the net cold-side flux is zero (K)."""
    return ((t_hot / params.r_thermal + 0.5 * params.r_electrical * i * i)
            / (params.seebeck_alpha * i + 1.0 / params.r_thermal))


def max_delta_t(params: TemParams, t_hot: float) -> float:
    """Largest steady temperature drop below t_hot the module can hold (K).

    Solves d/di of the zero-net-flux cold temperature for the optimal
    drive current, clamps it to the rated range, and evaluates the drop
    there.  Returns 0.0 when the module cannot cool below t_hot at all
    (vanishing alpha or overwhelming Joule heating).
    """
    if t_hot <= 0:
        raise ValueError("t_hot must be positive kelvin")
    a = params.seebeck_alpha
    r_el = params.r_electrical
    r_th = params.r_thermal
    if a <= 0 or params.i_max <= 0:
        return 0.0
    # Stationary point of zero_flux_cold_temp(i):
    #   (a*r_el*r_th/2) i^2 + r_el i - a*t_hot = 0
    disc = r_el * r_el + 2.0 * a * a * r_el * r_th * t_hot
    i_opt = (-r_el + math.sqrt(disc)) / (a * r_el * r_th)
    i_opt = min(max(i_opt, 0.0), params.i_max)
    if i_opt == 0.0:
        return 0.0
    dt = t_hot - zero_flux_cold_temp(params, t_hot, i_opt)
    return max(dt, 0.0)
