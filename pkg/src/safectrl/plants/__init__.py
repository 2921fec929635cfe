"""Physical plant models with perturbable parameters.

Parameter records are frozen dataclasses; ``perturb`` produces scaled copies
for robustness studies, leaving the original untouched.  Simulations
integrate the perturbed ("real") dynamics while all controller-side
quantities are evaluated on the nominal parameters.
"""

from __future__ import annotations

import dataclasses

from .furuta import (
    FurutaParams,
    fit_viscous_damping,
    furuta_barrier,
    furuta_dynamics,
    furuta_energy,
    furuta_linearize,
    motor_torque,
    nominal_furuta_params,
)
from .maglev import (
    MaglevParams,
    equilibrium_forces,
    maglev_barrier,
    maglev_dynamics,
    maglev_force_to_voltage,
    maglev_output,
    maglev_output_dynamics,
    maglev_output_rate,
    maglev_voltage_to_force,
    nominal_maglev_params,
    state_from_gaps,
)

__all__ = [
    "FurutaParams", "MaglevParams", "perturb",
    "fit_viscous_damping", "furuta_barrier", "furuta_dynamics",
    "furuta_energy", "furuta_linearize", "motor_torque",
    "nominal_furuta_params",
    "equilibrium_forces", "maglev_barrier", "maglev_dynamics",
    "maglev_force_to_voltage", "maglev_output", "maglev_output_dynamics",
    "maglev_output_rate", "maglev_voltage_to_force", "nominal_maglev_params",
    "state_from_gaps",
]


def perturb(params, scale_map):
    """Copy of a parameter record with named fields multiplied by scales.

    ``scale_map`` maps field names to positive factors; unknown names are
    rejected rather than silently ignored.
    """
    valid = {f.name for f in dataclasses.fields(params)}
    updates = {}
    for name, scale in scale_map.items():
        if name not in valid:
            raise ValueError(f"unknown parameter field {name!r} for {type(params).__name__}")
        if scale <= 0.0:
            raise ValueError(f"scale for {name!r} must be positive, got {scale}")
        updates[name] = getattr(params, name) * scale
    return dataclasses.replace(params, **updates)
