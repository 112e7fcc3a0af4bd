"""Observed-data containers: aggregated load panels and market tables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError

__all__ = ["LoadPanel", "MarketTable"]


@dataclass
class LoadPanel:
    """A complete panel of aggregated loads.

    ``loads[i, j, n]`` is the load of substation ``j`` on day ``i`` at
    ``times[n]`` (decimal hours in ``[0, horizon)``).  Covariates are either
    one scalar per substation or one curve per (day, substation) on the same
    grid; the temperature array drives the tensor-product surface.
    """

    substations: tuple[str, ...]
    days: tuple[int, ...]
    times: np.ndarray
    loads: np.ndarray
    horizon: float = 24.0
    temperature: np.ndarray | None = None
    scalar_covariates: dict[str, np.ndarray] = field(default_factory=dict)
    functional_covariates: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.substations = tuple(str(s) for s in self.substations)
        self.days = tuple(int(d) for d in self.days)
        self.times = np.asarray(self.times, dtype=float)
        self.loads = np.asarray(self.loads, dtype=float)
        shape = (len(self.days), len(self.substations), self.times.size)
        if self.loads.shape != shape:
            raise SchemaError(
                f"loads shape {self.loads.shape} does not match (days, substations, times) {shape}"
            )
        if self.times.size < 2:
            raise SchemaError("need at least 2 observation times per day")
        if np.any(np.diff(self.times) <= 0):
            raise SchemaError("times must be strictly increasing")
        if self.horizon <= self.times[-1]:
            raise SchemaError("horizon must exceed the last observation time")
        if not np.all(np.isfinite(self.loads)):
            raise SchemaError("loads contain missing or non-finite values")
        if self.temperature is not None:
            self.temperature = np.asarray(self.temperature, dtype=float)
            if self.temperature.shape != shape:
                raise SchemaError("temperature must match the (days, substations, times) grid")
        for name, vals in self.scalar_covariates.items():
            arr = np.asarray(vals, dtype=float)
            if arr.shape != (len(self.substations),):
                raise SchemaError(f"scalar covariate {name!r} must have one value per substation")
            self.scalar_covariates[name] = arr
        for name, vals in self.functional_covariates.items():
            arr = np.asarray(vals, dtype=float)
            if arr.shape != shape:
                raise SchemaError(f"functional covariate {name!r} must match the panel grid")
            self.functional_covariates[name] = arr

    @property
    def n_days(self) -> int:
        return len(self.days)

    @property
    def n_substations(self) -> int:
        return len(self.substations)

    @property
    def n_times(self) -> int:
        return self.times.size

    def covariate_kind(self, name: str) -> str:
        if name in self.scalar_covariates:
            return "scalar"
        if name in self.functional_covariates:
            return "functional"
        raise SchemaError(f"unknown covariate {name!r}")

    def temperature_range(self) -> tuple[float, float]:
        if self.temperature is None:
            raise SchemaError("panel has no temperature curves")
        return float(self.temperature.min()), float(self.temperature.max())


@dataclass
class MarketTable:
    """Fixed counts of customers of each type at each substation."""

    substations: tuple[str, ...]
    types: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        self.substations = tuple(str(s) for s in self.substations)
        self.types = tuple(str(t) for t in self.types)
        self.counts = np.asarray(self.counts)
        if self.counts.shape != (len(self.substations), len(self.types)):
            raise SchemaError("market counts must be (n_substations, n_types)")
        if np.any(self.counts < 0):
            raise SchemaError("market counts must be non-negative")
        if not np.issubdtype(self.counts.dtype, np.integer):
            rounded = np.rint(self.counts)
            if np.any(np.abs(self.counts - rounded) > 0):
                raise SchemaError("market counts must be integers")
            self.counts = rounded.astype(int)
        if np.any(self.counts.sum(axis=1) <= 0):
            raise SchemaError("every substation needs a positive market total")

    @property
    def n_substations(self) -> int:
        return len(self.substations)

    @property
    def n_types(self) -> int:
        return len(self.types)

    def row(self, j: int) -> np.ndarray:
        return self.counts[j]
