"""CSV ingestion/serialization and JSON result documents.

CSV schemas (exact headers):

* loads: ``substation,day,time,load``
* market: ``substation,type,count``
* temperature: ``location,day,time,temp`` plus a ``substation,location`` map
* covariates: ``substation,day,time,name,value`` (day/time blank for scalars)

Times are decimal hours in ``[0, horizon)``.  Floats are written with 17
significant digits so a write/ingest round trip reproduces values exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import KnotVector, fit_interpolating_spline
from .covariance import CovKind, CovarianceParams, CovarianceSpec
from .diagnostics import bic_of, covariance_param_se
from .errors import SchemaError
from .model import FitResult, ModelConfig
from .clustering import MixtureFitResult
from .panel import LoadPanel, MarketTable

__all__ = [
    "SCHEMA_VERSION",
    "write_panel_csv",
    "ingest",
    "fit_to_dict",
    "mixture_to_dict",
    "write_json",
    "read_result_json",
    "LoadedFit",
]

SCHEMA_VERSION = 1


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def write_panel_csv(directory, panel: LoadPanel, market: MarketTable,
                    temperature_coarse: np.ndarray | None = None,
                    coarse_hours: np.ndarray | None = None,
                    location_names: tuple[str, ...] | None = None,
                    location_of: np.ndarray | None = None) -> dict[str, Path]:
    """Write a panel bundle; returns the paths that were written.

    Temperature is written at its coarse observation hours (per location),
    mirroring how weather services report it; ingestion interpolates back to
    the panel grid.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    loads_path = directory / "loads.csv"
    rows = []
    for i, day in enumerate(panel.days):
        for j, sub in enumerate(panel.substations):
            for n, t in enumerate(panel.times):
                rows.append([sub, day, _fmt(t), _fmt(panel.loads[i, j, n])])
    _write_rows(loads_path, ["substation", "day", "time", "load"], rows)
    paths["loads"] = loads_path

    market_path = directory / "market.csv"
    rows = [
        [sub, typ, int(market.counts[j, c])]
        for j, sub in enumerate(market.substations)
        for c, typ in enumerate(market.types)
    ]
    _write_rows(market_path, ["substation", "type", "count"], rows)
    paths["market"] = market_path

    if temperature_coarse is not None:
        if coarse_hours is None or location_names is None or location_of is None:
            raise ValueError("coarse temperature needs hours, names and mapping")
        temp_path = directory / "temperature.csv"
        rows = []
        for l, loc in enumerate(location_names):
            for i, day in enumerate(panel.days):
                for h, hour in enumerate(coarse_hours):
                    rows.append([loc, day, _fmt(hour),
                                 _fmt(temperature_coarse[l, i, h])])
        _write_rows(temp_path, ["location", "day", "time", "temp"], rows)
        paths["temperature"] = temp_path

        loc_path = directory / "locations.csv"
        rows = [[sub, location_names[location_of[j]]]
                for j, sub in enumerate(panel.substations)]
        _write_rows(loc_path, ["substation", "location"], rows)
        paths["locations"] = loc_path

    if panel.scalar_covariates or panel.functional_covariates:
        cov_path = directory / "covariates.csv"
        rows = []
        for name, values in panel.scalar_covariates.items():
            for j, sub in enumerate(panel.substations):
                rows.append([sub, "", "", name, _fmt(values[j])])
        for name, values in panel.functional_covariates.items():
            for i, day in enumerate(panel.days):
                for j, sub in enumerate(panel.substations):
                    for n, t in enumerate(panel.times):
                        rows.append([sub, day, _fmt(t), name,
                                     _fmt(values[i, j, n])])
        _write_rows(cov_path, ["substation", "day", "time", "name", "value"],
                    rows)
        paths["covariates"] = cov_path
    return paths


def _read_csv(path, expected_header: list[str]) -> list[list[str]]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        if [h.strip() for h in header] != expected_header:
            raise SchemaError(
                f"{path} header {header} does not match {expected_header}"
            )
        return [row for row in reader if row]


def _ordered_unique(values):
    seen = {}
    for v in values:
        seen.setdefault(v, None)
    return list(seen)


def ingest(loads_path, market_path, temperature_path=None,
           locations_path=None, covariates_path=None,
           horizon: float = 24.0) -> tuple[LoadPanel, MarketTable]:
    """Read and validate a panel bundle; interpolate coarse temperature.

    Rejects incomplete grids, non-monotone times, unknown substations and
    negative market counts, each with a distinct message.
    """
    rows = _read_csv(loads_path, ["substation", "day", "time", "load"])
    subs = _ordered_unique(r[0] for r in rows)
    days = _ordered_unique(int(r[1]) for r in rows)
    cells: dict[tuple, dict[float, float]] = {}
    for sub, day, t, load in rows:
        cells.setdefault((int(day), sub), {})[float(t)] = float(load)
    first = cells.get((days[0], subs[0]))
    times = np.array(sorted(first), dtype=float)
    if times.size < 2:
        raise SchemaError("need at least 2 observation times per day")
    if np.any(np.diff(times) <= 0):
        raise SchemaError("non-monotone times in loads file")
    loads = np.empty((len(days), len(subs), times.size))
    for i, day in enumerate(days):
        for j, sub in enumerate(subs):
            cell = cells.get((day, sub))
            if cell is None or len(cell) != times.size or \
                    sorted(cell) != times.tolist():
                raise SchemaError(
                    f"missing cells: substation {sub} day {day} does not "
                    f"cover the full grid"
                )
            loads[i, j] = [cell[t] for t in times]

    mrows = _read_csv(market_path, ["substation", "type", "count"])
    types = _ordered_unique(r[1] for r in mrows)
    counts = np.zeros((len(subs), len(types)), dtype=int)
    sub_index = {s: j for j, s in enumerate(subs)}
    filled = np.zeros_like(counts, dtype=bool)
    for sub, typ, count in mrows:
        if sub not in sub_index:
            raise SchemaError(f"unknown substation in market file: {sub}")
        count = int(count)
        if count < 0:
            raise SchemaError(f"negative market count for {sub}/{typ}")
        j, c = sub_index[sub], types.index(typ)
        counts[j, c] = count
        filled[j, c] = True
    if not filled.all():
        raise SchemaError("market file does not cover every (substation, type)")
    market = MarketTable(tuple(subs), tuple(types), counts)

    temperature = None
    if temperature_path is not None:
        if locations_path is None:
            raise SchemaError("temperature file needs a substation,location map")
        lrows = _read_csv(locations_path, ["substation", "location"])
        loc_of = {sub: loc for sub, loc in lrows}
        missing = [s for s in subs if s not in loc_of]
        if missing:
            raise SchemaError(f"locations file misses substations: {missing}")
        trows = _read_csv(temperature_path, ["location", "day", "time", "temp"])
        series: dict[tuple, list[tuple[float, float]]] = {}
        for loc, day, t, temp in trows:
            series.setdefault((loc, int(day)), []).append((float(t), float(temp)))
        temperature = np.empty((len(days), len(subs), times.size))
        grid_curves: dict[tuple, np.ndarray] = {}
        for (loc, day), pts in series.items():
            pts = sorted(pts)
            xs = np.array([p[0] for p in pts])
            if xs[0] > times[0] or xs[-1] < times[-1]:
                raise SchemaError(
                    f"temperature for {loc} day {day} does not cover the "
                    f"load grid [{times[0]}, {times[-1]}]"
                )
            curve = fit_interpolating_spline(np.asarray(pts, dtype=float))
            grid_curves[(loc, day)] = curve(times)
        for i, day in enumerate(days):
            for j, sub in enumerate(subs):
                key = (loc_of[sub], day)
                if key not in grid_curves:
                    raise SchemaError(
                        f"temperature missing for location {key[0]} day {day}"
                    )
                temperature[i, j] = grid_curves[key]

    scalar: dict[str, np.ndarray] = {}
    functional: dict[str, np.ndarray] = {}
    if covariates_path is not None:
        crows = _read_csv(covariates_path,
                          ["substation", "day", "time", "name", "value"])
        day_index = {d: i for i, d in enumerate(days)}
        time_index = {t: n for n, t in enumerate(times.tolist())}
        for sub, day, t, name, value in crows:
            if sub not in sub_index:
                raise SchemaError(f"unknown substation in covariates file: {sub}")
            j = sub_index[sub]
            if day == "" and t == "":
                scalar.setdefault(name, np.full(len(subs), np.nan))[j] = float(value)
                continue
            arr = functional.setdefault(
                name, np.full((len(days), len(subs), times.size), np.nan)
            )
            i = day_index.get(int(day))
            n = time_index.get(float(t))
            if i is None or n is None:
                raise SchemaError(
                    f"covariate {name} at day {day} time {t} is off the load grid"
                )
            arr[i, j, n] = float(value)
        for name, values in scalar.items():
            if np.any(np.isnan(values)):
                raise SchemaError(f"scalar covariate {name} misses substations")
        for name, values in functional.items():
            if np.any(np.isnan(values)):
                raise SchemaError(f"functional covariate {name} has missing cells")

    panel = LoadPanel(
        substations=tuple(subs),
        days=tuple(days),
        times=times,
        loads=loads,
        horizon=horizon,
        temperature=temperature,
        scalar_covariates=scalar,
        functional_covariates=functional,
    )
    return panel, market


# ---------------------------------------------------------------------------
# JSON result documents
# ---------------------------------------------------------------------------

def _knots_to_dict(kv: KnotVector | None):
    if kv is None:
        return None
    return {"degree": kv.degree, "knots": list(kv.knots)}


def _knots_from_dict(d) -> KnotVector | None:
    if d is None:
        return None
    return KnotVector(degree=int(d["degree"]), knots=tuple(d["knots"]))


def fit_to_dict(result: FitResult) -> dict:
    se = covariance_param_se(result)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "fit",
        "converged": bool(result.converged),
        "loglik": float(result.loglik),
        "n_parameters": int(result.n_parameters),
        "bic": float(bic_of(result)),
        "n_days": int(result.n_days),
        "n_substations": int(result.n_substations),
        "n_times": int(result.n_times),
        "horizon": float(result.horizon),
        "times": result.times.tolist(),
        "n_outer_iter": int(result.n_outer_iter),
        "trace": [float(v) for v in result.trace],
        "beta": result.beta.tolist(),
        "gamma": result.gamma.tolist(),
        "covariates": list(result.config.covariates),
        "basis": {
            "time": _knots_to_dict(result.config.time_basis),
            "covariate": _knots_to_dict(result.config.covariate_basis),
        },
        "covariance": {
            "kind": result.config.covariance.kind.value,
            "sigma": result.cov_params.sigma.tolist(),
            "omega": result.cov_params.omega.tolist(),
            "eta_coeffs": None if result.cov_params.eta_coeffs is None
            else result.cov_params.eta_coeffs.tolist(),
            "variance_knots": _knots_to_dict(
                result.config.covariance.variance_knots),
        },
        "se": None if not se.available else {
            "sigma": se.sigma.tolist(),
            "omega": se.omega.tolist(),
        },
        "market": {
            "substations": list(result.market.substations),
            "types": list(result.market.types),
            "counts": result.market.counts.tolist(),
        },
    }


def mixture_to_dict(result: MixtureFitResult) -> dict:
    # cluster labels are 1-based in the document; responsibilities are
    # rounded to 6 decimals
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "mixture",
        "converged": bool(result.converged),
        "loglik": float(result.loglik),
        "n_parameters": int(result.n_parameters),
        "bic": float(bic_of(result)),
        "n_days": int(result.n_days),
        "n_substations": int(result.n_substations),
        "n_times": int(result.n_times),
        "horizon": float(result.horizon),
        "n_clusters": int(result.n_clusters),
        "n_iterations": int(result.n_iter),
        "trace": [float(v) for v in result.trace],
        "pi": result.pi.tolist(),
        "responsibilities": np.round(result.responsibilities, 6).tolist(),
        "assignments": [int(a) + 1 for a in result.assignments],
        "clusters": [
            {
                "beta": result.betas[b].tolist(),
                "sigma": result.cov_params[b].sigma.tolist(),
                "omega": result.cov_params[b].omega.tolist(),
                "eta_coeffs": None if result.cov_params[b].eta_coeffs is None
                else result.cov_params[b].eta_coeffs.tolist(),
            }
            for b in range(result.n_clusters)
        ],
        "covariance_kind": result.config.model.covariance.kind.value,
        "basis": {"time": _knots_to_dict(result.config.model.time_basis)},
        "market": {
            "substations": list(result.market.substations),
            "types": list(result.market.types),
            "counts": result.market.counts.tolist(),
        },
    }


def write_json(document: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as handle:
        json.dump(document, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


@dataclass
class LoadedFit:
    """A result document read back from disk; enough for comparisons and,
    for single fits, full model reconstruction."""

    payload: dict

    @property
    def kind(self) -> str:
        return self.payload["kind"]

    @property
    def loglik(self) -> float:
        return float(self.payload["loglik"])

    @property
    def n_parameters(self) -> int:
        return int(self.payload["n_parameters"])

    @property
    def n_days(self) -> int:
        return int(self.payload["n_days"])

    @property
    def n_substations(self) -> int:
        return int(self.payload["n_substations"])

    @property
    def n_times(self) -> int:
        return int(self.payload["n_times"])

    @property
    def converged(self) -> bool:
        return bool(self.payload["converged"])

    def model_config(self) -> ModelConfig:
        if self.kind != "fit":
            raise SchemaError("only single-model documents can be rebuilt")
        cov = self.payload["covariance"]
        spec = CovarianceSpec(
            kind=CovKind(cov["kind"]),
            variance_knots=_knots_from_dict(cov["variance_knots"]),
        )
        return ModelConfig(
            time_basis=_knots_from_dict(self.payload["basis"]["time"]),
            covariance=spec,
            covariate_basis=_knots_from_dict(self.payload["basis"]["covariate"]),
            covariates=tuple(self.payload["covariates"]),
        )

    def beta(self) -> np.ndarray:
        return np.asarray(self.payload["beta"], dtype=float)

    def cov_params(self) -> CovarianceParams:
        cov = self.payload["covariance"]
        eta = cov["eta_coeffs"]
        return CovarianceParams(
            sigma=np.asarray(cov["sigma"], dtype=float),
            omega=np.asarray(cov["omega"], dtype=float),
            eta_coeffs=None if eta is None else np.asarray(eta, dtype=float),
        )

    def market(self) -> MarketTable:
        m = self.payload["market"]
        return MarketTable(tuple(m["substations"]), tuple(m["types"]),
                           np.asarray(m["counts"]))


def read_result_json(path) -> LoadedFit:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    with open(path) as handle:
        payload = json.load(handle)
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(
            f"result document schema version {version} != {SCHEMA_VERSION}"
        )
    if payload.get("kind") not in ("fit", "mixture"):
        raise SchemaError("result document has unknown kind")
    return LoadedFit(payload=payload)
