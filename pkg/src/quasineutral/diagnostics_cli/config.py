"""Run configuration: a YAML document with sparse mode lists and named presets.

Real fields are written as ``mean + sum_entries 2 Re(c e^{i k.x})``; an
entry is ``{k: [k1, ..., kd], value: [re, im]}`` (vector fields add
``component: 0|1|2``).  Listing ``k`` and ``-k`` both is allowed and adds
both contributions.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..evolution import InitialData
from ..plasma_layers import LayerStack
from ..spectral_core import TWO_PI, ConfigurationError, Lattice

__all__ = ["ModeEntry", "FieldSpec", "LayerSpec", "RunConfig", "PRESETS", "load_config", "build_initial_data"]

PRESETS = ("quiescent", "two-stream-sheets", "single-mode-irr")


@dataclass(frozen=True)
class ModeEntry:
    k: tuple[int, ...]
    value: complex
    component: int | None = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"k": list(self.k), "value": [self.value.real, self.value.imag]}
        if self.component is not None:
            d["component"] = self.component
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModeEntry":
        v = d["value"]
        value = complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)
        comp = d.get("component")
        return cls(tuple(int(x) for x in d["k"]), value, None if comp is None else int(comp))


@dataclass(frozen=True)
class FieldSpec:
    """A real field: a constant (scalar or 3-vector) plus sparse modes."""

    mean: tuple[float, ...] = (0.0,)
    modes: tuple[ModeEntry, ...] = ()

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "modes": [m.to_dict() for m in self.modes]}

    @classmethod
    def from_dict(cls, d: dict | None, rank: int = 0) -> "FieldSpec":
        if d is None:
            return cls((0.0,) * (3 if rank else 1))
        mean = d.get("mean", 0.0)
        mean = tuple(float(v) for v in (mean if isinstance(mean, (list, tuple)) else [mean]))
        return cls(mean, tuple(ModeEntry.from_dict(m) for m in d.get("modes", [])))

    def coefficients(self, lattice: Lattice, rank: int) -> np.ndarray:
        lat = lattice
        out = lat.zeros(rank=rank)
        scale = TWO_PI**lat.dim
        zero = lat.zero_index
        if rank == 0:
            if len(self.mean) != 1:
                raise ConfigurationError(f"scalar field mean must be one number, got {self.mean}")
            out[zero] += self.mean[0] * scale
        else:
            mean = self.mean * 3 if len(self.mean) == 1 else self.mean
            if len(mean) != 3:
                raise ConfigurationError(f"vector field mean needs 3 components, got {self.mean}")
            out[(slice(None),) + zero] += np.asarray(mean) * scale
        for m in self.modes:
            try:
                idx, neg = lat.index_of(m.k), lat.index_of(tuple(-v for v in m.k))
            except IndexError as exc:
                raise ConfigurationError(str(exc)) from exc
            if rank == 0:
                if m.component is not None:
                    raise ConfigurationError("scalar mode entries take no component")
                out[idx] += m.value * scale
                out[neg] += np.conj(m.value) * scale
            else:
                if m.component not in (0, 1, 2):
                    raise ConfigurationError(f"vector mode entry needs component 0, 1 or 2, got {m.component}")
                out[(m.component,) + idx] += m.value * scale
                out[(m.component,) + neg] += np.conj(m.value) * scale
        return out


@dataclass(frozen=True)
class LayerSpec:
    weight: float
    rho: FieldSpec
    xi: FieldSpec

    def to_dict(self) -> dict:
        return {"weight": self.weight, "rho": self.rho.to_dict(), "xi": self.xi.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(float(d["weight"]), FieldSpec.from_dict(d.get("rho"), 0), FieldSpec.from_dict(d.get("xi"), 1))


def _preset(name: str, params: dict, dim: int) -> tuple[list[LayerSpec], FieldSpec, FieldSpec]:
    """Layers, ``E0`` and ``B0`` of a named preset."""
    e = lambda *k: tuple(k) + (0,) * (dim - len(k))  # noqa: E731
    if name == "quiescent":
        return [LayerSpec(1.0, FieldSpec((1.0,)), FieldSpec((0.0, 0.0, 0.0)))], FieldSpec((0.0, 0.0, 0.0)), FieldSpec((0.0, 0.0, 0.0))
    if name == "single-mode-irr":
        # E0 is completed from the density by Gauss when built
        amp = float(params.get("amplitude", 1e-4))
        k = tuple(int(v) for v in params.get("k", [1] + [0] * (dim - 1)))
        rho = FieldSpec((1.0,), (ModeEntry(k, complex(amp / 2)),))
        return [LayerSpec(1.0, rho, FieldSpec((0.0, 0.0, 0.0)))], FieldSpec((0.0, 0.0, 0.0)), FieldSpec((0.0, 0.0, 0.0))
    if name == "two-stream-sheets":
        if dim < 2:
            raise ConfigurationError("two-stream-sheets needs dim >= 2")
        a = float(params.get("amplitude", 0.05))
        u = float(params.get("drift", 0.3))
        b = float(params.get("field", 0.2))
        # rho_1 = 1 + a cos(x + y), rho_2 = 1 - a cos(x + y): sum mu rho = 1 and E0 = 0
        r1 = FieldSpec((1.0,), (ModeEntry(e(1, 1), complex(a / 2)),))
        r2 = FieldSpec((1.0,), (ModeEntry(e(1, 1), complex(-a / 2)),))
        xi1 = FieldSpec((u, 0.0, 0.0), (ModeEntry(e(0, 1), complex(0, -a / 2), 0), ModeEntry(e(1, 0), complex(a / 2), 1)))
        xi2 = FieldSpec((-u, 0.0, 0.0), (ModeEntry(e(1, 2), complex(0, -a / 2), 1),))
        B0 = FieldSpec((0.0, 0.0, 0.0), (ModeEntry(e(1, 0), complex(b / 2), 2), ModeEntry(e(0, 2), complex(0, -b / 4), 2)))
        return [LayerSpec(0.5, r1, xi1), LayerSpec(0.5, r2, xi2)], FieldSpec((0.0, 0.0, 0.0)), B0
    raise ConfigurationError(f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}")


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs; see the package README for the YAML layout."""

    dim: int = 2
    K: int = 4
    N: int | None = None
    eps: float = 0.1
    dt: float | None = None
    T: float = 1.0
    eta: float = 0.05
    delta0: float = 1.5
    beta: float = 0.5
    picard_tol: float = 1e-10
    picard_n_max: int = 30
    preset: str | None = None
    preset_params: dict = field(default_factory=dict)
    layers: tuple[LayerSpec, ...] = ()
    E0: FieldSpec | None = None
    B0: FieldSpec | None = None
    window: float | None = None
    stride: int = 1
    eps_list: tuple[float, ...] = ()
    compare_step: float = 0.02
    emhd_dt: float | None = None
    d0_coupling: str = "derived"
    dispersion: dict = field(default_factory=dict)
    resonance: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ConfigurationError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not 0.0 < self.eps <= 1.0:
            raise ConfigurationError(f"eps must lie in (0, 1], got {self.eps}")
        if self.T < 0 or self.eta <= 0:
            raise ConfigurationError("T must be nonnegative and eta positive")
        if self.dt is not None and self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.stride < 1:
            raise ConfigurationError("stride must be at least 1")
        if any(not 0.0 < e <= 1.0 for e in self.eps_list):
            raise ConfigurationError(f"every eps in eps_list must lie in (0, 1], got {self.eps_list}")
        if self.d0_coupling not in ("derived", "printed"):
            raise ConfigurationError(f"d0_coupling must be 'derived' or 'printed', got {self.d0_coupling!r}")
        if self.preset is None and not self.layers:
            raise ConfigurationError("give either a preset or at least one layer")

    # ------------------------------------------------------------ serialization
    def to_dict(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "layers":
                v = [layer.to_dict() for layer in v]
            elif f.name in ("E0", "B0"):
                v = None if v is None else v.to_dict()
            elif f.name == "eps_list":
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        d = dict(d)
        if isinstance(d.get("preset"), dict):
            p = dict(d.pop("preset"))
            d["preset"] = p.pop("name")
            d["preset_params"] = {**p, **d.get("preset_params", {})}
        d["layers"] = tuple(LayerSpec.from_dict(x) for x in d.get("layers", []) or [])
        for key in ("E0", "B0"):
            if d.get(key) is not None:
                d[key] = FieldSpec.from_dict(d[key], 1)
        d["eps_list"] = tuple(float(e) for e in d.get("eps_list", []) or [])
        for key in ("preset_params", "dispersion", "resonance", "outputs"):
            d[key] = dict(d.get(key) or {})
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            d = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"unreadable configuration: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigurationError("configuration must be a mapping")
        return cls.from_dict(d)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # ------------------------------------------------------------ physics
    def lattice(self) -> Lattice:
        return Lattice(self.dim, self.K, self.N)

    def specs(self) -> tuple[list[LayerSpec], FieldSpec, FieldSpec]:
        """Layer and field specifications with explicit entries overriding the preset."""
        if self.preset is not None:
            layers, E0, B0 = _preset(self.preset, self.preset_params, self.dim)
        else:
            layers, E0, B0 = [], FieldSpec((0.0, 0.0, 0.0)), FieldSpec((0.0, 0.0, 0.0))
        if self.layers:
            layers = list(self.layers)
        return layers, self.E0 if self.E0 is not None else E0, self.B0 if self.B0 is not None else B0

    def layer_stack(self) -> LayerStack:
        lat = self.lattice()
        layers, _, _ = self.specs()
        weights = np.array([layer.weight for layer in layers])
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"layer weights must sum to 1, got {weights.sum()!r}")
        rho = np.stack([layer.rho.coefficients(lat, 0) for layer in layers])
        xi = np.stack([layer.xi.coefficients(lat, 1) for layer in layers])
        return LayerStack(weights, rho, xi)

    def fields(self) -> tuple[np.ndarray, np.ndarray]:
        """``(E0, B0)`` coefficients; the irrotational part of ``E0`` is completed by Gauss."""
        from ..field_decomposition import irrotational_from_density, project_solenoidal

        lat = self.lattice()
        _, E0s, B0s = self.specs()
        E0 = E0s.coefficients(lat, 1)
        stack = self.layer_stack()
        total = stack.weighted_sum(stack.rho)
        E_irr = irrotational_from_density(total, self.eps, lat)
        zero = (slice(None),) + lat.zero_index
        E0 = project_solenoidal(E0, lat) + E_irr
        E0[zero] = E0s.coefficients(lat, 1)[zero]
        return E0, B0s.coefficients(lat, 1)

    def initial_data(self, eps: float | None = None) -> InitialData:
        cfg = self if eps is None else self.replace(eps=float(eps))
        E0, B0 = cfg.fields()
        return InitialData(cfg.lattice(), cfg.eps, cfg.layer_stack(), E0, B0)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
    return RunConfig.from_yaml(text)


def build_initial_data(config: RunConfig, eps: float | None = None) -> InitialData:
    return config.initial_data(eps)
