"""Reading configuration documents.

A document is a JSON object.  It is either a bare model::

    {"n_s": 2, "rho_up": {"1": 0.5}, "rho_down": {"2": 0.5}, "mu": {"1": 0.8, "2": 0.2}}

or a bundle with a ``model`` entry (inline object, or a path relative to
the document) plus optional ``policy``, ``simulation`` and ``validate``
blocks::

    {
      "model": "m2.json",
      "policy": {"kind": "threshold", "tau": 2},
      "simulation": {"lambda": 0.3, "horizon": 1000000, "seed": 42, "replications": 20},
      "validate": {"q_max": 200, "tolerances": {"lemma3": 1e-3}}
    }

Policies come in two kinds.  ``{"kind": "threshold", "tau": t}`` works
when available, the queue is nonempty and ``s < t``.  ``{"kind": "table",
"q_cap": c, "available": [[...], ...]}`` lists, for each ``s``, the work
probability from Available for ``q = 1..c``; larger queues reuse the last
column.  Busy states always work and an empty queue always rests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError, ModelError
from .model import ServerModel, SystemPolicy, SystemState, lift_threshold, validate_model

MODEL_KEYS = {"n_s", "rho_up", "rho_down", "mu"}


def load_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", field="model") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}", field="model") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a JSON object", field="model")
    return doc


@dataclass
class Bundle:
    """Everything a configuration document specifies."""

    model: ServerModel
    policy: SystemPolicy | None = None
    tau: int | None = None
    simulation: dict = field(default_factory=dict)
    validate: dict = field(default_factory=dict)
    source: Path | None = None


def _model_error(exc: ModelError, where: str) -> ConfigError:
    name = f"{where}.{exc.field}" if exc.field else where
    return ConfigError(f"invalid {name}: {exc}", field=name)


def parse_model(raw, base: Path | None = None) -> ServerModel:
    if isinstance(raw, str):
        target = Path(raw) if base is None else base / raw
        raw = load_document(target)
        if "model" in raw and not MODEL_KEYS & raw.keys():
            raw = raw["model"]
    try:
        return validate_model(raw)
    except ModelError as exc:
        raise _model_error(exc, "model") from exc


def parse_policy(raw: Mapping[str, Any] | None, n_s: int) -> tuple[SystemPolicy | None, int | None]:
    """Return ``(policy, tau)``; ``tau`` is set only for threshold policies."""
    if raw is None:
        return None, None
    if not isinstance(raw, Mapping):
        raise ConfigError("policy must be an object", field="policy")
    kind = raw.get("kind")
    try:
        if kind == "threshold":
            if "tau" not in raw:
                raise ConfigError("threshold policy needs tau", field="policy.tau")
            tau = raw["tau"]
            return lift_threshold(tau, n_s), tau
        if kind == "table":
            rows = raw.get("available")
            if not isinstance(rows, list) or len(rows) != n_s:
                raise ConfigError(f"table policy needs {n_s} rows in 'available'", field="policy.available")
            q_cap = raw.get("q_cap", len(rows[0]) if rows and isinstance(rows[0], list) else None)
            if not all(isinstance(r, list) and len(r) == q_cap for r in rows):
                raise ConfigError(f"every row of 'available' needs q_cap={q_cap} entries", field="policy.available")
            return SystemPolicy.from_available(rows), None
    except ModelError as exc:
        raise _model_error(exc, "policy") from exc
    raise ConfigError(f"unknown policy kind {kind!r}; expected 'threshold' or 'table'", field="policy.kind")


def parse_initial_state(raw) -> SystemState:
    if raw is None:
        return SystemState.of(1, "A", 0)
    if not isinstance(raw, Mapping):
        raise ConfigError("initial_state must be an object with s, w, q", field="simulation.initial_state")
    try:
        return SystemState.of(raw.get("s", 1), raw.get("w", "A"), raw.get("q", 0))
    except ModelError as exc:
        raise _model_error(exc, "simulation.initial_state") from exc


def load_bundle(path) -> Bundle:
    path = Path(path)
    doc = load_document(path)
    if MODEL_KEYS & doc.keys():
        model_raw = {k: v for k, v in doc.items() if k in MODEL_KEYS}
    elif "model" in doc:
        model_raw = doc["model"]
    else:
        raise ConfigError("document has neither model fields nor a 'model' entry", field="model")
    model = parse_model(model_raw, path.parent)
    policy, tau = parse_policy(doc.get("policy"), model.n_s)
    sim = doc.get("simulation", {})
    val = doc.get("validate", {})
    for name, block in (("simulation", sim), ("validate", val)):
        if not isinstance(block, Mapping):
            raise ConfigError(f"{name} must be an object", field=name)
    return Bundle(model, policy, tau, dict(sim), dict(val), path)
