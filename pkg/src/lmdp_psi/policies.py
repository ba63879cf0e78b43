"""History-dependent policies for LMDP-Psi episodes.

A history prefix at decision step ``t`` (1-based) is the flat tuple
``(s_1, a_1, o_1, ..., s_{t-1}, a_{t-1}, o_{t-1}, s_t)`` of length
``3 * (t - 1) + 1``.  Blind policies map a prefix to an action distribution;
informed policies additionally receive the side-information symbol.

With ``restriction="states"`` a policy only looks at ``(s_1, ..., s_t)``.
"""
from __future__ import annotations

import hashlib
import json
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .errors import ConfigError

Prefix = Tuple[int, ...]

RESTRICTIONS = ("full", "states")


def step_of(prefix: Prefix) -> int:
    """1-based decision step of a prefix."""
    return (len(prefix) - 1) // 3 + 1


def project(prefix: Prefix, restriction: str) -> Prefix:
    if restriction == "full":
        return prefix
    if restriction == "states":
        return prefix[0::3]
    raise ConfigError(f"unknown restriction {restriction!r}")


class BlindPolicy:
    """Base class: ``probs(prefix)`` returns a distribution over actions."""

    num_actions: int
    restriction: str = "full"

    def probs(self, prefix: Prefix) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class TablePolicy(BlindPolicy):
    """Deterministic decision tree: prefix -> action index.

    Prefixes missing from the table fall back to ``default_action``.
    """

    def __init__(self, table: Mapping[Prefix, int], num_actions: int,
                 restriction: str = "full", default_action: int = 0):
        if restriction not in RESTRICTIONS:
            raise ConfigError(f"unknown restriction {restriction!r}")
        self.table: Dict[Prefix, int] = {tuple(int(v) for v in k): int(a) for k, a in table.items()}
        self.num_actions = int(num_actions)
        self.restriction = restriction
        self.default_action = int(default_action)
        for a in self.table.values():
            if not 0 <= a < self.num_actions:
                raise ConfigError(f"action {a} out of range for {num_actions} actions")
        self._onehots = np.eye(self.num_actions)

    def action(self, prefix: Prefix) -> int:
        return self.table.get(project(prefix, self.restriction), self.default_action)

    def probs(self, prefix: Prefix) -> np.ndarray:
        return self._onehots[self.action(prefix)]

    def to_dict(self) -> dict:
        return {
            "kind": "table",
            "num_actions": self.num_actions,
            "restriction": self.restriction,
            "default_action": self.default_action,
            "table": [[list(k), a] for k, a in sorted(self.table.items())],
        }


class StochasticPolicy(BlindPolicy):
    """Table of action distributions; unlisted prefixes use ``default``."""

    def __init__(self, table: Mapping[Prefix, np.ndarray], num_actions: int,
                 restriction: str = "full", default: Optional[np.ndarray] = None):
        if restriction not in RESTRICTIONS:
            raise ConfigError(f"unknown restriction {restriction!r}")
        self.num_actions = int(num_actions)
        self.restriction = restriction
        self.table = {}
        for k, p in table.items():
            p = np.asarray(p, dtype=float)
            _check_simplex(p, self.num_actions)
            self.table[tuple(int(v) for v in k)] = p
        if default is None:
            default = np.full(self.num_actions, 1.0 / self.num_actions)
        self.default = np.asarray(default, dtype=float)
        _check_simplex(self.default, self.num_actions)

    def probs(self, prefix: Prefix) -> np.ndarray:
        return self.table.get(project(prefix, self.restriction), self.default)

    def to_dict(self) -> dict:
        return {
            "kind": "stochastic",
            "num_actions": self.num_actions,
            "restriction": self.restriction,
            "default": self.default.tolist(),
            "table": [[list(k), p.tolist()] for k, p in sorted(self.table.items())],
        }


class UniformPolicy(StochasticPolicy):
    def __init__(self, num_actions: int):
        super().__init__({}, num_actions)


class InformedPolicy:
    """One blind policy per side-information symbol.

    ``fallback`` answers for symbols without an entry, which also makes
    ``InformedPolicy.ignoring_side_info(p)`` the informed twin of a blind p.
    """

    def __init__(self, per_iota: Mapping[int, BlindPolicy], num_actions: int,
                 fallback: Optional[BlindPolicy] = None):
        self.per_iota = {int(k): v for k, v in per_iota.items()}
        self.num_actions = int(num_actions)
        self.fallback = fallback if fallback is not None else UniformPolicy(num_actions)

    @classmethod
    def ignoring_side_info(cls, blind: BlindPolicy) -> "InformedPolicy":
        return cls({}, blind.num_actions, fallback=blind)

    def policy_for(self, iota: int) -> BlindPolicy:
        return self.per_iota.get(int(iota), self.fallback)

    def probs(self, iota: int, prefix: Prefix) -> np.ndarray:
        return self.policy_for(iota).probs(prefix)

    def to_dict(self) -> dict:
        return {
            "kind": "informed",
            "num_actions": self.num_actions,
            "fallback": self.fallback.to_dict(),
            "per_iota": [[k, v.to_dict()] for k, v in sorted(self.per_iota.items())],
        }

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def policy_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "table":
        table = {tuple(k): a for k, a in d["table"]}
        return TablePolicy(table, d["num_actions"], d["restriction"], d["default_action"])
    if kind == "stochastic":
        table = {tuple(k): np.asarray(p) for k, p in d["table"]}
        return StochasticPolicy(table, d["num_actions"], d["restriction"], np.asarray(d["default"]))
    if kind == "informed":
        per = {int(k): policy_from_dict(v) for k, v in d["per_iota"]}
        return InformedPolicy(per, d["num_actions"], policy_from_dict(d["fallback"]))
    raise ConfigError(f"unknown policy kind {kind!r}")


def is_informed(policy) -> bool:
    return isinstance(policy, InformedPolicy)


def _check_simplex(p: np.ndarray, n: int) -> None:
    if p.shape != (n,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ConfigError(f"invalid action distribution {p!r}")
