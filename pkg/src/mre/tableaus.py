"""Runge-Kutta coefficient tables, loaded from ``data/tableaus.json``.

Entries are stored exactly: a rational string ``"p/q"`` or a pair
``["p/q", "r/s"]`` meaning ``p/q + (r/s) * sqrt(2)``. The file is checked
against a pinned SHA-256 digest so a silent edit fails loudly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import ConfigError

TABLEAU_SHA256 = "314d48d5c8da90ba6ba287db804966a8b7fb621fc00ea070e09b79894fc65ea5"


@dataclass(frozen=True)
class Tableau:
    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def stages(self) -> int:
        return len(self.c)


@dataclass(frozen=True)
class ImexTableau:
    name: str
    explicit: Tableau
    implicit: Tableau


def _value(entry) -> float:
    if isinstance(entry, str):
        return float(Fraction(entry))
    rational, root2 = entry
    return float(Fraction(rational)) + float(Fraction(root2)) * math.sqrt(2.0)


def _square(rows, s):
    A = np.zeros((s, s))
    for i, row in enumerate(rows):
        for j, entry in enumerate(row):
            A[i, j] = _value(entry)
    return A


@lru_cache(maxsize=None)
def _raw():
    blob = resources.files("mre").joinpath("data/tableaus.json").read_bytes()
    digest = hashlib.sha256(blob).hexdigest()
    if digest != TABLEAU_SHA256:
        raise ConfigError(f"tableau file checksum mismatch: {digest}")
    return json.loads(blob)


def _tableau(entry, A_key="A", b=None) -> Tableau:
    c = np.array([_value(x) for x in entry["c"]])
    A = _square(entry[A_key], len(c))
    if b is None:
        b = np.array([_value(x) for x in entry["b"]]) if "b" in entry else A[-1].copy()
    return Tableau(name=entry["name"], A=A, b=b, c=c)


@lru_cache(maxsize=None)
def esdirk4() -> Tableau:
    """Stiffly accurate ESDIRK4(3)6L[2]SA (main method only)."""
    return _tableau(_raw()["esdirk4"])


@lru_cache(maxsize=None)
def ark4() -> ImexTableau:
    """Additive pair ARK4(3)6L[2]SA: explicit ERK + implicit ESDIRK."""
    raw = _raw()
    return ImexTableau(name="ARK4(3)6L[2]SA",
                       explicit=_tableau(raw["ark4_explicit"]),
                       implicit=_tableau(raw["ark4_implicit"]))


@lru_cache(maxsize=None)
def imex_midpoint() -> ImexTableau:
    """Second-order implicit-explicit midpoint rule."""
    raw = _raw()["imex_midpoint"]
    b = np.array([_value(x) for x in raw["b"]])
    return ImexTableau(name=raw["name"],
                       explicit=_tableau(raw, "A_explicit", b),
                       implicit=_tableau(raw, "A_implicit", b))
