"""Shapley-style attribution of source and reference contributions.

The coalition set holds the two optional evaluation materials (source,
reference); the hypothesis is always present. A material's value is the
average of its marginal contributions over the two coalition orders.
The empty coalition (hypothesis-only judging) is not a valid evaluation
setting, so its value is approximated by an available configuration; see
:func:`shapley_mt` for the two supported substitution rules.

Attribution inputs are decimal-reported meta-metric values, so all
arithmetic runs in :class:`decimal.Decimal`. This keeps the algebraic
identities (swap antisymmetry, sum identity, translation invariance)
exact rather than float-approximate.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from typing import Literal

from .errors import ConfigError

EmptySetRule = Literal["symmetric", "reference"]


def _as_decimal(v) -> Decimal:
    if isinstance(v, Decimal):
        return v
    if isinstance(v, float):
        # Shortest-repr decimalization: 68.8 -> Decimal("68.8").
        return Decimal(repr(v))
    return Decimal(str(v))


@dataclass(frozen=True)
class AttributionInput:
    """Meta-metric values of one judge under the three material modes.

    All three values must come from the same meta-metric at the same
    evaluation granularity (e.g. all system-level SPA percentages).
    """

    v_src: Decimal
    v_ref: Decimal
    v_joint: Decimal

    def __post_init__(self):
        object.__setattr__(self, "v_src", _as_decimal(self.v_src))
        object.__setattr__(self, "v_ref", _as_decimal(self.v_ref))
        object.__setattr__(self, "v_joint", _as_decimal(self.v_joint))
        for name in ("v_src", "v_ref", "v_joint"):
            if not getattr(self, name).is_finite():
                raise ConfigError(f"{name} must be finite")


@dataclass(frozen=True)
class AttributionResult:
    phi_source: Decimal
    phi_reference: Decimal
    approximation_note: str

    def to_dict(self) -> dict:
        return {
            "phi_source": float(self.phi_source),
            "phi_reference": float(self.phi_reference),
            "approximation_note": self.approximation_note,
        }


def shapley_mt(inp: AttributionInput, empty_set_rule: EmptySetRule = "symmetric") -> AttributionResult:
    """Two-player Shapley attribution with an approximated empty coalition.

    Under the default ``symmetric`` rule each material's marginal against
    the empty coalition substitutes the *other* material's singleton value:

        phi_s = [(v_src - v_ref) + (v_joint - v_ref)] / 2
        phi_r = [(v_ref - v_src) + (v_joint - v_src)] / 2

    The ``reference`` rule instead fixes v(empty) ~= v_ref for both
    players, so phi_r degenerates to (v_joint - v_src) / 2 while phi_s is
    unchanged.
    """
    two = Decimal(2)
    vs, vr, vj = inp.v_src, inp.v_ref, inp.v_joint
    if empty_set_rule == "symmetric":
        phi_s = ((vs - vr) + (vj - vr)) / two
        phi_r = ((vr - vs) + (vj - vs)) / two
        note = "v(empty) ~= other material's singleton value (symmetric substitution)"
    elif empty_set_rule == "reference":
        phi_s = ((vs - vr) + (vj - vr)) / two
        phi_r = (vj - vs) / two
        note = "v(empty) ~= v_ref for both players"
    else:
        raise ConfigError(f"unknown empty-set rule {empty_set_rule!r}")
    return AttributionResult(phi_source=phi_s, phi_reference=phi_r, approximation_note=note)
