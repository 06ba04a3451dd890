"""Linear node cost and grouped filter/controller attributes."""

from __future__ import annotations

from dataclasses import dataclass

from .service_model import ContractError, CostAttributes, Kind


@dataclass(frozen=True)
class CostWeights:
    """The orchestration objective: weights on computation and inaccuracy."""

    alpha_comp: float
    beta_inacc: float

    def __post_init__(self):
        if not (self.alpha_comp > 0 and self.beta_inacc > 0):
            raise ContractError(
                f"weights must be > 0, got alpha={self.alpha_comp}, beta={self.beta_inacc}"
            )


def service_cost(attrs: CostAttributes, w: CostWeights) -> float:
    return w.alpha_comp * attrs.x_comp + w.beta_inacc * attrs.y_inacc


# controllers pay the square of the model's computation factor, filters the cube
_GROUP_EXPONENT = {Kind.CONTROLLER: 2, Kind.FILTER: 3}


def grouped_attributes(base_kind: Kind, model_attrs: CostAttributes) -> CostAttributes:
    """Attributes of a filter or controller fused with one model.

    The inaccuracy is inherited from the model; the computation factor is the
    model's computation factor raised to 2 (controller) or 3 (filter).
    """
    try:
        exponent = _GROUP_EXPONENT[base_kind]
    except KeyError:
        raise ContractError(f"cannot group a {base_kind.value} with a model") from None
    return CostAttributes(model_attrs.x_comp**exponent, model_attrs.y_inacc)
