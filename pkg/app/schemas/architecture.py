from __future__ import annotations

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class NetworkKind(str, Enum):
    SHALLOW = "shallow"
    DEEP = "deep"


class NetworkArchitecture(BaseModel):
    """
    One input, one output, tanh hidden nodes.

    - shallow: `hidden_nodes` (M) tanh units feeding a bias-free linear output.
    - deep:    `layers` (L) fully-connected tanh layers of `width` (W) nodes
               and a linear output node with one bias.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: NetworkKind
    hidden_nodes: Optional[int] = Field(None, gt=0, description="M, shallow nets only.")
    layers: Optional[int] = Field(None, gt=0, description="L, deep nets only.")
    width: Optional[int] = Field(None, gt=0, description="W, deep nets only.")

    @model_validator(mode="after")
    def _check_fields_for_kind(self) -> "NetworkArchitecture":
        if self.kind is NetworkKind.SHALLOW:
            if self.hidden_nodes is None:
                raise ValueError("shallow architecture requires hidden_nodes")
            if self.layers is not None or self.width is not None:
                raise ValueError("shallow architecture does not take layers/width")
        else:
            if self.layers is None or self.width is None:
                raise ValueError("deep architecture requires layers and width")
            if self.hidden_nodes is not None:
                raise ValueError("deep architecture does not take hidden_nodes")
        return self

    @classmethod
    def shallow(cls, hidden_nodes: int) -> "NetworkArchitecture":
        return cls(kind=NetworkKind.SHALLOW, hidden_nodes=hidden_nodes)

    @classmethod
    def deep(cls, layers: int, width: int) -> "NetworkArchitecture":
        return cls(kind=NetworkKind.DEEP, layers=layers, width=width)

    @property
    def is_shallow(self) -> bool:
        return self.kind is NetworkKind.SHALLOW

    def layer_shapes(self) -> list[tuple[int, int]]:
        """
        (fan_out, fan_in) of every weight matrix of a deep net, input to output.
        """
        if self.is_shallow:
            raise ValueError("layer_shapes is only defined for deep architectures")
        w = self.width
        return [(w, 1)] + [(w, w)] * (self.layers - 1) + [(1, w)]

    @property
    def n_params(self) -> int:
        if self.is_shallow:
            return 3 * self.hidden_nodes
        return sum(fan_out * fan_in + fan_out for fan_out, fan_in in self.layer_shapes())

    def describe(self) -> str:
        if self.is_shallow:
            return f"shallow(M={self.hidden_nodes}, N={self.n_params})"
        return f"deep(L={self.layers}, W={self.width}, N={self.n_params})"
