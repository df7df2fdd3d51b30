"""
Layers Module - Capas densas sobre el motor de autodiff
Responsabilidad: Capa lineal con inicialización Glorot y perceptrón multicapa reutilizado por
el actor y el crítico.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, add, matmul, parameter, relu


@dataclass
class Dense:
    """y = x @ W + b (convención de filas)."""

    weight: Tensor
    bias: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, fan_in: int, fan_out: int, name: str) -> "Dense":
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        return cls(
            weight=parameter(weight, name=f"{name}.weight"),
            bias=parameter(np.zeros((1, fan_out)), name=f"{name}.bias"),
        )

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]


@dataclass
class MLP:
    """Capas densas con relu entre ellas (la salida es lineal)."""

    layers: List[Dense]

    @classmethod
    def create(cls, rng: np.random.Generator, sizes: Sequence[int], name: str) -> "MLP":
        return cls([Dense.create(rng, a, b, f"{name}.{i}") for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))])

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = relu(x)
        return x

    def parameters(self) -> List[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def sizes(self) -> Tuple[int, ...]:
        return (self.layers[0].fan_in,) + tuple(layer.fan_out for layer in self.layers)
