"""Synthetic model builders for tests, sweeps and demos.

Weights are drawn from the toolkit's deterministic PRNG with fan-in
scaling (uniform in [-a, a], a = sqrt(6 / fan_in)) so activations stay
O(1) through deep stacks and logit comparisons are meaningful.
"""

from __future__ import annotations

import numpy as np

from .graph import LayerSpec, ModelGraph
from .rng import Xorshift64Star

CIFAR_VGG_PLAN = [64, 64, "pool", 128, 128, "pool", 256, 256, 256, "pool",
                  512, 512, 512, "pool", 512, 512, 512, "pool"]


def _he_uniform(rng: Xorshift64Star, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    scale = np.float32(np.sqrt(6.0 / fan_in))
    return rng.uniform(shape) * scale


def build_conv_stack(
    input_shape: tuple[int, int, int],
    conv_plan: list,
    dense_units: list[int],
    seed: int,
    kernel: tuple[int, int] = (3, 3),
) -> ModelGraph:
    """Sequential conv/relu/pool stack followed by dense layers.

    ``conv_plan`` entries are output-channel counts or the string
    "pool"; convolutions are same-padded, stride 1."""
    rng = Xorshift64Star(seed)
    kw, kh = kernel
    layers: list[LayerSpec] = []
    tensors: dict[str, np.ndarray] = {}
    w, h, c = input_shape
    conv_idx = pool_idx = 0
    for item in conv_plan:
        if item == "pool":
            pool_idx += 1
            layers.append(LayerSpec(f"pool_{pool_idx}", "maxpool2"))
            w, h = w // 2, h // 2
            continue
        n = int(item)
        conv_idx += 1
        name = f"conv2d_{conv_idx}"
        tensors[f"{name}.weights"] = _he_uniform(rng, (n, kw, kh, c), kw * kh * c)
        tensors[f"{name}.bias"] = rng.uniform((n,)) * np.float32(0.1)
        layers.append(
            LayerSpec(
                name,
                "conv2d",
                {
                    "stride": [1, 1],
                    "padding": [kw // 2, kh // 2],
                    "weights": f"{name}.weights",
                    "bias": f"{name}.bias",
                },
            )
        )
        layers.append(LayerSpec(f"{name}_relu", "relu"))
        c = n
    layers.append(LayerSpec("flatten", "flatten"))
    fan = w * h * c
    for di, units in enumerate(dense_units, start=1):
        name = f"dense_{di}"
        tensors[f"{name}.weights"] = _he_uniform(rng, (fan, units), fan)
        tensors[f"{name}.bias"] = rng.uniform((units,)) * np.float32(0.1)
        layers.append(
            LayerSpec(name, "dense", {"weights": f"{name}.weights", "bias": f"{name}.bias"})
        )
        if di < len(dense_units):
            layers.append(LayerSpec(f"{name}_relu", "relu"))
        fan = units
    return ModelGraph(input_shape=input_shape, layers=layers, tensors=tensors)


def build_cifar_vgg(seed: int = 0) -> ModelGraph:
    """13-conv VGG-style classifier on 32x32x3 inputs, 10 logits."""
    return build_conv_stack((32, 32, 3), CIFAR_VGG_PLAN, [512, 10], seed)


def build_small_deep(seed: int = 0) -> ModelGraph:
    """Lighter 8-conv stack for sweep and divergence experiments."""
    plan = [32, 32, "pool", 48, 48, "pool", 64, 64, 64, 64, "pool"]
    return build_conv_stack((16, 16, 3), plan, [64, 10], seed)
