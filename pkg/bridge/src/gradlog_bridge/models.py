"""Served model architectures.

All models run in float64 so that weight-copied models agree with the
engine's built-in numpy implementation to high precision, and end with a
softmax so their outputs are valid neural-AD distributions.
"""

from __future__ import annotations

import torch
from torch import nn

torch.set_grad_enabled(True)


class LinearModel(nn.Module):
    """Single fully connected layer + softmax."""

    def __init__(self, inputs: int, outputs: int, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.fc = nn.Linear(inputs, outputs, dtype=torch.float64)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.fc(x), dim=-1)


class MlpModel(nn.Module):
    """Tanh hidden layers + softmax, mirroring the engine's built-in MLP."""

    def __init__(self, inputs: int, hidden: list[int], outputs: int, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        sizes = [inputs, *hidden, outputs]
        self.layers = nn.ModuleList(
            nn.Linear(a, b, dtype=torch.float64) for a, b in zip(sizes, sizes[1:])
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers[:-1]:
            x = torch.tanh(layer(x))
        return torch.softmax(self.layers[-1](x), dim=-1)


class CnnModel(nn.Module):
    """Digit-image classifier: two 5x5 conv layers (6 and 16 filters), each
    followed by 2x2 max pooling, then fully connected layers of sizes 120,
    84 and the output size, ReLU activations, softmax head.

    Input arrives as a flat vector of ``image_size**2`` grayscale values.
    """

    def __init__(self, image_size: int = 28, outputs: int = 10, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.image_size = image_size
        self.conv1 = nn.Conv2d(1, 6, kernel_size=5, dtype=torch.float64)
        self.conv2 = nn.Conv2d(6, 16, kernel_size=5, dtype=torch.float64)
        self.pool = nn.MaxPool2d(2, stride=2)
        side = ((image_size - 4) // 2 - 4) // 2
        if side < 1:
            raise ValueError(f"image size {image_size} too small for the architecture")
        self.fc1 = nn.Linear(16 * side * side, 120, dtype=torch.float64)
        self.fc2 = nn.Linear(120, 84, dtype=torch.float64)
        self.fc3 = nn.Linear(84, outputs, dtype=torch.float64)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x.reshape(1, 1, self.image_size, self.image_size)
        x = self.pool(torch.relu(self.conv1(x)))
        x = self.pool(torch.relu(self.conv2(x)))
        x = torch.relu(self.fc1(x.reshape(1, -1)))
        x = torch.relu(self.fc2(x))
        return torch.softmax(self.fc3(x), dim=-1).reshape(-1)


def build_models(config: dict) -> dict[str, nn.Module]:
    """Instantiate models from a json configuration mapping."""
    models: dict[str, nn.Module] = {}
    for model_id, cfg in config.items():
        kind = cfg.get("type")
        seed = int(cfg.get("seed", 0))
        if kind == "linear":
            model = LinearModel(int(cfg["inputs"]), int(cfg["outputs"]), seed)
        elif kind == "mlp":
            model = MlpModel(
                int(cfg["inputs"]),
                [int(h) for h in cfg.get("hidden", [])],
                int(cfg["outputs"]),
                seed,
            )
        elif kind == "cnn":
            model = CnnModel(int(cfg.get("image_size", 28)), int(cfg.get("outputs", 10)), seed)
        else:
            raise ValueError(f"unknown model type {kind!r} for {model_id}")
        weights = cfg.get("weights")
        if weights is not None:
            state = {k: torch.tensor(v, dtype=torch.float64) for k, v in weights.items()}
            model.load_state_dict(state)
        models[model_id] = model
    return models
