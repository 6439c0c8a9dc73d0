"""Models the server can serve.

`toy` is a deterministic, dependency-light scorer: each class is a localized
Gaussian color prototype and the logit is the prototype-weighted color match,
so confident predictions survive when the prototype's region is kept and
collapse when it is masked. It exists so the wire protocol and the search
pipeline can be smoke-tested offline and reproducibly.

`vgg16` / `resnet50` wrap pretrained torchvision classifiers (ImageNet
preprocessing applied server-side); they require the torch extra and model
weights to be obtainable.
"""

from __future__ import annotations

import numpy as np


class ToyPrototypeModel:
    """Seeded random localized prototypes over a 56x56 RGB input."""

    name = "toy"
    input_height = 56
    input_width = 56
    num_classes = 10

    def __init__(self, seed: int = 1234, bump_sigma: float = 7.0,
                 temperature: float = 0.05):
        rng = np.random.default_rng(seed)
        h, w = self.input_height, self.input_width
        ys, xs = np.mgrid[0:h, 0:w]
        self._prototypes = np.empty((self.num_classes, h, w))
        self._colors = np.empty((self.num_classes, 3))
        for k in range(self.num_classes):
            cy = rng.uniform(h * 0.2, h * 0.8)
            cx = rng.uniform(w * 0.2, w * 0.8)
            bump = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * bump_sigma**2))
            self._prototypes[k] = bump / bump.sum()
            color = rng.uniform(0.2, 1.0, size=3)
            self._colors[k] = color / np.linalg.norm(color)
        self._temperature = temperature

    def predict(self, batch: np.ndarray) -> np.ndarray:
        """(N, H, W, 3) float images in [0, 1] -> (N, num_classes) scores."""
        color_match = np.einsum("nhwc,kc->nkhw", batch, self._colors)
        logits = np.einsum("nkhw,khw->nk", color_match, self._prototypes)
        logits = logits / self._temperature
        logits -= logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        return exp / exp.sum(axis=1, keepdims=True)


class TorchvisionModel:
    """Pretrained ImageNet classifier with canonical preprocessing."""

    input_height = 224
    input_width = 224
    num_classes = 1000

    _MEAN = np.array([0.485, 0.456, 0.406])
    _STD = np.array([0.229, 0.224, 0.225])

    def __init__(self, name: str):
        import torch
        from torchvision import models as tv_models

        torch.manual_seed(0)
        weights_by_name = {
            "vgg16": (tv_models.vgg16, "IMAGENET1K_V1"),
            "resnet50": (tv_models.resnet50, "IMAGENET1K_V1"),
        }
        if name not in weights_by_name:
            raise ValueError(f"unknown torchvision model {name!r}")
        factory, weights = weights_by_name[name]
        self.name = name
        self._torch = torch
        self._model = factory(weights=weights)
        self._model.eval()

    def predict(self, batch: np.ndarray) -> np.ndarray:
        torch = self._torch
        normalized = (batch - self._MEAN) / self._STD
        tensor = torch.from_numpy(normalized.transpose(0, 3, 1, 2)).float()
        with torch.no_grad():
            logits = self._model(tensor)
            probs = torch.softmax(logits, dim=1)
        return probs.double().numpy()


def load_model(name: str):
    if name == "toy":
        return ToyPrototypeModel()
    return TorchvisionModel(name)
