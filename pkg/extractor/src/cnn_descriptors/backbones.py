"""Backbone construction and the tap on the last convolutional feature map.

Each architecture is tapped at its final conv map, before global pooling:
AlexNet at the end of the conv stack (256 channels), ResNet18 after layer4
(512), InceptionV3 after Mixed_7c (2048).  A forward hook captures the
activation, so the surrounding classifier head never matters.

Weights: `pretrained` loads the ImageNet checkpoints (clear error when they
cannot be fetched); `random` seeds torch's global generator and keeps the
architecture's native initialization, which is deterministic and good
enough for wiring/format tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torchvision.models as tvm

from .errors import ExtractorError, WeightsError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class BackboneSpec:
    architecture: str
    descriptor_dim: int
    tap: str                       # module path of the tapped layer
    canonical_input: int           # classical input side for --resize canonical
    min_input: int
    mean: tuple[float, float, float] = field(default=IMAGENET_MEAN)
    std: tuple[float, float, float] = field(default=IMAGENET_STD)


ARCHITECTURES: dict[str, BackboneSpec] = {
    "alexnet": BackboneSpec("alexnet", 256, "features", 224, 63),
    "resnet18": BackboneSpec("resnet18", 512, "layer4", 224, 33),
    "inceptionv3": BackboneSpec("inceptionv3", 2048, "Mixed_7c", 299, 75),
}


def spec_for(architecture: str) -> BackboneSpec:
    try:
        return ARCHITECTURES[architecture]
    except KeyError:
        raise ExtractorError(
            f"unknown architecture {architecture!r}; choose from {sorted(ARCHITECTURES)}"
        ) from None


def _construct(spec: BackboneSpec, weights_mode: str, seed: int):
    if weights_mode not in ("pretrained", "random"):
        raise ExtractorError(f"weights must be 'pretrained' or 'random', got {weights_mode!r}")
    pretrained = weights_mode == "pretrained"
    if not pretrained:
        torch.manual_seed(seed)
    try:
        if spec.architecture == "alexnet":
            weights = tvm.AlexNet_Weights.IMAGENET1K_V1 if pretrained else None
            return tvm.alexnet(weights=weights)
        if spec.architecture == "resnet18":
            weights = tvm.ResNet18_Weights.IMAGENET1K_V1 if pretrained else None
            return tvm.resnet18(weights=weights)
        weights = tvm.Inception_V3_Weights.IMAGENET1K_V1 if pretrained else None
        if pretrained:
            return tvm.inception_v3(weights=weights)
        return tvm.inception_v3(weights=None, aux_logits=True, init_weights=True)
    except Exception as exc:
        if pretrained:
            raise WeightsError(
                f"could not obtain pretrained weights for {spec.architecture}: {exc}. "
                "Check network access / the torch hub cache, or rerun with --weights random."
            ) from exc
        raise


class TappedBackbone:
    """Frozen backbone with a hook on the spec's tap layer."""

    def __init__(self, spec: BackboneSpec, model: torch.nn.Module, device: str):
        self.spec = spec
        self.device = device
        self.model = model.to(device).eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self._captured: list[torch.Tensor] = []
        module = self.model.get_submodule(spec.tap)
        module.register_forward_hook(self._capture)

    def _capture(self, module, inputs, output):
        self._captured.append(output)

    @torch.inference_mode()
    def feature_maps(self, batch: torch.Tensor) -> torch.Tensor:
        """(B, D, H', W') activation of the tapped layer."""
        self._captured.clear()
        self.model(batch.to(self.device))
        if not self._captured:
            raise ExtractorError(f"tap layer {self.spec.tap!r} was never reached")
        return self._captured[0].cpu()


def build_backbone(architecture: str, weights: str = "pretrained", seed: int = 0,
                   device: str = "cpu") -> TappedBackbone:
    spec = spec_for(architecture)
    return TappedBackbone(spec, _construct(spec, weights, seed), device)
