"""Frozen convolutional backbone exposing its last two block outputs."""

from __future__ import annotations

import torch
from torch import nn
from torchvision import models

__all__ = ["FeatureBackbone", "IMAGENET_MEAN", "IMAGENET_STD"]

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

BACKBONES = {"resnet18"}


class FeatureBackbone(nn.Module):
    """ResNet trunk cut after the last two stages.

    For 224x224 inputs the penultimate stage yields (256, 14, 14) and the
    final stage (512, 7, 7). Weights are frozen; inference only.
    """

    def __init__(self, backbone: str = "resnet18", pretrained: bool = True, seed: int = 0):
        super().__init__()
        if backbone not in BACKBONES:
            raise ValueError(f"unsupported backbone {backbone!r}, expected one of {sorted(BACKBONES)}")
        if not pretrained:
            torch.manual_seed(seed)
        weights = models.ResNet18_Weights.IMAGENET1K_V1 if pretrained else None
        net = models.resnet18(weights=weights)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.layer1 = net.layer1
        self.layer2 = net.layer2
        self.layer3 = net.layer3
        self.layer4 = net.layer4
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)

    @torch.no_grad()
    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return (penultimate, final) stage activations for a batch."""
        x = self.stem(images)
        x = self.layer2(self.layer1(x))
        penultimate = self.layer3(x)
        final = self.layer4(penultimate)
        return penultimate, final
